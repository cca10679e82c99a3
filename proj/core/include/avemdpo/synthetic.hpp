#pragma once

#include <cstdint>
#include <vector>

#include "avemdpo/bench.hpp"
#include "avemdpo/train.hpp"

// Deterministic fixture generators. The preference datasets plant a known
// scoring rule, so training progress can be judged against ground truth
// that does not depend on any model:
//
//   kSeparable   chosen responses are a fixed function of the video
//                tokens, rejections apply the rule for a wrong emotion
//   kTextBiased  rejections are longer than chosen responses, so the
//                text prior consistently scores the chosen side higher
//                and the text-prior penalty has one sign across records
//   kErpRequired the emotion-flavored rejection extends the chosen
//                response by one token; only an objective that pushes
//                that rejection down directly can separate the two
//
// Everything is a pure function of (flavor, n, seed).

namespace avemdpo::synthetic {

enum class PlantedFlavor { kSeparable, kTextBiased, kErpRequired };

PlantedFlavor planted_flavor_from_string(std::string_view s);
std::string_view to_string(PlantedFlavor f);

// n records cycling emotions and prompt modalities, with masked rejected
// inputs stored per record. Every record passes PreferenceRecord::validate.
train::TrainDataset planted_preference_dataset(PlantedFlavor flavor, int n,
                                               uint64_t seed);

// Manifest rows "synv-<k>" cycling the emotion taxonomy; roughly one in
// ten rows is audioless and one in four carries a subtitle.
std::vector<bench::ManifestRow> synthetic_manifest(int n_videos,
                                                   uint64_t seed);

// AV clips keyed by manifest video_ref whose video tokens carry the row's
// emotion pattern and whose audio tokens are noise.
prefdata::AvStore synthetic_clip_pool(
    const std::vector<bench::ManifestRow>& rows, uint64_t seed);

// Mean over records of beta_vr * logp(y_l_vr) + beta_er * logp(y_l_er)
// under the current policy; the gamma-sweep statistic.
double weighted_rejection_log_prob(train::TrainState& state,
                                   const train::TrainDataset& data);

// Fraction of records whose chosen response scores higher under the
// chosen AV input than under the stored rejected input (implicit-reward
// margin; zero counts half). Only the input-preference term trains this.
double input_preference_accuracy(train::TrainState& state,
                                 const train::TrainDataset& data);

// Preference accuracy over response rejections, ties counting half,
// evaluated outside the training loop.
double response_preference_accuracy(train::TrainState& state,
                                    const train::TrainDataset& data);

}  // namespace avemdpo::synthetic
