#pragma once

#include <limits>
#include <string>
#include <vector>

#include "avemdpo/labels.hpp"

// Preference-objective kernels. Everything here is a pure function of
// precomputed sequence log-likelihoods; the scorer produces those and the
// trainer composes the two. Each -log sigmoid(z) is evaluated as
// softplus(-z), which stays finite for |z| up to ~700.
//
// Gradients with respect to the policy log-probabilities are provided in
// closed form (PolicyGrad); reference and text-prior entries are constants
// by contract, so their partials are identically zero.

namespace avemdpo::losses {

struct LossConfig {
  double beta = 0.1;       // DPO temperature
  double beta_vr = 0.5;    // weight of the video-relevant rejection
  double beta_er = 0.5;    // weight of the emotion-relevant rejection
  double gamma_tpd = 0.2;  // text-prior debiasing strength
  double lambda_av = 1.0;  // weight of the input-preference term

  // Throws std::invalid_argument when beta <= 0, weights are outside
  // [0,1] or do not sum to one, or gamma/lambda are negative.
  void validate() const;

  static LossConfig defaults() { return LossConfig{}; }
  // Sets beta_vr = w and beta_er to its exact complement.
  static LossConfig with_vr_weight(double w);
};

// Chosen response plus exactly one rejection (either a rejected response
// or the chosen response under the rejected AV input).
struct PairScores {
  double policy_chosen = std::numeric_limits<double>::quiet_NaN();
  double ref_chosen = std::numeric_limits<double>::quiet_NaN();
  double policy_rejected = std::numeric_limits<double>::quiet_NaN();
  double ref_rejected = std::numeric_limits<double>::quiet_NaN();
};

// All log-likelihoods for one preference record. Fields default to NaN so
// an op that reads an unpopulated field fails its finiteness check instead
// of silently computing nonsense. Ops only validate the fields they read.
struct ScoredSequences {
  static constexpr double kUnset = std::numeric_limits<double>::quiet_NaN();

  // y_w under the chosen AV input.
  double logp_policy_w = kUnset;
  double logp_ref_w = kUnset;
  // Typed rejected responses under the chosen AV input.
  double logp_policy_vr = kUnset;
  double logp_ref_vr = kUnset;
  double logp_policy_er = kUnset;
  double logp_ref_er = kUnset;
  // y_w under the rejected (PMP-masked) AV input.
  double logp_policy_w_neg = kUnset;
  double logp_ref_w_neg = kUnset;
  // Frozen text-prior scores; constants for the optimizer.
  double logp_text_w = kUnset;
  double logp_text_vr = kUnset;
  double logp_text_er = kUnset;

  // How the rejected AV input was masked when it was scored.
  PmpMask pmp_mask = PmpMask::kNoneKept;

  PairScores pair_vr() const;
  PairScores pair_er() const;
  // Chosen response under chosen vs rejected AV input.
  PairScores pair_input() const;
};

// log(1 + e^x) without overflow.
double softplus(double x);
double sigmoid(double x);
// -log sigmoid(z) == softplus(-z).
double logistic_loss(double z);

// d(loss)/d(logp_policy_*) for whichever fields an objective touches.
struct PolicyGrad {
  double w = 0.0;
  double vr = 0.0;
  double er = 0.0;
  double w_neg = 0.0;
};

// Response-pair DPO with a single rejection.
double naive_dpo_loss(const PairScores& s, const LossConfig& cfg);
// Partials w.r.t. (policy_chosen, policy_rejected).
std::pair<double, double> naive_dpo_grad(const PairScores& s,
                                         const LossConfig& cfg);

// Implicit-reward gap beta * (delta_chosen - delta_rejected). Positive
// means the policy prefers the chosen side.
double reward_margin(const PairScores& s, const LossConfig& cfg);

// Input-preference DPO: the chosen response scored under chosen vs
// rejected AV inputs. Only the *_w and *_w_neg fields are read.
double av_preference_loss(const ScoredSequences& s, const LossConfig& cfg);
PolicyGrad av_preference_grad(const ScoredSequences& s, const LossConfig& cfg);

// Same arithmetic as av_preference_loss; additionally checks that the
// rejected input's recorded mask matches the prompt's modality tag.
double pmp_loss(const ScoredSequences& s, ModalityTag m, const LossConfig& cfg);
PolicyGrad pmp_grad(const ScoredSequences& s, ModalityTag m,
                    const LossConfig& cfg);

// Two weighted rejections, weights beta_vr + beta_er = 1.
double response_preference_loss(const ScoredSequences& s,
                                const LossConfig& cfg);
PolicyGrad response_preference_grad(const ScoredSequences& s,
                                    const LossConfig& cfg);

// Two weighted rejections plus the text-prior penalty. The gamma term is
// not scaled by beta.
double tpd_response_loss(const ScoredSequences& s, const LossConfig& cfg);
PolicyGrad tpd_response_grad(const ScoredSequences& s, const LossConfig& cfg);

// Single-rejection variant of the TPD objective; `use_er` picks which
// rejection plays y_l. Used by the single-rejection ablation.
double tpd_single_loss(const ScoredSequences& s, bool use_er,
                       const LossConfig& cfg);
PolicyGrad tpd_single_grad(const ScoredSequences& s, bool use_er,
                           const LossConfig& cfg);

// Part names are a stable logging contract.
struct AvemDpoParts {
  double total = 0.0;
  double tpd_term = 0.0;
  double pmp_term = 0.0;
};

// total = tpd_response_loss + lambda_av * pmp_loss.
AvemDpoParts avem_dpo_loss(const ScoredSequences& s, ModalityTag m,
                           const LossConfig& cfg);
PolicyGrad avem_dpo_grad(const ScoredSequences& s, ModalityTag m,
                         const LossConfig& cfg);

enum class Reduction { kMean, kSum };
Reduction reduction_from_string(std::string_view s);
std::string_view to_string(Reduction r);
double reduce(const std::vector<double>& values, Reduction mode);

}  // namespace avemdpo::losses
