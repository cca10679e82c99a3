#include "avemdpo/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace avemdpo::losses {
namespace {

void check_finite(double v, const char* field) {
  if (!std::isfinite(v)) {
    throw std::invalid_argument(std::string("non-finite log-likelihood: ") +
                                field);
  }
}

}  // namespace

void LossConfig::validate() const {
  if (!(beta > 0.0) || !std::isfinite(beta)) {
    throw std::invalid_argument("beta must be finite and > 0");
  }
  if (!(beta_vr >= 0.0 && beta_vr <= 1.0) ||
      !(beta_er >= 0.0 && beta_er <= 1.0)) {
    throw std::invalid_argument("beta_vr and beta_er must lie in [0, 1]");
  }
  if (beta_vr + beta_er != 1.0) {
    throw std::invalid_argument("beta_vr + beta_er must equal 1");
  }
  if (!(gamma_tpd >= 0.0) || !std::isfinite(gamma_tpd)) {
    throw std::invalid_argument("gamma_tpd must be finite and >= 0");
  }
  if (!(lambda_av >= 0.0) || !std::isfinite(lambda_av)) {
    throw std::invalid_argument("lambda_av must be finite and >= 0");
  }
}

LossConfig LossConfig::with_vr_weight(double w) {
  LossConfig cfg;
  cfg.beta_vr = w;
  cfg.beta_er = 1.0 - w;
  cfg.validate();
  return cfg;
}

PairScores ScoredSequences::pair_vr() const {
  return {logp_policy_w, logp_ref_w, logp_policy_vr, logp_ref_vr};
}

PairScores ScoredSequences::pair_er() const {
  return {logp_policy_w, logp_ref_w, logp_policy_er, logp_ref_er};
}

PairScores ScoredSequences::pair_input() const {
  return {logp_policy_w, logp_ref_w, logp_policy_w_neg, logp_ref_w_neg};
}

double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double logistic_loss(double z) { return softplus(-z); }

namespace {

void check_pair(const PairScores& s) {
  check_finite(s.policy_chosen, "policy_chosen");
  check_finite(s.ref_chosen, "ref_chosen");
  check_finite(s.policy_rejected, "policy_rejected");
  check_finite(s.ref_rejected, "ref_rejected");
}

double pair_margin(const PairScores& s, const LossConfig& cfg) {
  const double delta_c = s.policy_chosen - s.ref_chosen;
  const double delta_r = s.policy_rejected - s.ref_rejected;
  return cfg.beta * (delta_c - delta_r);
}

void check_input_fields(const ScoredSequences& s) {
  check_finite(s.logp_policy_w, "logp_policy_w");
  check_finite(s.logp_ref_w, "logp_ref_w");
  check_finite(s.logp_policy_w_neg, "logp_policy_w_neg");
  check_finite(s.logp_ref_w_neg, "logp_ref_w_neg");
}

void check_response_fields(const ScoredSequences& s) {
  check_finite(s.logp_policy_w, "logp_policy_w");
  check_finite(s.logp_ref_w, "logp_ref_w");
  check_finite(s.logp_policy_vr, "logp_policy_vr");
  check_finite(s.logp_ref_vr, "logp_ref_vr");
  check_finite(s.logp_policy_er, "logp_policy_er");
  check_finite(s.logp_ref_er, "logp_ref_er");
}

void check_text_fields(const ScoredSequences& s) {
  check_finite(s.logp_text_w, "logp_text_w");
  check_finite(s.logp_text_vr, "logp_text_vr");
  check_finite(s.logp_text_er, "logp_text_er");
}

// Argument of the sigmoid in the two-rejection objective, with optional
// text-prior penalty (pass gamma = 0 to drop it).
double response_z(const ScoredSequences& s, const LossConfig& cfg,
                  double gamma) {
  const double delta_w = s.logp_policy_w - s.logp_ref_w;
  const double delta_vr = s.logp_policy_vr - s.logp_ref_vr;
  const double delta_er = s.logp_policy_er - s.logp_ref_er;
  double z = cfg.beta *
             (delta_w - cfg.beta_vr * delta_vr - cfg.beta_er * delta_er);
  if (gamma != 0.0) {
    z -= gamma * (s.logp_text_w - cfg.beta_vr * s.logp_text_vr -
                  cfg.beta_er * s.logp_text_er);
  }
  return z;
}

PolicyGrad response_grad_impl(const ScoredSequences& s, const LossConfig& cfg,
                              double gamma) {
  const double coeff = -sigmoid(-response_z(s, cfg, gamma));
  PolicyGrad g;
  g.w = coeff * cfg.beta;
  g.vr = -coeff * cfg.beta * cfg.beta_vr;
  g.er = -coeff * cfg.beta * cfg.beta_er;
  return g;
}

}  // namespace

double naive_dpo_loss(const PairScores& s, const LossConfig& cfg) {
  cfg.validate();
  check_pair(s);
  return logistic_loss(pair_margin(s, cfg));
}

std::pair<double, double> naive_dpo_grad(const PairScores& s,
                                         const LossConfig& cfg) {
  cfg.validate();
  check_pair(s);
  const double coeff = -sigmoid(-pair_margin(s, cfg));
  return {coeff * cfg.beta, -coeff * cfg.beta};
}

double reward_margin(const PairScores& s, const LossConfig& cfg) {
  cfg.validate();
  check_pair(s);
  return pair_margin(s, cfg);
}

double av_preference_loss(const ScoredSequences& s, const LossConfig& cfg) {
  cfg.validate();
  check_input_fields(s);
  return logistic_loss(pair_margin(s.pair_input(), cfg));
}

PolicyGrad av_preference_grad(const ScoredSequences& s, const LossConfig& cfg) {
  cfg.validate();
  check_input_fields(s);
  const double coeff = -sigmoid(-pair_margin(s.pair_input(), cfg));
  PolicyGrad g;
  g.w = coeff * cfg.beta;
  g.w_neg = -coeff * cfg.beta;
  return g;
}

namespace {

void check_mask(const ScoredSequences& s, ModalityTag m) {
  const PmpMask expected = pmp_mask_for(m);
  if (s.pmp_mask != expected) {
    throw std::invalid_argument(
        std::string("rejected AV input was masked as '") +
        std::string(to_string(s.pmp_mask)) + "' but modality tag '" +
        std::string(to_string(m)) + "' requires '" +
        std::string(to_string(expected)) + "'");
  }
}

}  // namespace

double pmp_loss(const ScoredSequences& s, ModalityTag m, const LossConfig& cfg) {
  check_mask(s, m);
  return av_preference_loss(s, cfg);
}

PolicyGrad pmp_grad(const ScoredSequences& s, ModalityTag m,
                    const LossConfig& cfg) {
  check_mask(s, m);
  return av_preference_grad(s, cfg);
}

double response_preference_loss(const ScoredSequences& s,
                                const LossConfig& cfg) {
  cfg.validate();
  check_response_fields(s);
  return logistic_loss(response_z(s, cfg, 0.0));
}

PolicyGrad response_preference_grad(const ScoredSequences& s,
                                    const LossConfig& cfg) {
  cfg.validate();
  check_response_fields(s);
  return response_grad_impl(s, cfg, 0.0);
}

double tpd_response_loss(const ScoredSequences& s, const LossConfig& cfg) {
  cfg.validate();
  check_response_fields(s);
  if (cfg.gamma_tpd != 0.0) check_text_fields(s);
  return logistic_loss(response_z(s, cfg, cfg.gamma_tpd));
}

PolicyGrad tpd_response_grad(const ScoredSequences& s, const LossConfig& cfg) {
  cfg.validate();
  check_response_fields(s);
  if (cfg.gamma_tpd != 0.0) check_text_fields(s);
  return response_grad_impl(s, cfg, cfg.gamma_tpd);
}

namespace {

double single_z(const ScoredSequences& s, bool use_er, const LossConfig& cfg) {
  const PairScores pair = use_er ? s.pair_er() : s.pair_vr();
  check_pair(pair);
  double z = pair_margin(pair, cfg);
  if (cfg.gamma_tpd != 0.0) {
    const double text_l = use_er ? s.logp_text_er : s.logp_text_vr;
    check_finite(s.logp_text_w, "logp_text_w");
    check_finite(text_l, use_er ? "logp_text_er" : "logp_text_vr");
    z -= cfg.gamma_tpd * (s.logp_text_w - text_l);
  }
  return z;
}

}  // namespace

double tpd_single_loss(const ScoredSequences& s, bool use_er,
                       const LossConfig& cfg) {
  cfg.validate();
  return logistic_loss(single_z(s, use_er, cfg));
}

PolicyGrad tpd_single_grad(const ScoredSequences& s, bool use_er,
                           const LossConfig& cfg) {
  cfg.validate();
  const double coeff = -sigmoid(-single_z(s, use_er, cfg));
  PolicyGrad g;
  g.w = coeff * cfg.beta;
  if (use_er) {
    g.er = -coeff * cfg.beta;
  } else {
    g.vr = -coeff * cfg.beta;
  }
  return g;
}

AvemDpoParts avem_dpo_loss(const ScoredSequences& s, ModalityTag m,
                           const LossConfig& cfg) {
  AvemDpoParts parts;
  parts.tpd_term = tpd_response_loss(s, cfg);
  parts.pmp_term = pmp_loss(s, m, cfg);
  parts.total = parts.tpd_term + cfg.lambda_av * parts.pmp_term;
  return parts;
}

PolicyGrad avem_dpo_grad(const ScoredSequences& s, ModalityTag m,
                         const LossConfig& cfg) {
  const PolicyGrad tpd = tpd_response_grad(s, cfg);
  const PolicyGrad pmp = pmp_grad(s, m, cfg);
  PolicyGrad g;
  g.w = tpd.w + cfg.lambda_av * pmp.w;
  g.vr = tpd.vr;
  g.er = tpd.er;
  g.w_neg = cfg.lambda_av * pmp.w_neg;
  return g;
}

Reduction reduction_from_string(std::string_view s) {
  if (s == "mean") return Reduction::kMean;
  if (s == "sum") return Reduction::kSum;
  throw std::invalid_argument("unknown reduction: " + std::string(s));
}

std::string_view to_string(Reduction r) {
  return r == Reduction::kMean ? "mean" : "sum";
}

double reduce(const std::vector<double>& values, Reduction mode) {
  if (values.empty()) {
    throw std::invalid_argument("reduce over an empty batch");
  }
  double acc = 0.0;
  for (double v : values) acc += v;
  return mode == Reduction::kSum ? acc : acc / static_cast<double>(values.size());
}

}  // namespace avemdpo::losses
