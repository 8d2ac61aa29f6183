#pragma once

#include <Eigen/Dense>
#include <string>

#include "ccmc/core.hpp"
#include "ccmc/errors.hpp"

namespace ccmc {

/// Reweights one transition column by a nonnegative mask and renormalizes:
///
///   out_j = mask_j * p(j, state) / sum_i mask_i * p(i, state)
///
/// The mask is any nonnegative vector (scale does not matter). Entries of
/// the product below kZeroProb count as exact zeros; if nothing survives,
/// the law is undefined and a DegenerateMaskError is thrown.
inline Eigen::VectorXd masked_transition(const TransitionMatrix& t,
                                         const Eigen::VectorXd& mask,
                                         int state) {
  const int k = t.vocab();
  if (state < 0 || state >= k)
    throw ValidationError("state " + std::to_string(state) +
                          " outside vocabulary of size " + std::to_string(k));
  if (mask.size() != k)
    throw ValidationError("mask length " + std::to_string(mask.size()) +
                          " does not match vocabulary " + std::to_string(k));
  if (mask.minCoeff() < -kZeroProb)
    throw ValidationError("mask has a negative entry");

  Eigen::VectorXd out(k);
  double total = 0.0;
  for (int j = 0; j < k; ++j) {
    double w = std::max(mask[j], 0.0) * t.p(j, state);
    if (w < kZeroProb) w = 0.0;
    out[j] = w;
    total += w;
  }
  if (total <= 0.0)
    throw DegenerateMaskError("mask and column " + std::to_string(state) +
                              " share no support");
  out /= total;
  return out;
}

/// A context-conditioned Markov chain: a base column-stochastic matrix
/// whose columns get reweighted by the prompt's empirical frequencies.
struct CcmcModel {
  TransitionMatrix base;

  int vocab() const { return base.vocab(); }

  static CcmcModel from(TransitionMatrix base) { return CcmcModel{std::move(base)}; }
};

/// Next-token law of the chain given a prompt: the base column of the
/// prompt's last token, reweighted by the prompt's frequency mask.
inline Eigen::VectorXd ccmc_next_distribution(const CcmcModel& model,
                                              const Prompt& prompt) {
  const Eigen::VectorXd freq = frequency_vector(prompt, model.vocab());
  return masked_transition(model.base, freq, prompt.last());
}

inline int ccmc_sample_next(const CcmcModel& model, const Prompt& prompt,
                            SplitMix64& rng) {
  return sample_categorical(ccmc_next_distribution(model, prompt), rng);
}

/// Position-aware variant for prompts of one fixed length L. The extra
/// factors are stored directly:
///   a_i       position-position weight of key slot i against the query slot
///   b_j       token-position weight of candidate token j
///   v(i, k)   position-token weight of key slot i against query token k
/// The next-token law given prompt X with last token q is proportional to
///   b_j * p(j, q) * sum_i a_i * v(i, q) * [x_i == j].
struct PositionalCcmcModel {
  TransitionMatrix base;
  Eigen::VectorXd a;  // length L
  Eigen::VectorXd b;  // length K
  Eigen::MatrixXd v;  // L x K

  int vocab() const { return base.vocab(); }
  int length() const { return static_cast<int>(a.size()); }

  static PositionalCcmcModel from(TransitionMatrix base, Eigen::VectorXd a,
                                  Eigen::VectorXd b, Eigen::MatrixXd v) {
    const int k = base.vocab();
    const int len = static_cast<int>(a.size());
    if (len <= 0) throw ValidationError("positional model needs length >= 1");
    if (b.size() != k)
      throw ValidationError("token weight vector has wrong length");
    if (v.rows() != len || v.cols() != k)
      throw ValidationError("position-token weight matrix has wrong shape");
    if (a.minCoeff() <= 0.0 || b.minCoeff() <= 0.0 || v.minCoeff() <= 0.0)
      throw ValidationError("positional weights must be strictly positive");
    return PositionalCcmcModel{std::move(base), std::move(a), std::move(b),
                               std::move(v)};
  }
};

/// Next-token law of the positional chain. The prompt must be a
/// self-attention prompt whose length equals the model's length.
inline Eigen::VectorXd positional_next_distribution(
    const PositionalCcmcModel& model, const Prompt& prompt) {
  const int k = model.vocab();
  validate_prompt(prompt, k);
  if (prompt.variant != AttnVariant::kSelf)
    throw ValidationError("positional law is defined for self-attention prompts");
  if (prompt.length() != model.length())
    throw ValidationError("prompt length " + std::to_string(prompt.length()) +
                          " does not match model length " +
                          std::to_string(model.length()));
  const int q = prompt.last();

  // Positional mass landing on each candidate token.
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(k);
  for (int i = 0; i < model.length(); ++i)
    acc[prompt.tokens[i]] += model.a[i] * model.v(i, q);

  Eigen::VectorXd out(k);
  double total = 0.0;
  for (int j = 0; j < k; ++j) {
    double w = model.b[j] * model.base.p(j, q) * acc[j];
    if (w < kZeroProb) w = 0.0;
    out[j] = w;
    total += w;
  }
  if (total <= 0.0)
    throw DegenerateMaskError("positional law has empty support for this prompt");
  out /= total;
  return out;
}

}  // namespace ccmc
