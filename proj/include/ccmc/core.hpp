#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ccmc/errors.hpp"
#include "ccmc/rng.hpp"

namespace ccmc {

/// Tolerance for identities that hold exactly in real arithmetic
/// (simplex sums after normalization, projector idempotence, ...).
inline constexpr double kValidationTol = 1e-12;

/// Tolerance for quantities assembled through longer float pipelines
/// (inputs to the samplers, readout sums).
inline constexpr double kSamplingTol = 1e-9;

/// Probabilities below this are treated as exact zeros everywhere
/// (support sets, strict positivity, graph connectivity).
inline constexpr double kZeroProb = 1e-15;

/// Tolerance for embedding-configuration identities (C E^T = I, C U^T = 0).
inline constexpr double kConfigTol = 1e-10;

/// Which positions of a prompt feed the frequency mask. Self attention
/// counts every position; cross attention counts everything but the last
/// (query) position.
enum class AttnVariant { kSelf, kCross };

inline const char* variant_name(AttnVariant v) {
  return v == AttnVariant::kSelf ? "self" : "cross";
}

/// A prompt: 0-based token ids plus the attention variant that decides
/// which positions count as keys.
struct Prompt {
  std::vector<int> tokens;
  AttnVariant variant = AttnVariant::kSelf;

  int length() const { return static_cast<int>(tokens.size()); }
  int last() const { return tokens.back(); }
  /// Number of positions that feed the frequency mask.
  int key_count() const {
    return variant == AttnVariant::kCross ? length() - 1 : length();
  }
  bool operator==(const Prompt& o) const {
    return variant == o.variant && tokens == o.tokens;
  }
};

/// Throws unless the prompt is usable with a vocabulary of size `vocab`:
/// nonempty (length at least 2 for cross attention, which needs a key),
/// every token inside [0, vocab).
inline void validate_prompt(const Prompt& prompt, int vocab) {
  if (prompt.tokens.empty())
    throw ValidationError("prompt is empty");
  if (prompt.variant == AttnVariant::kCross && prompt.length() < 2)
    throw ValidationError("cross-attention prompt needs at least one key position");
  for (int t : prompt.tokens)
    if (t < 0 || t >= vocab)
      throw ValidationError("prompt token " + std::to_string(t) +
                            " outside vocabulary of size " + std::to_string(vocab));
}

/// Empirical token frequencies over the counted positions of the prompt.
/// Entries are nonnegative and sum to one.
inline Eigen::VectorXd frequency_vector(const Prompt& prompt, int vocab) {
  validate_prompt(prompt, vocab);
  const int counted = prompt.key_count();
  Eigen::VectorXd freq = Eigen::VectorXd::Zero(vocab);
  for (int i = 0; i < counted; ++i) freq[prompt.tokens[i]] += 1.0;
  freq /= static_cast<double>(counted);
  return freq;
}

/// Diagnostic report for a candidate transition matrix.
struct TransitionReport {
  double max_column_sum_error = 0.0;
  double min_entry = 0.0;
  bool column_stochastic = false;
  bool strictly_positive = false;
};

/// Checks a square matrix against the column-stochastic convention used
/// throughout: entry (j, i) is the probability of moving from state i to
/// token j, so every column sums to one.
inline TransitionReport inspect_transition_matrix(const Eigen::MatrixXd& m) {
  TransitionReport r;
  if (m.rows() == 0 || m.rows() != m.cols()) return r;
  r.min_entry = m.minCoeff();
  r.max_column_sum_error =
      (m.colwise().sum().array() - 1.0).abs().maxCoeff();
  r.column_stochastic =
      r.min_entry >= -kZeroProb && r.max_column_sum_error <= kSamplingTol;
  r.strictly_positive = r.column_stochastic && r.min_entry > kZeroProb;
  return r;
}

/// Column-stochastic transition matrix over a vocabulary of K tokens.
/// Column i is the next-token law out of state i.
struct TransitionMatrix {
  Eigen::MatrixXd p;  // p(j, i) = P(next = j | state = i)
  bool strictly_positive = false;

  int vocab() const { return static_cast<int>(p.cols()); }
  Eigen::VectorXd column(int state) const { return p.col(state); }

  /// Validates and wraps a candidate matrix; tiny negative float dust is
  /// clamped to zero, anything worse is rejected.
  static TransitionMatrix from(Eigen::MatrixXd m) {
    if (m.rows() == 0 || m.rows() != m.cols())
      throw ValidationError("transition matrix must be square and nonempty");
    TransitionReport r = inspect_transition_matrix(m);
    if (!r.column_stochastic)
      throw ValidationError(
          "matrix is not column-stochastic (max column sum error " +
          std::to_string(r.max_column_sum_error) + ", min entry " +
          std::to_string(r.min_entry) + ")");
    m = m.cwiseMax(0.0);
    TransitionMatrix t;
    t.p = std::move(m);
    t.strictly_positive = r.strictly_positive;
    return t;
  }
};

/// Draws an index from a probability vector. The vector must be
/// nonnegative and sum to one within kSamplingTol. The draw walks the
/// cumulative sum against u * total, so scaling noise cannot push the
/// walk off the end; if float dust exhausts the walk anyway, the last
/// positive-probability index is returned.
inline int sample_categorical(const Eigen::VectorXd& probs, SplitMix64& rng) {
  const int n = static_cast<int>(probs.size());
  if (n == 0) throw ValidationError("empty probability vector");
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    if (probs[i] < -kZeroProb)
      throw ValidationError("negative probability at index " + std::to_string(i));
    total += std::max(probs[i], 0.0);
  }
  if (std::abs(total - 1.0) > kSamplingTol)
    throw ValidationError("probabilities sum to " + std::to_string(total));
  const double target = rng.uniform() * total;
  double acc = 0.0;
  int last_positive = -1;
  for (int i = 0; i < n; ++i) {
    const double p = std::max(probs[i], 0.0);
    if (p > 0.0) last_positive = i;
    acc += p;
    if (target < acc) return i;
  }
  return last_positive;
}

/// Draws an index proportional to nonnegative weights with precomputed
/// total. Internal fast path for the trajectory generator; the caller
/// guarantees total == sum(weights) > 0.
inline int sample_weighted(const double* weights, int n, double total,
                           SplitMix64& rng) {
  const double target = rng.uniform() * total;
  double acc = 0.0;
  int last_positive = -1;
  for (int i = 0; i < n; ++i) {
    if (weights[i] > 0.0) last_positive = i;
    acc += weights[i];
    if (target < acc) return i;
  }
  return last_positive;
}

/// One prompt with its probability under a prompt distribution.
struct WeightedPrompt {
  Prompt prompt;
  double weight = 0.0;
};

/// Finite-support distribution over prompts. All prompts share one
/// attention variant; weights are nonnegative and sum to one.
struct PromptDistribution {
  std::vector<WeightedPrompt> support;
  int vocab = 0;
  AttnVariant variant = AttnVariant::kSelf;

  static PromptDistribution from(std::vector<WeightedPrompt> support, int vocab) {
    if (support.empty())
      throw ValidationError("prompt distribution needs a nonempty support");
    const AttnVariant variant = support.front().prompt.variant;
    double total = 0.0;
    for (const auto& wp : support) {
      validate_prompt(wp.prompt, vocab);
      if (wp.prompt.variant != variant)
        throw ValidationError("prompt distribution mixes attention variants");
      if (wp.weight < 0.0)
        throw ValidationError("negative prompt weight");
      total += wp.weight;
    }
    if (std::abs(total - 1.0) > kValidationTol)
      throw ValidationError("prompt weights sum to " + std::to_string(total));
    for (std::size_t a = 0; a < support.size(); ++a)
      for (std::size_t b = a + 1; b < support.size(); ++b)
        if (support[a].prompt == support[b].prompt)
          throw ValidationError("duplicate prompt in distribution support");
    PromptDistribution d;
    d.support = std::move(support);
    d.vocab = vocab;
    d.variant = variant;
    return d;
  }
};

/// One observed (prompt, next token) pair.
struct Sample {
  Prompt prompt;
  int next = 0;
};

/// A finite dataset of samples sharing a vocabulary and variant.
struct Dataset {
  std::vector<Sample> samples;
  int vocab = 0;
  AttnVariant variant = AttnVariant::kSelf;

  int size() const { return static_cast<int>(samples.size()); }

  static Dataset from(std::vector<Sample> samples, int vocab) {
    if (samples.empty()) throw ValidationError("dataset is empty");
    const AttnVariant variant = samples.front().prompt.variant;
    for (const auto& s : samples) {
      validate_prompt(s.prompt, vocab);
      if (s.prompt.variant != variant)
        throw ValidationError("dataset mixes attention variants");
      if (s.next < 0 || s.next >= vocab)
        throw ValidationError("dataset label outside vocabulary");
    }
    Dataset d;
    d.samples = std::move(samples);
    d.vocab = vocab;
    d.variant = variant;
    return d;
  }
};

}  // namespace ccmc
