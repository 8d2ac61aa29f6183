#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "ccmc/attention.hpp"
#include "ccmc/chain.hpp"
#include "ccmc/core.hpp"
#include "ccmc/errors.hpp"

namespace ccmc {

/// Options for trajectory generation.
struct GenOptions {
  /// Absolute step indices at which to snapshot statistics. Empty means
  /// the default geometric grid (ratio 1.2) plus the final step.
  std::vector<long long> checkpoints;
  /// Allow a start prompt that misses part of the vocabulary.
  bool allow_partial_vocab = false;
};

/// Geometric checkpoint grid: 1, then ceil(previous * 1.2), up to and
/// including `steps`.
inline std::vector<long long> default_checkpoints(long long steps) {
  std::vector<long long> out;
  long long t = 1;
  while (t < steps) {
    out.push_back(t);
    t = std::max(t + 1, static_cast<long long>(std::ceil(1.2 * static_cast<double>(t))));
  }
  out.push_back(steps);
  return out;
}

/// Snapshots of running statistics along one generated trajectory. All
/// quantities cover the full sequence (start prompt plus generated tokens):
/// `freq` is counts / length, `visits` is raw counts, `trans` counts the
/// consecutive pairs, flattened as [from * vocab + to].
struct TrajectoryStats {
  int vocab = 0;
  long long steps = 0;
  int start_len = 0;
  std::vector<long long> start_visits;  // token counts of the start prompt
  std::vector<long long> checkpoint_steps;
  std::vector<std::vector<double>> freq;
  std::vector<std::vector<long long>> visits;
  std::vector<std::vector<long long>> trans;

  int checkpoint_count() const { return static_cast<int>(checkpoint_steps.size()); }

  /// Index of an exact checkpoint, or -1.
  int find_checkpoint(long long t) const {
    auto it = std::lower_bound(checkpoint_steps.begin(), checkpoint_steps.end(), t);
    if (it == checkpoint_steps.end() || *it != t) return -1;
    return static_cast<int>(it - checkpoint_steps.begin());
  }
};

/// The start prompt and every generated token; enough to rebuild any
/// prefix. The explicit (prefix, next) dataset is materialized on demand
/// because storing all prefixes is quadratic in the trajectory length.
struct TrajectoryRecord {
  Prompt start;
  std::vector<int> generated;
  int vocab = 0;

  /// Expands the first `first_n` steps (all when negative) into explicit
  /// (prefix, next) samples. Quadratic in first_n; meant for short runs.
  Dataset to_dataset(long long first_n = -1) const {
    long long n = first_n < 0 ? static_cast<long long>(generated.size())
                              : std::min<long long>(first_n, generated.size());
    if (n <= 0) throw ValidationError("no generated steps to expand");
    std::vector<Sample> samples;
    samples.reserve(static_cast<std::size_t>(n));
    Prompt prefix = start;
    for (long long i = 0; i < n; ++i) {
      samples.push_back({prefix, generated[static_cast<std::size_t>(i)]});
      prefix.tokens.push_back(generated[static_cast<std::size_t>(i)]);
    }
    return Dataset::from(std::move(samples), vocab);
  }
};

/// Rolls the chain forward `steps` tokens from the start prompt, feeding
/// each sampled token back into the context. Statistics are maintained
/// incrementally from running counts, so the cost per step is O(vocab)
/// regardless of how long the prefix has grown.
///
/// The start prompt must be a self-attention prompt covering the whole
/// vocabulary (each token at least once) unless allow_partial_vocab is set.
inline std::pair<TrajectoryRecord, TrajectoryStats> generate_trajectory(
    const CcmcModel& model, const Prompt& start, long long steps,
    SplitMix64& rng, const GenOptions& options = {}) {
  const int k = model.vocab();
  validate_prompt(start, k);
  if (start.variant != AttnVariant::kSelf)
    throw ValidationError("trajectories are generated with self-attention context");
  if (steps < 1) throw ValidationError("need at least one generation step");

  std::vector<long long> grid =
      options.checkpoints.empty() ? default_checkpoints(steps) : options.checkpoints;
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  if (grid.front() < 1 || grid.back() > steps)
    throw ValidationError("checkpoints must lie in [1, steps]");
  if (grid.back() != steps) grid.push_back(steps);

  std::vector<long long> counts(k, 0);
  for (int t : start.tokens) ++counts[t];
  if (!options.allow_partial_vocab)
    for (int j = 0; j < k; ++j)
      if (counts[j] == 0)
        throw CoverageError("start prompt never shows token " + std::to_string(j) +
                            "; pass allow_partial_vocab to permit this");

  TrajectoryRecord record;
  record.start = start;
  record.vocab = k;
  record.generated.reserve(static_cast<std::size_t>(steps));

  TrajectoryStats stats;
  stats.vocab = k;
  stats.steps = steps;
  stats.start_len = start.length();
  stats.start_visits = counts;
  stats.checkpoint_steps = grid;

  std::vector<long long> trans(static_cast<std::size_t>(k) * k, 0);
  for (int i = 0; i + 1 < start.length(); ++i)
    ++trans[static_cast<std::size_t>(start.tokens[i]) * k + start.tokens[i + 1]];

  int last = start.last();
  long long length = start.length();
  std::vector<double> weights(k);
  std::size_t next_cp = 0;

  for (long long t = 1; t <= steps; ++t) {
    double total = 0.0;
    for (int j = 0; j < k; ++j) {
      const double w = static_cast<double>(counts[j]) * model.base.p(j, last);
      weights[j] = w;
      total += w;
    }
    if (total <= 0.0)
      throw DegenerateMaskError("context and column " + std::to_string(last) +
                                " share no support at step " + std::to_string(t));
    const int next = sample_weighted(weights.data(), k, total, rng);
    record.generated.push_back(next);
    ++trans[static_cast<std::size_t>(last) * k + next];
    ++counts[next];
    ++length;
    last = next;

    if (next_cp < grid.size() && grid[next_cp] == t) {
      std::vector<double> freq(k);
      for (int j = 0; j < k; ++j)
        freq[j] = static_cast<double>(counts[j]) / static_cast<double>(length);
      stats.freq.push_back(std::move(freq));
      stats.visits.emplace_back(counts.begin(), counts.end());
      stats.trans.push_back(trans);
      ++next_cp;
    }
  }
  return {std::move(record), std::move(stats)};
}

/// Attention-backed convenience overload: the weights realize exactly the
/// chain transition_from_weights(cfg, W), so generation runs through the
/// equivalent chain (the incremental-counts path would otherwise cost
/// O(prefix) per step).
inline std::pair<TrajectoryRecord, TrajectoryStats> generate_trajectory(
    const EmbeddingConfig& cfg, const Eigen::MatrixXd& weights,
    const Prompt& start, long long steps, SplitMix64& rng,
    const GenOptions& options = {}) {
  CcmcModel model{transition_from_weights(cfg, weights)};
  return generate_trajectory(model, start, steps, rng, options);
}

/// The two-token chain with one weak token: both columns equal
/// (1-p, p), so token 1 is reinforced with probability p <= 1/2.
inline CcmcModel weak_token_setup(double p) {
  if (!(p > 0.0) || p > 0.5)
    throw ValidationError("weak-token probability must lie in (0, 1/2]");
  Eigen::MatrixXd m(2, 2);
  m << 1.0 - p, 1.0 - p, p, p;
  return CcmcModel{TransitionMatrix::from(std::move(m))};
}

/// Predicted frequency-decay exponent of the weak token for the two-token
/// chain above: freq ~ t^(-q) with q = (1 - 2p) / (1 - p).
inline double weak_decay_exponent(double p) {
  if (!(p > 0.0) || p > 0.5)
    throw ValidationError("weak-token probability must lie in (0, 1/2]");
  return (1.0 - 2.0 * p) / (1.0 - p);
}

/// Least-squares power-law fit over the tail of a frequency series.
struct CollapseFit {
  double exponent = 0.0;   // slope of log freq against log t
  double intercept = 0.0;
  double r_squared = 0.0;
  long long t_lo = 0;
  long long t_hi = 0;
  int points = 0;
};

/// Fits log(values) = intercept + exponent * log(t) over the checkpoints
/// with t >= t0_fraction * max(t). Needs at least three points and strictly
/// positive values inside the window.
inline CollapseFit fit_collapse_exponent(const std::vector<long long>& times,
                                         const std::vector<double>& values,
                                         double t0_fraction) {
  if (times.size() != values.size())
    throw ValidationError("times and values have different lengths");
  if (times.empty()) throw FitError("empty series");
  if (!(t0_fraction >= 0.0) || t0_fraction >= 1.0)
    throw ValidationError("t0_fraction must lie in [0, 1)");
  const double cutoff =
      t0_fraction * static_cast<double>(*std::max_element(times.begin(), times.end()));
  std::vector<double> xs, ys;
  CollapseFit fit;
  fit.t_lo = -1;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (static_cast<double>(times[i]) < cutoff) continue;
    if (!(values[i] > 0.0))
      throw FitError("nonpositive value inside the fit window at t = " +
                     std::to_string(times[i]));
    if (fit.t_lo < 0) fit.t_lo = times[i];
    fit.t_hi = times[i];
    xs.push_back(std::log(static_cast<double>(times[i])));
    ys.push_back(std::log(values[i]));
  }
  fit.points = static_cast<int>(xs.size());
  if (fit.points < 3)
    throw FitError("fit window holds only " + std::to_string(fit.points) +
                   " points, need at least 3");
  const double n = static_cast<double>(fit.points);
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (int i = 0; i < fit.points; ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
    syy += ys[i] * ys[i];
  }
  const double vxx = sxx - sx * sx / n;
  const double vxy = sxy - sx * sy / n;
  const double vyy = syy - sy * sy / n;
  if (vxx <= 0.0) throw FitError("degenerate fit window");
  fit.exponent = vxy / vxx;
  fit.intercept = (sy - fit.exponent * sx) / n;
  fit.r_squared = vyy > 0.0 ? (vxy * vxy) / (vxx * vyy) : 1.0;
  return fit;
}

/// Mean frequency of one token across an ensemble, per checkpoint. All
/// trajectories must share the checkpoint grid.
inline std::vector<double> ensemble_mean_frequency(
    const std::vector<TrajectoryStats>& ensemble, int token) {
  if (ensemble.empty()) throw ValidationError("empty ensemble");
  const auto& grid = ensemble.front().checkpoint_steps;
  std::vector<double> mean(grid.size(), 0.0);
  for (const auto& stats : ensemble) {
    if (stats.checkpoint_steps != grid)
      throw ValidationError("ensemble mixes checkpoint grids");
    for (std::size_t i = 0; i < grid.size(); ++i) mean[i] += stats.freq[i][token];
  }
  for (double& m : mean) m /= static_cast<double>(ensemble.size());
  return mean;
}

/// Mean of the per-trajectory frequency ratio numerator/denominator.
inline std::vector<double> ensemble_mean_ratio(
    const std::vector<TrajectoryStats>& ensemble, int numerator, int denominator) {
  if (ensemble.empty()) throw ValidationError("empty ensemble");
  const auto& grid = ensemble.front().checkpoint_steps;
  std::vector<double> mean(grid.size(), 0.0);
  for (const auto& stats : ensemble) {
    if (stats.checkpoint_steps != grid)
      throw ValidationError("ensemble mixes checkpoint grids");
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const double den = stats.freq[i][denominator];
      if (!(den > 0.0))
        throw ValidationError("ratio denominator vanishes at a checkpoint");
      mean[i] += stats.freq[i][numerator] / den;
    }
  }
  for (double& m : mean) m /= static_cast<double>(ensemble.size());
  return mean;
}

/// Cumulative count of (from -> to) transitions at every checkpoint.
inline std::vector<long long> transition_count_series(const TrajectoryStats& stats,
                                                      int from, int to) {
  if (from < 0 || from >= stats.vocab || to < 0 || to >= stats.vocab)
    throw ValidationError("transition endpoints outside vocabulary");
  std::vector<long long> series;
  series.reserve(stats.trans.size());
  for (const auto& t : stats.trans)
    series.push_back(t[static_cast<std::size_t>(from) * stats.vocab + to]);
  return series;
}

/// Per-token flags: did the visit count strictly increase inside every
/// window of `window` steps? The first window is compared against the
/// start-prompt counts. Every window boundary must be a checkpoint.
inline std::vector<bool> visit_growth_check(const TrajectoryStats& stats,
                                            long long window) {
  if (window < 1 || window > stats.steps)
    throw ValidationError("window must lie in [1, steps]");
  std::vector<bool> ok(stats.vocab, true);
  std::vector<long long> prev = stats.start_visits;
  for (long long boundary = window; boundary <= stats.steps; boundary += window) {
    const int idx = stats.find_checkpoint(boundary);
    if (idx < 0)
      throw ValidationError("window boundary " + std::to_string(boundary) +
                            " is not a checkpoint");
    const auto& visits = stats.visits[idx];
    for (int j = 0; j < stats.vocab; ++j)
      if (visits[j] <= prev[j]) ok[j] = false;
    prev.assign(visits.begin(), visits.end());
  }
  return ok;
}

}  // namespace ccmc
