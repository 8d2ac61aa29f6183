#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ccmc/attention.hpp"
#include "ccmc/chain.hpp"
#include "ccmc/core.hpp"
#include "ccmc/errors.hpp"

namespace ccmc {

/// One weighted negative-log-likelihood term: predict `label` after `prompt`.
struct WeightedTerm {
  Prompt prompt;
  int label = 0;
  double weight = 0.0;
};

/// A finite weighted sum of NLL terms. Both the empirical and the exact
/// population objectives reduce to this form, so the optimizer and the
/// gradient code handle them identically.
struct Objective {
  std::vector<WeightedTerm> terms;
  int vocab = 0;
  AttnVariant variant = AttnVariant::kSelf;
};

/// Mean NLL over a dataset, with duplicate (prompt, label) pairs merged
/// into one weighted term. First-seen order is kept, so the result is a
/// deterministic function of the dataset.
inline Objective empirical_objective(const Dataset& data) {
  Objective obj;
  obj.vocab = data.vocab;
  obj.variant = data.variant;
  std::map<std::pair<std::vector<int>, int>, std::size_t> seen;
  const double w = 1.0 / data.size();
  for (const auto& s : data.samples) {
    auto key = std::make_pair(s.prompt.tokens, s.next);
    auto it = seen.find(key);
    if (it == seen.end()) {
      seen.emplace(std::move(key), obj.terms.size());
      obj.terms.push_back({s.prompt, s.next, w});
    } else {
      obj.terms[it->second].weight += w;
    }
  }
  return obj;
}

/// Exact population objective: every support prompt paired with every
/// label the ground-truth chain can emit there, weighted by
/// prompt weight times ground-truth probability.
inline Objective population_objective(const PromptDistribution& dist,
                                      const TransitionMatrix& ground_truth) {
  if (ground_truth.vocab() != dist.vocab)
    throw ValidationError("ground truth vocabulary does not match distribution");
  const CcmcModel gt{ground_truth};
  Objective obj;
  obj.vocab = dist.vocab;
  obj.variant = dist.variant;
  for (const auto& wp : dist.support) {
    if (wp.weight <= 0.0) continue;
    const Eigen::VectorXd law = ccmc_next_distribution(gt, wp.prompt);
    for (int y = 0; y < dist.vocab; ++y)
      if (law[y] > kZeroProb)
        obj.terms.push_back({wp.prompt, y, wp.weight * law[y]});
  }
  return obj;
}

/// A loss value together with the Frobenius norm of its projected gradient
/// and the number of samples (or support prompts) behind it.
struct LossReport {
  double value = 0.0;
  double grad_norm = 0.0;
  long long n_samples = 0;
};

inline Eigen::MatrixXd loss_gradient(const EmbeddingConfig& cfg,
                                     const Eigen::MatrixXd& weights,
                                     const Objective& objective);

/// Mean NLL of a dataset under the attention model. Evaluated through the
/// full attention forward pass; a zero-probability label makes the loss
/// infinite and throws.
inline LossReport nll_loss(const EmbeddingConfig& cfg,
                           const Eigen::MatrixXd& weights, const Dataset& data) {
  LossReport report;
  report.n_samples = static_cast<long long>(data.samples.size());
  double total = 0.0;
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    const auto& s = data.samples[i];
    const Eigen::VectorXd pi = attention_next_distribution(cfg, weights, s.prompt);
    const double logp = std::log(pi[s.next]);
    if (!std::isfinite(logp))
      throw InfiniteLossError("sample " + std::to_string(i) +
                                  " has zero probability under the model",
                              static_cast<long long>(i));
    total -= logp;
  }
  report.value = total / static_cast<double>(data.samples.size());
  report.grad_norm =
      loss_gradient(cfg, weights, empirical_objective(data)).norm();
  return report;
}

/// Exact population NLL under the attention model: expectation of the
/// per-prompt cross entropy between the ground-truth law and the model law.
inline LossReport population_loss(const EmbeddingConfig& cfg,
                                  const Eigen::MatrixXd& weights,
                                  const PromptDistribution& dist,
                                  const TransitionMatrix& ground_truth) {
  if (ground_truth.vocab() != dist.vocab)
    throw ValidationError("ground truth vocabulary does not match distribution");
  const CcmcModel gt{ground_truth};
  LossReport report;
  report.n_samples = static_cast<long long>(dist.support.size());
  double total = 0.0;
  for (std::size_t i = 0; i < dist.support.size(); ++i) {
    const auto& wp = dist.support[i];
    if (wp.weight <= 0.0) continue;
    const Eigen::VectorXd law = ccmc_next_distribution(gt, wp.prompt);
    const Eigen::VectorXd pi = attention_next_distribution(cfg, weights, wp.prompt);
    for (int y = 0; y < dist.vocab; ++y) {
      if (law[y] <= kZeroProb) continue;
      const double logp = std::log(pi[y]);
      if (!std::isfinite(logp))
        throw InfiniteLossError("support prompt " + std::to_string(i) +
                                    " label " + std::to_string(y) +
                                    " has zero probability under the model",
                                static_cast<long long>(i));
      total -= wp.weight * law[y] * logp;
    }
  }
  report.value = total;
  report.grad_norm =
      loss_gradient(cfg, weights, population_objective(dist, ground_truth)).norm();
  return report;
}

/// KL divergence between two probability vectors. Entries of p below
/// kZeroProb contribute nothing; a q-zero under p-mass is infinite.
inline double kl_divergence(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  if (p.size() != q.size())
    throw ValidationError("KL arguments have different lengths");
  double total = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p[i] < -kZeroProb || q[i] < -kZeroProb)
      throw ValidationError("KL arguments must be nonnegative");
    if (p[i] <= kZeroProb) continue;
    if (q[i] <= kZeroProb)
      throw InfiniteLossError("KL divergence is infinite at index " +
                                  std::to_string(i),
                              static_cast<long long>(i));
    total += p[i] * (std::log(p[i]) - std::log(q[i]));
  }
  return total;
}

/// Objective compiled against a configuration for repeated evaluation.
/// Because every attention score between token a and query q equals
/// (E W E^T)(a, q), the loss of a term depends on W only through the K x K
/// logit table Z = E W E^T masked by the prompt's key frequencies. Each
/// iteration therefore costs O(K^2 d + terms * K) instead of re-embedding
/// every prompt. Positional configurations have no such table and are
/// rejected.
class CompiledObjective {
 public:
  CompiledObjective(const EmbeddingConfig& cfg, const Objective& objective)
      : cfg_(cfg) {
    if (cfg.has_positions())
      throw ConfigError("compiled objectives require a positionless configuration");
    if (cfg.vocab() != objective.vocab)
      throw ValidationError("objective vocabulary does not match configuration");
    if (objective.terms.empty())
      throw ValidationError("objective has no terms");
    terms_.reserve(objective.terms.size());
    for (const auto& t : objective.terms) {
      validate_prompt(t.prompt, cfg.vocab());
      if (t.prompt.variant != objective.variant)
        throw ValidationError("objective mixes attention variants");
      if (t.label < 0 || t.label >= cfg.vocab())
        throw ValidationError("objective label outside vocabulary");
      if (t.weight < 0.0) throw ValidationError("negative term weight");
      if (t.weight == 0.0) continue;
      Term c;
      c.freq = frequency_vector(t.prompt, cfg.vocab());
      for (int j = 0; j < cfg.vocab(); ++j)
        if (c.freq[j] > 0.0) c.support.push_back(j);
      c.last = t.prompt.last();
      c.label = t.label;
      c.weight = t.weight;
      terms_.push_back(std::move(c));
    }
    if (terms_.empty())
      throw ValidationError("objective has only zero-weight terms");
  }

  int dim() const { return cfg_.dim(); }
  const EmbeddingConfig& config() const { return cfg_; }

  double loss(const Eigen::MatrixXd& weights) const {
    return evaluate(weights, nullptr);
  }

  /// Loss plus analytic gradient, projected onto span{(e_i - e_j) e_k^T}.
  double loss_and_gradient(const Eigen::MatrixXd& weights,
                           Eigen::MatrixXd& gradient) const {
    return evaluate(weights, &gradient);
  }

 private:
  struct Term {
    Eigen::VectorXd freq;
    std::vector<int> support;
    int last = 0;
    int label = 0;
    double weight = 0.0;
  };

  double evaluate(const Eigen::MatrixXd& weights,
                  Eigen::MatrixXd* gradient) const {
    const int k = cfg_.vocab();
    if (weights.rows() != cfg_.dim() || weights.cols() != cfg_.dim())
      throw ValidationError("weight matrix must be d x d");
    const Eigen::MatrixXd logits =
        cfg_.token_embed() * weights * cfg_.token_embed().transpose();
    Eigen::MatrixXd dz;
    if (gradient) dz = Eigen::MatrixXd::Zero(k, k);
    double total = 0.0;
    for (std::size_t ti = 0; ti < terms_.size(); ++ti) {
      const Term& t = terms_[ti];
      double zmax = -std::numeric_limits<double>::infinity();
      for (int j : t.support) zmax = std::max(zmax, logits(j, t.last));
      double norm = 0.0;
      for (int j : t.support)
        norm += t.freq[j] * std::exp(logits(j, t.last) - zmax);
      const double py =
          t.freq[t.label] * std::exp(logits(t.label, t.last) - zmax) / norm;
      if (!(py > 0.0) || !std::isfinite(std::log(py)))
        throw InfiniteLossError("term " + std::to_string(ti) +
                                    " has zero probability under the model",
                                static_cast<long long>(ti));
      total -= t.weight * std::log(py);
      if (gradient) {
        for (int j : t.support)
          dz(j, t.last) += t.weight * t.freq[j] *
                           std::exp(logits(j, t.last) - zmax) / norm;
        dz(t.label, t.last) -= t.weight;
      }
    }
    if (gradient) {
      *gradient = cfg_.token_embed().transpose() * dz * cfg_.token_embed();
      *gradient = project_to_token_span(cfg_, *gradient);
    }
    return total;
  }

  const EmbeddingConfig& cfg_;
  std::vector<Term> terms_;
};

/// Analytic gradient of the objective at W, projected onto the span of
/// token differences (the only directions the loss can see).
inline Eigen::MatrixXd loss_gradient(const EmbeddingConfig& cfg,
                                     const Eigen::MatrixXd& weights,
                                     const Objective& objective) {
  CompiledObjective compiled(cfg, objective);
  Eigen::MatrixXd g;
  compiled.loss_and_gradient(weights, g);
  return g;
}

struct GdSettings {
  double step = 0.1;
  int max_iters = 200000;
  double grad_tol = 1e-9;
  /// Loss increase beyond this triggers step halving.
  double increase_tol = 1e-12;
  int max_halvings = 5;
  /// Trace recording stride (first and last iterations always recorded).
  int record_every = 1000;
};

struct GdResult {
  Eigen::MatrixXd weights;
  double loss = 0.0;
  double grad_norm = 0.0;
  int iters = 0;
  bool converged = false;
  int halvings = 0;
  double final_step = 0.0;
  /// Rows of (iteration, loss, gradient norm).
  std::vector<std::array<double, 3>> trace;
};

/// Plain gradient descent from W = 0 with a constant step. The step is
/// halved whenever the loss fails to decrease (convexity plus a small
/// enough step make the trace monotone, so a persistent increase means the
/// step is too large); more than max_halvings such rescues is an error.
inline GdResult gradient_descent(const EmbeddingConfig& cfg,
                                 const Objective& objective,
                                 const GdSettings& settings = {}) {
  if (settings.step <= 0.0) throw ValidationError("step must be positive");
  CompiledObjective compiled(cfg, objective);
  const int d = cfg.dim();

  GdResult r;
  r.weights = Eigen::MatrixXd::Zero(d, d);
  double step = settings.step;
  Eigen::MatrixXd grad(d, d);
  r.loss = compiled.loss_and_gradient(r.weights, grad);
  r.grad_norm = grad.norm();
  r.trace.push_back({0.0, r.loss, r.grad_norm});

  Eigen::MatrixXd candidate(d, d), cand_grad(d, d);
  int iter = 0;
  while (iter < settings.max_iters) {
    if (r.grad_norm <= settings.grad_tol) {
      r.converged = true;
      break;
    }
    candidate = r.weights - step * grad;
    // A step so large that some term's probability underflows to zero is
    // just an extreme loss increase; let the halving logic handle it.
    double cand_loss;
    try {
      cand_loss = compiled.loss_and_gradient(candidate, cand_grad);
    } catch (const InfiniteLossError&) {
      cand_loss = std::numeric_limits<double>::infinity();
    }
    ++iter;
    if (cand_loss > r.loss + settings.increase_tol) {
      ++r.halvings;
      if (r.halvings > settings.max_halvings)
        throw StepSizeError("loss still increasing after " +
                            std::to_string(settings.max_halvings) +
                            " step halvings");
      step *= 0.5;
      continue;
    }
    r.weights.swap(candidate);
    grad.swap(cand_grad);
    r.loss = cand_loss;
    r.grad_norm = grad.norm();
    if (iter % settings.record_every == 0)
      r.trace.push_back({static_cast<double>(iter), r.loss, r.grad_norm});
  }
  r.iters = iter;
  r.final_step = step;
  if (r.trace.back()[0] != static_cast<double>(iter))
    r.trace.push_back({static_cast<double>(iter), r.loss, r.grad_norm});
  return r;
}

}  // namespace ccmc
