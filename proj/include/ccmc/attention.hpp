#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <utility>

#include "ccmc/chain.hpp"
#include "ccmc/core.hpp"
#include "ccmc/errors.hpp"

namespace ccmc {

namespace detail {

/// Numerically stable softmax (max subtraction) of a dense vector.
inline Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  const double m = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - m).exp();
  return e / e.sum();
}

/// Gram-Schmidt with one re-orthogonalization pass. Columns of the input
/// must be linearly independent; returns an orthonormal basis of their span.
inline Eigen::MatrixXd orthonormal_basis(const Eigen::MatrixXd& vectors) {
  const Eigen::Index dim = vectors.rows();
  const Eigen::Index n = vectors.cols();
  Eigen::MatrixXd basis(dim, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    Eigen::VectorXd v = vectors.col(j);
    for (int pass = 0; pass < 2; ++pass)
      for (Eigen::Index i = 0; i < j; ++i)
        v -= basis.col(i).dot(v) * basis.col(i);
    const double norm = v.norm();
    if (norm <= 1e-12 * std::max(1.0, vectors.col(j).norm()))
      throw ConfigError("vectors are numerically dependent, no basis");
    basis.col(j) = v / norm;
  }
  return basis;
}

}  // namespace detail

/// Embedding configuration tying tokens (and optionally positions) to a
/// shared d-dimensional space:
///   E  (K x d)  token embedding rows, linearly independent
///   C  (K x d)  readout with C E^T = I, so C maps e_i back to onehot(i)
///   U  (L x d)  optional position rows, invisible to the readout: C U^T = 0
/// Construction validates the identities once and caches the pieces the
/// weight-space operations need (Gram inverse, basis of the span of token
/// differences, basis of the token span).
class EmbeddingConfig {
 public:
  static EmbeddingConfig make(Eigen::MatrixXd token_embed,
                              Eigen::MatrixXd readout) {
    return EmbeddingConfig(std::move(token_embed), std::move(readout),
                           Eigen::MatrixXd());
  }

  static EmbeddingConfig make(Eigen::MatrixXd token_embed,
                              Eigen::MatrixXd readout,
                              Eigen::MatrixXd pos_embed) {
    return EmbeddingConfig(std::move(token_embed), std::move(readout),
                           std::move(pos_embed));
  }

  /// Canonical configuration without positions: d = K, E = C = I.
  static EmbeddingConfig canonical(int vocab) {
    Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(vocab, vocab);
    return make(eye, eye);
  }

  /// Canonical configuration with positions: d = K + L,
  /// E = C = [I_K | 0], U = [0 | I_L].
  static EmbeddingConfig canonical_positional(int vocab, int max_len) {
    const int d = vocab + max_len;
    Eigen::MatrixXd e = Eigen::MatrixXd::Zero(vocab, d);
    e.leftCols(vocab) = Eigen::MatrixXd::Identity(vocab, vocab);
    Eigen::MatrixXd u = Eigen::MatrixXd::Zero(max_len, d);
    u.rightCols(max_len) = Eigen::MatrixXd::Identity(max_len, max_len);
    return make(e, e, std::move(u));
  }

  int vocab() const { return static_cast<int>(e_.rows()); }
  int dim() const { return static_cast<int>(e_.cols()); }
  bool has_positions() const { return u_.rows() > 0; }
  int max_len() const { return static_cast<int>(u_.rows()); }

  const Eigen::MatrixXd& token_embed() const { return e_; }
  const Eigen::MatrixXd& readout() const { return c_; }
  const Eigen::MatrixXd& pos_embed() const { return u_; }

  /// True when E E^T is exactly the identity (canonical configurations).
  bool orthonormal_tokens() const { return gram_is_identity_; }

  /// Solves (E E^T) x = rhs column by column.
  Eigen::MatrixXd solve_gram(const Eigen::MatrixXd& rhs) const {
    if (gram_is_identity_) return rhs;
    return gram_ldlt_.solve(rhs);
  }

  /// Orthonormal basis of span{e_i - e_j}, dimension K - 1.
  const Eigen::MatrixXd& difference_basis() const { return basis_diff_; }
  /// Orthonormal basis of span{e_i}, dimension K.
  const Eigen::MatrixXd& token_basis() const { return basis_tok_; }

 private:
  EmbeddingConfig(Eigen::MatrixXd e, Eigen::MatrixXd c, Eigen::MatrixXd u)
      : e_(std::move(e)), c_(std::move(c)), u_(std::move(u)) {
    const int k = static_cast<int>(e_.rows());
    const int d = static_cast<int>(e_.cols());
    if (k < 1) throw ConfigError("vocabulary must be nonempty");
    if (d < k)
      throw ConfigError("embedding dimension " + std::to_string(d) +
                        " cannot carry " + std::to_string(k) +
                        " independent token rows");
    if (c_.rows() != k || c_.cols() != d)
      throw ConfigError("readout must have the same shape as the embeddings");
    if ((c_ * e_.transpose() - Eigen::MatrixXd::Identity(k, k))
            .cwiseAbs()
            .maxCoeff() > kConfigTol)
      throw ConfigError("readout is not a left inverse of the embeddings");
    if (u_.rows() > 0) {
      if (u_.cols() != d)
        throw ConfigError("position rows live in the wrong dimension");
      if ((c_ * u_.transpose()).cwiseAbs().maxCoeff() > kConfigTol)
        throw ConfigError("position rows must be invisible to the readout");
    }

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(e_.transpose());
    if (qr.rank() != k)
      throw ConfigError("token embedding rows are linearly dependent");

    Eigen::MatrixXd gram = e_ * e_.transpose();
    gram_is_identity_ =
        (gram - Eigen::MatrixXd::Identity(k, k)).cwiseAbs().maxCoeff() == 0.0;
    gram_ldlt_.compute(gram);

    basis_tok_ = detail::orthonormal_basis(e_.transpose());
    if (k > 1) {
      Eigen::MatrixXd diffs(d, k - 1);
      for (int i = 1; i < k; ++i)
        diffs.col(i - 1) = (e_.row(i) - e_.row(0)).transpose();
      basis_diff_ = detail::orthonormal_basis(diffs);
    } else {
      basis_diff_ = Eigen::MatrixXd::Zero(d, 0);
    }
  }

  Eigen::MatrixXd e_, c_, u_;
  Eigen::LDLT<Eigen::MatrixXd> gram_ldlt_;
  bool gram_is_identity_ = false;
  Eigen::MatrixXd basis_diff_;  // d x (K-1)
  Eigen::MatrixXd basis_tok_;   // d x K
};

/// Embeds a prompt as a matrix whose row t is the embedding of token t
/// (plus the position row t when the configuration has positions).
inline Eigen::MatrixXd embed_prompt(const EmbeddingConfig& cfg,
                                    const Prompt& prompt) {
  validate_prompt(prompt, cfg.vocab());
  const int len = prompt.length();
  if (cfg.has_positions() && len > cfg.max_len())
    throw ValidationError("prompt length " + std::to_string(len) +
                          " exceeds positional capacity " +
                          std::to_string(cfg.max_len()));
  Eigen::MatrixXd x(len, cfg.dim());
  for (int t = 0; t < len; ++t) {
    x.row(t) = cfg.token_embed().row(prompt.tokens[t]);
    if (cfg.has_positions()) x.row(t) += cfg.pos_embed().row(t);
  }
  return x;
}

/// Self attention with the last position as query:
/// f = X^T softmax(X W x_q) where x_q is the last row of X.
inline Eigen::VectorXd self_attention_output(const EmbeddingConfig& cfg,
                                             const Eigen::MatrixXd& weights,
                                             const Prompt& prompt) {
  if (prompt.variant != AttnVariant::kSelf)
    throw ValidationError("prompt is not a self-attention prompt");
  const Eigen::MatrixXd x = embed_prompt(cfg, prompt);
  const Eigen::VectorXd query = x.row(x.rows() - 1);
  const Eigen::VectorXd scores = detail::softmax(x * (weights * query));
  return x.transpose() * scores;
}

/// Cross attention: keys are every position but the last, the query is the
/// embedded last token (at its own position when positions are present).
inline Eigen::VectorXd cross_attention_output(const EmbeddingConfig& cfg,
                                              const Eigen::MatrixXd& weights,
                                              const Prompt& prompt) {
  if (prompt.variant != AttnVariant::kCross)
    throw ValidationError("prompt is not a cross-attention prompt");
  const Eigen::MatrixXd x = embed_prompt(cfg, prompt);
  const int len = prompt.length();
  const Eigen::MatrixXd keys = x.topRows(len - 1);
  const Eigen::VectorXd query = x.row(len - 1);
  const Eigen::VectorXd scores = detail::softmax(keys * (weights * query));
  return keys.transpose() * scores;
}

/// Next-token distribution read out of the attention output: pi = C f.
/// Under the configuration identities this is an exact simplex; float dust
/// is clamped and renormalized, anything worse is rejected.
inline Eigen::VectorXd attention_next_distribution(
    const EmbeddingConfig& cfg, const Eigen::MatrixXd& weights,
    const Prompt& prompt) {
  const Eigen::VectorXd f = prompt.variant == AttnVariant::kSelf
                                ? self_attention_output(cfg, weights, prompt)
                                : cross_attention_output(cfg, weights, prompt);
  Eigen::VectorXd pi = cfg.readout() * f;
  if (pi.minCoeff() < -kSamplingTol)
    throw ValidationError("readout produced a significantly negative mass");
  pi = pi.cwiseMax(0.0);
  const double total = pi.sum();
  if (std::abs(total - 1.0) > kSamplingTol)
    throw ValidationError("readout mass sums to " + std::to_string(total));
  return pi / total;
}

/// The transition matrix realized by attention weights W: column i is
/// softmax(E W e_i), the next-token logits when the query token is i.
inline TransitionMatrix transition_from_weights(const EmbeddingConfig& cfg,
                                                const Eigen::MatrixXd& weights) {
  const int k = cfg.vocab();
  if (weights.rows() != cfg.dim() || weights.cols() != cfg.dim())
    throw ValidationError("weight matrix must be d x d");
  const Eigen::MatrixXd logits =
      cfg.token_embed() * weights * cfg.token_embed().transpose();
  Eigen::MatrixXd p(k, k);
  for (int i = 0; i < k; ++i) p.col(i) = detail::softmax(logits.col(i));
  return TransitionMatrix::from(std::move(p));
}

/// Orthogonal projection of W onto span{(e_i - e_j) e_k^T}. Components
/// outside this span never change any attention output: they add a
/// per-column constant to the logits, which softmax ignores.
inline Eigen::MatrixXd project_to_token_span(const EmbeddingConfig& cfg,
                                             const Eigen::MatrixXd& weights) {
  if (weights.rows() != cfg.dim() || weights.cols() != cfg.dim())
    throw ValidationError("weight matrix must be d x d");
  const Eigen::MatrixXd& bd = cfg.difference_basis();
  const Eigen::MatrixXd& bt = cfg.token_basis();
  if (bd.cols() == 0) return Eigen::MatrixXd::Zero(cfg.dim(), cfg.dim());
  return bd * (bd.transpose() * weights * bt) * bt.transpose();
}

/// Inverse of transition_from_weights on strictly positive matrices: the
/// unique W inside span{(e_i - e_j) e_k^T} with softmax(E W e_i) = column i.
/// Solves E W E^T = log(P) + 1 beta^T through the Gram inverse, with beta
/// chosen so the solution's columns are spanned by token differences.
inline Eigen::MatrixXd weights_from_transition(const EmbeddingConfig& cfg,
                                               const TransitionMatrix& t) {
  const int k = cfg.vocab();
  if (t.vocab() != k)
    throw ValidationError("transition matrix vocabulary does not match");
  if (!t.strictly_positive)
    throw DomainError("only strictly positive matrices have a weight preimage");
  const Eigen::MatrixXd logp = t.p.array().log().matrix();

  Eigen::VectorXd beta(k);
  Eigen::MatrixXd inner(k, k);
  if (cfg.orthonormal_tokens()) {
    // Gram is the identity; beta just centers each column of log P.
    beta = -logp.colwise().mean().transpose();
    inner = logp + Eigen::VectorXd::Ones(k) * beta.transpose();
  } else {
    const Eigen::VectorXd q = cfg.solve_gram(Eigen::VectorXd::Ones(k));
    beta = -(logp.transpose() * q) / q.sum();
    const Eigen::MatrixXd shifted =
        logp + Eigen::VectorXd::Ones(k) * beta.transpose();
    inner = cfg.solve_gram(cfg.solve_gram(shifted).transpose()).transpose();
  }
  return cfg.token_embed().transpose() * inner * cfg.token_embed();
}

/// Extracts the positional chain realized by weights W under a positional
/// configuration: base = transition_from_weights, and
///   a_i = exp(u_i W u_q), b_j = exp(e_j W u_q), v(i, k) = exp(u_i W e_k)
/// with u_q the last position row.
inline PositionalCcmcModel positional_model_from_weights(
    const EmbeddingConfig& cfg, const Eigen::MatrixXd& weights) {
  if (!cfg.has_positions())
    throw ConfigError("configuration has no position rows");
  if (weights.rows() != cfg.dim() || weights.cols() != cfg.dim())
    throw ValidationError("weight matrix must be d x d");
  const Eigen::MatrixXd& u = cfg.pos_embed();
  const Eigen::MatrixXd& e = cfg.token_embed();
  const Eigen::VectorXd uq = u.row(u.rows() - 1);
  const Eigen::VectorXd wq = weights * uq;
  Eigen::VectorXd a = (u * wq).array().exp();
  Eigen::VectorXd b = (e * wq).array().exp();
  Eigen::MatrixXd v = (u * weights * e.transpose()).array().exp();
  return PositionalCcmcModel::from(transition_from_weights(cfg, weights),
                                   std::move(a), std::move(b), std::move(v));
}

}  // namespace ccmc
