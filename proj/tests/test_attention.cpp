#include <catch2/catch_amalgamated.hpp>

#include "ccmc/attention.hpp"
#include "ccmc/chain.hpp"
#include "ccmc/rng.hpp"

using namespace ccmc;

namespace {

Prompt make_prompt(std::vector<int> tokens, AttnVariant variant) {
  Prompt p;
  p.tokens = std::move(tokens);
  p.variant = variant;
  return p;
}

Eigen::MatrixXd random_matrix(int rows, int cols, SplitMix64& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = rng.normal();
  return m;
}

// A non-orthonormal embedding with d > K and the matching pseudo-inverse
// readout C = (E E^T)^{-1} E, which satisfies C E^T = I.
EmbeddingConfig general_config(int vocab, int dim, SplitMix64& rng) {
  const Eigen::MatrixXd e = random_matrix(vocab, dim, rng);
  const Eigen::MatrixXd gram = e * e.transpose();
  const Eigen::MatrixXd c = gram.ldlt().solve(e);
  return EmbeddingConfig::make(e, c);
}

Prompt random_prompt(int vocab, int max_len, AttnVariant variant,
                     SplitMix64& rng) {
  const int min_len = variant == AttnVariant::kCross ? 2 : 1;
  Prompt p;
  p.variant = variant;
  const int len = min_len + static_cast<int>(rng.below(max_len));
  for (int i = 0; i < len; ++i)
    p.tokens.push_back(static_cast<int>(rng.below(vocab)));
  return p;
}

}  // namespace

TEST_CASE("softmax of (0.5, -0.5) matches the closed form") {
  Eigen::VectorXd z(2);
  z << 0.5, -0.5;
  const Eigen::VectorXd s = detail::softmax(z);
  REQUIRE(s[0] == Catch::Approx(0.73105857863000487).margin(1e-15));
  REQUIRE(s[1] == Catch::Approx(0.26894142136999512).margin(1e-15));
}

TEST_CASE("softmax is shift invariant and handles huge logits") {
  Eigen::VectorXd z(3);
  z << 1000.0, 1001.0, 999.0;
  const Eigen::VectorXd s = detail::softmax(z);
  REQUIRE(s.sum() == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(s[1] > s[0]);
  REQUIRE(s[0] > s[2]);

  Eigen::VectorXd shifted = z.array() - 1000.0;
  REQUIRE((detail::softmax(shifted) - s).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("zero weights average the embedded rows") {
  const EmbeddingConfig cfg = EmbeddingConfig::canonical(3);
  const Eigen::MatrixXd w = Eigen::MatrixXd::Zero(3, 3);
  const Prompt p = make_prompt({0, 1, 0}, AttnVariant::kSelf);
  const Eigen::VectorXd f = self_attention_output(cfg, w, p);
  REQUIRE(f[0] == Catch::Approx(2.0 / 3.0).margin(1e-15));
  REQUIRE(f[1] == Catch::Approx(1.0 / 3.0).margin(1e-15));
  REQUIRE(f[2] == 0.0);
}

TEST_CASE("one-token self prompt attends only to itself") {
  const EmbeddingConfig cfg = EmbeddingConfig::canonical(4);
  SplitMix64 rng(11);
  const Eigen::MatrixXd w = random_matrix(4, 4, rng);
  const Eigen::VectorXd law =
      attention_next_distribution(cfg, w, make_prompt({2}, AttnVariant::kSelf));
  REQUIRE(law[2] == Catch::Approx(1.0).margin(1e-15));
}

TEST_CASE("attention law equals the chain law on random instances") {
  SplitMix64 rng(2718);
  for (int k : {2, 3, 5}) {
    const EmbeddingConfig cfg = EmbeddingConfig::canonical(k);
    for (int trial = 0; trial < 25; ++trial) {
      const Eigen::MatrixXd w = random_matrix(k, k, rng);
      const CcmcModel chain{transition_from_weights(cfg, w)};
      const AttnVariant variant =
          trial % 2 ? AttnVariant::kCross : AttnVariant::kSelf;
      const Prompt p = random_prompt(k, 6, variant, rng);
      const Eigen::VectorXd via_attention =
          attention_next_distribution(cfg, w, p);
      const Eigen::VectorXd via_chain = ccmc_next_distribution(chain, p);
      REQUIRE((via_attention - via_chain).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("attention law equals the chain law under a general embedding") {
  SplitMix64 rng(9001);
  const EmbeddingConfig cfg = general_config(3, 5, rng);
  for (int trial = 0; trial < 25; ++trial) {
    const Eigen::MatrixXd w = random_matrix(5, 5, rng);
    const CcmcModel chain{transition_from_weights(cfg, w)};
    const Prompt p = random_prompt(3, 6,
                                   trial % 2 ? AttnVariant::kCross
                                             : AttnVariant::kSelf,
                                   rng);
    const Eigen::VectorXd via_attention = attention_next_distribution(cfg, w, p);
    const Eigen::VectorXd via_chain = ccmc_next_distribution(chain, p);
    REQUIRE((via_attention - via_chain).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("transition columns are softmaxes of weight columns") {
  const EmbeddingConfig cfg = EmbeddingConfig::canonical(2);
  Eigen::MatrixXd w(2, 2);
  w << 0.5, -0.5,
       -0.5, 0.5;
  const TransitionMatrix t = transition_from_weights(cfg, w);
  REQUIRE(t.p(0, 0) == Catch::Approx(0.73105857863000487).margin(1e-15));
  REQUIRE(t.p(1, 0) == Catch::Approx(0.26894142136999512).margin(1e-15));
  REQUIRE(t.p(0, 1) == Catch::Approx(0.26894142136999512).margin(1e-15));
}

TEST_CASE("weights recovered from a transition reproduce hand values") {
  const EmbeddingConfig cfg = EmbeddingConfig::canonical(2);
  Eigen::MatrixXd w(2, 2);
  w << 0.5, -0.5,
       -0.5, 0.5;
  const TransitionMatrix t = transition_from_weights(cfg, w);
  const Eigen::MatrixXd back = weights_from_transition(cfg, t);
  REQUIRE((back - w).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("transition and weight round trips hold for a general embedding") {
  SplitMix64 rng(77);
  const EmbeddingConfig cfg = general_config(4, 6, rng);

  // Start from a strictly positive transition.
  Eigen::MatrixXd m(4, 4);
  for (int c = 0; c < 4; ++c) {
    Eigen::VectorXd col(4);
    for (int r = 0; r < 4; ++r) col[r] = 0.05 + rng.uniform();
    m.col(c) = col / col.sum();
  }
  const TransitionMatrix p = TransitionMatrix::from(m);
  const Eigen::MatrixXd w = weights_from_transition(cfg, p);
  const TransitionMatrix p_back = transition_from_weights(cfg, w);
  REQUIRE((p_back.p - p.p).cwiseAbs().maxCoeff() < 1e-12);

  // Start from projected weights.
  const Eigen::MatrixXd w0 =
      project_to_token_span(cfg, random_matrix(6, 6, rng));
  const Eigen::MatrixXd w1 =
      weights_from_transition(cfg, transition_from_weights(cfg, w0));
  REQUIRE((w1 - w0).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("recovered weights always lie in the token span") {
  SplitMix64 rng(31337);
  const EmbeddingConfig cfg = general_config(3, 5, rng);
  Eigen::MatrixXd m(3, 3);
  for (int c = 0; c < 3; ++c) {
    Eigen::VectorXd col(3);
    for (int r = 0; r < 3; ++r) col[r] = 0.1 + rng.uniform();
    m.col(c) = col / col.sum();
  }
  const Eigen::MatrixXd w =
      weights_from_transition(cfg, TransitionMatrix::from(m));
  REQUIRE((project_to_token_span(cfg, w) - w).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("weights from a transition with zeros are rejected") {
  const EmbeddingConfig cfg = EmbeddingConfig::canonical(2);
  Eigen::MatrixXd m(2, 2);
  m << 1.0, 0.5,
       0.0, 0.5;
  REQUIRE_THROWS_AS(weights_from_transition(cfg, TransitionMatrix::from(m)),
                    DomainError);
}

TEST_CASE("projection zeroes the all-ones direction for canonical embeddings") {
  const EmbeddingConfig cfg = EmbeddingConfig::canonical(3);
  Eigen::VectorXd c(3);
  c << 1.0, -2.0, 0.5;
  const Eigen::MatrixXd ones_by_c = Eigen::VectorXd::Ones(3) * c.transpose();
  REQUIRE(project_to_token_span(cfg, ones_by_c).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("projection is idempotent and orthogonal to the span generators") {
  SplitMix64 rng(404);
  const EmbeddingConfig cfg = general_config(3, 5, rng);
  const Eigen::MatrixXd w = random_matrix(5, 5, rng);
  const Eigen::MatrixXd pw = project_to_token_span(cfg, w);
  REQUIRE((project_to_token_span(cfg, pw) - pw).cwiseAbs().maxCoeff() < 1e-12);

  // The residual is orthogonal to every generator (e_i - e_j) e_k^T.
  const Eigen::MatrixXd residual = w - pw;
  const Eigen::MatrixXd& e = cfg.token_embed();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) {
        const Eigen::MatrixXd gen =
            (e.row(i) - e.row(j)).transpose() * e.row(k);
        REQUIRE(std::abs((residual.array() * gen.array()).sum()) < 1e-10);
      }
}

TEST_CASE("projection leaves every attention output unchanged") {
  SplitMix64 rng(555);
  const EmbeddingConfig cfg = general_config(3, 4, rng);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::MatrixXd w = random_matrix(4, 4, rng);
    const Eigen::MatrixXd pw = project_to_token_span(cfg, w);
    const Prompt p = random_prompt(3, 5,
                                   trial % 2 ? AttnVariant::kCross
                                             : AttnVariant::kSelf,
                                   rng);
    const Eigen::VectorXd a = attention_next_distribution(cfg, w, p);
    const Eigen::VectorXd b = attention_next_distribution(cfg, pw, p);
    REQUIRE((a - b).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("embedding configuration validates its pieces") {
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(3, 3);

  // Readout that is not a left inverse.
  REQUIRE_THROWS_AS(EmbeddingConfig::make(eye, 2.0 * eye), ConfigError);

  // Dependent token rows.
  Eigen::MatrixXd dep(3, 3);
  dep << 1.0, 0.0, 0.0,
         0.0, 1.0, 0.0,
         1.0, 1.0, 0.0;
  REQUIRE_THROWS_AS(EmbeddingConfig::make(dep, dep), ConfigError);

  // d < K cannot hold independent rows.
  Eigen::MatrixXd wide(3, 2);
  wide << 1.0, 0.0,
          0.0, 1.0,
          1.0, 1.0;
  REQUIRE_THROWS_AS(EmbeddingConfig::make(wide, wide), ConfigError);

  // Positions visible to the readout.
  Eigen::MatrixXd u = Eigen::MatrixXd::Identity(2, 3);
  REQUIRE_THROWS_AS(EmbeddingConfig::make(eye, eye, u), ConfigError);
}

TEST_CASE("canonical positional configuration has the documented shape") {
  const EmbeddingConfig cfg = EmbeddingConfig::canonical_positional(3, 4);
  REQUIRE(cfg.vocab() == 3);
  REQUIRE(cfg.dim() == 7);
  REQUIRE(cfg.has_positions());
  REQUIRE(cfg.max_len() == 4);
  REQUIRE((cfg.readout() * cfg.pos_embed().transpose()).cwiseAbs().maxCoeff() ==
          0.0);
}

TEST_CASE("prompts longer than the positional capacity are rejected") {
  const EmbeddingConfig cfg = EmbeddingConfig::canonical_positional(2, 3);
  SplitMix64 rng(8);
  const Eigen::MatrixXd w = random_matrix(5, 5, rng);
  REQUIRE_THROWS_AS(
      self_attention_output(cfg, w, make_prompt({0, 1, 0, 1}, AttnVariant::kSelf)),
      ValidationError);
}

TEST_CASE("zero position rows collapse the positional factors to ones") {
  const EmbeddingConfig plain = EmbeddingConfig::canonical_positional(3, 4);
  const EmbeddingConfig zeroed = EmbeddingConfig::make(
      plain.token_embed(), plain.readout(), Eigen::MatrixXd::Zero(4, 7));
  SplitMix64 rng(17);
  const Eigen::MatrixXd w = random_matrix(7, 7, rng);
  const PositionalCcmcModel model = positional_model_from_weights(zeroed, w);
  REQUIRE((model.a - Eigen::VectorXd::Ones(4)).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE((model.b - Eigen::VectorXd::Ones(3)).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE((model.v - Eigen::MatrixXd::Ones(4, 3)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("positional attention equals the positional chain law") {
  const EmbeddingConfig cfg = EmbeddingConfig::canonical_positional(3, 4);
  SplitMix64 rng(23);
  for (int trial = 0; trial < 30; ++trial) {
    const Eigen::MatrixXd w = random_matrix(7, 7, rng);
    const PositionalCcmcModel model = positional_model_from_weights(cfg, w);
    Prompt p;
    p.variant = AttnVariant::kSelf;
    for (int i = 0; i < 4; ++i)
      p.tokens.push_back(static_cast<int>(rng.below(3)));
    const Eigen::VectorXd via_chain = positional_next_distribution(model, p);
    const Eigen::VectorXd via_attention = attention_next_distribution(cfg, w, p);
    REQUIRE((via_chain - via_attention).cwiseAbs().maxCoeff() < 1e-12);
  }
}
