#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "ccmc/attention.hpp"
#include "ccmc/experiments.hpp"
#include "ccmc/learn.hpp"
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

// Ground truth, support, and exact population objective for one vocab.
struct PopulationFixture {
  EmbeddingConfig cfg;
  Eigen::MatrixXd w_gt;
  TransitionMatrix gt;
  PromptDistribution dist;
  Objective objective;

  static PopulationFixture make(int vocab, std::uint64_t seed) {
    EmbeddingConfig cfg = EmbeddingConfig::canonical(vocab);
    SplitMix64 rng(seed);
    Eigen::MatrixXd w_gt =
        project_to_token_span(cfg, random_matrix(vocab, vocab, rng));
    TransitionMatrix gt = transition_from_weights(cfg, w_gt);
    PromptDistribution dist = cyclic_support(vocab);
    Objective objective = population_objective(dist, gt);
    return {std::move(cfg), std::move(w_gt), std::move(gt), std::move(dist),
            std::move(objective)};
  }
};

}  // namespace

TEST_CASE("uniform model on a two-token prompt costs log 2") {
  const EmbeddingConfig cfg = EmbeddingConfig::canonical(2);
  const Dataset data =
      Dataset::from({{make_prompt({0, 1}, AttnVariant::kSelf), 0}}, 2);
  const LossReport report = nll_loss(cfg, Eigen::MatrixXd::Zero(2, 2), data);
  REQUIRE(report.value == Catch::Approx(std::log(2.0)).margin(1e-15));
  REQUIRE(report.n_samples == 1);
  REQUIRE(std::isfinite(report.grad_norm));
}

TEST_CASE("a label outside the masked support has infinite loss") {
  const EmbeddingConfig cfg = EmbeddingConfig::canonical(2);
  // Cross attention drops the query, so only token 0 is a key and the
  // label 1 has probability zero.
  const Dataset data =
      Dataset::from({{make_prompt({0, 1}, AttnVariant::kCross), 1}}, 2);
  try {
    nll_loss(cfg, Eigen::MatrixXd::Zero(2, 2), data);
    FAIL("expected an infinite-loss error");
  } catch (const InfiniteLossError& e) {
    REQUIRE(e.term_index == 0);
  }
}

TEST_CASE("KL divergence matches hand values") {
  Eigen::VectorXd p(2), q(2);
  p << 0.5, 0.5;
  q << 0.25, 0.75;
  const double expect = 0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0);
  REQUIRE(kl_divergence(p, q) == Catch::Approx(expect).margin(1e-15));
  REQUIRE(kl_divergence(p, p) == 0.0);
  REQUIRE(kl_divergence(q, q) == 0.0);
}

TEST_CASE("KL divergence rejects support violations") {
  Eigen::VectorXd p(2), q(2);
  p << 0.5, 0.5;
  q << 1.0, 0.0;
  REQUIRE_THROWS_AS(kl_divergence(p, q), InfiniteLossError);
  // Zero p entries contribute nothing even where q vanishes.
  REQUIRE(kl_divergence(q, q) == 0.0);
}

TEST_CASE("population gradient vanishes at the ground truth") {
  const PopulationFixture fx = PopulationFixture::make(4, 99);
  const Eigen::MatrixXd grad =
      loss_gradient(fx.cfg, fx.w_gt, fx.objective);
  REQUIRE(grad.cwiseAbs().maxCoeff() < 1e-12);
  // The loss report sees the same stationarity.
  REQUIRE(population_loss(fx.cfg, fx.w_gt, fx.dist, fx.gt).grad_norm < 1e-12);
}

TEST_CASE("analytic gradients agree with central differences") {
  SplitMix64 rng(1234);
  const PopulationFixture fx = PopulationFixture::make(3, 4321);
  const CompiledObjective compiled(fx.cfg, fx.objective);
  const double h = 1e-5;
  for (int trial = 0; trial < 5; ++trial) {
    const Eigen::MatrixXd w = random_matrix(3, 3, rng);
    Eigen::MatrixXd grad;
    compiled.loss_and_gradient(w, grad);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) {
        Eigen::MatrixXd probe = w;
        probe(r, c) = w(r, c) + h;
        const double up = compiled.loss(probe);
        probe(r, c) = w(r, c) - h;
        const double down = compiled.loss(probe);
        const double fd = (up - down) / (2.0 * h);
        const double scale = std::max({std::abs(grad(r, c)), std::abs(fd), 1e-5});
        REQUIRE(std::abs(grad(r, c) - fd) / scale < 1e-5);
      }
  }
}

TEST_CASE("excess population loss equals the weighted KL to the truth") {
  SplitMix64 rng(777);
  const PopulationFixture fx = PopulationFixture::make(3, 777);
  const double loss_star = population_loss(fx.cfg, fx.w_gt, fx.dist, fx.gt).value;
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::MatrixXd w = random_matrix(3, 3, rng);
    const double excess =
        population_loss(fx.cfg, w, fx.dist, fx.gt).value - loss_star;
    double kl_sum = 0.0;
    const CcmcModel gt_chain{fx.gt};
    const CcmcModel w_chain{transition_from_weights(fx.cfg, w)};
    for (const auto& wp : fx.dist.support)
      kl_sum += wp.weight *
                kl_divergence(ccmc_next_distribution(gt_chain, wp.prompt),
                              ccmc_next_distribution(w_chain, wp.prompt));
    REQUIRE(std::abs(excess - kl_sum) < 1e-12);
  }
}

TEST_CASE("empirical objective merges duplicate samples") {
  const Prompt a = make_prompt({0, 1}, AttnVariant::kSelf);
  const Prompt b = make_prompt({1, 1}, AttnVariant::kSelf);
  const Dataset data = Dataset::from({{a, 0}, {b, 1}, {a, 0}}, 2);
  const Objective obj = empirical_objective(data);
  REQUIRE(obj.terms.size() == 2);
  REQUIRE(obj.terms[0].prompt == a);
  REQUIRE(obj.terms[0].weight == Catch::Approx(2.0 / 3.0).margin(1e-15));
  REQUIRE(obj.terms[1].weight == Catch::Approx(1.0 / 3.0).margin(1e-15));

  // Same prompt with a different label stays a separate term.
  const Dataset data2 = Dataset::from({{a, 0}, {a, 1}}, 2);
  REQUIRE(empirical_objective(data2).terms.size() == 2);
}

TEST_CASE("swapping symmetric samples leaves the loss unchanged") {
  const EmbeddingConfig cfg = EmbeddingConfig::canonical(2);
  const Prompt a = make_prompt({0, 1}, AttnVariant::kSelf);
  const Prompt b = make_prompt({1, 0}, AttnVariant::kSelf);
  const Dataset fwd = Dataset::from({{a, 1}, {b, 0}}, 2);
  const Dataset rev = Dataset::from({{b, 0}, {a, 1}}, 2);
  SplitMix64 rng(55);
  for (int trial = 0; trial < 5; ++trial) {
    const Eigen::MatrixXd w = random_matrix(2, 2, rng);
    const double x = nll_loss(cfg, w, fwd).value;
    const double y = nll_loss(cfg, w, rev).value;
    REQUIRE(std::abs(x - y) < 1e-15);
  }
}

TEST_CASE("the objective is midpoint convex") {
  SplitMix64 rng(31415);
  const PopulationFixture fx = PopulationFixture::make(3, 27182);
  const CompiledObjective compiled(fx.cfg, fx.objective);
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::MatrixXd w1 = random_matrix(3, 3, rng);
    const Eigen::MatrixXd w2 = random_matrix(3, 3, rng);
    const double mid = compiled.loss(0.5 * (w1 + w2));
    const double chord = 0.5 * (compiled.loss(w1) + compiled.loss(w2));
    REQUIRE(mid <= chord + 1e-12);
  }
}

TEST_CASE("gradient descent recovers the ground-truth transition") {
  const PopulationFixture fx = PopulationFixture::make(4, 2026);
  const GdResult fit = gradient_descent(fx.cfg, fx.objective);
  REQUIRE(fit.converged);
  REQUIRE(fit.grad_norm < 1e-9);

  const TransitionMatrix recovered =
      transition_from_weights(fx.cfg, fit.weights);
  REQUIRE((recovered.p - fx.gt.p).cwiseAbs().maxCoeff() < 1e-6);

  // Iterates stay inside the token span.
  REQUIRE((project_to_token_span(fx.cfg, fit.weights) - fit.weights)
              .cwiseAbs()
              .maxCoeff() < 1e-12);

  // The recorded trace is monotone nonincreasing in loss.
  for (std::size_t i = 1; i < fit.trace.size(); ++i)
    REQUIRE(fit.trace[i][1] <= fit.trace[i - 1][1] + 1e-12);
}

TEST_CASE("an oversized step exhausts the halving budget") {
  const PopulationFixture fx = PopulationFixture::make(3, 11);
  GdSettings settings;
  settings.step = 1e6;
  settings.max_iters = 1000;
  REQUIRE_THROWS_AS(gradient_descent(fx.cfg, fx.objective, settings),
                    StepSizeError);
}

TEST_CASE("a mildly oversized step is rescued by halving") {
  const PopulationFixture fx = PopulationFixture::make(2, 12);
  GdSettings settings;
  settings.step = 12.0;  // halvable back into the stable region
  const GdResult fit = gradient_descent(fx.cfg, fx.objective, settings);
  REQUIRE(fit.converged);
  REQUIRE(fit.halvings > 0);
  REQUIRE(fit.final_step < settings.step);
}

TEST_CASE("compiled objectives reject what they cannot optimize") {
  const EmbeddingConfig positional = EmbeddingConfig::canonical_positional(2, 3);
  const EmbeddingConfig plain = EmbeddingConfig::canonical(2);

  Objective obj;
  obj.vocab = 2;
  obj.variant = AttnVariant::kSelf;
  obj.terms.push_back({make_prompt({0, 1}, AttnVariant::kSelf), 0, 1.0});

  REQUIRE_THROWS_AS(CompiledObjective(positional, obj), ConfigError);
  REQUIRE_NOTHROW(CompiledObjective(plain, obj));

  Objective mixed = obj;
  mixed.terms.push_back({make_prompt({0, 1, 0}, AttnVariant::kCross), 0, 1.0});
  REQUIRE_THROWS_AS(CompiledObjective(plain, mixed), ValidationError);

  Objective bad_label = obj;
  bad_label.terms[0].label = 2;
  REQUIRE_THROWS_AS(CompiledObjective(plain, bad_label), ValidationError);

  Objective negative = obj;
  negative.terms[0].weight = -1.0;
  REQUIRE_THROWS_AS(CompiledObjective(plain, negative), ValidationError);
}

TEST_CASE("population objective drops zero-probability labels") {
  // Ground truth with a zero entry: the population objective must not
  // carry terms the chain can never emit.
  Eigen::MatrixXd m(2, 2);
  m << 1.0, 0.5,
       0.0, 0.5;
  const TransitionMatrix gt = TransitionMatrix::from(m);
  std::vector<WeightedPrompt> support;
  support.push_back({make_prompt({0, 1, 0}, AttnVariant::kSelf), 1.0});
  const PromptDistribution dist = PromptDistribution::from(support, 2);
  const Objective obj = population_objective(dist, gt);
  REQUIRE(obj.terms.size() == 1);
  REQUIRE(obj.terms[0].label == 0);
}
