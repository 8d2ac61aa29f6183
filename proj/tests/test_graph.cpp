#include <catch2/catch_amalgamated.hpp>

#include "ccmc/experiments.hpp"
#include "ccmc/graph.hpp"
#include "ccmc/rng.hpp"

using namespace ccmc;

namespace {

Prompt make_prompt(std::vector<int> tokens, AttnVariant variant) {
  Prompt p;
  p.tokens = std::move(tokens);
  p.variant = variant;
  return p;
}

}  // namespace

TEST_CASE("disjoint sets track merges") {
  DisjointSets ds(5);
  REQUIRE(ds.find(0) != ds.find(1));
  ds.unite(0, 1);
  ds.unite(3, 4);
  REQUIRE(ds.find(0) == ds.find(1));
  REQUIRE(ds.find(3) == ds.find(4));
  REQUIRE(ds.find(0) != ds.find(3));
  ds.unite(1, 3);
  REQUIRE(ds.find(0) == ds.find(4));
  REQUIRE(ds.find(2) != ds.find(0));
}

TEST_CASE("split-pair support produces the expected query-0 components") {
  const PromptDistribution dist = split_pair_support();
  const auto graphs = build_cooccurrence_graphs(dist);

  const auto components = connected_components(graphs[0]);
  REQUIRE(components.size() == 3);
  REQUIRE(components[0] == std::vector<int>{0});
  REQUIRE(components[1] == std::vector<int>{1, 2});
  REQUIRE(components[2] == std::vector<int>{3, 4});
  REQUIRE_FALSE(is_connected(graphs[0]));

  for (int q = 1; q < 5; ++q) REQUIRE(is_connected(graphs[q]));
}

TEST_CASE("cyclic support is connected for every query") {
  for (int k : {2, 3, 5}) {
    const PromptDistribution dist = cyclic_support(k);
    for (const auto& g : build_cooccurrence_graphs(dist))
      REQUIRE(is_connected(g));
    const ConsistencyForecast forecast = predict_consistency(dist);
    REQUIRE(forecast.consistent);
  }
}

TEST_CASE("support-restricted connectivity sees through dead hubs") {
  // Query-0 edges 0-1 and 1-2 connect the graph, but the ground-truth
  // column kills token 1, so the live tokens 0 and 2 are separated.
  std::vector<WeightedPrompt> support;
  support.push_back({make_prompt({0, 1, 0}, AttnVariant::kCross), 0.0});
  support.push_back({make_prompt({1, 2, 0}, AttnVariant::kCross), 0.0});
  for (int q = 1; q < 3; ++q)
    support.push_back({make_prompt({0, 1, 2, q}, AttnVariant::kCross), 0.0});
  for (auto& wp : support) wp.weight = 1.0 / support.size();
  const PromptDistribution dist = PromptDistribution::from(support, 3);

  const auto graphs = build_cooccurrence_graphs(dist);
  REQUIRE(is_connected(graphs[0]));

  Eigen::VectorXd dead_hub(3);
  dead_hub << 0.6, 0.0, 0.4;
  REQUIRE_FALSE(is_connected_wrt(graphs[0], dead_hub));

  Eigen::VectorXd alive(3);
  alive << 0.3, 0.3, 0.4;
  REQUIRE(is_connected_wrt(graphs[0], alive));

  // The forecast distinguishes the two readings.
  Eigen::MatrixXd m(3, 3);
  m << 0.6, 0.2, 0.2,
       0.0, 0.4, 0.5,
       0.4, 0.4, 0.3;
  const TransitionMatrix gt = TransitionMatrix::from(m);
  const ConsistencyForecast with_gt = predict_consistency(dist, &gt);
  REQUIRE_FALSE(with_gt.consistent);
  REQUIRE(with_gt.columns[0].connected);
  REQUIRE_FALSE(with_gt.columns[0].connected_wrt);
  const ConsistencyForecast without_gt = predict_consistency(dist);
  REQUIRE(without_gt.consistent);
}

TEST_CASE("restricted connectivity is vacuous with at most one live token") {
  CooccurrenceGraph g;
  g.query = 0;
  g.vocab = 3;
  g.adj.assign(9, 0);
  g.appears.assign(3, 0);
  Eigen::VectorXd one_live(3);
  one_live << 1.0, 0.0, 0.0;
  REQUIRE(is_connected_wrt(g, one_live));
  Eigen::VectorXd two_live(3);
  two_live << 0.5, 0.5, 0.0;
  REQUIRE_FALSE(is_connected_wrt(g, two_live));
}

TEST_CASE("self-attention graphs are connected exactly when all tokens appear") {
  // The query sits in every key set of its own graph, so it links every
  // co-occurring token into one hub-and-spoke component.
  SplitMix64 rng(606);
  const int k = 4;
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<WeightedPrompt> support;
    const int prompts = 1 + static_cast<int>(rng.below(4));
    for (int i = 0; i < prompts; ++i) {
      Prompt p;
      p.variant = AttnVariant::kSelf;
      const int len = 1 + static_cast<int>(rng.below(5));
      for (int j = 0; j < len; ++j)
        p.tokens.push_back(static_cast<int>(rng.below(k)));
      bool duplicate = false;
      for (const auto& wp : support) duplicate = duplicate || wp.prompt == p;
      if (duplicate) continue;
      support.push_back({std::move(p), 0.0});
    }
    for (auto& wp : support) wp.weight = 1.0 / support.size();
    const PromptDistribution dist = PromptDistribution::from(support, k);

    for (const auto& g : build_cooccurrence_graphs(dist)) {
      bool any = false, all = true;
      for (int t = 0; t < k; ++t) {
        any = any || g.appears[t];
        all = all && g.appears[t];
      }
      if (!any) continue;  // no prompts end at this query
      REQUIRE(is_connected(g) == all);
    }
  }
}

TEST_CASE("zero-weight prompts do not contribute edges") {
  std::vector<WeightedPrompt> support;
  support.push_back({make_prompt({0, 1}, AttnVariant::kSelf), 1.0});
  support.push_back({make_prompt({2, 3, 1}, AttnVariant::kSelf), 0.0});
  const PromptDistribution dist = PromptDistribution::from(support, 4);
  const auto graphs = build_cooccurrence_graphs(dist);
  REQUIRE(graphs[1].edge(0, 1));
  REQUIRE_FALSE(graphs[1].edge(2, 3));
  REQUIRE_FALSE(graphs[1].appears[2]);
}

TEST_CASE("queries with no prompts have empty graphs") {
  std::vector<WeightedPrompt> support;
  support.push_back({make_prompt({0, 1}, AttnVariant::kSelf), 1.0});
  const PromptDistribution dist = PromptDistribution::from(support, 3);
  const auto graphs = build_cooccurrence_graphs(dist);
  const auto components = connected_components(graphs[2]);
  REQUIRE(components.size() == 3);
  REQUIRE_FALSE(is_connected(graphs[2]));
}

TEST_CASE("graph construction is deterministic") {
  const PromptDistribution dist = split_pair_support();
  const auto a = build_cooccurrence_graphs(dist);
  const auto b = build_cooccurrence_graphs(dist);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].adj == b[i].adj);
    REQUIRE(a[i].appears == b[i].appears);
  }
}
