#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include "ccmc/core.hpp"
#include "ccmc/errors.hpp"

namespace ccmc {

/// Union-find over a fixed vertex set, path compression plus union by rank.
class DisjointSets {
 public:
  explicit DisjointSets(int n) : parent_(n), rank_(n, 0) {
    std::iota(parent_.begin(), parent_.end(), 0);
  }

  int find(int x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (rank_[a] < rank_[b]) std::swap(a, b);
    parent_[b] = a;
    if (rank_[a] == rank_[b]) ++rank_[a];
  }

 private:
  std::vector<int> parent_;
  std::vector<int> rank_;
};

/// Co-occurrence graph of the prompts whose last token is `query`: one
/// vertex per vocabulary token, an edge between two tokens whenever some
/// positive-weight prompt carries both among its key positions.
/// `appears[t]` records that token t shows up in some key set, which a
/// singleton key set does without adding an edge.
struct CooccurrenceGraph {
  int query = 0;
  int vocab = 0;
  std::vector<std::uint8_t> adj;      // vocab * vocab, symmetric, no loops
  std::vector<std::uint8_t> appears;  // per token

  bool edge(int i, int j) const { return adj[i * vocab + j] != 0; }

  void add_edge(int i, int j) {
    if (i == j) return;
    adj[i * vocab + j] = 1;
    adj[j * vocab + i] = 1;
  }
};

/// Builds one co-occurrence graph per query token from the positive-weight
/// prompts of the distribution. Zero-weight prompts contribute nothing.
inline std::vector<CooccurrenceGraph> build_cooccurrence_graphs(
    const PromptDistribution& dist) {
  const int k = dist.vocab;
  std::vector<CooccurrenceGraph> graphs(k);
  for (int q = 0; q < k; ++q) {
    graphs[q].query = q;
    graphs[q].vocab = k;
    graphs[q].adj.assign(static_cast<std::size_t>(k) * k, 0);
    graphs[q].appears.assign(k, 0);
  }
  std::vector<int> keys;
  for (const auto& wp : dist.support) {
    if (wp.weight <= 0.0) continue;
    CooccurrenceGraph& g = graphs[wp.prompt.last()];
    keys.clear();
    const int counted = wp.prompt.key_count();
    for (int i = 0; i < counted; ++i) keys.push_back(wp.prompt.tokens[i]);
    std::sort(keys.begin(), keys.end());
    keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
    for (std::size_t a = 0; a < keys.size(); ++a) {
      g.appears[keys[a]] = 1;
      for (std::size_t b = a + 1; b < keys.size(); ++b)
        g.add_edge(keys[a], keys[b]);
    }
  }
  return graphs;
}

/// Connected components over all vocabulary vertices, each sorted
/// ascending, components ordered by their smallest vertex.
inline std::vector<std::vector<int>> connected_components(
    const CooccurrenceGraph& g) {
  DisjointSets ds(g.vocab);
  for (int i = 0; i < g.vocab; ++i)
    for (int j = i + 1; j < g.vocab; ++j)
      if (g.edge(i, j)) ds.unite(i, j);
  std::vector<std::vector<int>> by_root(g.vocab);
  for (int v = 0; v < g.vocab; ++v) by_root[ds.find(v)].push_back(v);
  std::vector<std::vector<int>> components;
  for (auto& c : by_root)
    if (!c.empty()) components.push_back(std::move(c));
  return components;
}

inline bool is_connected(const CooccurrenceGraph& g) {
  return connected_components(g).size() <= 1;
}

/// Connectivity restricted to the support of a ground-truth column: every
/// pair of tokens with column mass above kZeroProb must be joined by a
/// path whose vertices all carry mass. Vacuously true when at most one
/// vertex has mass.
inline bool is_connected_wrt(const CooccurrenceGraph& g,
                             const Eigen::VectorXd& column) {
  if (column.size() != g.vocab)
    throw ValidationError("column length does not match graph vocabulary");
  std::vector<int> live;
  for (int v = 0; v < g.vocab; ++v)
    if (column[v] > kZeroProb) live.push_back(v);
  if (live.size() <= 1) return true;
  DisjointSets ds(g.vocab);
  for (std::size_t a = 0; a < live.size(); ++a)
    for (std::size_t b = a + 1; b < live.size(); ++b)
      if (g.edge(live[a], live[b])) ds.unite(live[a], live[b]);
  const int root = ds.find(live.front());
  for (int v : live)
    if (ds.find(v) != root) return false;
  return true;
}

/// Per-column connectivity verdicts for a prompt distribution.
struct ColumnDiagnosis {
  int query = 0;
  bool connected = false;      // over all vocabulary vertices
  bool connected_wrt = false;  // restricted to ground-truth support (if given)
  std::vector<std::vector<int>> components;
};

struct ConsistencyForecast {
  bool consistent = false;
  std::vector<ColumnDiagnosis> columns;
};

/// Predicts whether fitting on this prompt distribution can recover every
/// transition column: yes iff each query token's co-occurrence graph is
/// connected (restricted to the ground-truth support when one is given).
inline ConsistencyForecast predict_consistency(
    const PromptDistribution& dist, const TransitionMatrix* ground_truth = nullptr) {
  if (ground_truth && ground_truth->vocab() != dist.vocab)
    throw ValidationError("ground truth vocabulary does not match distribution");
  const auto graphs = build_cooccurrence_graphs(dist);
  ConsistencyForecast forecast;
  forecast.consistent = true;
  forecast.columns.reserve(graphs.size());
  for (const auto& g : graphs) {
    ColumnDiagnosis d;
    d.query = g.query;
    d.components = connected_components(g);
    d.connected = d.components.size() <= 1;
    d.connected_wrt =
        ground_truth ? is_connected_wrt(g, ground_truth->column(g.query))
                     : d.connected;
    const bool ok = ground_truth ? d.connected_wrt : d.connected;
    forecast.consistent = forecast.consistent && ok;
    forecast.columns.push_back(std::move(d));
  }
  return forecast;
}

}  // namespace ccmc
