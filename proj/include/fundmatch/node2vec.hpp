#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "fundmatch/graph.hpp"

namespace fundmatch {

struct WalkConfig {
  double p = 1.0;   // return parameter
  double q = 0.8;   // in-out parameter
  int walks_per_node = 10;
  int walk_length = 20;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SgnsConfig {
  int dim = 128;
  int window = 5;
  int negatives_per_positive = 5;
  int epochs = 5;
  double learning_rate = 0.025;  // decays linearly over training
  double unigram_power = 0.75;   // negative-sampling distribution exponent
  std::uint64_t seed = 1;

  void validate() const;
};

// dim-stable table of node embeddings, insertion-ordered.
class EmbeddingTable {
public:
  explicit EmbeddingTable(int dim);

  int dim() const { return dim_; }
  std::size_t size() const { return keys_.size(); }
  void insert(const NodeId& id, std::vector<double> vec);
  const std::vector<double>* find(const NodeId& id) const;
  const std::vector<NodeId>& keys() const { return keys_; }
  const std::vector<double>& vector_at(std::size_t i) const { return vectors_[i]; }

  // Text format: first line `dim=<d>`, then `kind:key v1 ... vd` per node.
  // '#' lines are ignored on load. Values round-trip exactly.
  std::string serialize() const;
  static EmbeddingTable deserialize(const std::vector<std::string>& lines);

private:
  int dim_;
  std::vector<NodeId> keys_;
  std::vector<std::vector<double>> vectors_;
  std::map<NodeId, std::size_t> index_;
};

// Second-order transition distribution over neighbors of `curr` given the
// walk arrived from `prev`. Unnormalized weights: 1/p to return to prev, 1
// for a neighbor of prev, 1/q otherwise. On a bipartite graph the middle
// branch is unreachable. Throws if prev is not adjacent to curr.
std::vector<std::pair<std::uint32_t, double>> transition_distribution(
    const BipartiteGraph& graph, std::uint32_t prev, std::uint32_t curr, double p, double q);

// Samples one biased step; exposed so sampling can be tested against the
// exact distribution.
std::uint32_t sample_step(const BipartiteGraph& graph, std::uint32_t prev, std::uint32_t curr,
                          double p, double q, std::mt19937_64& rng);

// walks_per_node walks from every node, each of walk_length nodes (shorter
// only when the start node is isolated). Each (node, walk) pair has its own
// seeded RNG stream, so the result is independent of execution order.
std::vector<std::vector<std::uint32_t>> generate_walks(const BipartiteGraph& graph,
                                                       const WalkConfig& config);

struct SgnsStats {
  std::vector<double> epoch_mean_loss;
};

// Skip-gram with negative sampling over the walk corpus. Deterministic given
// the config seed. Returns one vector per node appearing in the walks.
EmbeddingTable train_sgns(const BipartiteGraph& graph,
                          const std::vector<std::vector<std::uint32_t>>& walks,
                          const SgnsConfig& config, SgnsStats* stats = nullptr);

// Component-wise arithmetic mean over `subset`; summation follows table
// order so the result does not depend on the caller's ordering. Empty subset
// or missing member -> DataError.
std::vector<double> mean_embedding(const EmbeddingTable& table, const std::vector<NodeId>& subset);

}  // namespace fundmatch
