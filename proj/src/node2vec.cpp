#include "fundmatch/node2vec.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "fundmatch/errors.hpp"
#include "fundmatch/rng.hpp"
#include "fundmatch/textio.hpp"

namespace fundmatch {

void WalkConfig::validate() const {
  if (!(p > 0.0)) throw DataError("walk config: p must be > 0");
  if (!(q > 0.0)) throw DataError("walk config: q must be > 0");
  if (walk_length < 2) throw DataError("walk config: walk_length must be >= 2");
  if (walks_per_node < 1) throw DataError("walk config: walks_per_node must be >= 1");
}

void SgnsConfig::validate() const {
  if (dim < 1) throw DataError("sgns config: dim must be >= 1");
  if (window < 1) throw DataError("sgns config: window must be >= 1");
  if (negatives_per_positive < 1) throw DataError("sgns config: negatives_per_positive must be >= 1");
  if (epochs < 1) throw DataError("sgns config: epochs must be >= 1");
  if (!(learning_rate > 0.0)) throw DataError("sgns config: learning_rate must be > 0");
}

EmbeddingTable::EmbeddingTable(int dim) : dim_(dim) {
  if (dim < 1) throw DataError("embedding table: dim must be >= 1");
}

void EmbeddingTable::insert(const NodeId& id, std::vector<double> vec) {
  if (static_cast<int>(vec.size()) != dim_)
    throw DataError("embedding table: vector for " + id.key + " has length " +
                    std::to_string(vec.size()) + ", expected " + std::to_string(dim_));
  for (double v : vec)
    if (!std::isfinite(v)) throw DataError("embedding table: non-finite value for " + id.key);
  auto [it, inserted] = index_.emplace(id, keys_.size());
  if (!inserted) {
    vectors_[it->second] = std::move(vec);
    return;
  }
  keys_.push_back(id);
  vectors_.push_back(std::move(vec));
}

const std::vector<double>* EmbeddingTable::find(const NodeId& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return nullptr;
  return &vectors_[it->second];
}

std::string EmbeddingTable::serialize() const {
  std::string out = "dim=" + std::to_string(dim_) + "\n";
  for (std::size_t i = 0; i < keys_.size(); ++i) {
    out += to_string(keys_[i].kind);
    out += ':';
    out += keys_[i].key;
    for (double v : vectors_[i]) {
      out += ' ';
      out += format_double(v);
    }
    out += '\n';
  }
  return out;
}

EmbeddingTable EmbeddingTable::deserialize(const std::vector<std::string>& lines) {
  std::size_t i = 0;
  while (i < lines.size() && (lines[i].empty() || lines[i][0] == '#')) ++i;
  if (i == lines.size() || lines[i].rfind("dim=", 0) != 0)
    throw DataError("embedding table: missing dim= header");
  auto dim = parse_int(std::string_view(lines[i]).substr(4));
  if (!dim || *dim < 1) throw DataError("embedding table: bad dim header '" + lines[i] + "'");
  EmbeddingTable table(static_cast<int>(*dim));
  for (++i; i < lines.size(); ++i) {
    const std::string& line = lines[i];
    if (line.empty() || line[0] == '#') continue;
    auto fields = split(line, ' ');
    if (fields.size() != static_cast<std::size_t>(*dim) + 1)
      throw DataError("embedding table: row with " + std::to_string(fields.size() - 1) +
                      " values, expected " + std::to_string(*dim));
    auto colon = fields[0].find(':');
    if (colon == std::string::npos)
      throw DataError("embedding table: bad node id '" + fields[0] + "'");
    std::string kind = fields[0].substr(0, colon);
    std::string key = fields[0].substr(colon + 1);
    NodeId id;
    if (kind == "fund")
      id = fund_id(key);
    else if (kind == "startup")
      id = startup_id(key);
    else
      throw DataError("embedding table: unknown node kind '" + kind + "'");
    std::vector<double> vec(*dim);
    for (std::size_t k = 0; k < vec.size(); ++k) {
      auto v = parse_real(fields[k + 1]);
      if (!v) throw DataError("embedding table: bad value '" + fields[k + 1] + "'");
      vec[k] = *v;
    }
    table.insert(id, std::move(vec));
  }
  return table;
}

std::vector<std::pair<std::uint32_t, double>> transition_distribution(
    const BipartiteGraph& graph, std::uint32_t prev, std::uint32_t curr, double p, double q) {
  if (!(p > 0.0) || !(q > 0.0)) throw DataError("transition_distribution: p, q must be > 0");
  if (!graph.has_edge(curr, prev))
    throw DataError("transition_distribution: prev " + graph.node(prev).key +
                    " is not adjacent to curr " + graph.node(curr).key);
  const auto& candidates = graph.neighbors(curr);
  std::vector<std::pair<std::uint32_t, double>> dist;
  dist.reserve(candidates.size());
  double total = 0.0;
  for (std::uint32_t x : candidates) {
    double w;
    if (x == prev)
      w = 1.0 / p;
    else if (graph.has_edge(x, prev))
      w = 1.0;
    else
      w = 1.0 / q;
    dist.emplace_back(x, w);
    total += w;
  }
  for (auto& [node, w] : dist) w /= total;
  return dist;
}

std::uint32_t sample_step(const BipartiteGraph& graph, std::uint32_t prev, std::uint32_t curr,
                          double p, double q, std::mt19937_64& rng) {
  const auto& candidates = graph.neighbors(curr);
  double total = 0.0;
  for (std::uint32_t x : candidates) {
    if (x == prev)
      total += 1.0 / p;
    else if (graph.has_edge(x, prev))
      total += 1.0;
    else
      total += 1.0 / q;
  }
  double u = uniform01(rng) * total;
  double acc = 0.0;
  for (std::uint32_t x : candidates) {
    if (x == prev)
      acc += 1.0 / p;
    else if (graph.has_edge(x, prev))
      acc += 1.0;
    else
      acc += 1.0 / q;
    if (u < acc) return x;
  }
  return candidates.back();
}

std::vector<std::vector<std::uint32_t>> generate_walks(const BipartiteGraph& graph,
                                                       const WalkConfig& config) {
  config.validate();
  if (graph.node_count() == 0) throw DataError("generate_walks: empty graph");
  std::vector<std::vector<std::uint32_t>> walks;
  walks.reserve(graph.node_count() * config.walks_per_node);
  for (std::uint32_t start = 0; start < graph.node_count(); ++start) {
    for (int w = 0; w < config.walks_per_node; ++w) {
      std::mt19937_64 rng(mix_seed(config.seed, start, static_cast<std::uint64_t>(w)));
      std::vector<std::uint32_t> walk;
      walk.reserve(config.walk_length);
      walk.push_back(start);
      const auto& first_neighbors = graph.neighbors(start);
      if (!first_neighbors.empty()) {
        walk.push_back(first_neighbors[uniform_below(rng, first_neighbors.size())]);
        while (static_cast<int>(walk.size()) < config.walk_length) {
          std::uint32_t prev = walk[walk.size() - 2];
          std::uint32_t curr = walk.back();
          walk.push_back(sample_step(graph, prev, curr, config.p, config.q, rng));
        }
      }
      walks.push_back(std::move(walk));
    }
  }
  return walks;
}

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

EmbeddingTable train_sgns(const BipartiteGraph& graph,
                          const std::vector<std::vector<std::uint32_t>>& walks,
                          const SgnsConfig& config, SgnsStats* stats) {
  config.validate();
  if (walks.empty()) throw DataError("train_sgns: no walks");

  // Vocabulary: nodes in walk-appearance order; token counts drive the
  // negative-sampling distribution (counts ^ unigram_power).
  std::vector<std::uint32_t> vocab;  // vocab slot -> graph node index
  std::unordered_map<std::uint32_t, std::size_t> slot_of;
  std::vector<double> counts;
  std::size_t total_tokens = 0;
  for (const auto& walk : walks) {
    for (std::uint32_t node : walk) {
      auto [it, inserted] = slot_of.emplace(node, vocab.size());
      if (inserted) {
        vocab.push_back(node);
        counts.push_back(0.0);
      }
      counts[it->second] += 1.0;
      ++total_tokens;
    }
  }
  const std::size_t n = vocab.size();
  const std::size_t dim = static_cast<std::size_t>(config.dim);

  std::vector<double> noise_cdf(n);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    acc += std::pow(counts[i], config.unigram_power);
    noise_cdf[i] = acc;
  }

  std::mt19937_64 rng(mix_seed(config.seed, 0x5349474eULL));
  std::vector<double> in_vecs(n * dim);
  std::vector<double> out_vecs(n * dim, 0.0);
  for (double& v : in_vecs) v = (uniform01(rng) - 0.5) / static_cast<double>(dim);

  auto sample_noise = [&]() -> std::size_t {
    double u = uniform01(rng) * acc;
    auto it = std::upper_bound(noise_cdf.begin(), noise_cdf.end(), u);
    return static_cast<std::size_t>(std::min<std::ptrdiff_t>(it - noise_cdf.begin(),
                                                             static_cast<std::ptrdiff_t>(n) - 1));
  };

  const double total_steps =
      static_cast<double>(config.epochs) * static_cast<double>(total_tokens);
  double processed = 0.0;
  std::vector<double> grad_center(dim);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    double epoch_loss = 0.0;
    std::size_t epoch_pairs = 0;
    for (const auto& walk : walks) {
      for (std::size_t pos = 0; pos < walk.size(); ++pos, processed += 1.0) {
        const double lr = config.learning_rate *
                          std::max(1.0 - processed / total_steps, 1e-4);
        const std::size_t center = slot_of[walk[pos]];
        // Dynamic window, as in the usual skip-gram formulation.
        const std::size_t radius = 1 + uniform_below(rng, static_cast<std::uint64_t>(config.window));
        const std::size_t lo = pos >= radius ? pos - radius : 0;
        const std::size_t hi = std::min(walk.size() - 1, pos + radius);
        for (std::size_t j = lo; j <= hi; ++j) {
          if (j == pos) continue;
          const std::size_t context = slot_of[walk[j]];
          double* u = &in_vecs[center * dim];
          std::fill(grad_center.begin(), grad_center.end(), 0.0);
          double pair_loss = 0.0;
          for (int k = 0; k <= config.negatives_per_positive; ++k) {
            std::size_t target;
            double label;
            if (k == 0) {
              target = context;
              label = 1.0;
            } else {
              target = sample_noise();
              if (target == context) continue;
              label = 0.0;
            }
            double* v = &out_vecs[target * dim];
            double dot = 0.0;
            for (std::size_t d = 0; d < dim; ++d) dot += u[d] * v[d];
            const double s = sigmoid(dot);
            pair_loss += label > 0.5 ? -std::log(std::max(s, 1e-12))
                                     : -std::log(std::max(1.0 - s, 1e-12));
            const double g = (label - s) * lr;
            for (std::size_t d = 0; d < dim; ++d) {
              grad_center[d] += g * v[d];
              v[d] += g * u[d];
            }
          }
          for (std::size_t d = 0; d < dim; ++d) u[d] += grad_center[d];
          epoch_loss += pair_loss;
          ++epoch_pairs;
        }
      }
    }
    if (stats)
      stats->epoch_mean_loss.push_back(epoch_pairs ? epoch_loss / static_cast<double>(epoch_pairs)
                                                   : 0.0);
  }

  EmbeddingTable table(config.dim);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> vec(in_vecs.begin() + i * dim, in_vecs.begin() + (i + 1) * dim);
    table.insert(graph.node(vocab[i]), std::move(vec));
  }
  return table;
}

std::vector<double> mean_embedding(const EmbeddingTable& table,
                                   const std::vector<NodeId>& subset) {
  if (subset.empty())
    throw DataError("mean_embedding: empty subset (no past companies at this cutoff)");
  std::set<NodeId> wanted(subset.begin(), subset.end());
  for (const auto& id : wanted)
    if (!table.find(id))
      throw DataError("mean_embedding: " + std::string(to_string(id.kind)) + ":" + id.key +
                      " not in table");
  std::vector<double> sum(table.dim(), 0.0);
  std::size_t found = 0;
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (!wanted.count(table.keys()[i])) continue;
    const auto& vec = table.vector_at(i);
    for (int d = 0; d < table.dim(); ++d) sum[d] += vec[d];
    ++found;
  }
  for (double& v : sum) v /= static_cast<double>(found);
  return sum;
}

}  // namespace fundmatch
