#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace fundmatch {

enum class NodeKind : std::uint8_t { Fund, Startup };

const char* to_string(NodeKind kind);

struct NodeId {
  NodeKind kind;
  std::string key;

  bool operator==(const NodeId&) const = default;
  auto operator<=>(const NodeId&) const = default;
};

inline NodeId fund_id(std::string key) { return {NodeKind::Fund, std::move(key)}; }
inline NodeId startup_id(std::string key) { return {NodeKind::Startup, std::move(key)}; }

// Investment time. Cutoff comparisons are at year granularity; the ordinal
// (month, or 0 when unknown) only breaks ties within a year.
struct TimePoint {
  int year = 0;
  int ordinal = 0;

  auto operator<=>(const TimePoint&) const = default;
};

struct InvestmentEvent {
  NodeId fund;
  NodeId startup;
  TimePoint time;
  std::string investor_type;       // empty when the column is absent
  std::optional<double> amount;    // ingested when present, never used
};

// Undirected bipartite fund-startup graph. One edge per (fund, startup) pair,
// carrying the earliest investment time among duplicates. Immutable once
// built; safe for concurrent reads.
class BipartiteGraph {
public:
  std::uint32_t add_node(const NodeId& id);
  std::optional<std::uint32_t> find_node(const NodeId& id) const;

  std::size_t node_count() const { return nodes_.size(); }
  std::size_t edge_count() const { return edge_times_.size(); }
  const NodeId& node(std::uint32_t idx) const { return nodes_[idx]; }
  const std::vector<NodeId>& nodes() const { return nodes_; }

  // Neighbor indices, sorted ascending.
  const std::vector<std::uint32_t>& neighbors(std::uint32_t idx) const;
  bool has_edge(std::uint32_t a, std::uint32_t b) const;
  std::optional<TimePoint> edge_time(std::uint32_t fund_idx, std::uint32_t startup_idx) const;

  std::size_t degree_by_index(std::uint32_t idx) const { return neighbors(idx).size(); }

  // Called by build_graph after all edges are inserted.
  void add_edge(std::uint32_t fund_idx, std::uint32_t startup_idx, TimePoint t);
  void finalize();

private:
  std::vector<NodeId> nodes_;
  std::unordered_map<std::string, std::uint32_t> fund_index_;
  std::unordered_map<std::string, std::uint32_t> startup_index_;
  std::vector<std::vector<std::uint32_t>> adjacency_;
  std::unordered_map<std::uint64_t, TimePoint> edge_times_;
};

// Builds the deduplicated bipartite graph. Malformed events (empty key,
// whitespace in key, kind mismatch) are rejected with a diagnostic naming the
// record. build_graph(events ++ events) == build_graph(events).
BipartiteGraph build_graph(const std::vector<InvestmentEvent>& events);

// Count of distinct neighbors. Unknown node -> DataError.
std::size_t degree(const BipartiteGraph& graph, const NodeId& node);

enum class Side { Fund, Startup, Both };

// degree -> node count, restricted to one side or both. Sums to the number of
// nodes on the requested side.
std::map<std::size_t, std::size_t> degree_histogram(const BipartiteGraph& graph, Side side);

struct IngestOptions {
  // Events whose investor_type (lowercased) is listed here are dropped.
  std::vector<std::string> excluded_investor_types = {"individual", "unknown"};
  int year_min = 1900;
  int year_max = 2100;
};

struct IngestResult {
  std::vector<InvestmentEvent> events;
  std::size_t filtered = 0;  // rows dropped by the investor-type filter
};

// Reads the event file: CSV with required header, columns
// fund_id,startup_id,year[,month][,investor_type][,amount]. Lines starting
// with '#' are ignored. Malformed rows and out-of-range years are errors.
IngestResult read_events_csv(const std::string& path, const IngestOptions& options = {});

std::string write_events_csv(const std::vector<InvestmentEvent>& events);

// Validates one event; throws DataError with `label` in the message.
void validate_event(const InvestmentEvent& event, const std::string& label);

}  // namespace fundmatch
