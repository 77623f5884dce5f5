#include "fundmatch/graph.hpp"

#include <algorithm>
#include <cctype>

#include "fundmatch/errors.hpp"
#include "fundmatch/textio.hpp"

namespace fundmatch {

namespace {

std::uint64_t edge_key(std::uint32_t fund_idx, std::uint32_t startup_idx) {
  return (static_cast<std::uint64_t>(fund_idx) << 32) | startup_idx;
}

bool valid_key(const std::string& key) {
  if (key.empty()) return false;
  for (char c : key)
    if (std::isspace(static_cast<unsigned char>(c)) || c == ',' || c == '|' || c == ':')
      return false;
  return true;
}

}  // namespace

const char* to_string(NodeKind kind) {
  return kind == NodeKind::Fund ? "fund" : "startup";
}

std::uint32_t BipartiteGraph::add_node(const NodeId& id) {
  auto& index = id.kind == NodeKind::Fund ? fund_index_ : startup_index_;
  auto it = index.find(id.key);
  if (it != index.end()) return it->second;
  std::uint32_t idx = static_cast<std::uint32_t>(nodes_.size());
  nodes_.push_back(id);
  adjacency_.emplace_back();
  index.emplace(id.key, idx);
  return idx;
}

std::optional<std::uint32_t> BipartiteGraph::find_node(const NodeId& id) const {
  const auto& index = id.kind == NodeKind::Fund ? fund_index_ : startup_index_;
  auto it = index.find(id.key);
  if (it == index.end()) return std::nullopt;
  return it->second;
}

const std::vector<std::uint32_t>& BipartiteGraph::neighbors(std::uint32_t idx) const {
  return adjacency_.at(idx);
}

bool BipartiteGraph::has_edge(std::uint32_t a, std::uint32_t b) const {
  const auto& adj = adjacency_.at(a);
  return std::binary_search(adj.begin(), adj.end(), b);
}

std::optional<TimePoint> BipartiteGraph::edge_time(std::uint32_t fund_idx,
                                                   std::uint32_t startup_idx) const {
  auto it = edge_times_.find(edge_key(fund_idx, startup_idx));
  if (it == edge_times_.end()) return std::nullopt;
  return it->second;
}

void BipartiteGraph::add_edge(std::uint32_t fund_idx, std::uint32_t startup_idx, TimePoint t) {
  if (nodes_.at(fund_idx).kind != NodeKind::Fund ||
      nodes_.at(startup_idx).kind != NodeKind::Startup)
    throw DataError("add_edge: endpoints must be a fund and a startup");
  auto [it, inserted] = edge_times_.emplace(edge_key(fund_idx, startup_idx), t);
  if (inserted) {
    adjacency_[fund_idx].push_back(startup_idx);
    adjacency_[startup_idx].push_back(fund_idx);
  } else if (t < it->second) {
    it->second = t;
  }
}

void BipartiteGraph::finalize() {
  for (auto& adj : adjacency_) std::sort(adj.begin(), adj.end());
}

void validate_event(const InvestmentEvent& event, const std::string& label) {
  if (event.fund.kind != NodeKind::Fund)
    throw DataError(label + ": fund id '" + event.fund.key + "' has kind " +
                    to_string(event.fund.kind));
  if (event.startup.kind != NodeKind::Startup)
    throw DataError(label + ": startup id '" + event.startup.key + "' has kind " +
                    to_string(event.startup.kind));
  if (!valid_key(event.fund.key))
    throw DataError(label + ": bad fund id '" + event.fund.key + "'");
  if (!valid_key(event.startup.key))
    throw DataError(label + ": bad startup id '" + event.startup.key + "'");
}

BipartiteGraph build_graph(const std::vector<InvestmentEvent>& events) {
  BipartiteGraph graph;
  std::size_t n = 0;
  for (const auto& event : events) {
    ++n;
    validate_event(event, "event #" + std::to_string(n));
    std::uint32_t f = graph.add_node(event.fund);
    std::uint32_t s = graph.add_node(event.startup);
    graph.add_edge(f, s, event.time);
  }
  graph.finalize();
  return graph;
}

std::size_t degree(const BipartiteGraph& graph, const NodeId& node) {
  auto idx = graph.find_node(node);
  if (!idx) throw DataError("degree: unknown node " + std::string(to_string(node.kind)) + ":" + node.key);
  return graph.degree_by_index(*idx);
}

std::map<std::size_t, std::size_t> degree_histogram(const BipartiteGraph& graph, Side side) {
  std::map<std::size_t, std::size_t> hist;
  for (std::uint32_t i = 0; i < graph.node_count(); ++i) {
    NodeKind kind = graph.node(i).kind;
    if (side == Side::Fund && kind != NodeKind::Fund) continue;
    if (side == Side::Startup && kind != NodeKind::Startup) continue;
    ++hist[graph.degree_by_index(i)];
  }
  return hist;
}

IngestResult read_events_csv(const std::string& path, const IngestOptions& options) {
  std::vector<std::string> excluded;
  for (const auto& t : options.excluded_investor_types) excluded.push_back(lowercase_ascii(t));

  auto lines = read_lines(path);
  std::size_t row = 0;
  std::vector<std::string> header;
  std::size_t line_no = 0;
  for (; line_no < lines.size(); ++line_no) {
    if (lines[line_no].empty() || lines[line_no][0] == '#') continue;
    header = split(lines[line_no], ',');
    ++line_no;
    break;
  }
  if (header.empty()) throw DataError(path + ": missing header row");

  auto col = [&](const std::string& name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    return std::nullopt;
  };
  auto fund_col = col("fund_id");
  auto startup_col = col("startup_id");
  auto year_col = col("year");
  if (!fund_col || !startup_col || !year_col)
    throw DataError(path + ": header must contain fund_id, startup_id, year");
  auto month_col = col("month");
  auto type_col = col("investor_type");
  auto amount_col = col("amount");

  IngestResult result;
  for (; line_no < lines.size(); ++line_no) {
    const std::string& line = lines[line_no];
    if (line.empty() || line[0] == '#') continue;
    ++row;
    const std::string label = path + " row " + std::to_string(row);
    auto fields = split(line, ',');
    if (fields.size() != header.size())
      throw DataError(label + ": expected " + std::to_string(header.size()) + " fields, got " +
                      std::to_string(fields.size()));

    InvestmentEvent event;
    event.fund = fund_id(fields[*fund_col]);
    event.startup = startup_id(fields[*startup_col]);
    auto year = parse_int(fields[*year_col]);
    if (!year) throw DataError(label + ": bad year '" + fields[*year_col] + "'");
    event.time.year = static_cast<int>(*year);
    if (event.time.year < options.year_min || event.time.year > options.year_max)
      throw DataError(label + ": year " + std::to_string(event.time.year) +
                      " outside valid range [" + std::to_string(options.year_min) + ", " +
                      std::to_string(options.year_max) + "]");
    if (month_col && !fields[*month_col].empty()) {
      auto month = parse_int(fields[*month_col]);
      if (!month || *month < 1 || *month > 12)
        throw DataError(label + ": bad month '" + fields[*month_col] + "'");
      event.time.ordinal = static_cast<int>(*month);
    }
    if (type_col) event.investor_type = fields[*type_col];
    if (amount_col && !fields[*amount_col].empty()) {
      auto amount = parse_real(fields[*amount_col]);
      if (!amount) throw DataError(label + ": bad amount '" + fields[*amount_col] + "'");
      event.amount = *amount;
    }

    if (type_col) {
      std::string type = lowercase_ascii(event.investor_type);
      if (std::find(excluded.begin(), excluded.end(), type) != excluded.end()) {
        ++result.filtered;
        continue;
      }
    }
    validate_event(event, label);
    result.events.push_back(std::move(event));
  }
  return result;
}

std::string write_events_csv(const std::vector<InvestmentEvent>& events) {
  std::string out = "fund_id,startup_id,year,month,investor_type,amount\n";
  for (const auto& e : events) {
    out += e.fund.key;
    out += ',';
    out += e.startup.key;
    out += ',';
    out += std::to_string(e.time.year);
    out += ',';
    if (e.time.ordinal > 0) out += std::to_string(e.time.ordinal);
    out += ',';
    out += e.investor_type;
    out += ',';
    if (e.amount) out += format_double(*e.amount);
    out += '\n';
  }
  return out;
}

}  // namespace fundmatch
