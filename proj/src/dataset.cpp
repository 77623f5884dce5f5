#include "fundmatch/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <unordered_set>

#include "fundmatch/errors.hpp"
#include "fundmatch/rng.hpp"
#include "fundmatch/textio.hpp"

namespace fundmatch {

std::vector<InvestmentEvent> dedup_first_investments(const std::vector<InvestmentEvent>& events) {
  std::map<std::pair<std::string, std::string>, InvestmentEvent> first;
  std::size_t n = 0;
  for (const auto& event : events) {
    ++n;
    validate_event(event, "event #" + std::to_string(n));
    auto key = std::make_pair(event.fund.key, event.startup.key);
    auto [it, inserted] = first.emplace(key, event);
    if (!inserted && event.time < it->second.time) it->second = event;
  }
  std::vector<InvestmentEvent> out;
  out.reserve(first.size());
  for (auto& [key, event] : first) out.push_back(std::move(event));
  return out;
}

CutoffSplit split_by_cutoff(const std::vector<InvestmentEvent>& events, int cutoff) {
  CutoffSplit split;
  split.cutoff = cutoff;
  for (const auto& event : events) {
    if (event.time.year <= cutoff)
      split.past.push_back(event);
    else
      split.future.push_back(event);
  }
  return split;
}

namespace {

struct ContextEntry {
  TimePoint time;
  std::string startup;

  bool operator<(const ContextEntry& o) const {
    if (time != o.time) return time < o.time;
    return startup < o.startup;
  }
};

}  // namespace

std::vector<std::string> fund_context(const CutoffSplit& split, const std::string& fund_key,
                                      int max_context) {
  if (max_context < 1) throw DataError("fund_context: max_context must be >= 1");
  // First investment per startup; repeat rounds do not duplicate entries.
  std::map<std::string, TimePoint> first;
  for (const auto& event : split.past) {
    if (event.fund.key != fund_key) continue;
    auto [it, inserted] = first.emplace(event.startup.key, event.time);
    if (!inserted && event.time < it->second) it->second = event.time;
  }
  std::vector<ContextEntry> entries;
  entries.reserve(first.size());
  for (const auto& [startup, time] : first) entries.push_back({time, startup});
  std::sort(entries.begin(), entries.end());
  const std::size_t keep = std::min<std::size_t>(entries.size(), static_cast<std::size_t>(max_context));
  std::vector<std::string> context;
  context.reserve(keep);
  for (std::size_t i = entries.size() - keep; i < entries.size(); ++i)
    context.push_back(entries[i].startup);
  return context;
}

std::vector<LabeledExample> build_positives(const CutoffSplit& split, int max_context) {
  std::set<std::pair<std::string, std::string>> seen;
  std::map<std::string, std::vector<std::string>> context_cache;
  std::vector<LabeledExample> out;
  for (const auto& event : split.future) {
    auto pair = std::make_pair(event.fund.key, event.startup.key);
    if (!seen.insert(pair).second) continue;
    auto it = context_cache.find(event.fund.key);
    if (it == context_cache.end())
      it = context_cache.emplace(event.fund.key, fund_context(split, event.fund.key, max_context))
               .first;
    if (it->second.empty()) continue;  // fund has no pre-cutoff history
    out.push_back({split.cutoff, event.fund.key, it->second, event.startup.key, 1});
  }
  std::sort(out.begin(), out.end(), [](const LabeledExample& a, const LabeledExample& b) {
    return std::tie(a.fund, a.candidate) < std::tie(b.fund, b.candidate);
  });
  return out;
}

SampleResult sample_negatives(const CutoffSplit& split,
                              const std::vector<LabeledExample>& positives,
                              const DatasetOptions& options) {
  SampleResult result;
  if (positives.empty()) return result;

  // Startup universe of this cutoff: everything observed in past or future.
  std::set<std::string> universe_set;
  for (const auto& event : split.past) universe_set.insert(event.startup.key);
  for (const auto& event : split.future) universe_set.insert(event.startup.key);
  std::vector<std::string> universe(universe_set.begin(), universe_set.end());

  std::map<std::string, std::set<std::string>> excluded;  // fund -> startups off-limits
  for (const auto& event : split.past) excluded[event.fund.key].insert(event.startup.key);

  std::map<std::string, std::size_t> positive_count;
  std::map<std::string, const std::vector<std::string>*> context_of;
  for (const auto& pos : positives) {
    ++positive_count[pos.fund];
    context_of[pos.fund] = &pos.context;
    if (options.exclude_future_positives) excluded[pos.fund].insert(pos.candidate);
  }

  const std::size_t total =
      static_cast<std::size_t>(std::llround(options.negatives_per_positive *
                                            static_cast<double>(positives.size())));

  // Proportional allocation by largest remainder, then capacity capping.
  struct FundAlloc {
    std::string fund;
    std::size_t quota = 0;
    double remainder = 0.0;
    std::size_t capacity = 0;
  };
  std::vector<FundAlloc> allocs;
  const double p_total = static_cast<double>(positives.size());
  for (const auto& [fund, count] : positive_count) {
    const double share = static_cast<double>(total) * static_cast<double>(count) / p_total;
    FundAlloc a;
    a.fund = fund;
    a.quota = static_cast<std::size_t>(share);
    a.remainder = share - static_cast<double>(a.quota);
    std::size_t off_limits = 0;
    auto it = excluded.find(fund);
    if (it != excluded.end()) off_limits = it->second.size();
    a.capacity = universe.size() - off_limits;
    allocs.push_back(std::move(a));
  }
  std::size_t assigned = 0;
  for (const auto& a : allocs) assigned += a.quota;
  std::vector<std::size_t> order(allocs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return allocs[a].remainder > allocs[b].remainder;
  });
  for (std::size_t i = 0; assigned < total && i < order.size(); ++i) {
    ++allocs[order[i]].quota;
    ++assigned;
  }

  // Capacity pass: excess moved to funds that still have room.
  std::size_t overflow = 0;
  for (auto& a : allocs) {
    if (a.quota > a.capacity) {
      overflow += a.quota - a.capacity;
      result.warnings.push_back("fund " + a.fund + " negative pool exhausted (capacity " +
                                std::to_string(a.capacity) + ")");
      a.quota = a.capacity;
    }
  }
  while (overflow > 0) {
    bool placed = false;
    for (auto& a : allocs) {
      if (overflow == 0) break;
      if (a.quota < a.capacity) {
        ++a.quota;
        --overflow;
        placed = true;
      }
    }
    if (!placed) {
      result.warnings.push_back("global negative pool exhausted; " + std::to_string(overflow) +
                                " negatives dropped");
      break;
    }
  }

  std::unordered_set<std::string> drawn;
  for (const auto& a : allocs) {
    if (a.quota == 0) continue;
    const auto& off_limits = excluded[a.fund];
    std::mt19937_64 rng(mix_seed(options.seed, static_cast<std::uint64_t>(split.cutoff),
                                 fnv1a64(a.fund)));
    drawn.clear();
    std::vector<std::string> picks;
    picks.reserve(a.quota);
    if (a.quota * 2 >= a.capacity) {
      // Dense case: explicit allowed pool, partial Fisher-Yates.
      std::vector<std::string> pool;
      pool.reserve(a.capacity);
      for (const auto& s : universe)
        if (!off_limits.count(s)) pool.push_back(s);
      for (std::size_t i = 0; i < a.quota; ++i) {
        const std::size_t j = i + uniform_below(rng, pool.size() - i);
        std::swap(pool[i], pool[j]);
        picks.push_back(pool[i]);
      }
    } else {
      while (picks.size() < a.quota) {
        const auto& s = universe[uniform_below(rng, universe.size())];
        if (off_limits.count(s) || !drawn.insert(s).second) continue;
        picks.push_back(s);
      }
    }
    const auto& context = *context_of[a.fund];
    for (auto& s : picks)
      result.examples.push_back({split.cutoff, a.fund, context, std::move(s), 0});
  }
  return result;
}

std::vector<LabeledExample> merge_cutoffs(
    const std::vector<std::vector<LabeledExample>>& per_cutoff) {
  std::vector<LabeledExample> pool;
  for (const auto& list : per_cutoff) pool.insert(pool.end(), list.begin(), list.end());
  return pool;
}

SampleResult build_cutoff_examples(const std::vector<InvestmentEvent>& events, int cutoff,
                                   const DatasetOptions& options) {
  auto deduped = dedup_first_investments(events);
  auto split = split_by_cutoff(deduped, cutoff);
  auto positives = build_positives(split, options.max_context);
  auto negatives = sample_negatives(split, positives, options);
  SampleResult result;
  result.examples = std::move(positives);
  result.examples.insert(result.examples.end(), negatives.examples.begin(),
                         negatives.examples.end());
  result.warnings = std::move(negatives.warnings);
  return result;
}

SampleResult build_pool(const std::vector<InvestmentEvent>& events, const std::vector<int>& cutoffs,
                        const DatasetOptions& options) {
  SampleResult result;
  std::vector<std::vector<LabeledExample>> per_cutoff;
  for (int cutoff : cutoffs) {
    auto one = build_cutoff_examples(events, cutoff, options);
    per_cutoff.push_back(std::move(one.examples));
    result.warnings.insert(result.warnings.end(), one.warnings.begin(), one.warnings.end());
  }
  result.examples = merge_cutoffs(per_cutoff);
  return result;
}

std::pair<std::vector<LabeledExample>, std::vector<LabeledExample>> train_val_split(
    const std::vector<LabeledExample>& pool, double train_fraction, std::uint64_t seed) {
  if (pool.empty()) throw DataError("train_val_split: empty pool");
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw DataError("train_val_split: fraction must be in (0, 1)");
  std::vector<std::size_t> order(pool.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) {
    const std::size_t j = uniform_below(rng, i);
    std::swap(order[i - 1], order[j]);
  }
  const std::size_t n_train =
      static_cast<std::size_t>(train_fraction * static_cast<double>(pool.size()));
  std::pair<std::vector<LabeledExample>, std::vector<LabeledExample>> out;
  out.first.reserve(n_train);
  out.second.reserve(pool.size() - n_train);
  for (std::size_t i = 0; i < order.size(); ++i)
    (i < n_train ? out.first : out.second).push_back(pool[order[i]]);
  return out;
}

AuditResult audit_pool(const std::vector<InvestmentEvent>& events,
                       const std::vector<LabeledExample>& pool, const DatasetOptions& options) {
  std::map<std::pair<std::string, std::string>, TimePoint> first;
  for (const auto& event : events) {
    auto key = std::make_pair(event.fund.key, event.startup.key);
    auto [it, inserted] = first.emplace(key, event.time);
    if (!inserted && event.time < it->second) it->second = event.time;
  }
  AuditResult audit;
  auto flag = [&](const std::string& msg) {
    ++audit.violations;
    if (audit.messages.size() < 10) audit.messages.push_back(msg);
  };
  for (const auto& ex : pool) {
    ++audit.checked;
    const std::string tag = "fund " + ex.fund + " candidate " + ex.candidate + " cutoff " +
                            std::to_string(ex.cutoff);
    if (ex.context.empty()) flag(tag + ": empty context");
    if (ex.context.size() > static_cast<std::size_t>(options.max_context))
      flag(tag + ": context longer than " + std::to_string(options.max_context));
    for (const auto& s : ex.context) {
      auto it = first.find(std::make_pair(ex.fund, s));
      if (it == first.end())
        flag(tag + ": context startup " + s + " never invested in by fund");
      else if (it->second.year > ex.cutoff)
        flag(tag + ": context startup " + s + " first invested after cutoff");
    }
    auto pair_time = first.find(std::make_pair(ex.fund, ex.candidate));
    if (ex.label == 1) {
      if (pair_time == first.end())
        flag(tag + ": positive without any event");
      else if (pair_time->second.year <= ex.cutoff)
        flag(tag + ": positive pair first invested at or before cutoff");
    } else {
      if (std::find(ex.context.begin(), ex.context.end(), ex.candidate) != ex.context.end())
        flag(tag + ": negative candidate appears in context");
      if (pair_time != first.end()) {
        if (options.exclude_future_positives)
          flag(tag + ": negative pair has an investment event");
        else if (pair_time->second.year <= ex.cutoff)
          flag(tag + ": negative pair invested at or before cutoff");
      }
    }
  }
  return audit;
}

std::string write_pool_csv(const std::vector<LabeledExample>& pool) {
  std::string out = "cutoff,fund_id,context,candidate_id,label\n";
  for (const auto& ex : pool) {
    out += std::to_string(ex.cutoff);
    out += ',';
    out += ex.fund;
    out += ',';
    out += join(ex.context, '|');
    out += ',';
    out += ex.candidate;
    out += ',';
    out += std::to_string(ex.label);
    out += '\n';
  }
  return out;
}

std::vector<LabeledExample> read_pool_csv(const std::string& path) {
  auto lines = read_lines(path);
  std::size_t line_no = 0;
  for (; line_no < lines.size(); ++line_no) {
    if (lines[line_no].empty() || lines[line_no][0] == '#') continue;
    if (lines[line_no] != "cutoff,fund_id,context,candidate_id,label")
      throw DataError(path + ": bad pool header '" + lines[line_no] + "'");
    ++line_no;
    break;
  }
  std::vector<LabeledExample> pool;
  for (; line_no < lines.size(); ++line_no) {
    const std::string& line = lines[line_no];
    if (line.empty() || line[0] == '#') continue;
    auto fields = split(line, ',');
    if (fields.size() != 5) throw DataError(path + ": bad pool row '" + line + "'");
    LabeledExample ex;
    auto cutoff = parse_int(fields[0]);
    auto label = parse_int(fields[4]);
    if (!cutoff || !label || (*label != 0 && *label != 1))
      throw DataError(path + ": bad pool row '" + line + "'");
    ex.cutoff = static_cast<int>(*cutoff);
    ex.fund = fields[1];
    for (auto& s : split(fields[2], '|'))
      if (!s.empty()) ex.context.push_back(std::move(s));
    ex.candidate = fields[3];
    ex.label = static_cast<int>(*label);
    pool.push_back(std::move(ex));
  }
  return pool;
}

}  // namespace fundmatch
