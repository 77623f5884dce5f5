#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fundmatch/graph.hpp"

namespace fundmatch {

// Events partitioned around a cutoff year: past (t <= cutoff) is model
// context, future (t > cutoff) supplies prediction targets.
struct CutoffSplit {
  int cutoff = 0;
  std::vector<InvestmentEvent> past;
  std::vector<InvestmentEvent> future;
};

struct LabeledExample {
  int cutoff = 0;
  std::string fund;
  std::vector<std::string> context;  // startup keys, oldest first, <= max_context
  std::string candidate;
  int label = 0;
};

struct DatasetOptions {
  int max_context = 15;
  double negatives_per_positive = 1.5;  // the 4:6 ratio
  double train_fraction = 0.7;          // the 7:3 split
  std::uint64_t seed = 1;
  // When true (default), a fund's own future positives are removed from its
  // negative pool, so a label-0 pair never has an investment anywhere.
  bool exclude_future_positives = true;
};

// Keeps only the earliest event per (fund, startup) pair. Output is sorted
// by (fund, startup) key. Follow-on rounds are not inclusion events.
std::vector<InvestmentEvent> dedup_first_investments(const std::vector<InvestmentEvent>& events);

// Partition by t <= cutoff at year granularity.
CutoffSplit split_by_cutoff(const std::vector<InvestmentEvent>& events, int cutoff);

// The fund's past investees sorted by first-investment time (ties: sub-year
// ordinal, then startup key), truncated to the `max_context` most recent,
// returned oldest first. Empty result = skip signal, not an error.
std::vector<std::string> fund_context(const CutoffSplit& split, const std::string& fund_key,
                                      int max_context = 15);

// One label-1 example per unique future (fund, candidate) pair whose fund
// has non-empty past context.
std::vector<LabeledExample> build_positives(const CutoffSplit& split, int max_context = 15);

struct SampleResult {
  std::vector<LabeledExample> examples;
  std::vector<std::string> warnings;  // pool exhaustion notes
};

// Label-0 examples: round(ratio * |positives|) in total, allocated per fund
// proportionally to its positive count, drawn without replacement from the
// startups of this cutoff minus the fund's own past investees (and minus its
// future positives unless disabled). Deterministic given the seed.
SampleResult sample_negatives(const CutoffSplit& split,
                              const std::vector<LabeledExample>& positives,
                              const DatasetOptions& options);

// Union across cutoffs; the same pair under different cutoffs stays distinct.
std::vector<LabeledExample> merge_cutoffs(const std::vector<std::vector<LabeledExample>>& per_cutoff);

// Full per-cutoff protocol: dedup, split, positives, negatives.
SampleResult build_cutoff_examples(const std::vector<InvestmentEvent>& events, int cutoff,
                                   const DatasetOptions& options);

// All cutoffs merged.
SampleResult build_pool(const std::vector<InvestmentEvent>& events, const std::vector<int>& cutoffs,
                        const DatasetOptions& options);

// Random pair-level split; |train| = floor(fraction * N). Reproducible.
std::pair<std::vector<LabeledExample>, std::vector<LabeledExample>> train_val_split(
    const std::vector<LabeledExample>& pool, double train_fraction, std::uint64_t seed);

struct AuditResult {
  std::size_t checked = 0;
  std::size_t violations = 0;
  std::vector<std::string> messages;  // first few violations, for diagnostics
};

// Re-derives every invariant of the protocol from the raw events: context
// events precede the cutoff, positives have a strictly later first
// investment, negatives have none (or none before the cutoff in literal
// mode), contexts are non-empty and within the length cap.
AuditResult audit_pool(const std::vector<InvestmentEvent>& events,
                       const std::vector<LabeledExample>& pool, const DatasetOptions& options);

// CSV: cutoff,fund_id,context,candidate_id,label with |-separated context.
std::string write_pool_csv(const std::vector<LabeledExample>& pool);
std::vector<LabeledExample> read_pool_csv(const std::string& path);

}  // namespace fundmatch
