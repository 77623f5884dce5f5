#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "fundmatch/dataset.hpp"
#include "fundmatch/features.hpp"
#include "fundmatch/graph.hpp"
#include "fundmatch/node2vec.hpp"

namespace fundmatch {

struct RunConfig;  // config.hpp

struct MetricReport {
  std::string setting;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  double threshold = 0.5;
  std::string config_fingerprint;
};

// Thresholded confusion counts and derived metrics on the positive class.
// Zero denominators yield 0. Empty input is an error.
MetricReport compute_metrics(const std::vector<double>& predictions,
                             const std::vector<double>& labels, double threshold = 0.5);

// 2PR/(P+R), 0 when P+R == 0.
double f1_score(double precision, double recall);

enum class ReportFormat { Csv, Markdown };

// Csv: full-precision `setting,precision,recall,f1,tp,fp,tn,fn,threshold`
// rows. Markdown: Setting/Precision/Recall/F1 table rendered to 2 decimals.
std::string emit_report(const std::vector<MetricReport>& reports, ReportFormat format);

// Parses the Csv layout back; the round trip preserves every value.
std::vector<MetricReport> parse_report_csv(const std::string& text);

// Walks + SGNS on the graph built from events at t <= cutoff only, so the
// table never sees a future node.
EmbeddingTable train_structural_embeddings(const std::vector<InvestmentEvent>& events, int cutoff,
                                           const WalkConfig& walk_config,
                                           const SgnsConfig& sgns_config);

// Per-cutoff feature encoders and bundle assemblers for one structural
// source. The categorical vocabulary is shared across cutoffs (fitted on the
// latest cutoff's past universe) so the encoded width is stable; numeric
// statistics and modes stay per-cutoff.
std::map<int, std::shared_ptr<const BundleAssembler>> build_assemblers(
    const std::vector<InvestmentEvent>& events, const RecordSet& records,
    const std::vector<int>& cutoffs, const std::map<int, EmbeddingTable>& tables, int struct_dim,
    StructSource source, std::shared_ptr<const TextEncoder> text_encoder);

struct EpochRecord {
  int epoch = 0;
  std::string split;
  double loss = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct AblationOutcome {
  std::vector<MetricReport> reports;               // successful arms, in arm order
  std::vector<std::string> arm_errors;             // one entry per failed arm
  std::map<std::string, std::vector<EpochRecord>> histories;
};

// The three-arm comparison:
//   no_structural    — model trained and evaluated with zeroed structural vectors
//   full_structural  — model trained with observed vectors (mean-imputed when
//                      absent), evaluated on the full validation split
//   imputed_unseen   — the full_structural model evaluated on the validation
//                      subset whose candidate is absent from that cutoff's
//                      past graph (its vector is the imputed mean)
// Arms share seeds, data and every config field except the structural source.
// A failing arm is reported in arm_errors and the others still run.
AblationOutcome run_ablation(const std::vector<InvestmentEvent>& events, const RecordSet& records,
                             const RunConfig& config);

}  // namespace fundmatch
