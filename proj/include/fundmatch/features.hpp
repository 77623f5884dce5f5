#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fundmatch/graph.hpp"
#include "fundmatch/node2vec.hpp"

namespace fundmatch {

enum class NumAttr { Age, Employees, Funding };
const char* to_string(NumAttr attr);

struct YearValues {
  std::optional<double> age;
  std::optional<double> employees;
  std::optional<double> funding;

  std::optional<double>& get(NumAttr attr);
  const std::optional<double>& get(NumAttr attr) const;
};

struct StartupRecord {
  NodeId id;
  std::map<int, YearValues> by_year;
  std::optional<std::string> description;
  std::vector<std::string> tags;  // sorted, unique
  std::optional<std::string> stage;
  std::optional<std::string> location;
};

// Keyed by startup key; ordered so every pass over the set is deterministic.
using RecordSet = std::map<std::string, StartupRecord>;

// TSV, one row per (startup, year):
// startup_id  year  age  employees  cumulative_funding  description  tags  stage  location
// tags are |-separated; missing fields are empty. '#' lines ignored.
RecordSet read_features_tsv(const std::string& path);
std::string write_features_tsv(const RecordSet& records);

// Deterministic text -> vector encoder. The default is the hashing encoder
// below; a pretrained sentence encoder can be swapped in behind this
// interface without touching the rest of the pipeline.
class TextEncoder {
public:
  virtual ~TextEncoder() = default;
  virtual int output_dim() const = 0;
  virtual std::vector<double> encode(const std::string& text) const = 0;
};

// Signed feature hashing over lowercased word tokens, L2-normalized.
class HashingTextEncoder : public TextEncoder {
public:
  explicit HashingTextEncoder(int dim = 256);
  int output_dim() const override { return dim_; }
  std::vector<double> encode(const std::string& text) const override;

private:
  int dim_;
};

std::vector<std::string> tokenize_words(const std::string& text);

inline constexpr const char* kMissingDescriptionPlaceholder = "no information available";

// Missing/empty description is encoded as the placeholder, so every
// description-less startup gets the same vector.
std::vector<double> encode_text(const TextEncoder& encoder,
                                const std::optional<std::string>& description);

// Most-recent-value imputation with a geometric-mean fallback, scoped to
// observations at years <= `year`. Returns one value per startup in
// `records`. Throws when the attribute has no positive observation at all.
std::map<std::string, double> impute_numerical(const RecordSet& records, NumAttr attr, int year);

// Tag / stage / location vocabularies, frozen at dataset-build time.
struct CategoricalVocab {
  std::vector<std::string> tags;       // sorted
  std::vector<std::string> stages;     // sorted
  std::vector<std::string> locations;  // sorted

  static CategoricalVocab fit(const RecordSet& records, const std::set<std::string>& startup_keys);
  // Layout: [tags..., no_tag][stages..., no_stage][locations..., no_location].
  std::size_t encoded_dim() const { return tags.size() + stages.size() + locations.size() + 3; }
};

// Per-cutoff feature encoder. All statistics (numeric z-scores, geometric
// means, stage/location modes) are fitted on rows of past startups at years
// <= cutoff, so nothing later leaks into earlier examples.
class FeatureEncoder {
public:
  FeatureEncoder(const RecordSet& records, const std::set<std::string>& past_startup_keys,
                 int cutoff_year, CategoricalVocab vocab,
                 std::shared_ptr<const TextEncoder> text_encoder);

  const CategoricalVocab& vocab() const { return vocab_; }
  int text_dim() const { return text_encoder_->output_dim(); }
  static constexpr int numeric_dim() { return 3; }
  std::size_t categorical_dim() const { return vocab_.encoded_dim(); }

  // Length-3 vector [age, employees, funding] after imputation, log
  // transform (employees/funding) and z-scoring.
  std::vector<double> encode_numeric(const StartupRecord* record, int year) const;
  std::vector<double> encode_categorical(const StartupRecord* record) const;
  std::vector<double> encode_description(const StartupRecord* record) const;

private:
  struct AttrStats {
    double geo_mean = 0.0;  // raw-space fallback
    double mean = 0.0;      // transformed-space z-score stats
    double std = 1.0;
  };

  double imputed_raw(const StartupRecord* record, NumAttr attr, int year) const;

  CategoricalVocab vocab_;
  std::shared_ptr<const TextEncoder> text_encoder_;
  int cutoff_year_;
  AttrStats stats_[3];
  std::optional<std::string> stage_mode_;
  std::optional<std::string> location_mode_;
};

enum class StructProvenance { Observed, ImputedMean, Zeroed };
const char* to_string(StructProvenance p);

struct ModalBundle {
  std::vector<double> text_vec;
  std::vector<double> num_vec;
  std::vector<double> cat_vec;
  std::vector<double> struct_vec;
  StructProvenance struct_provenance = StructProvenance::Zeroed;
};

enum class StructSource {
  ObservedImputedMean,  // table lookup, Appendix-style mean for absent nodes
  ObservedZeroFallback, // table lookup, zero vector for absent nodes
  AblationZero,         // zero vector for every startup
};
const char* to_string(StructSource s);

// Binds a feature encoder to a structural-embedding source. Total: always
// yields finite vectors, even for startups with no record at all.
class BundleAssembler {
public:
  BundleAssembler(std::shared_ptr<const FeatureEncoder> features, const EmbeddingTable* table,
                  int struct_dim, StructSource source);

  ModalBundle assemble(const RecordSet& records, const std::string& startup_key, int year) const;

  int struct_dim() const { return struct_dim_; }
  StructSource source() const { return source_; }
  const FeatureEncoder& features() const { return *features_; }

private:
  std::shared_ptr<const FeatureEncoder> features_;
  const EmbeddingTable* table_;  // null in ablation mode
  int struct_dim_;
  StructSource source_;
  std::vector<double> mean_vec_;
};

}  // namespace fundmatch
