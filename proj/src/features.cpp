#include "fundmatch/features.hpp"

#include <algorithm>
#include <cmath>

#include "fundmatch/errors.hpp"
#include "fundmatch/rng.hpp"
#include "fundmatch/textio.hpp"

namespace fundmatch {

const char* to_string(NumAttr attr) {
  switch (attr) {
    case NumAttr::Age: return "age";
    case NumAttr::Employees: return "employees";
    default: return "cumulative_funding";
  }
}

std::optional<double>& YearValues::get(NumAttr attr) {
  switch (attr) {
    case NumAttr::Age: return age;
    case NumAttr::Employees: return employees;
    default: return funding;
  }
}

const std::optional<double>& YearValues::get(NumAttr attr) const {
  return const_cast<YearValues*>(this)->get(attr);
}

RecordSet read_features_tsv(const std::string& path) {
  auto lines = read_lines(path);
  std::size_t line_no = 0;
  std::vector<std::string> header;
  for (; line_no < lines.size(); ++line_no) {
    if (lines[line_no].empty() || lines[line_no][0] == '#') continue;
    header = split(lines[line_no], '\t');
    ++line_no;
    break;
  }
  const std::vector<std::string> expected = {"startup_id", "year",        "age",
                                             "employees",  "cumulative_funding", "description",
                                             "tags",       "stage",       "location"};
  if (header != expected) throw DataError(path + ": bad feature header");

  RecordSet records;
  std::size_t row = 0;
  for (; line_no < lines.size(); ++line_no) {
    const std::string& line = lines[line_no];
    if (line.empty() || line[0] == '#') continue;
    ++row;
    const std::string label = path + " row " + std::to_string(row);
    auto fields = split(line, '\t');
    if (fields.size() != expected.size())
      throw DataError(label + ": expected " + std::to_string(expected.size()) + " fields, got " +
                      std::to_string(fields.size()));
    const std::string& key = fields[0];
    if (key.empty()) throw DataError(label + ": empty startup_id");
    auto year = parse_int(fields[1]);
    if (!year) throw DataError(label + ": bad year '" + fields[1] + "'");

    StartupRecord& rec = records.try_emplace(key, StartupRecord{startup_id(key), {}, {}, {}, {}, {}})
                             .first->second;
    YearValues& yv = rec.by_year[static_cast<int>(*year)];
    auto set_num = [&](NumAttr attr, const std::string& text) {
      if (text.empty()) return;
      auto v = parse_real(text);
      if (!v || *v < 0.0)
        throw DataError(label + ": bad " + std::string(to_string(attr)) + " '" + text + "'");
      yv.get(attr) = *v;
    };
    set_num(NumAttr::Age, fields[2]);
    set_num(NumAttr::Employees, fields[3]);
    set_num(NumAttr::Funding, fields[4]);
    if (!fields[5].empty()) rec.description = fields[5];
    if (!fields[6].empty()) {
      for (auto& tag : split(fields[6], '|'))
        if (!tag.empty()) rec.tags.push_back(tag);
      std::sort(rec.tags.begin(), rec.tags.end());
      rec.tags.erase(std::unique(rec.tags.begin(), rec.tags.end()), rec.tags.end());
    }
    if (!fields[7].empty()) rec.stage = fields[7];
    if (!fields[8].empty()) rec.location = fields[8];
  }
  return records;
}

std::string write_features_tsv(const RecordSet& records) {
  std::string out =
      "startup_id\tyear\tage\temployees\tcumulative_funding\tdescription\ttags\tstage\tlocation\n";
  for (const auto& [key, rec] : records) {
    bool first_row = true;
    for (const auto& [year, yv] : rec.by_year) {
      out += key;
      out += '\t';
      out += std::to_string(year);
      out += '\t';
      if (yv.age) out += format_double(*yv.age);
      out += '\t';
      if (yv.employees) out += format_double(*yv.employees);
      out += '\t';
      if (yv.funding) out += format_double(*yv.funding);
      out += '\t';
      // Non-yearly fields ride on the first row of each startup.
      if (first_row) {
        if (rec.description) out += *rec.description;
        out += '\t';
        out += join(rec.tags, '|');
        out += '\t';
        if (rec.stage) out += *rec.stage;
        out += '\t';
        if (rec.location) out += *rec.location;
      } else {
        out += "\t\t\t";
      }
      out += '\n';
      first_row = false;
    }
    if (rec.by_year.empty()) {
      out += key + "\t0\t\t\t\t" + (rec.description ? *rec.description : "") + "\t" +
             join(rec.tags, '|') + "\t" + (rec.stage ? *rec.stage : "") + "\t" +
             (rec.location ? *rec.location : "") + "\n";
    }
  }
  return out;
}

std::vector<std::string> tokenize_words(const std::string& text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : text) {
    const bool word_char = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                           (c >= '0' && c <= '9') || c >= 0x80;
    if (word_char) {
      current.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a')
                                             : static_cast<char>(c));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

HashingTextEncoder::HashingTextEncoder(int dim) : dim_(dim) {
  if (dim < 1) throw DataError("hashing encoder: dim must be >= 1");
}

std::vector<double> HashingTextEncoder::encode(const std::string& text) const {
  std::vector<double> out(dim_, 0.0);
  for (const auto& token : tokenize_words(text)) {
    const std::uint64_t h = fnv1a64(token);
    const std::size_t bucket = h % static_cast<std::uint64_t>(dim_);
    const double sign = ((h >> 32) & 1) ? 1.0 : -1.0;
    out[bucket] += sign;
  }
  double norm = 0.0;
  for (double x : out) norm += x * x;
  if (norm > 0.0) {
    norm = std::sqrt(norm);
    for (double& x : out) x /= norm;
  }
  return out;
}

std::vector<double> encode_text(const TextEncoder& encoder,
                                const std::optional<std::string>& description) {
  const std::string& text =
      description && !description->empty() ? *description : kMissingDescriptionPlaceholder;
  auto vec = encoder.encode(text);
  if (static_cast<int>(vec.size()) != encoder.output_dim())
    throw DataError("text encoder produced wrong dimension");
  return vec;
}

namespace {

// Most recent observation at or before `year`, if any.
std::optional<double> latest_at_or_before(const StartupRecord& rec, NumAttr attr, int year) {
  std::optional<double> found;
  for (const auto& [y, yv] : rec.by_year) {
    if (y > year) break;
    if (yv.get(attr)) found = yv.get(attr);
  }
  return found;
}

// Geometric mean over strictly positive observations at years <= year.
// Zeros carry no magnitude information so they are excluded.
std::optional<double> population_geo_mean(const RecordSet& records, NumAttr attr, int year) {
  double log_sum = 0.0;
  std::size_t n = 0;
  for (const auto& [key, rec] : records) {
    for (const auto& [y, yv] : rec.by_year) {
      if (y > year) break;
      const auto& v = yv.get(attr);
      if (v && *v > 0.0) {
        log_sum += std::log(*v);
        ++n;
      }
    }
  }
  if (n == 0) return std::nullopt;
  return std::exp(log_sum / static_cast<double>(n));
}

// Same, restricted to a set of startups (the past universe of a cutoff).
std::optional<double> population_geo_mean_scope(const RecordSet& records,
                                                const std::set<std::string>& startup_keys,
                                                NumAttr attr, int year) {
  double log_sum = 0.0;
  std::size_t n = 0;
  for (const auto& key : startup_keys) {
    auto it = records.find(key);
    if (it == records.end()) continue;
    for (const auto& [y, yv] : it->second.by_year) {
      if (y > year) break;
      const auto& v = yv.get(attr);
      if (v && *v > 0.0) {
        log_sum += std::log(*v);
        ++n;
      }
    }
  }
  if (n == 0) return std::nullopt;
  return std::exp(log_sum / static_cast<double>(n));
}

}  // namespace

std::map<std::string, double> impute_numerical(const RecordSet& records, NumAttr attr, int year) {
  auto fallback = population_geo_mean(records, attr, year);
  std::map<std::string, double> out;
  for (const auto& [key, rec] : records) {
    auto v = latest_at_or_before(rec, attr, year);
    if (v) {
      out[key] = *v;
      continue;
    }
    if (!fallback)
      throw DataError(std::string("impute_numerical: attribute ") + to_string(attr) +
                      " has no positive observation at or before " + std::to_string(year));
    out[key] = *fallback;
  }
  return out;
}

CategoricalVocab CategoricalVocab::fit(const RecordSet& records,
                                       const std::set<std::string>& startup_keys) {
  std::set<std::string> tags, stages, locations;
  for (const auto& key : startup_keys) {
    auto it = records.find(key);
    if (it == records.end()) continue;
    const StartupRecord& rec = it->second;
    tags.insert(rec.tags.begin(), rec.tags.end());
    if (rec.stage) stages.insert(*rec.stage);
    if (rec.location) locations.insert(*rec.location);
  }
  CategoricalVocab vocab;
  vocab.tags.assign(tags.begin(), tags.end());
  vocab.stages.assign(stages.begin(), stages.end());
  vocab.locations.assign(locations.begin(), locations.end());
  return vocab;
}

namespace {

// Most frequent non-missing value among the given startups; ties go to the
// lexicographically smallest value.
std::optional<std::string> mode_of(const RecordSet& records,
                                   const std::set<std::string>& startup_keys,
                                   const std::optional<std::string> StartupRecord::* field) {
  std::map<std::string, std::size_t> counts;
  for (const auto& key : startup_keys) {
    auto it = records.find(key);
    if (it == records.end()) continue;
    const auto& value = it->second.*field;
    if (value) ++counts[*value];
  }
  std::optional<std::string> best;
  std::size_t best_count = 0;
  for (const auto& [value, count] : counts) {
    if (count > best_count) {
      best = value;
      best_count = count;
    }
  }
  return best;
}

}  // namespace

FeatureEncoder::FeatureEncoder(const RecordSet& records,
                               const std::set<std::string>& past_startup_keys, int cutoff_year,
                               CategoricalVocab vocab,
                               std::shared_ptr<const TextEncoder> text_encoder)
    : vocab_(std::move(vocab)),
      text_encoder_(std::move(text_encoder)),
      cutoff_year_(cutoff_year) {
  if (!text_encoder_) throw DataError("feature encoder: null text encoder");
  for (NumAttr attr : {NumAttr::Age, NumAttr::Employees, NumAttr::Funding}) {
    AttrStats& st = stats_[static_cast<int>(attr)];
    auto geo = population_geo_mean_scope(records, past_startup_keys, attr, cutoff_year_);
    st.geo_mean = geo.value_or(0.0);
    // z-score stats over transformed observed values
    double sum = 0.0, sum_sq = 0.0;
    std::size_t n = 0;
    for (const auto& key : past_startup_keys) {
      auto it = records.find(key);
      if (it == records.end()) continue;
      for (const auto& [y, yv] : it->second.by_year) {
        if (y > cutoff_year_) break;
        const auto& v = yv.get(attr);
        if (!v) continue;
        const double t = attr == NumAttr::Age ? *v : std::log1p(*v);
        sum += t;
        sum_sq += t * t;
        ++n;
      }
    }
    if (n > 0) {
      st.mean = sum / static_cast<double>(n);
      const double var = std::max(0.0, sum_sq / static_cast<double>(n) - st.mean * st.mean);
      st.std = var > 1e-12 ? std::sqrt(var) : 1.0;
    }
  }
  stage_mode_ = mode_of(records, past_startup_keys, &StartupRecord::stage);
  location_mode_ = mode_of(records, past_startup_keys, &StartupRecord::location);
}

double FeatureEncoder::imputed_raw(const StartupRecord* record, NumAttr attr, int year) const {
  if (record) {
    auto v = latest_at_or_before(*record, attr, std::min(year, cutoff_year_));
    if (v) return *v;
  }
  return stats_[static_cast<int>(attr)].geo_mean;
}

std::vector<double> FeatureEncoder::encode_numeric(const StartupRecord* record, int year) const {
  std::vector<double> out(3);
  for (NumAttr attr : {NumAttr::Age, NumAttr::Employees, NumAttr::Funding}) {
    const AttrStats& st = stats_[static_cast<int>(attr)];
    const double raw = imputed_raw(record, attr, year);
    const double t = attr == NumAttr::Age ? raw : std::log1p(raw);
    out[static_cast<int>(attr)] = (t - st.mean) / st.std;
  }
  return out;
}

std::vector<double> FeatureEncoder::encode_categorical(const StartupRecord* record) const {
  std::vector<double> out(vocab_.encoded_dim(), 0.0);
  const std::size_t tag_base = 0;
  const std::size_t no_tag = tag_base + vocab_.tags.size();
  const std::size_t stage_base = no_tag + 1;
  const std::size_t no_stage = stage_base + vocab_.stages.size();
  const std::size_t loc_base = no_stage + 1;
  const std::size_t no_loc = loc_base + vocab_.locations.size();

  bool any_tag = false;
  if (record) {
    for (const auto& tag : record->tags) {
      auto it = std::lower_bound(vocab_.tags.begin(), vocab_.tags.end(), tag);
      if (it != vocab_.tags.end() && *it == tag) {
        out[tag_base + static_cast<std::size_t>(it - vocab_.tags.begin())] = 1.0;
        any_tag = true;
      } else {
        out[no_tag] = 1.0;  // out-of-vocabulary tag
        any_tag = true;
      }
    }
  }
  if (!any_tag) out[no_tag] = 1.0;

  auto encode_single = [&](const std::optional<std::string>& value,
                           const std::optional<std::string>& mode,
                           const std::vector<std::string>& vocab, std::size_t base,
                           std::size_t none_slot) {
    const std::optional<std::string>& effective = value ? value : mode;
    if (effective) {
      auto it = std::lower_bound(vocab.begin(), vocab.end(), *effective);
      if (it != vocab.end() && *it == *effective) {
        out[base + static_cast<std::size_t>(it - vocab.begin())] = 1.0;
        return;
      }
    }
    out[none_slot] = 1.0;
  };
  encode_single(record ? record->stage : std::nullopt, stage_mode_, vocab_.stages, stage_base,
                no_stage);
  encode_single(record ? record->location : std::nullopt, location_mode_, vocab_.locations,
                loc_base, no_loc);
  return out;
}

std::vector<double> FeatureEncoder::encode_description(const StartupRecord* record) const {
  return encode_text(*text_encoder_, record ? record->description : std::nullopt);
}

const char* to_string(StructProvenance p) {
  switch (p) {
    case StructProvenance::Observed: return "observed";
    case StructProvenance::ImputedMean: return "imputed_mean";
    default: return "zeroed";
  }
}

const char* to_string(StructSource s) {
  switch (s) {
    case StructSource::ObservedImputedMean: return "observed_imputed_mean";
    case StructSource::ObservedZeroFallback: return "observed_zero_fallback";
    default: return "ablation_zero";
  }
}

BundleAssembler::BundleAssembler(std::shared_ptr<const FeatureEncoder> features,
                                 const EmbeddingTable* table, int struct_dim, StructSource source)
    : features_(std::move(features)), table_(table), struct_dim_(struct_dim), source_(source) {
  if (!features_) throw DataError("bundle assembler: null feature encoder");
  if (source_ == StructSource::AblationZero) {
    table_ = nullptr;
  } else {
    if (!table_) throw DataError("bundle assembler: structural source needs an embedding table");
    if (table_->dim() != struct_dim_)
      throw DataError("bundle assembler: table dim " + std::to_string(table_->dim()) +
                      " != struct dim " + std::to_string(struct_dim_));
    if (source_ == StructSource::ObservedImputedMean) {
      std::vector<NodeId> startups;
      for (const auto& id : table_->keys())
        if (id.kind == NodeKind::Startup) startups.push_back(id);
      if (!startups.empty()) mean_vec_ = mean_embedding(*table_, startups);
    }
  }
}

ModalBundle BundleAssembler::assemble(const RecordSet& records, const std::string& startup_key,
                                      int year) const {
  const StartupRecord* record = nullptr;
  auto it = records.find(startup_key);
  if (it != records.end()) record = &it->second;

  ModalBundle bundle;
  bundle.text_vec = features_->encode_description(record);
  bundle.num_vec = features_->encode_numeric(record, year);
  bundle.cat_vec = features_->encode_categorical(record);

  if (table_) {
    const auto* vec = table_->find(startup_id(startup_key));
    if (vec) {
      bundle.struct_vec = *vec;
      bundle.struct_provenance = StructProvenance::Observed;
      return bundle;
    }
    if (source_ == StructSource::ObservedImputedMean) {
      if (mean_vec_.empty())
        throw DataError("bundle assembler: no past companies to impute from");
      bundle.struct_vec = mean_vec_;
      bundle.struct_provenance = StructProvenance::ImputedMean;
      return bundle;
    }
  }
  bundle.struct_vec.assign(static_cast<std::size_t>(struct_dim_), 0.0);
  bundle.struct_provenance = StructProvenance::Zeroed;
  return bundle;
}

}  // namespace fundmatch
