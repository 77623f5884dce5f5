#include "fundmatch/config.hpp"

#include <json.hpp>

#include "fundmatch/errors.hpp"
#include "fundmatch/rng.hpp"
#include "fundmatch/textio.hpp"

namespace fundmatch {

using nlohmann::json;

namespace {

class SectionReader {
public:
  SectionReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw DataError("config: " + path_ + " must be an object");
  }

  ~SectionReader() = default;

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key)) throw DataError("config: unknown key " + path_ + "." + key);
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw DataError("config: bad value for " + path_ + "." + std::string(key));
    }
  }

  bool has(const char* key) const { return j_.contains(key); }
  const json& raw(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }
  void mark(const char* key) { seen_.insert(key); }

private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_world(const json& j, WorldConfig& w) {
  SectionReader r(j, "world");
  r.read("n_funds", w.n_funds);
  r.read("n_startups", w.n_startups);
  r.read("n_sectors", w.n_sectors);
  r.read("niches_per_sector", w.niches_per_sector);
  r.read("niche_weight", w.niche_weight);
  r.read("year_min", w.year_min);
  r.read("year_max", w.year_max);
  r.read("activity_skew", w.activity_skew);
  r.read("mean_degree", w.mean_degree);
  r.read("noise", w.noise);
  r.read("temperature", w.temperature);
  r.read("tag_fidelity", w.tag_fidelity);
  r.read("description_fidelity", w.description_fidelity);
  r.read("missing_rate", w.missing_rate);
  r.read("followon_rate", w.followon_rate);
  r.read("seed", w.seed);
  r.finish();
}

void read_walk(const json& j, WalkConfig& w) {
  SectionReader r(j, "walk");
  r.read("p", w.p);
  r.read("q", w.q);
  r.read("walks_per_node", w.walks_per_node);
  r.read("walk_length", w.walk_length);
  r.read("seed", w.seed);
  r.finish();
}

void read_sgns(const json& j, SgnsConfig& s) {
  SectionReader r(j, "sgns");
  r.read("dim", s.dim);
  r.read("window", s.window);
  r.read("negatives_per_positive", s.negatives_per_positive);
  r.read("epochs", s.epochs);
  r.read("learning_rate", s.learning_rate);
  r.read("unigram_power", s.unigram_power);
  r.read("seed", s.seed);
  r.finish();
}

void read_model(const json& j, ModelConfig& m) {
  SectionReader r(j, "model");
  r.read("text_dim", m.text_dim);
  r.read("attention_dim", m.attention_dim);
  r.read("attention_heads", m.attention_heads);
  r.read("lstm_hidden", m.lstm_hidden);
  r.read("classifier_hidden", m.classifier_hidden);
  r.read("prob_clamp", m.prob_clamp);
  r.read("lstm_oldest_first", m.lstm_oldest_first);
  r.read("categorical_trainable", m.categorical_trainable);
  r.read("init_seed", m.init_seed);
  r.finish();
}

void read_train(const json& j, TrainConfig& t) {
  SectionReader r(j, "train");
  r.read("learning_rate", t.learning_rate);
  r.read("batch_size", t.batch_size);
  r.read("epochs", t.epochs);
  r.read("seed", t.seed);
  r.read("threshold", t.threshold);
  r.read("adam_beta1", t.adam_beta1);
  r.read("adam_beta2", t.adam_beta2);
  r.read("adam_epsilon", t.adam_epsilon);
  r.read("verbose", t.verbose);
  r.finish();
}

void read_dataset(const json& j, DatasetOptions& d, std::vector<int>& cutoffs) {
  SectionReader r(j, "dataset");
  r.read("max_context", d.max_context);
  r.read("negatives_per_positive", d.negatives_per_positive);
  r.read("train_fraction", d.train_fraction);
  r.read("seed", d.seed);
  r.read("exclude_future_positives", d.exclude_future_positives);
  r.read("cutoffs", cutoffs);
  r.finish();
}

void read_paths(const json& j, PathsConfig& p) {
  SectionReader r(j, "paths");
  r.read("out_dir", p.out_dir);
  r.read("events", p.events);
  r.read("features", p.features);
  r.read("checkpoint", p.checkpoint);
  r.finish();
}

json world_to_json(const WorldConfig& w) {
  return json{{"n_funds", w.n_funds},
              {"n_startups", w.n_startups},
              {"n_sectors", w.n_sectors},
              {"niches_per_sector", w.niches_per_sector},
              {"niche_weight", w.niche_weight},
              {"year_min", w.year_min},
              {"year_max", w.year_max},
              {"activity_skew", w.activity_skew},
              {"mean_degree", w.mean_degree},
              {"noise", w.noise},
              {"temperature", w.temperature},
              {"tag_fidelity", w.tag_fidelity},
              {"description_fidelity", w.description_fidelity},
              {"missing_rate", w.missing_rate},
              {"followon_rate", w.followon_rate},
              {"seed", w.seed}};
}

json model_to_json(const ModelConfig& m) {
  return json{{"text_dim", m.text_dim},
              {"attention_dim", m.attention_dim},
              {"attention_heads", m.attention_heads},
              {"lstm_hidden", m.lstm_hidden},
              {"classifier_hidden", m.classifier_hidden},
              {"prob_clamp", m.prob_clamp},
              {"lstm_oldest_first", m.lstm_oldest_first},
              {"categorical_trainable", m.categorical_trainable},
              {"init_seed", m.init_seed}};
}

}  // namespace

StructSource parse_struct_source(const std::string& name) {
  if (name == "imputed_mean") return StructSource::ObservedImputedMean;
  if (name == "zero_fallback") return StructSource::ObservedZeroFallback;
  if (name == "ablation_zero") return StructSource::AblationZero;
  throw DataError("config: unknown structural source '" + name +
                  "' (expected imputed_mean, zero_fallback or ablation_zero)");
}

RunConfig parse_run_config_text(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw DataError(std::string("config: invalid JSON: ") + e.what());
  }
  RunConfig config;
  SectionReader top(j, "<top>");
  if (top.has("world")) read_world(top.raw("world"), config.world);
  top.mark("world");
  if (top.has("walk")) read_walk(top.raw("walk"), config.walk);
  top.mark("walk");
  if (top.has("sgns")) read_sgns(top.raw("sgns"), config.sgns);
  top.mark("sgns");
  if (top.has("model")) read_model(top.raw("model"), config.model);
  top.mark("model");
  if (top.has("train")) read_train(top.raw("train"), config.train);
  top.mark("train");
  if (top.has("dataset")) read_dataset(top.raw("dataset"), config.dataset, config.cutoffs);
  top.mark("dataset");
  if (top.has("paths")) read_paths(top.raw("paths"), config.paths);
  top.mark("paths");
  if (top.has("structural")) {
    std::string name;
    try {
      name = top.raw("structural").get<std::string>();
    } catch (const json::exception&) {
      throw DataError("config: structural must be a string");
    }
    config.structural = parse_struct_source(name);
  }
  top.mark("structural");
  top.finish();

  if (config.cutoffs.empty()) throw DataError("config: dataset.cutoffs must be non-empty");
  config.world.validate();
  config.walk.validate();
  config.sgns.validate();
  config.train.validate();
  return config;
}

RunConfig load_run_config(const std::string& path) {
  return parse_run_config_text(read_file(path));
}

namespace {

json run_config_to_json_object(const RunConfig& c, bool with_paths) {
  json j;
  j["world"] = world_to_json(c.world);
  j["walk"] = json{{"p", c.walk.p},
                   {"q", c.walk.q},
                   {"walks_per_node", c.walk.walks_per_node},
                   {"walk_length", c.walk.walk_length},
                   {"seed", c.walk.seed}};
  j["sgns"] = json{{"dim", c.sgns.dim},
                   {"window", c.sgns.window},
                   {"negatives_per_positive", c.sgns.negatives_per_positive},
                   {"epochs", c.sgns.epochs},
                   {"learning_rate", c.sgns.learning_rate},
                   {"unigram_power", c.sgns.unigram_power},
                   {"seed", c.sgns.seed}};
  j["model"] = model_to_json(c.model);
  j["train"] = json{{"learning_rate", c.train.learning_rate},
                    {"batch_size", c.train.batch_size},
                    {"epochs", c.train.epochs},
                    {"seed", c.train.seed},
                    {"threshold", c.train.threshold},
                    {"adam_beta1", c.train.adam_beta1},
                    {"adam_beta2", c.train.adam_beta2},
                    {"adam_epsilon", c.train.adam_epsilon},
                    {"verbose", c.train.verbose}};
  j["dataset"] = json{{"max_context", c.dataset.max_context},
                      {"negatives_per_positive", c.dataset.negatives_per_positive},
                      {"train_fraction", c.dataset.train_fraction},
                      {"seed", c.dataset.seed},
                      {"exclude_future_positives", c.dataset.exclude_future_positives},
                      {"cutoffs", c.cutoffs}};
  j["structural"] = to_string(c.structural) == std::string("observed_imputed_mean")
                        ? "imputed_mean"
                        : (c.structural == StructSource::ObservedZeroFallback ? "zero_fallback"
                                                                              : "ablation_zero");
  if (with_paths)
    j["paths"] = json{{"out_dir", c.paths.out_dir},
                      {"events", c.paths.events},
                      {"features", c.paths.features},
                      {"checkpoint", c.paths.checkpoint}};
  return j;
}

}  // namespace

std::string run_config_to_json(const RunConfig& config) {
  return run_config_to_json_object(config, true).dump(2);
}

std::string config_fingerprint(const RunConfig& config) {
  const std::string canonical = run_config_to_json_object(config, false).dump();
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(canonical)));
  return buf;
}

std::string model_config_to_json(const ModelConfig& config, StructSource source,
                                 const std::string& fingerprint) {
  json j = model_to_json(config);
  j["numeric_dim"] = config.numeric_dim;
  j["categorical_dim"] = config.categorical_dim;
  j["struct_dim"] = config.struct_dim;
  j["structural_source"] = source == StructSource::ObservedImputedMean
                               ? "imputed_mean"
                               : (source == StructSource::ObservedZeroFallback ? "zero_fallback"
                                                                               : "ablation_zero");
  j["config_fingerprint"] = fingerprint;
  return j.dump(2);
}

CheckpointMeta parse_model_config_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint config: invalid JSON: ") + e.what());
  }
  CheckpointMeta meta;
  read_model(
      [&] {
        json copy = j;
        copy.erase("numeric_dim");
        copy.erase("categorical_dim");
        copy.erase("struct_dim");
        copy.erase("structural_source");
        copy.erase("config_fingerprint");
        return copy;
      }(),
      meta.model);
  try {
    meta.model.numeric_dim = j.at("numeric_dim").get<int>();
    meta.model.categorical_dim = j.at("categorical_dim").get<int>();
    meta.model.struct_dim = j.at("struct_dim").get<int>();
    meta.source = parse_struct_source(j.at("structural_source").get<std::string>());
    if (j.contains("config_fingerprint"))
      meta.fingerprint = j.at("config_fingerprint").get<std::string>();
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint config: ") + e.what());
  }
  return meta;
}

}  // namespace fundmatch
