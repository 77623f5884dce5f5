#pragma once

#include <string>
#include <vector>

#include "fundmatch/dataset.hpp"
#include "fundmatch/features.hpp"
#include "fundmatch/model.hpp"
#include "fundmatch/node2vec.hpp"
#include "fundmatch/synthgen.hpp"

namespace fundmatch {

// Optional default file locations; commands override them with flags. Never
// part of the fingerprint.
struct PathsConfig {
  std::string out_dir;
  std::string events;
  std::string features;
  std::string checkpoint;
};

// One structured document covering every stage of a run. Unknown keys are
// rejected; every command logs the fully-resolved form.
struct RunConfig {
  WorldConfig world;
  WalkConfig walk;
  SgnsConfig sgns;
  ModelConfig model;          // categorical_dim is derived at run time
  TrainConfig train;
  DatasetOptions dataset;
  std::vector<int> cutoffs = {2021, 2022, 2023};
  StructSource structural = StructSource::ObservedImputedMean;
  PathsConfig paths;
};

RunConfig parse_run_config_text(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

// Fully-resolved document (defaults filled in), canonical key order.
std::string run_config_to_json(const RunConfig& config);

// Stable 16-hex digest of the semantic config (paths excluded). Output files
// embed this so runs can be told apart.
std::string config_fingerprint(const RunConfig& config);

// Model-config document stored inside checkpoints, with the runtime dims.
std::string model_config_to_json(const ModelConfig& config, StructSource source,
                                 const std::string& fingerprint);
struct CheckpointMeta {
  ModelConfig model;
  StructSource source = StructSource::ObservedImputedMean;
  std::string fingerprint;
};
CheckpointMeta parse_model_config_json(const std::string& text);

StructSource parse_struct_source(const std::string& name);

}  // namespace fundmatch
