#pragma once

#include <string>
#include <vector>

#include "priorforge/prior.hpp"
#include "priorforge/sample.hpp"
#include "priorforge/synthspace.hpp"
#include "priorforge/train.hpp"

#include "json.hpp"

namespace priorforge::config {

struct DatasetConfig {
  synth::DatasetSpec spec{};
  int preview_count = 64;  // PPM previews written for the first N records
  bool with_histograms = true;
};

struct EvalConfig {
  int prompts = 5000;
  int k = 1;  // best-of-k used for every evaluated row
  /// Probe class scored as Clf.Score; empty = the model's domain filter,
  /// or "photo" for priors trained on all domains.
  std::string positive_class;
  bool baselines = true;
  std::vector<double> guidance_sweep{1.0, 2.0, 3.0, 5.0};
  int sweep_prompts = 50;
  double holdout_fraction = 0.1;  // tail of the dataset reserved for evaluation
};

/// Every command's full configuration. Serialized into every artifact.
struct RunConfig {
  synth::SpaceConfig space{};
  DatasetConfig dataset{};
  prior::PriorConfig model{};
  train::TrainConfig train{};
  sample::SampleConfig sample{};
  EvalConfig eval{};
};

nlohmann::json to_json(const synth::SpaceConfig& c);
nlohmann::json to_json(const DatasetConfig& c);
nlohmann::json to_json(const prior::PriorConfig& c);
nlohmann::json to_json(const train::TrainConfig& c);
nlohmann::json to_json(const sample::SampleConfig& c);
nlohmann::json to_json(const EvalConfig& c);
nlohmann::json to_json(const colorlab::HistogramLayout& c);
nlohmann::json to_json(const RunConfig& c);

/// Missing keys keep their defaults; unknown keys throw InputError.
RunConfig run_config_from_json(const nlohmann::json& j);
synth::SpaceConfig space_from_json(const nlohmann::json& j);
prior::PriorConfig model_from_json(const nlohmann::json& j);
colorlab::HistogramLayout layout_from_json(const nlohmann::json& j);

RunConfig load_run_config(const std::string& path);

}  // namespace priorforge::config
