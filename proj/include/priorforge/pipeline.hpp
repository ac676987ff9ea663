#pragma once

#include <optional>
#include <string>
#include <vector>

#include "priorforge/config.hpp"
#include "priorforge/store.hpp"

#include "json.hpp"

namespace priorforge::pipeline {

/// Sets the dataset mix to an even split over the listed domains.
void restrict_domains(config::RunConfig& rc, const std::vector<synth::Domain>& domains);

/// Generates the dataset described by rc and writes it to out_dir.
/// Returns the manifest counts.
nlohmann::json gen_data(const config::RunConfig& rc, const std::string& out_dir);

/// Trains on the non-held-out part of the dataset. The dataset's own space
/// and dataset sections replace those of rc. Writes model_path and
/// model_path + ".report.json"; returns the training report.
nlohmann::json train_prior(const std::string& data_dir, config::RunConfig rc,
                           const std::string& model_path);

struct SampleRequest {
  std::vector<std::string> prompts;
  std::optional<std::string> color_image;  // PPM exemplar
  sample::SampleConfig sample{};
};

/// One PPM per prompt (prompt_NNN.ppm) plus report.json in out_dir.
nlohmann::json sample(const std::string& model_path, const SampleRequest& req,
                      const std::string& out_dir);

nlohmann::json compose(const std::vector<std::string>& model_paths,
                       const std::vector<double>& weights, const SampleRequest& req,
                       const std::string& out_dir);

struct EvalRequest {
  config::EvalConfig eval{};
  sample::SampleConfig sample{};
  std::optional<std::string> baseline_model;
};

/// Writes eval_report.json and eval_report.csv to out_dir.
nlohmann::json eval(const std::string& model_path, const std::string& data_dir,
                    const EvalRequest& req, const std::string& out_dir);

}  // namespace priorforge::pipeline
