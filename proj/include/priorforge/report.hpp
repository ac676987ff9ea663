#pragma once

#include <span>
#include <string>
#include <vector>

#include "priorforge/evalx.hpp"
#include "priorforge/prior.hpp"
#include "priorforge/sample.hpp"

#include "json.hpp"

namespace priorforge::evalx {

inline constexpr int kReportSchemaVersion = 1;
inline const std::vector<std::string> kMetricColumns{"Clf.Score", "CLIP", "FID-analog",
                                                     "H dist.", "KL div."};

struct EvalOptions {
  int prompts = 5000;           // cycles through the eval set when larger
  std::string positive_class;   // probe class scored as Clf.Score
  sample::SampleConfig sample{};  // k, steps, guidance; seed is the per-prompt base
  bool baselines = true;
  std::vector<double> guidance_sweep{1.0, 2.0, 3.0, 5.0};
  int sweep_prompts = 50;
  colorlab::HistogramLayout layout{};
};

/// One evaluated method: per-prompt embeddings plus decoded-patch histograms.
struct MetricRow {
  std::string name;
  double clf_score = 0.0;
  double clip = 0.0;
  double frechet = 0.0;
  std::optional<double> hellinger;
  std::optional<double> kl;
  nlohmann::json to_json() const;
};

/// Prompts come from eval_set records. Plain priors are prompted with the
/// record caption; color-conditioned priors get the concept word alone plus
/// the record's own patch as color exemplar. Fréchet distances compare each
/// row's embeddings against GaussianStats of `reference`.
///
/// Rows: ground_truth, ours, and for color priors ours_zero_cond plus the
/// wct_rgb / meanstd transfer baselines; baseline_prior when given.
nlohmann::json eval_report(const prior::PriorParams& model, const synth::EmbeddingSpace& space,
                           std::span<const synth::DatasetRecord> eval_set,
                           std::span<const synth::DatasetRecord> reference,
                           const LinearProbe& probe, const EvalOptions& options,
                           const prior::PriorParams* baseline_prior = nullptr);

/// Table rows as CSV in metric-column order; empty cells for absent metrics.
std::string report_csv(const nlohmann::json& report);

}  // namespace priorforge::evalx
