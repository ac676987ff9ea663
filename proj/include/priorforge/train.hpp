#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "priorforge/diffusion.hpp"
#include "priorforge/evalx.hpp"
#include "priorforge/prior.hpp"
#include "priorforge/synthspace.hpp"

#include "json.hpp"

namespace priorforge::train {

/// Conditioning dropout. Drop-both is decided first; color-only dropout
/// applies to the remaining draws. Text is never dropped while color is kept.
struct DropoutPlan {
  double p_drop_both = 0.1;
  double p_drop_color_only = 0.5;

  static DropoutPlan none() { return {0.0, 0.0}; }
  void validate() const;
};

struct DropMask {
  bool drop_text = false;
  bool drop_color = false;
  bool operator==(const DropMask&) const = default;
};

/// Always consumes two uniforms so mask streams stay aligned.
DropMask dropout_mask(Rng& rng, bool has_color, const DropoutPlan& plan = {});

struct AdamWConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  int warmup_steps = 100;
  double grad_clip = 1.0;  // global L2 norm; <= 0 disables
};

class AdamW {
 public:
  AdamW(std::size_t n, const AdamWConfig& cfg) : cfg_(cfg), m_(n, 0.0f), v_(n, 0.0f) {}

  /// lr_scale multiplies the configured learning rate for this update.
  void step(prior::PriorParams& params, prior::FloatBuffer& grad, double lr_scale);
  long steps() const { return t_; }
  const AdamWConfig& config() const { return cfg_; }

 private:
  AdamWConfig cfg_;
  prior::FloatBuffer m_, v_;
  long t_ = 0;
};

struct TrainConfig {
  int batch_size = 128;
  int steps = 3000;
  std::uint64_t seed = 11;
  AdamWConfig optimizer{};
  /// Final learning rate as a fraction of the peak (cosine decay after
  /// warmup); 1 keeps the rate constant.
  double final_lr_fraction = 0.1;
  DropoutPlan dropout{};
  std::optional<synth::Domain> domain_filter;
  int log_every = 50;
};

/// Linear warmup then cosine decay to final_lr_fraction.
double lr_scale_at(const TrainConfig& cfg, long step);

/// One optimizer update on a batch; returns the pre-update batch loss.
double training_step(prior::PriorParams& params, AdamW& opt,
                     std::span<const synth::DatasetRecord* const> batch,
                     const diffusion::NoiseSchedule& schedule, const DropoutPlan& plan,
                     Rng& rng, double lr_scale = 1.0);

struct TrainResult {
  prior::PriorParams params;
  nlohmann::json report;
  double final_loss = 0.0;
};

/// Trains a prior from scratch. Records are put in canonical id order before
/// seed-driven shuffling, so the result does not depend on input order.
TrainResult train_prior(const std::vector<synth::DatasetRecord>& dataset,
                        const prior::PriorConfig& model_config,
                        const TrainConfig& config);

std::vector<synth::DatasetRecord> filter_by_domain(
    const std::vector<synth::DatasetRecord>& records, synth::Domain domain);

/// Keeps records whose probe probability for positive_class is >= threshold.
std::vector<synth::DatasetRecord> filter_dataset_by_probe(
    const std::vector<synth::DatasetRecord>& records, const evalx::LinearProbe& probe,
    const std::string& positive_class, double threshold);

}  // namespace priorforge::train
