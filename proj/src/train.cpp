#include "priorforge/train.hpp"

#include <algorithm>
#include <cstdio>
#include <cmath>
#include <numeric>

#include "priorforge/config.hpp"

namespace priorforge::train {

void DropoutPlan::validate() const {
  auto ok = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!ok(p_drop_both) || !ok(p_drop_color_only))
    throw InputError("dropout probabilities must lie in [0,1]");
}

DropMask dropout_mask(Rng& rng, bool has_color, const DropoutPlan& plan) {
  const double u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  if (u1 < plan.p_drop_both) return {true, true};
  if (!has_color) return {false, true};
  if (u2 < plan.p_drop_color_only) return {false, true};
  return {false, false};
}

void AdamW::step(prior::PriorParams& params, prior::FloatBuffer& grad, double lr_scale) {
  auto& w = params.data();
  if (grad.size() != w.size()) throw InputError("gradient size mismatch");
  if (cfg_.grad_clip > 0) {
    double n2 = 0.0;
    for (float g : grad) n2 += static_cast<double>(g) * g;
    const double n = std::sqrt(n2);
    if (!std::isfinite(n)) throw NumericError("non-finite gradient norm");
    if (n > cfg_.grad_clip) {
      const float s = static_cast<float>(cfg_.grad_clip / n);
      for (float& g : grad) g *= s;
    }
  }
  ++t_;
  const double lr = cfg_.lr * lr_scale;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const float b1 = static_cast<float>(cfg_.beta1);
  const float b2 = static_cast<float>(cfg_.beta2);
  const float step = static_cast<float>(lr / bc1);
  const float inv_bc2 = static_cast<float>(1.0 / bc2);
  const float eps = static_cast<float>(cfg_.eps);
  // Decay only weight matrices; gains, biases and embeddings are exempt.
  for (const auto& t : params.layout().tensors) {
    const bool decay = t.name.ends_with("_w");
    const float wd = decay ? static_cast<float>(lr * cfg_.weight_decay) : 0.0f;
    for (std::size_t i = t.offset; i < t.offset + t.size(); ++i) {
      m_[i] = b1 * m_[i] + (1.0f - b1) * grad[i];
      v_[i] = b2 * v_[i] + (1.0f - b2) * grad[i] * grad[i];
      w[i] -= wd * w[i];
      w[i] -= step * m_[i] / (std::sqrt(v_[i] * inv_bc2) + eps);
    }
  }
}

double lr_scale_at(const TrainConfig& cfg, long step) {
  const int warmup = cfg.optimizer.warmup_steps;
  if (step < warmup) return static_cast<double>(step + 1) / warmup;
  const double span = std::max(1, cfg.steps - warmup);
  const double progress = std::clamp((step - warmup) / span, 0.0, 1.0);
  const double f = cfg.final_lr_fraction;
  return f + (1.0 - f) * 0.5 * (1.0 + std::cos(3.141592653589793 * progress));
}

double training_step(prior::PriorParams& params, AdamW& opt,
                     std::span<const synth::DatasetRecord* const> batch,
                     const diffusion::NoiseSchedule& schedule, const DropoutPlan& plan,
                     Rng& rng, double lr_scale) {
  if (batch.empty()) throw InputError("training batch is empty");
  const auto& cfg = params.config();
  if (schedule.T != cfg.timesteps) throw InputError("schedule T does not match the model");
  const int d = cfg.width;
  std::vector<prior::Sequence> seqs;
  std::vector<Vec> targets;
  std::vector<std::vector<double>> color_tokens(batch.size());
  seqs.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& r = *batch[i];
    if (r.image.vec.size() != d) throw InputError("record embedding width mismatch");
    const int t = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(schedule.T));
    const Vec eps = gaussian_vec(rng, d);
    const Vec z_t = diffusion::forward_diffuse(schedule, r.image.vec, t, eps);
    const DropMask mask = dropout_mask(rng, cfg.color_conditioned, plan);
    prior::Conditioning cond{&r.text, nullptr, mask.drop_text, mask.drop_color};
    if (cfg.color_conditioned && !mask.drop_color) {
      if (r.lab_hist.values.empty())
        throw InputError("color-conditioned training needs LAB histograms");
      color_tokens[i] = colorlab::make_color_token(r.lab_hist, d);
      cond.color_token = &color_tokens[i];
    }
    seqs.push_back(prior::build_sequence(params, cond, t, z_t));
    targets.push_back(r.image.vec);
  }
  prior::FloatBuffer grad(params.count(), 0.0f);
  double loss = 0.0;
  try {
    loss = prior::loss_and_grad(params, seqs, targets, grad);
  } catch (const NumericError& e) {
    throw NumericError(std::string(e.what()) + " at optimizer step " +
                       std::to_string(opt.steps()) + " (batch of " +
                       std::to_string(batch.size()) + ")");
  }
  opt.step(params, grad, lr_scale);
  return loss;
}

std::vector<synth::DatasetRecord> filter_by_domain(
    const std::vector<synth::DatasetRecord>& records, synth::Domain domain) {
  std::vector<synth::DatasetRecord> out;
  std::copy_if(records.begin(), records.end(), std::back_inserter(out),
               [domain](const auto& r) { return r.domain == domain; });
  return out;
}

std::vector<synth::DatasetRecord> filter_dataset_by_probe(
    const std::vector<synth::DatasetRecord>& records, const evalx::LinearProbe& probe,
    const std::string& positive_class, double threshold) {
  const int k = probe.class_index(positive_class);
  std::vector<synth::DatasetRecord> out;
  for (const auto& r : records)
    if (probe.probabilities(r.image.vec)[k] >= threshold) out.push_back(r);
  return out;
}

TrainResult train_prior(const std::vector<synth::DatasetRecord>& dataset,
                        const prior::PriorConfig& model_config,
                        const TrainConfig& config) {
  model_config.validate();
  config.dropout.validate();
  if (config.batch_size < 1 || config.steps < 0 || config.log_every < 1)
    throw InputError("batch_size and log_every must be positive, steps >= 0");

  std::vector<const synth::DatasetRecord*> pool;
  for (const auto& r : dataset)
    if (!config.domain_filter || r.domain == *config.domain_filter) pool.push_back(&r);
  if (pool.empty()) throw InputError("training set is empty after filtering");
  std::stable_sort(pool.begin(), pool.end(), [](auto* a, auto* b) { return a->id < b->id; });

  const auto schedule = diffusion::make_schedule(model_config.schedule, model_config.timesteps);
  TrainResult res{prior::PriorParams::initialize(model_config, derive_seed(config.seed, 0xA11CE)),
                  {}, 0.0};
  AdamW opt(res.params.count(), config.optimizer);
  Rng rng(config.seed);

  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  std::vector<const synth::DatasetRecord*> batch;
  nlohmann::json curve = nlohmann::json::array();
  double window = 0.0;
  int window_n = 0;
  double last_window = 0.0;
  for (int step = 0; step < config.steps; ++step) {
    batch.clear();
    while (static_cast<int>(batch.size()) < config.batch_size) {
      if (cursor == order.size()) {
        for (std::size_t i = order.size(); i > 1; --i)
          std::swap(order[i - 1], order[rng() % i]);
        cursor = 0;
      }
      batch.push_back(pool[order[cursor++]]);
    }
    const double loss = training_step(res.params, opt, batch, schedule, config.dropout, rng,
                                      lr_scale_at(config, step));
    window += loss;
    ++window_n;
    if (window_n == config.log_every || step + 1 == config.steps) {
      last_window = window / window_n;
      curve.push_back({{"step", step + 1}, {"loss", last_window}});
      window = 0.0;
      window_n = 0;
    }
  }
  if (!res.params.all_finite()) throw NumericError("parameters became non-finite");

  // Fingerprint covers the filtered set.
  char fp[17];
  {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto* r : pool) {
      h = fnv1a(&r->id, sizeof(r->id), h);
      h = fnv1a(r->image.vec.data(), sizeof(double) * r->image.vec.size(), h);
    }
    std::snprintf(fp, sizeof(fp), "%016llx", static_cast<unsigned long long>(h));
  }
  res.final_loss = last_window;
  res.report = {
      {"train", config::to_json(config)},
      {"model", config::to_json(model_config)},
      {"records", pool.size()},
      {"dataset_fingerprint", fp},
      {"domain_filter",
       config.domain_filter ? synth::domain_name(*config.domain_filter) : "all"},
      {"loss_curve", curve},
      {"final_loss", res.final_loss},
      {"parameter_count", res.params.count()},
  };
  return res;
}

}  // namespace priorforge::train
