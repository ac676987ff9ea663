#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "priorforge/colorlab.hpp"
#include "priorforge/prior.hpp"
#include "priorforge/synthspace.hpp"

#include "json.hpp"

namespace priorforge::sample {

struct SampleConfig {
  int steps = 100;
  double guidance_scale = 3.0;
  int k = 10;
  std::uint64_t seed = 0;
  bool renormalize_output = true;

  void validate() const;
};

/// One prior's contribution to a trajectory.
struct PriorTerm {
  const prior::PriorParams* params = nullptr;
  const synth::TextEmbedding* text = nullptr;
  const std::vector<double>* color_token = nullptr;
};

/// Seed of candidate i in best-of-k: candidate 0 uses the base seed, so the
/// candidate set for k is a prefix of the set for k + 1.
std::uint64_t candidate_seed(std::uint64_t base, int index);

/// DDIM trajectory from z_T ~ N(0, I) drawn from `seed`.
synth::ImageEmbedding sample_embedding(const prior::PriorParams& params,
                                       const synth::TextEmbedding& text,
                                       const std::vector<double>* color_token,
                                       const SampleConfig& config);

struct Ranked {
  synth::ImageEmbedding embedding;
  double score = 0.0;
  int index = 0;
  std::vector<double> scores;
};

/// Index of the maximum score; ties go to the lowest index.
int argmax_score(std::span<const double> scores);

/// Draws config.k candidates and keeps the one closest to the pooled text.
Ranked best_of_k(const prior::PriorParams& params, const synth::TextEmbedding& text,
                 const std::vector<double>* color_token, const SampleConfig& config);

/// Shared trajectory whose x0 estimate is the weighted mean of each prior's
/// guided estimate. Weights must be nonnegative and sum to 1.
synth::ImageEmbedding compose_sample(std::span<const PriorTerm> terms,
                                     std::span<const double> weights,
                                     const SampleConfig& config);

/// Best-of-k over composed trajectories, ranked against the first term's text.
Ranked compose_best_of_k(std::span<const PriorTerm> terms, std::span<const double> weights,
                         const SampleConfig& config);

struct Generation {
  RasterPatch patch;
  synth::ImageEmbedding embedding;
  synth::Decoded decoded;
  Ranked ranked;
  std::optional<colorlab::ColorHistogram> target_hist;
  nlohmann::json report;
};

/// Prompt -> embedding -> decoded patch. color_patch requires a
/// color-conditioned model.
Generation generate(const std::vector<int>& prompt_tokens, const RasterPatch* color_patch,
                    const prior::PriorParams& params, const synth::EmbeddingSpace& space,
                    const SampleConfig& config,
                    const colorlab::HistogramLayout& layout = {});

/// Composed variant of generate: every prior receives the same prompt; the
/// color exemplar goes to color-conditioned priors only.
Generation generate_composed(const std::vector<int>& prompt_tokens,
                             const RasterPatch* color_patch,
                             std::span<const prior::PriorParams* const> priors,
                             std::span<const double> weights,
                             const synth::EmbeddingSpace& space, const SampleConfig& config,
                             const colorlab::HistogramLayout& layout = {});

}  // namespace priorforge::sample
