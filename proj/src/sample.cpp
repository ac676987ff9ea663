#include "priorforge/sample.hpp"

#include <cmath>

#include "priorforge/diffusion.hpp"
#include "priorforge/evalx.hpp"

namespace priorforge::sample {

namespace {

struct Validated {
  int width = 0;
  diffusion::NoiseSchedule schedule;
};

Validated validate_terms(std::span<const PriorTerm> terms, std::span<const double> weights) {
  if (terms.empty()) throw InputError("need at least one prior");
  if (terms.size() != weights.size()) throw InputError("one weight per prior required");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw InputError("composition weights must be nonnegative");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) throw InputError("composition weights must sum to 1");
  for (const auto& t : terms)
    if (!t.params || !t.text) throw InputError("prior term missing params or text");
  const auto& c0 = terms[0].params->config();
  for (const auto& t : terms) {
    const auto& c = t.params->config();
    if (c.width != c0.width) throw InputError("composed priors differ in width");
    if (c.timesteps != c0.timesteps || c.schedule != c0.schedule)
      throw InputError("composed priors differ in noise schedule");
    if (t.color_token && !c.color_conditioned)
      throw InputError("color exemplar given to a prior without color conditioning");
  }
  return {c0.width, diffusion::make_schedule(c0.schedule, c0.timesteps)};
}

synth::ImageEmbedding run_trajectory(std::span<const PriorTerm> terms,
                                     std::span<const double> weights,
                                     const Validated& v, const SampleConfig& config,
                                     std::uint64_t seed) {
  Rng rng(seed);
  Vec z = gaussian_vec(rng, v.width);
  const auto ts = diffusion::ddim_timesteps(v.schedule.T, config.steps);
  Vec z0(v.width);
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const int t = ts[i];
    const int t_prev = i + 1 < ts.size() ? ts[i + 1] : 0;
    bool first = true;
    for (std::size_t j = 0; j < terms.size(); ++j) {
      if (weights[j] == 0.0) continue;
      const Vec pred = prior::cfg_denoise(*terms[j].params, *terms[j].text,
                                          terms[j].color_token, t, z, config.guidance_scale);
      if (first) {
        z0 = weights[j] * pred;
        first = false;
      } else {
        z0 += weights[j] * pred;
      }
    }
    z = diffusion::ddim_step(v.schedule, z, z0, t, t_prev);
    if (!z.allFinite())
      throw NumericError("non-finite sample at timestep " + std::to_string(t_prev));
  }
  if (config.renormalize_output) {
    const double n = z.norm();
    if (!(n > 0)) throw NumericError("sampled embedding has zero norm");
    z /= n;
  }
  return {z};
}

Ranked rank(std::span<const PriorTerm> terms, std::span<const double> weights,
            const SampleConfig& config) {
  config.validate();
  const Validated v = validate_terms(terms, weights);
  Ranked out;
  std::vector<synth::ImageEmbedding> candidates(static_cast<std::size_t>(config.k));
  parallel_for(candidates.size(), [&](std::size_t i) {
    candidates[i] = run_trajectory(terms, weights, v, config,
                                   candidate_seed(config.seed, static_cast<int>(i)));
  });
  for (const auto& c : candidates)
    out.scores.push_back(evalx::cosine(terms[0].text->pooled, c.vec));
  out.index = argmax_score(out.scores);
  out.score = out.scores[out.index];
  out.embedding = std::move(candidates[out.index]);
  return out;
}

nlohmann::json config_json(const SampleConfig& c) {
  return {{"steps", c.steps},
          {"guidance_scale", c.guidance_scale},
          {"k", c.k},
          {"seed", c.seed},
          {"renormalize_output", c.renormalize_output}};
}

}  // namespace

void SampleConfig::validate() const {
  if (steps < 1) throw InputError("sampling steps must be >= 1");
  if (k < 1) throw InputError("k must be >= 1");
  if (!std::isfinite(guidance_scale)) throw InputError("guidance scale must be finite");
}

std::uint64_t candidate_seed(std::uint64_t base, int index) {
  return index == 0 ? base : derive_seed(base, static_cast<std::uint64_t>(index));
}

synth::ImageEmbedding sample_embedding(const prior::PriorParams& params,
                                       const synth::TextEmbedding& text,
                                       const std::vector<double>* color_token,
                                       const SampleConfig& config) {
  config.validate();
  const PriorTerm term{&params, &text, color_token};
  const double w = 1.0;
  const Validated v = validate_terms({&term, 1}, {&w, 1});
  return run_trajectory({&term, 1}, {&w, 1}, v, config, config.seed);
}

int argmax_score(std::span<const double> scores) {
  if (scores.empty()) throw InputError("no scores to rank");
  int best = 0;
  for (int i = 1; i < static_cast<int>(scores.size()); ++i)
    if (scores[i] > scores[best]) best = i;
  return best;
}

Ranked best_of_k(const prior::PriorParams& params, const synth::TextEmbedding& text,
                 const std::vector<double>* color_token, const SampleConfig& config) {
  const PriorTerm term{&params, &text, color_token};
  const double w = 1.0;
  return rank({&term, 1}, {&w, 1}, config);
}

synth::ImageEmbedding compose_sample(std::span<const PriorTerm> terms,
                                     std::span<const double> weights,
                                     const SampleConfig& config) {
  config.validate();
  const Validated v = validate_terms(terms, weights);
  return run_trajectory(terms, weights, v, config, config.seed);
}

Ranked compose_best_of_k(std::span<const PriorTerm> terms, std::span<const double> weights,
                         const SampleConfig& config) {
  return rank(terms, weights, config);
}

Generation generate_composed(const std::vector<int>& prompt_tokens,
                             const RasterPatch* color_patch,
                             std::span<const prior::PriorParams* const> priors,
                             std::span<const double> weights,
                             const synth::EmbeddingSpace& space, const SampleConfig& config,
                             const colorlab::HistogramLayout& layout) {
  if (priors.empty()) throw InputError("need at least one prior");
  const auto text = space.encode_text(prompt_tokens);
  Generation g;
  std::vector<double> token;
  bool any_color = false;
  for (const auto* p : priors) any_color = any_color || p->config().color_conditioned;
  if (color_patch) {
    if (!any_color)
      throw InputError("color exemplar requires a color-conditioned prior");
    g.target_hist = colorlab::lab_histogram(*color_patch, layout);
    token = colorlab::make_color_token(*g.target_hist, priors[0]->config().width);
  }
  std::vector<PriorTerm> terms;
  for (const auto* p : priors)
    terms.push_back({p, &text,
                     color_patch && p->config().color_conditioned ? &token : nullptr});
  g.ranked = rank(terms, weights, config);
  g.embedding = g.ranked.embedding;
  g.decoded = space.decode(g.embedding);
  g.patch = g.decoded.patch;

  nlohmann::json palette = nlohmann::json::array();
  for (const auto& c : g.decoded.palette) palette.push_back({c[0], c[1], c[2]});
  g.report = {
      {"prompt", space.vocab().detokenize(prompt_tokens)},
      {"config", config_json(config)},
      {"weights", std::vector<double>(weights.begin(), weights.end())},
      {"scores", g.ranked.scores},
      {"selected_index", g.ranked.index},
      {"score", g.ranked.score},
      {"decoded",
       {{"concept", space.vocab().name(space.vocab().concept_token(g.decoded.concept_id))},
        {"domain", synth::domain_name(g.decoded.domain)},
        {"palette", palette}}},
  };
  if (g.target_hist) {
    const auto gen_hist = colorlab::lab_histogram(g.patch, layout);
    g.report["hellinger"] = colorlab::hellinger(*g.target_hist, gen_hist);
    g.report["kl_divergence"] = colorlab::kl_divergence(gen_hist, *g.target_hist);
  }
  return g;
}

Generation generate(const std::vector<int>& prompt_tokens, const RasterPatch* color_patch,
                    const prior::PriorParams& params, const synth::EmbeddingSpace& space,
                    const SampleConfig& config, const colorlab::HistogramLayout& layout) {
  if (color_patch && !params.config().color_conditioned)
    throw InputError("color exemplar requires a color-conditioned prior");
  const prior::PriorParams* p = &params;
  const double w = 1.0;
  return generate_composed(prompt_tokens, color_patch, {&p, 1}, {&w, 1}, space, config,
                           layout);
}

}  // namespace priorforge::sample
