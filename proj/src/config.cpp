#include "priorforge/config.hpp"

#include <fstream>
#include <set>

namespace priorforge::config {

using nlohmann::json;

namespace {

// Reads known keys from one JSON object and rejects the rest.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw InputError("config section '" + path_ + "' must be an object");
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->get<T>();
    } catch (const json::exception& e) {
      throw InputError("config key '" + path_ + "." + key + "': " + e.what());
    }
  }

  const json* sub(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string child(const std::string& key) const { return path_ + "." + key; }

  void finish() const {
    for (const auto& item : j_.items())
      if (!seen_.count(item.key()))
        throw InputError("unknown config key '" + path_ + "." + item.key() + "'");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_layout(const json& j, const std::string& path, colorlab::HistogramLayout& l) {
  Section s(j, path);
  s.get("nL", l.nL);
  s.get("nA", l.nA);
  s.get("nB", l.nB);
  s.finish();
  if (l.nL < 1 || l.nA < 1 || l.nB < 1) throw InputError("histogram bins must be >= 1");
}

void read_space(const json& j, const std::string& path, synth::SpaceConfig& c) {
  Section s(j, path);
  s.get("dim", c.dim);
  s.get("concepts", c.concepts);
  s.get("noise_sigma", c.noise_sigma);
  s.get("seed", c.seed);
  s.get("max_text_tokens", c.max_text_tokens);
  s.get("patch_size", c.patch_size);
  s.finish();
}

void read_model(const json& j, const std::string& path, prior::PriorConfig& c) {
  Section s(j, path);
  s.get("width", c.width);
  s.get("depth", c.depth);
  s.get("heads", c.heads);
  s.get("mlp_ratio", c.mlp_ratio);
  s.get("max_text_tokens", c.max_text_tokens);
  s.get("color_conditioned", c.color_conditioned);
  std::string kind = diffusion::schedule_name(c.schedule);
  s.get("schedule", kind);
  c.schedule = diffusion::parse_schedule(kind);
  s.get("timesteps", c.timesteps);
  s.finish();
  c.validate();
}

}  // namespace

json to_json(const colorlab::HistogramLayout& c) {
  return {{"nL", c.nL}, {"nA", c.nA}, {"nB", c.nB}};
}

json to_json(const synth::SpaceConfig& c) {
  return {{"dim", c.dim},
          {"concepts", c.concepts},
          {"noise_sigma", c.noise_sigma},
          {"seed", c.seed},
          {"max_text_tokens", c.max_text_tokens},
          {"patch_size", c.patch_size}};
}

json to_json(const DatasetConfig& c) {
  json mix = json::object();
  for (int d = 0; d < synth::kDomainCount; ++d)
    mix[synth::domain_name(static_cast<synth::Domain>(d))] = c.spec.mix[d];
  return {{"n", c.spec.n},
          {"mix", mix},
          {"seed", c.spec.seed},
          {"color_word_prob", c.spec.color_word_prob},
          {"hist_bins", to_json(c.spec.hist_layout)},
          {"preview_count", c.preview_count},
          {"with_histograms", c.with_histograms}};
}

json to_json(const prior::PriorConfig& c) {
  return {{"width", c.width},
          {"depth", c.depth},
          {"heads", c.heads},
          {"mlp_ratio", c.mlp_ratio},
          {"max_text_tokens", c.max_text_tokens},
          {"color_conditioned", c.color_conditioned},
          {"schedule", diffusion::schedule_name(c.schedule)},
          {"timesteps", c.timesteps}};
}

json to_json(const train::TrainConfig& c) {
  return {{"batch_size", c.batch_size},
          {"steps", c.steps},
          {"seed", c.seed},
          {"lr", c.optimizer.lr},
          {"beta1", c.optimizer.beta1},
          {"beta2", c.optimizer.beta2},
          {"adam_eps", c.optimizer.eps},
          {"weight_decay", c.optimizer.weight_decay},
          {"warmup_steps", c.optimizer.warmup_steps},
          {"grad_clip", c.optimizer.grad_clip},
          {"final_lr_fraction", c.final_lr_fraction},
          {"p_drop_both", c.dropout.p_drop_both},
          {"p_drop_color_only", c.dropout.p_drop_color_only},
          {"domain", c.domain_filter ? synth::domain_name(*c.domain_filter) : "all"},
          {"log_every", c.log_every}};
}

json to_json(const sample::SampleConfig& c) {
  return {{"steps", c.steps},
          {"guidance_scale", c.guidance_scale},
          {"k", c.k},
          {"seed", c.seed},
          {"renormalize_output", c.renormalize_output}};
}

json to_json(const EvalConfig& c) {
  return {{"prompts", c.prompts},
          {"k", c.k},
          {"positive_class", c.positive_class},
          {"baselines", c.baselines},
          {"guidance_sweep", c.guidance_sweep},
          {"sweep_prompts", c.sweep_prompts},
          {"holdout_fraction", c.holdout_fraction}};
}

json to_json(const RunConfig& c) {
  return {{"space", to_json(c.space)},     {"dataset", to_json(c.dataset)},
          {"model", to_json(c.model)},     {"train", to_json(c.train)},
          {"sample", to_json(c.sample)},   {"eval", to_json(c.eval)}};
}

synth::SpaceConfig space_from_json(const json& j) {
  synth::SpaceConfig c;
  read_space(j, "space", c);
  return c;
}

prior::PriorConfig model_from_json(const json& j) {
  prior::PriorConfig c;
  read_model(j, "model", c);
  return c;
}

colorlab::HistogramLayout layout_from_json(const json& j) {
  colorlab::HistogramLayout l;
  read_layout(j, "hist_bins", l);
  return l;
}

RunConfig run_config_from_json(const json& j) {
  RunConfig rc;
  Section root(j, "config");
  if (const json* s = root.sub("space")) read_space(*s, "space", rc.space);
  if (const json* s = root.sub("dataset")) {
    Section ds(*s, "dataset");
    auto& spec = rc.dataset.spec;
    ds.get("n", spec.n);
    if (const json* mix = ds.sub("mix")) {
      Section ms(*mix, "dataset.mix");
      for (int d = 0; d < synth::kDomainCount; ++d)
        ms.get(synth::domain_name(static_cast<synth::Domain>(d)), spec.mix[d]);
      ms.finish();
    }
    ds.get("seed", spec.seed);
    ds.get("color_word_prob", spec.color_word_prob);
    if (const json* hb = ds.sub("hist_bins")) read_layout(*hb, "dataset.hist_bins", spec.hist_layout);
    ds.get("preview_count", rc.dataset.preview_count);
    ds.get("with_histograms", rc.dataset.with_histograms);
    ds.finish();
  }
  if (const json* s = root.sub("model")) read_model(*s, "model", rc.model);
  if (const json* s = root.sub("train")) {
    Section ts(*s, "train");
    auto& t = rc.train;
    ts.get("batch_size", t.batch_size);
    ts.get("steps", t.steps);
    ts.get("seed", t.seed);
    ts.get("lr", t.optimizer.lr);
    ts.get("beta1", t.optimizer.beta1);
    ts.get("beta2", t.optimizer.beta2);
    ts.get("adam_eps", t.optimizer.eps);
    ts.get("weight_decay", t.optimizer.weight_decay);
    ts.get("warmup_steps", t.optimizer.warmup_steps);
    ts.get("grad_clip", t.optimizer.grad_clip);
    ts.get("final_lr_fraction", t.final_lr_fraction);
    ts.get("p_drop_both", t.dropout.p_drop_both);
    ts.get("p_drop_color_only", t.dropout.p_drop_color_only);
    std::string domain = "all";
    ts.get("domain", domain);
    t.domain_filter = domain == "all" ? std::nullopt
                                      : std::optional<synth::Domain>(synth::parse_domain(domain));
    ts.get("log_every", t.log_every);
    ts.finish();
    t.dropout.validate();
  }
  if (const json* s = root.sub("sample")) {
    Section ss(*s, "sample");
    ss.get("steps", rc.sample.steps);
    ss.get("guidance_scale", rc.sample.guidance_scale);
    ss.get("k", rc.sample.k);
    ss.get("seed", rc.sample.seed);
    ss.get("renormalize_output", rc.sample.renormalize_output);
    ss.finish();
    rc.sample.validate();
  }
  if (const json* s = root.sub("eval")) {
    Section es(*s, "eval");
    es.get("prompts", rc.eval.prompts);
    es.get("k", rc.eval.k);
    es.get("positive_class", rc.eval.positive_class);
    es.get("baselines", rc.eval.baselines);
    es.get("guidance_sweep", rc.eval.guidance_sweep);
    es.get("sweep_prompts", rc.eval.sweep_prompts);
    es.get("holdout_fraction", rc.eval.holdout_fraction);
    es.finish();
    if (rc.eval.prompts < 1 || rc.eval.k < 1) throw InputError("eval prompts and k must be >= 1");
    if (!(rc.eval.holdout_fraction > 0.0 && rc.eval.holdout_fraction < 1.0))
      throw InputError("eval.holdout_fraction must lie in (0,1)");
  }
  root.finish();
  return rc;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw InputError("config " + path + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace priorforge::config
