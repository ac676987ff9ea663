#include "priorforge/pipeline.hpp"

#include <cstdio>
#include <filesystem>

#include "priorforge/raster.hpp"
#include "priorforge/report.hpp"

namespace priorforge::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw InputError("cannot create output directory " + dir);
}

std::string prompt_file(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "prompt_%03zu.ppm", i);
  return buf;
}

json generate_all(const std::vector<const prior::PriorParams*>& priors,
                  const std::vector<double>& weights, const SampleRequest& req,
                  const synth::EmbeddingSpace& space, const colorlab::HistogramLayout& layout,
                  const std::string& out_dir) {
  if (req.prompts.empty()) throw InputError("at least one --prompt is required");
  req.sample.validate();
  std::optional<RasterPatch> exemplar;
  if (req.color_image) {
    bool any_color = false;
    for (const auto* p : priors) any_color = any_color || p->config().color_conditioned;
    if (!any_color) throw InputError("--color-image requires a color-conditioned model");
    exemplar = read_ppm(*req.color_image);
  }
  ensure_dir(out_dir);
  json items = json::array();
  for (std::size_t i = 0; i < req.prompts.size(); ++i) {
    const auto tokens = space.vocab().tokenize(req.prompts[i]);
    const auto g = sample::generate_composed(tokens, exemplar ? &*exemplar : nullptr, priors,
                                             weights, space, req.sample, layout);
    const std::string file = prompt_file(i);
    write_ppm((fs::path(out_dir) / file).string(), g.patch);
    json item = g.report;
    item["image"] = file;
    std::vector<float> emb(g.embedding.vec.data(), g.embedding.vec.data() + g.embedding.vec.size());
    item["embedding"] = emb;
    items.push_back(item);
  }
  return items;
}

config::RunConfig model_run_config(const store::Model& m) {
  return config::run_config_from_json(m.run_config());
}

}  // namespace

void restrict_domains(config::RunConfig& rc, const std::vector<synth::Domain>& domains) {
  if (domains.empty()) throw InputError("domain list is empty");
  synth::DomainMix mix{};
  for (auto d : domains) mix[static_cast<int>(d)] = 1.0;
  double total = 0.0;
  for (double v : mix) total += v;
  for (double& v : mix) v /= total;
  rc.dataset.spec.mix = mix;
}

json gen_data(const config::RunConfig& rc, const std::string& out_dir) {
  const synth::EmbeddingSpace space(rc.space);
  const auto records = synth::gen_dataset(space, rc.dataset.spec);
  store::write_dataset(out_dir, records, rc);
  return store::read_json((fs::path(out_dir) / "manifest.json").string()).at("counts");
}

json train_prior(const std::string& data_dir, config::RunConfig rc, const std::string& model_path) {
  const auto ds = store::read_dataset(data_dir);
  rc.space = ds.config.space;
  rc.dataset = ds.config.dataset;
  rc.model.max_text_tokens = rc.space.max_text_tokens;
  if (rc.model.width != rc.space.dim)
    throw InputError("model width must equal the embedding dimension");
  if (rc.model.color_conditioned && !ds.has_histograms)
    throw InputError("--color-cond needs a dataset written with histograms");
  auto [train_split, held] = store::split_holdout(ds.records, rc.eval.holdout_fraction);
  const auto result = train::train_prior(train_split, rc.model, rc.train);
  json report = result.report;
  report["run_config"] = config::to_json(rc);
  report["holdout_records"] = held.size();
  const json meta = {
      {"domain_filter", rc.train.domain_filter ? synth::domain_name(*rc.train.domain_filter) : "all"},
      {"final_loss", result.final_loss},
      {"records", report.at("records")},
      {"dataset_fingerprint", report.at("dataset_fingerprint")}};
  store::write_model(model_path, result.params, rc, meta);
  store::write_json(model_path + ".report.json", report);
  return report;
}

json sample(const std::string& model_path, const SampleRequest& req, const std::string& out_dir) {
  const auto model = store::read_model(model_path);
  config::RunConfig rc = model_run_config(model);
  rc.sample = req.sample;
  const synth::EmbeddingSpace space(rc.space);
  const json items = generate_all({&model.params}, {1.0}, req, space,
                                  rc.dataset.spec.hist_layout, out_dir);
  json report = {{"command", "sample"},
                 {"config", config::to_json(rc)},
                 {"color_image", req.color_image ? json(fs::path(*req.color_image).filename().string())
                                                 : json(nullptr)},
                 {"samples", items}};
  store::write_json((fs::path(out_dir) / "report.json").string(), report);
  return report;
}

json compose(const std::vector<std::string>& model_paths, const std::vector<double>& weights,
             const SampleRequest& req, const std::string& out_dir) {
  if (model_paths.size() < 2) throw InputError("compose needs at least two models");
  if (model_paths.size() != weights.size()) throw InputError("one weight per model required");
  std::vector<store::Model> models;
  for (const auto& p : model_paths) models.push_back(store::read_model(p));
  config::RunConfig rc = model_run_config(models[0]);
  for (const auto& m : models) {
    const auto other = model_run_config(m);
    if (!(other.space == rc.space)) throw InputError("composed models use different spaces");
    if (other.model.width != rc.model.width) throw InputError("composed models differ in width");
  }
  rc.sample = req.sample;
  std::vector<const prior::PriorParams*> priors;
  json configs = json::array();
  for (const auto& m : models) {
    priors.push_back(&m.params);
    configs.push_back(m.header.at("model"));
  }
  const synth::EmbeddingSpace space(rc.space);
  const json items = generate_all(priors, weights, req, space, rc.dataset.spec.hist_layout, out_dir);
  json report = {{"command", "compose"},
                 {"config", config::to_json(rc)},
                 {"weights", weights},
                 {"models", configs},
                 {"color_image", req.color_image ? json(fs::path(*req.color_image).filename().string())
                                                 : json(nullptr)},
                 {"samples", items}};
  store::write_json((fs::path(out_dir) / "report.json").string(), report);
  return report;
}

json eval(const std::string& model_path, const std::string& data_dir, const EvalRequest& req,
          const std::string& out_dir) {
  const auto model = store::read_model(model_path);
  config::RunConfig rc = model_run_config(model);
  const auto ds = store::read_dataset(data_dir);
  if (!(ds.config.space == rc.space)) throw InputError("dataset and model use different spaces");
  rc.eval = req.eval;
  rc.sample = req.sample;

  auto [train_split, held] = store::split_holdout(ds.records, rc.eval.holdout_fraction);
  const auto filter = rc.train.domain_filter;
  std::vector<synth::DatasetRecord> eval_set;
  for (auto& r : held)
    if (!filter || r.domain == *filter) eval_set.push_back(r);
  if (eval_set.empty()) throw InputError("evaluation split is empty");

  evalx::EvalOptions opt;
  opt.prompts = rc.eval.prompts;
  opt.positive_class = !rc.eval.positive_class.empty() ? rc.eval.positive_class
                       : filter                        ? synth::domain_name(*filter)
                                                       : "photo";
  opt.sample = rc.sample;
  opt.sample.k = rc.eval.k;
  opt.baselines = rc.eval.baselines;
  opt.guidance_sweep = rc.eval.guidance_sweep;
  opt.sweep_prompts = rc.eval.sweep_prompts;
  opt.layout = rc.dataset.spec.hist_layout;

  std::vector<synth::DatasetRecord> reference;
  for (const auto& r : ds.records)
    if (!filter || r.domain == *filter) reference.push_back(r);

  const auto probe = evalx::train_domain_probe(train_split);
  std::optional<store::Model> baseline;
  if (req.baseline_model) {
    baseline = store::read_model(*req.baseline_model);
    if (!(model_run_config(*baseline).space == rc.space))
      throw InputError("baseline model uses a different space");
  }
  json report = evalx::eval_report(model.params, synth::EmbeddingSpace(rc.space), eval_set,
                                   reference, probe, opt,
                                   baseline ? &baseline->params : nullptr);
  report["config"] = config::to_json(rc);
  report["model"] = model.header.at("meta");
  report["probe"] = {{"classes", probe.class_names},
                     {"iterations", probe.iterations},
                     {"final_loss", probe.final_loss}};
  ensure_dir(out_dir);
  store::write_json((fs::path(out_dir) / "eval_report.json").string(), report);
  io::write_text_atomic((fs::path(out_dir) / "eval_report.csv").string(),
                        evalx::report_csv(report));
  return report;
}

}  // namespace priorforge::pipeline
