#include <chrono>
#include <cstring>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "priorforge/pipeline.hpp"
#include "priorforge/report.hpp"

using namespace priorforge;
using nlohmann::json;

namespace {

// Accepts a plain RunConfig document, any artifact JSON that embeds one
// ("config" or "run_config"), or a model file.
config::RunConfig load_config(const std::string& path) {
  const auto bytes = io::read_file(path);
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), "PRFM", 4) == 0)
    return config::run_config_from_json(store::decode_model(bytes).run_config());
  json j;
  try {
    j = json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw InputError("config " + path + " is not valid JSON: " + e.what());
  }
  if (j.is_object() && j.contains("run_config")) return config::run_config_from_json(j["run_config"]);
  if (j.is_object() && j.contains("config") && (j.contains("format") || j.contains("command") ||
                                                j.contains("schema_version")))
    return config::run_config_from_json(j["config"]);
  return config::run_config_from_json(j);
}

std::vector<synth::Domain> parse_domains(const std::string& list) {
  std::vector<synth::Domain> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(synth::parse_domain(item));
  return out;
}

struct SampleFlags {
  std::vector<std::string> prompts;
  std::string color_image;
  std::optional<int> k, steps;
  std::optional<double> guidance;
  std::optional<std::uint64_t> seed;

  void add(CLI::App* cmd) {
    cmd->add_option("--prompt", prompts, "Prompt text, e.g. \"red berry\" (repeatable)")->required();
    cmd->add_option("--color-image", color_image, "PPM color exemplar");
    cmd->add_option("--k", k, "Candidates per prompt (default 10)");
    cmd->add_option("--steps", steps, "DDIM steps (default 100)");
    cmd->add_option("--guidance", guidance, "Guidance scale (default 3)");
    cmd->add_option("--seed", seed, "Base seed");
  }

  pipeline::SampleRequest request(sample::SampleConfig base) const {
    if (k) base.k = *k;
    if (steps) base.steps = *steps;
    if (guidance) base.guidance_scale = *guidance;
    if (seed) base.seed = *seed;
    pipeline::SampleRequest req;
    req.prompts = prompts;
    if (!color_image.empty()) req.color_image = color_image;
    req.sample = base;
    return req;
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"priorforge: toy domain-specific diffusion priors"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "RunConfig JSON, artifact JSON or model file");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  std::string gen_out, gen_domains;
  std::optional<std::size_t> gen_n;
  std::optional<std::uint64_t> gen_seed, space_seed;
  std::optional<int> previews;
  bool no_hist = false;
  gen->add_option("--out", gen_out, "Dataset directory")->required();
  gen->add_option("--n", gen_n, "Record count");
  gen->add_option("--seed", gen_seed, "Dataset seed");
  gen->add_option("--space-seed", space_seed, "Embedding-space seed");
  gen->add_option("--domains", gen_domains, "Comma list of domains to generate");
  gen->add_option("--previews", previews, "PPM previews to write");
  gen->add_flag("--no-histograms", no_hist, "Skip LAB histograms");

  // train-prior
  auto* tr = app.add_subcommand("train-prior", "Train a diffusion prior");
  std::string tr_data, tr_out, tr_domain;
  bool color_cond = false;
  std::optional<int> tr_steps, tr_batch;
  std::optional<std::uint64_t> tr_seed;
  std::optional<double> tr_lr;
  tr->add_option("--data", tr_data, "Dataset directory")->required();
  tr->add_option("--out", tr_out, "Model file")->required();
  tr->add_option("--domain", tr_domain, "texture|vector|isolated|photo|all");
  tr->add_flag("--color-cond", color_cond, "Condition on a color token");
  tr->add_option("--steps", tr_steps, "Optimizer steps");
  tr->add_option("--batch", tr_batch, "Batch size");
  tr->add_option("--seed", tr_seed, "Training seed");
  tr->add_option("--lr", tr_lr, "Peak learning rate");

  // sample
  auto* sa = app.add_subcommand("sample", "Sample embeddings and decode patches");
  std::string sa_model, sa_out;
  SampleFlags sa_flags;
  sa->add_option("--model", sa_model, "Model file")->required();
  sa->add_option("--out", sa_out, "Output directory")->required();
  sa_flags.add(sa);

  // compose
  auto* co = app.add_subcommand("compose", "Sample from a weighted composition of priors");
  std::vector<std::string> co_models;
  std::vector<double> co_weights;
  std::string co_out;
  SampleFlags co_flags;
  co->add_option("--models", co_models, "Model files")->required()->delimiter(',');
  co->add_option("--weights", co_weights, "Weights summing to 1")->required()->delimiter(',');
  co->add_option("--out", co_out, "Output directory")->required();
  co_flags.add(co);

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a prior against held-out records");
  std::string ev_model, ev_data, ev_out, ev_baseline, ev_class;
  std::optional<int> ev_prompts, ev_k, ev_steps, ev_sweep;
  std::optional<double> ev_guidance;
  std::optional<std::uint64_t> ev_seed;
  bool no_baselines = false;
  ev->add_option("--model", ev_model, "Model file")->required();
  ev->add_option("--data", ev_data, "Dataset directory")->required();
  ev->add_option("--out", ev_out, "Report directory")->required();
  ev->add_option("--baseline-model", ev_baseline, "Extra prior evaluated on the same prompts");
  ev->add_option("--positive-class", ev_class, "Probe class scored as Clf.Score");
  ev->add_option("--prompts", ev_prompts, "Number of eval prompts");
  ev->add_option("--k", ev_k, "Candidates per prompt");
  ev->add_option("--steps", ev_steps, "DDIM steps");
  ev->add_option("--guidance", ev_guidance, "Guidance scale");
  ev->add_option("--seed", ev_seed, "Base seed");
  ev->add_option("--sweep-prompts", ev_sweep, "Prompts per guidance-sweep point");
  ev->add_flag("--no-baselines", no_baselines, "Skip color-transfer baselines");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const auto t0 = std::chrono::steady_clock::now();
  try {
    config::RunConfig rc = config_path.empty() ? config::RunConfig{} : load_config(config_path);

    if (*gen) {
      if (gen_n) rc.dataset.spec.n = *gen_n;
      if (gen_seed) rc.dataset.spec.seed = *gen_seed;
      if (space_seed) rc.space.seed = *space_seed;
      if (previews) rc.dataset.preview_count = *previews;
      if (no_hist) rc.dataset.with_histograms = false;
      if (!gen_domains.empty()) pipeline::restrict_domains(rc, parse_domains(gen_domains));
      const json counts = pipeline::gen_data(rc, gen_out);
      std::cout << counts.dump() << "\n";
    } else if (*tr) {
      if (!tr_domain.empty())
        rc.train.domain_filter = tr_domain == "all"
                                     ? std::nullopt
                                     : std::optional<synth::Domain>(synth::parse_domain(tr_domain));
      if (color_cond) rc.model.color_conditioned = true;
      if (tr_steps) rc.train.steps = *tr_steps;
      if (tr_batch) rc.train.batch_size = *tr_batch;
      if (tr_seed) rc.train.seed = *tr_seed;
      if (tr_lr) rc.train.optimizer.lr = *tr_lr;
      const json report = pipeline::train_prior(tr_data, rc, tr_out);
      std::cout << "final_loss " << report.at("final_loss").get<double>() << "\n";
    } else if (*sa) {
      const json report = pipeline::sample(sa_model, sa_flags.request(rc.sample), sa_out);
      for (const auto& s : report.at("samples"))
        std::cout << s.at("image").get<std::string>() << " score " << s.at("score").get<double>()
                  << "\n";
    } else if (*co) {
      const json report =
          pipeline::compose(co_models, co_weights, co_flags.request(rc.sample), co_out);
      for (const auto& s : report.at("samples"))
        std::cout << s.at("image").get<std::string>() << " score " << s.at("score").get<double>()
                  << "\n";
    } else if (*ev) {
      pipeline::EvalRequest req;
      req.eval = rc.eval;
      req.sample = rc.sample;
      if (ev_prompts) req.eval.prompts = *ev_prompts;
      if (ev_k) req.eval.k = *ev_k;
      if (ev_sweep) req.eval.sweep_prompts = *ev_sweep;
      if (!ev_class.empty()) req.eval.positive_class = ev_class;
      if (no_baselines) req.eval.baselines = false;
      if (ev_steps) req.sample.steps = *ev_steps;
      if (ev_guidance) req.sample.guidance_scale = *ev_guidance;
      if (ev_seed) req.sample.seed = *ev_seed;
      if (!ev_baseline.empty()) req.baseline_model = ev_baseline;
      const json report = pipeline::eval(ev_model, ev_data, req, ev_out);
      std::cout << evalx::report_csv(report);
    }
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  }
  std::cerr << "elapsed " << seconds_since(t0) << " s\n";
  return 0;
}
