#include "priorforge/report.hpp"

#include <algorithm>
#include <optional>
#include <sstream>

namespace priorforge::evalx {

using nlohmann::json;

namespace {

struct Sampled {
  Vec embedding;
  double relevance = 0.0;
  std::optional<double> hellinger;
  std::optional<double> kl;
  double photo = 0.0;  // probe confidence on "photo" of the re-encoded patch
};

struct PromptCase {
  const synth::DatasetRecord* record = nullptr;
  synth::TextEmbedding text;
  std::vector<double> color_token;
  std::uint64_t seed = 0;
};

class Evaluator {
 public:
  Evaluator(const synth::EmbeddingSpace& space, const LinearProbe& probe,
            const EvalOptions& options)
      : space_(space), probe_(probe), options_(options),
        photo_(std::find(probe.class_names.begin(), probe.class_names.end(), "photo") !=
               probe.class_names.end()) {}

  PromptCase prompt(const synth::DatasetRecord& r, std::uint64_t seed, bool color,
                    int width) const {
    PromptCase p;
    p.record = &r;
    p.seed = seed;
    if (color) {
      p.text = space_.encode_text({space_.vocab().concept_token(r.concept_id)});
      p.color_token = colorlab::make_color_token(exemplar_hist(r), width);
    } else {
      p.text = space_.encode_text(r.caption);
    }
    return p;
  }

  colorlab::ColorHistogram exemplar_hist(const synth::DatasetRecord& r) const {
    return colorlab::lab_histogram(r.patch, options_.layout);
  }

  Sampled from_patch(const PromptCase& p, const Vec& embedding, const RasterPatch& patch,
                     bool color_metrics, const RasterPatch* reencode = nullptr,
                     const synth::Decoded* decoded = nullptr) const {
    Sampled s;
    s.embedding = embedding;
    s.relevance = relevance_score(p.text, {embedding});
    if (color_metrics) {
      const auto target = exemplar_hist(*p.record);
      const auto got = colorlab::lab_histogram(patch, options_.layout);
      s.hellinger = colorlab::hellinger(target, got);
      s.kl = colorlab::kl_divergence(got, target);
    }
    if (photo_) {
      Vec v = embedding;
      if (reencode && decoded)
        v = space_.encode_image_exact(*reencode, decoded->concept_id, decoded->domain).vec;
      s.photo = probe_.probabilities(v)[probe_.class_index("photo")];
    }
    return s;
  }

  Sampled generated(const prior::PriorParams& prior, const PromptCase& p, bool with_color,
                    double guidance, bool color_metrics, synth::Decoded* keep = nullptr) const {
    sample::SampleConfig cfg = options_.sample;
    cfg.seed = p.seed;
    cfg.guidance_scale = guidance;
    const auto ranked =
        sample::best_of_k(prior, p.text, with_color ? &p.color_token : nullptr, cfg);
    synth::Decoded d = space_.decode(ranked.embedding);
    Sampled s = from_patch(p, ranked.embedding.vec, d.patch, color_metrics, &d.patch, &d);
    if (keep) *keep = std::move(d);
    return s;
  }

  Sampled transferred(const PromptCase& p, const synth::Decoded& plain, bool wct) const {
    const RasterPatch out = wct ? wct_rgb_transfer(plain.patch, p.record->patch)
                                : meanstd_transfer(plain.patch, p.record->patch);
    const Vec emb = space_.encode_image_exact(out, plain.concept_id, plain.domain).vec;
    return from_patch(p, emb, out, true, &out, &plain);
  }

  MetricRow reduce(const std::string& name, const std::vector<Sampled>& s,
                   const GaussianStats& reference) const {
    MetricRow row;
    row.name = name;
    std::vector<Vec> embs;
    embs.reserve(s.size());
    double h = 0.0, kl = 0.0;
    for (const auto& x : s) {
      embs.push_back(x.embedding);
      row.clip += x.relevance;
      if (x.hellinger) h += *x.hellinger;
      if (x.kl) kl += *x.kl;
    }
    const double n = static_cast<double>(s.size());
    row.clip /= n;
    row.clf_score = domain_confidence(probe_, embs, options_.positive_class);
    row.frechet = frechet_distance(GaussianStats::from_samples(embs), reference);
    if (s.front().hellinger) {
      row.hellinger = h / n;
      row.kl = kl / n;
    }
    return row;
  }

  double mean_photo(const std::vector<Sampled>& s) const {
    double acc = 0.0;
    for (const auto& x : s) acc += x.photo;
    return acc / static_cast<double>(s.size());
  }

  bool has_photo() const { return photo_; }

 private:
  const synth::EmbeddingSpace& space_;
  const LinearProbe& probe_;
  const EvalOptions& options_;
  bool photo_;
};

json metric(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

json MetricRow::to_json() const {
  return {{"method", name},        {"Clf.Score", clf_score}, {"CLIP", clip},
          {"FID-analog", frechet}, {"H dist.", metric(hellinger)}, {"KL div.", metric(kl)}};
}

json eval_report(const prior::PriorParams& model, const synth::EmbeddingSpace& space,
                 std::span<const synth::DatasetRecord> eval_set,
                 std::span<const synth::DatasetRecord> reference, const LinearProbe& probe,
                 const EvalOptions& options, const prior::PriorParams* baseline_prior) {
  if (eval_set.empty()) throw InputError("evaluation set is empty");
  if (reference.size() < 2) throw InputError("reference set needs at least two records");
  if (options.prompts < 2) throw InputError("evaluation needs at least two prompts");
  options.sample.validate();
  probe.class_index(options.positive_class);

  const bool color = model.config().color_conditioned;
  const int width = model.config().width;
  const Evaluator ev(space, probe, options);

  std::vector<Vec> ref_embs;
  ref_embs.reserve(reference.size());
  for (const auto& r : reference) ref_embs.push_back(r.image.vec);
  const GaussianStats ref_stats = GaussianStats::from_samples(ref_embs);

  const auto n = static_cast<std::size_t>(options.prompts);
  std::vector<PromptCase> cases(n);
  for (std::size_t i = 0; i < n; ++i)
    cases[i] = ev.prompt(eval_set[i % eval_set.size()], derive_seed(options.sample.seed, i),
                         color, width);

  std::vector<Sampled> truth(n), ours(n), zero(n), wct(n), meanstd(n), base(n);
  const bool transfer = color && options.baselines;
  parallel_for(n, [&](std::size_t i) {
    const auto& p = cases[i];
    truth[i] = ev.from_patch(p, p.record->image.vec, p.record->patch, color);
    ours[i] = ev.generated(model, p, color, options.sample.guidance_scale, color);
    if (color) {
      synth::Decoded plain;
      zero[i] = ev.generated(model, p, false, options.sample.guidance_scale, true, &plain);
      if (transfer) {
        wct[i] = ev.transferred(p, plain, true);
        meanstd[i] = ev.transferred(p, plain, false);
      }
    }
    if (baseline_prior)
      base[i] = ev.generated(*baseline_prior, p,
                             color && baseline_prior->config().color_conditioned,
                             options.sample.guidance_scale, color);
  });

  json rows = json::array();
  json realism = json::object();
  auto add = [&](const std::string& name, const std::vector<Sampled>& s) {
    rows.push_back(ev.reduce(name, s, ref_stats).to_json());
    if (ev.has_photo()) realism[name] = ev.mean_photo(s);
  };
  add("ground_truth", truth);
  add("ours", ours);
  if (color) add("ours_zero_cond", zero);
  if (transfer) {
    add("wct_rgb", wct);
    add("meanstd", meanstd);
  }
  if (baseline_prior) add("baseline_prior", base);

  json sweep = json::array();
  const std::size_t m = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(0, options.sweep_prompts)));
  if (m >= 2) {
    for (double g : options.guidance_sweep) {
      std::vector<Sampled> s(m);
      parallel_for(m, [&](std::size_t i) { s[i] = ev.generated(model, cases[i], color, g, color); });
      MetricRow row = ev.reduce("ours", s, ref_stats);
      json entry = row.to_json();
      entry.erase("method");
      entry["guidance_scale"] = g;
      sweep.push_back(entry);
    }
  }

  json sample_cfg = {{"steps", options.sample.steps},
                     {"guidance_scale", options.sample.guidance_scale},
                     {"k", options.sample.k},
                     {"seed", options.sample.seed},
                     {"renormalize_output", options.sample.renormalize_output}};
  return {{"schema_version", kReportSchemaVersion},
          {"positive_class", options.positive_class},
          {"color_conditioned", color},
          {"prompts", n},
          {"eval_records", eval_set.size()},
          {"reference_records", reference.size()},
          {"prompt_mode", color ? "concept+exemplar" : "caption"},
          {"sample", sample_cfg},
          {"columns", kMetricColumns},
          {"rows", rows},
          {"photo_confidence", realism},
          {"guidance_sweep", sweep}};
}

std::string report_csv(const json& report) {
  std::ostringstream out;
  out.precision(17);
  out << "method";
  for (const auto& c : kMetricColumns) out << ',' << c;
  out << '\n';
  for (const auto& row : report.at("rows")) {
    out << row.at("method").get<std::string>();
    for (const auto& c : kMetricColumns) {
      out << ',';
      const auto& v = row.at(c);
      if (!v.is_null()) out << v.get<double>();
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace priorforge::evalx
