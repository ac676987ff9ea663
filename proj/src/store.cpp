#include "priorforge/store.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "priorforge/raster.hpp"

namespace priorforge::store {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint32_t kModelVersion = 1;

io::Tensor rows_tensor(const std::vector<synth::DatasetRecord>& records,
                       const Vec& (*pick)(const synth::DatasetRecord&), int d) {
  io::Tensor t{{records.size(), static_cast<std::uint64_t>(d)}, {}};
  t.data.reserve(records.size() * d);
  for (const auto& r : records) {
    const Vec& v = pick(r);
    if (v.size() != d) throw InputError("record vector width mismatch");
    for (int i = 0; i < d; ++i) t.data.push_back(static_cast<float>(v[i]));
  }
  return t;
}

void expect_dims(const io::Tensor& t, std::vector<std::uint64_t> dims, const std::string& what) {
  if (t.dims != dims) throw InputError("tensor " + what + " has unexpected shape");
}

std::string record_file(std::uint64_t id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06llu.ppm", static_cast<unsigned long long>(id));
  return buf;
}

}  // namespace

std::string dump(const json& j) { return j.dump(2) + "\n"; }

void write_json(const std::string& path, const json& j) { io::write_text_atomic(path, dump(j)); }

json read_json(const std::string& path) {
  const auto bytes = io::read_file(path);
  try {
    return json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw InputError(path + " is not valid JSON: " + e.what());
  }
}

void write_dataset(const std::string& dir, const std::vector<synth::DatasetRecord>& records,
                   const config::RunConfig& cfg) {
  if (records.empty()) throw InputError("refusing to write an empty dataset");
  std::error_code ec;
  fs::create_directories(fs::path(dir) / "previews", ec);
  if (ec) throw InputError("cannot create dataset directory " + dir + ": " + ec.message());

  const int d = cfg.space.dim;
  const int n_tok = cfg.space.max_text_tokens;
  const int ps = cfg.space.patch_size;
  const std::uint64_t n = records.size();

  json recs = json::array();
  std::array<std::size_t, synth::kDomainCount> per_domain{};
  io::Tensor tokens{{n, static_cast<std::uint64_t>(n_tok), static_cast<std::uint64_t>(d)},
                    std::vector<float>(n * n_tok * d, 0.0f)};
  io::Tensor patches{{n, static_cast<std::uint64_t>(ps), static_cast<std::uint64_t>(ps), 3}, {}};
  patches.data.reserve(n * ps * ps * 3);
  const int bins = cfg.dataset.spec.hist_layout.size();
  io::Tensor hist{{n, static_cast<std::uint64_t>(bins)}, {}};
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    ++per_domain[static_cast<int>(r.domain)];
    json palette = json::array();
    for (const auto& c : r.palette) palette.push_back({c[0], c[1], c[2]});
    recs.push_back({{"id", r.id},
                    {"caption", r.caption},
                    {"domain", synth::domain_name(r.domain)},
                    {"concept", r.concept_id},
                    {"palette", palette},
                    {"render_seed", r.render_seed}});
    for (int k = 0; k < r.text.tokens.rows() && k < n_tok; ++k)
      for (int j = 0; j < d; ++j)
        tokens.data[(i * n_tok + k) * d + j] = static_cast<float>(r.text.tokens(k, j));
    if (r.patch.height != ps || r.patch.width != ps) throw InputError("patch size mismatch");
    for (double v : r.patch.pixels) patches.data.push_back(static_cast<float>(v));
    if (cfg.dataset.with_histograms) {
      if (static_cast<int>(r.lab_hist.values.size()) != bins)
        throw InputError("record histogram does not match the configured bins");
      for (double v : r.lab_hist.values) hist.data.push_back(static_cast<float>(v));
    }
  }

  json counts = {{"records", n}};
  for (int k = 0; k < synth::kDomainCount; ++k)
    counts["per_domain"][synth::domain_name(static_cast<synth::Domain>(k))] = per_domain[k];
  json tensors = {{"image_emb", "image_emb.prft"},
                  {"text_pooled", "text_pooled.prft"},
                  {"text_tokens", "text_tokens.prft"},
                  {"patches", "patches.prft"}};
  if (cfg.dataset.with_histograms) tensors["lab_hist"] = "lab_hist.prft";
  const json manifest = {{"format", "priorforge-dataset"},
                         {"version", 1},
                         {"counts", counts},
                         {"seeds", {{"space", cfg.space.seed}, {"dataset", cfg.dataset.spec.seed}}},
                         {"config", config::to_json(cfg)},
                         {"tensors", tensors},
                         {"records", recs}};

  const fs::path root(dir);
  io::write_tensor((root / "image_emb.prft").string(),
                   rows_tensor(records, [](const synth::DatasetRecord& r) -> const Vec& {
                     return r.image.vec;
                   }, d));
  io::write_tensor((root / "text_pooled.prft").string(),
                   rows_tensor(records, [](const synth::DatasetRecord& r) -> const Vec& {
                     return r.text.pooled;
                   }, d));
  io::write_tensor((root / "text_tokens.prft").string(), tokens);
  io::write_tensor((root / "patches.prft").string(), patches);
  if (cfg.dataset.with_histograms) io::write_tensor((root / "lab_hist.prft").string(), hist);
  else fs::remove(root / "lab_hist.prft", ec);
  const std::size_t previews =
      std::min<std::size_t>(records.size(), static_cast<std::size_t>(std::max(0, cfg.dataset.preview_count)));
  for (std::size_t i = 0; i < previews; ++i)
    write_ppm((root / "previews" / record_file(records[i].id)).string(), records[i].patch);
  write_json((root / "manifest.json").string(), manifest);
}

Dataset read_dataset(const std::string& dir) {
  const fs::path root(dir);
  if (!fs::exists(root / "manifest.json"))
    throw InputError("no dataset manifest in " + dir);
  const json m = read_json((root / "manifest.json").string());
  if (m.value("format", "") != "priorforge-dataset")
    throw InputError(dir + " is not a priorforge dataset");
  Dataset ds;
  ds.config = config::run_config_from_json(m.at("config"));
  const auto& tensors = m.at("tensors");
  ds.has_histograms = tensors.contains("lab_hist");

  const int d = ds.config.space.dim;
  const int n_tok = ds.config.space.max_text_tokens;
  const int ps = ds.config.space.patch_size;
  const auto& recs = m.at("records");
  const std::uint64_t n = recs.size();
  auto load = [&](const char* key) {
    return io::read_tensor((root / tensors.at(key).get<std::string>()).string());
  };
  const auto image = load("image_emb");
  const auto pooled = load("text_pooled");
  const auto tokens = load("text_tokens");
  const auto patches = load("patches");
  expect_dims(image, {n, static_cast<std::uint64_t>(d)}, "image_emb");
  expect_dims(pooled, {n, static_cast<std::uint64_t>(d)}, "text_pooled");
  expect_dims(tokens, {n, static_cast<std::uint64_t>(n_tok), static_cast<std::uint64_t>(d)},
              "text_tokens");
  expect_dims(patches, {n, static_cast<std::uint64_t>(ps), static_cast<std::uint64_t>(ps), 3},
              "patches");
  io::Tensor hist;
  const auto& layout = ds.config.dataset.spec.hist_layout;
  if (ds.has_histograms) {
    hist = load("lab_hist");
    expect_dims(hist, {n, static_cast<std::uint64_t>(layout.size())}, "lab_hist");
  }

  ds.records.resize(n);
  const std::size_t patch_len = static_cast<std::size_t>(ps) * ps * 3;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& j = recs[i];
    auto& r = ds.records[i];
    r.id = j.at("id").get<std::uint64_t>();
    r.caption = j.at("caption").get<std::vector<int>>();
    r.domain = synth::parse_domain(j.at("domain").get<std::string>());
    r.concept_id = j.at("concept").get<int>();
    for (const auto& c : j.at("palette")) r.palette.push_back({c[0], c[1], c[2]});
    r.render_seed = j.at("render_seed").get<std::uint64_t>();
    r.image.vec = Eigen::Map<const Eigen::VectorXf>(image.data.data() + i * d, d).cast<double>();
    r.text.pooled = Eigen::Map<const Eigen::VectorXf>(pooled.data.data() + i * d, d).cast<double>();
    const int len = static_cast<int>(std::min<std::size_t>(r.caption.size(), n_tok));
    r.text.tokens.resize(len, d);
    for (int k = 0; k < len; ++k)
      for (int c = 0; c < d; ++c)
        r.text.tokens(k, c) = tokens.data[(i * n_tok + k) * d + c];
    r.patch = RasterPatch(ps, ps);
    for (std::size_t k = 0; k < patch_len; ++k) r.patch.pixels[k] = patches.data[i * patch_len + k];
    if (ds.has_histograms) {
      r.lab_hist.layout = layout;
      r.lab_hist.values.resize(layout.size());
      for (int k = 0; k < layout.size(); ++k)
        r.lab_hist.values[k] = hist.data[i * layout.size() + k];
    }
  }
  return ds;
}

std::pair<std::vector<synth::DatasetRecord>, std::vector<synth::DatasetRecord>>
split_holdout(const std::vector<synth::DatasetRecord>& records, double holdout_fraction) {
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0))
    throw InputError("holdout fraction must lie in (0,1)");
  std::vector<synth::DatasetRecord> sorted = records;
  std::stable_sort(sorted.begin(), sorted.end(), [](auto& a, auto& b) { return a.id < b.id; });
  const auto hold = static_cast<std::size_t>(std::ceil(holdout_fraction * sorted.size()));
  const std::size_t cut = sorted.size() - std::min(hold, sorted.size());
  std::vector<synth::DatasetRecord> train(sorted.begin(), sorted.begin() + cut);
  std::vector<synth::DatasetRecord> eval(sorted.begin() + cut, sorted.end());
  return {std::move(train), std::move(eval)};
}

synth::SpaceConfig Model::space() const {
  return config::space_from_json(run_config().at("space"));
}

std::vector<unsigned char> encode_model(const prior::PriorParams& params,
                                        const config::RunConfig& run_config,
                                        const json& meta) {
  const auto& c = params.config();
  const auto sched = diffusion::make_schedule(c.schedule, c.timesteps);
  json tensors = json::array();
  for (const auto& t : params.layout().tensors)
    tensors.push_back({{"name", t.name}, {"shape", {t.rows, t.cols}}});
  config::RunConfig rc = run_config;
  rc.model = c;
  const json header = {{"format", "priorforge-model"},
                       {"model", config::to_json(c)},
                       {"schedule",
                        {{"kind", diffusion::schedule_name(sched.kind)},
                         {"T", sched.T},
                         {"cosine_s", sched.cosine_s},
                         {"beta_start", sched.beta_start},
                         {"beta_end", sched.beta_end}}},
                       {"run_config", config::to_json(rc)},
                       {"meta", meta},
                       {"parameter_count", params.count()},
                       {"tensors", tensors}};
  const std::string text = header.dump();
  std::vector<unsigned char> out{'P', 'R', 'F', 'M'};
  auto put = [&out](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    out.insert(out.end(), b, b + n);
  };
  put(&kModelVersion, 4);
  const std::uint64_t len = text.size();
  put(&len, 8);
  put(text.data(), text.size());
  for (const auto& t : params.layout().tensors) {
    io::Tensor tensor{{static_cast<std::uint64_t>(t.rows), static_cast<std::uint64_t>(t.cols)},
                      std::vector<float>(params.ptr(t.offset), params.ptr(t.offset) + t.size())};
    const auto bytes = io::encode_tensor(tensor);
    out.insert(out.end(), bytes.begin(), bytes.end());
  }
  return out;
}

Model decode_model(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), "PRFM", 4) != 0)
    throw InputError("not a priorforge model file");
  std::uint32_t version = 0;
  std::uint64_t len = 0;
  std::memcpy(&version, bytes.data() + 4, 4);
  std::memcpy(&len, bytes.data() + 8, 8);
  if (version != kModelVersion) throw InputError("unsupported model file version");
  if (16 + len > bytes.size()) throw InputError("truncated model header");
  json header;
  try {
    header = json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(len));
  } catch (const json::exception& e) {
    throw InputError(std::string("bad model header: ") + e.what());
  }
  Model m{prior::PriorParams(config::model_from_json(header.at("model"))), header};
  std::size_t off = 16 + len;
  const auto& names = header.at("tensors");
  const auto& layout = m.params.layout().tensors;
  if (names.size() != layout.size()) throw InputError("model tensor count mismatch");
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto& t = layout[i];
    if (names[i].at("name").get<std::string>() != t.name)
      throw InputError("model tensor order mismatch at " + t.name);
    const io::Tensor tensor = io::decode_tensor(bytes, off);
    if (tensor.dims != std::vector<std::uint64_t>{static_cast<std::uint64_t>(t.rows),
                                                  static_cast<std::uint64_t>(t.cols)})
      throw InputError("model tensor " + t.name + " has the wrong shape");
    std::copy(tensor.data.begin(), tensor.data.end(), m.params.ptr(t.offset));
  }
  if (off != bytes.size()) throw InputError("trailing bytes in model file");
  return m;
}

void write_model(const std::string& path, const prior::PriorParams& params,
                 const config::RunConfig& run_config, const json& meta) {
  io::write_file_atomic(path, encode_model(params, run_config, meta));
}

Model read_model(const std::string& path) { return decode_model(io::read_file(path)); }

}  // namespace priorforge::store
