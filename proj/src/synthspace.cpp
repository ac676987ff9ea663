#include "priorforge/synthspace.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace priorforge::synth {

namespace {

constexpr const char* kConceptNames[] = {
    "berry", "tile",  "sail",   "gem",   "ring",  "frame", "tent",  "kite",
    "ball",  "brick", "pyramid", "badge", "twins", "domino", "peaks", "dice"};

constexpr const char* kDomainNames[] = {"texture", "vector", "isolated", "photo"};

struct NamedColor {
  const char* name;
  Color rgb;
};

constexpr NamedColor kColors[] = {
    {"red", {1.0, 0.0, 0.0}},  {"orange", {1.0, 0.5, 0.0}},
    {"yellow", {1.0, 1.0, 0.0}}, {"green", {0.0, 1.0, 0.0}},
    {"cyan", {0.0, 1.0, 1.0}}, {"blue", {0.0, 0.0, 1.0}},
    {"purple", {0.5, 0.0, 1.0}}, {"pink", {1.0, 0.5, 1.0}}};

Color mix(const Color& a, const Color& b, double t) {
  return {a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t,
          a[2] + (b[2] - a[2]) * t};
}

constexpr Color kWhite{1.0, 1.0, 1.0};

// Paint index of a concept's shape at offset (dx, dy) in units of the shape
// radius: 0 primary, 1 secondary, -1 outside.
int shape_paint(int concept_id, double dx, double dy) {
  const int kind = concept_id % 4;
  const int variant = (concept_id / 4) % 4;
  auto inside = [kind](double x, double y) {
    switch (kind) {
      case 0: return x * x + y * y <= 1.0;
      case 1: return std::abs(x) <= 0.85 && std::abs(y) <= 0.85;
      case 2: return y >= -0.9 && y <= 0.8 && std::abs(x) <= (y + 0.9) / 1.7;
      default: return std::abs(x) + std::abs(y) <= 1.0;
    }
  };
  switch (variant) {
    case 0:
      return inside(dx, dy) ? 0 : -1;
    case 1:
      if (!inside(dx, dy)) return -1;
      return inside(dx / 0.55, dy / 0.55) ? 1 : 0;
    case 2:
      if (!inside(dx, dy)) return -1;
      return (static_cast<int>(std::floor((dx + dy + 4.0) * 2.5)) % 2 == 0) ? 0 : 1;
    default:
      if (inside((dx + 0.5) / 0.55, dy / 0.55)) return 0;
      if (inside((dx - 0.5) / 0.55, dy / 0.55)) return 1;
      return -1;
  }
}

void paint_shape(RasterPatch& p, int concept_id, double cy, double cx, double r,
                 const Color& primary, const Color& secondary) {
  for (int y = 0; y < p.height; ++y)
    for (int x = 0; x < p.width; ++x) {
      const int k = shape_paint(concept_id, (x + 0.5 - cx) / r, (y + 0.5 - cy) / r);
      if (k == 0) p.set(y, x, primary);
      if (k == 1) p.set(y, x, secondary);
    }
}

RasterPatch render_texture(int concept_id, const std::vector<Color>& palette,
                           Rng& rng, int size) {
  // Integer frequencies keep the field periodic over the patch (tileable).
  struct Wave {
    int fx, fy;
    double phase, amp;
  };
  std::vector<Wave> waves;
  for (int j = 0; j < 3; ++j) {
    const int fx = 1 + (concept_id + j) % 4;
    const int fy = 1 + (concept_id / 4 + 2 * j) % 4;
    waves.push_back({fx, (j % 2 ? -fy : fy), 6.283185307179586 * uniform01(rng),
                     1.0 / (j + 1)});
  }
  const std::size_t n = static_cast<std::size_t>(size) * size;
  std::vector<double> field(n);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      double v = 0.0;
      for (const auto& w : waves)
        v += w.amp * std::cos(6.283185307179586 * (w.fx * x + w.fy * y) / size +
                              w.phase);
      field[static_cast<std::size_t>(y) * size + x] = v;
    }
  // Rank-quantize so each palette color covers an equal share.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return field[a] < field[b]; });
  RasterPatch p(size, size);
  const std::size_t k = palette.size();
  for (std::size_t rank = 0; rank < n; ++rank) {
    const std::size_t idx = order[rank];
    p.set(static_cast<int>(idx / size), static_cast<int>(idx % size),
          palette[rank * k / n]);
  }
  return p;
}

}  // namespace

const char* domain_name(Domain d) { return kDomainNames[static_cast<int>(d)]; }

Domain parse_domain(const std::string& name) {
  for (int i = 0; i < kDomainCount; ++i)
    if (name == kDomainNames[i]) return static_cast<Domain>(i);
  throw InputError("unknown domain '" + name + "'");
}

Vocabulary::Vocabulary(int concept_count) : concept_count_(concept_count) {
  if (concept_count < 1) throw InputError("need at least one concept");
  constexpr int kNamed = static_cast<int>(std::size(kConceptNames));
  for (int c = 0; c < concept_count; ++c)
    names_.push_back(c < kNamed ? kConceptNames[c] : "concept" + std::to_string(c));
  for (const char* d : kDomainNames) names_.emplace_back(d);
  for (const auto& c : kColors) {
    names_.emplace_back(c.name);
    colors_.push_back(c.rgb);
  }
  for (int i = 0; i < size(); ++i) {
    if (!ids_.emplace(names_[i], i).second)
      throw InputError("duplicate vocabulary entry '" + names_[i] + "'");
  }
}

int Vocabulary::concept_token(int concept_id) const {
  if (concept_id < 0 || concept_id >= concept_count_)
    throw InputError("unknown concept id " + std::to_string(concept_id));
  return concept_id;
}

int Vocabulary::color_token(int color_index) const {
  if (color_index < 0 || color_index >= color_count())
    throw InputError("unknown color index " + std::to_string(color_index));
  return concept_count_ + kDomainCount + color_index;
}

std::optional<int> Vocabulary::color_of_token(int token) const {
  const int c = token - concept_count_ - kDomainCount;
  if (c >= 0 && c < color_count()) return c;
  return std::nullopt;
}

const std::string& Vocabulary::name(int token) const {
  if (token < 0 || token >= size())
    throw InputError("unknown token id " + std::to_string(token));
  return names_[token];
}

int Vocabulary::id(const std::string& name) const {
  const auto it = ids_.find(name);
  if (it == ids_.end()) throw InputError("unknown word '" + name + "'");
  return it->second;
}

std::vector<int> Vocabulary::tokenize(const std::string& caption) const {
  std::istringstream in(caption);
  std::vector<int> ids;
  for (std::string w; in >> w;) ids.push_back(id(w));
  return ids;
}

std::string Vocabulary::detokenize(const std::vector<int>& ids) const {
  std::string out;
  for (int t : ids) {
    if (!out.empty()) out += ' ';
    out += name(t);
  }
  return out;
}

int coarse_bin(const Color& c) {
  auto axis = [](double v) { return std::clamp(static_cast<int>(v * 3.0), 0, 2); };
  return (axis(c[0]) * 3 + axis(c[1])) * 3 + axis(c[2]);
}

Color coarse_bin_color(int bin) {
  return {0.5 * (bin / 9), 0.5 * ((bin / 3) % 3), 0.5 * (bin % 3)};
}

std::array<double, kCoarseBins> coarse_rgb_histogram(const RasterPatch& patch) {
  std::array<double, kCoarseBins> h{};
  for (std::size_t i = 0; i < patch.pixel_count(); ++i) h[coarse_bin(patch.pixel(i))] += 1.0;
  for (double& v : h) v /= static_cast<double>(patch.pixel_count());
  return h;
}

RasterPatch render_patch(int concept_id, Domain domain,
                         const std::vector<Color>& palette, std::uint64_t seed,
                         int size, int concept_count) {
  if (concept_id < 0 || concept_id >= concept_count)
    throw InputError("unknown concept id " + std::to_string(concept_id));
  const int d = static_cast<int>(domain);
  if (d < 0 || d >= kDomainCount) throw InputError("unknown domain");
  if (palette.empty()) throw InputError("palette must be non-empty");
  for (const auto& c : palette)
    for (double v : c)
      if (!(v >= 0.0 && v <= 1.0)) throw InputError("palette colors must lie in [0,1]");
  if (size < 8) throw InputError("patch size must be at least 8");

  Rng rng(seed);
  const double s = size;
  const Color& primary = palette[0];
  const Color& secondary = palette[1 % palette.size()];
  switch (domain) {
    case Domain::texture:
      return render_texture(concept_id, palette, rng, size);
    case Domain::vector: {
      const bool has_bg = palette.size() >= 2;
      RasterPatch p(size, size, has_bg ? palette.back() : kWhite);
      const std::size_t fg = has_bg ? palette.size() - 1 : 1;
      const int shapes = 1 + static_cast<int>(rng() % 3);
      for (int i = 0; i < shapes; ++i) {
        const double r = s * (0.18 + 0.08 * uniform01(rng));
        const double cy = r + (s - 2 * r) * uniform01(rng);
        const double cx = r + (s - 2 * r) * uniform01(rng);
        paint_shape(p, concept_id, cy, cx, r, palette[i % fg],
                    palette[(i + 1) % fg]);
      }
      return p;
    }
    case Domain::isolated: {
      RasterPatch p(size, size, kWhite);
      const double r = s * 0.3;
      const double cy = s / 2 + (uniform01(rng) - 0.5) * s * 0.12;
      const double cx = s / 2 + (uniform01(rng) - 0.5) * s * 0.12;
      paint_shape(p, concept_id, cy, cx, r, primary, secondary);
      return p;
    }
    case Domain::photo: {
      RasterPatch p(size, size);
      const Color& base = palette.back();
      const Color top = mix(base, kWhite, 0.55);
      const Color bottom = mix(base, Color{0, 0, 0}, 0.45);
      const double tilt = (uniform01(rng) - 0.5) * 0.4;
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
          const double t = std::clamp((y + tilt * (x - s / 2)) / (s - 1), 0.0, 1.0);
          p.set(y, x, mix(top, bottom, t));
        }
      const double r = s * (0.24 + 0.06 * uniform01(rng));
      const double cy = s * (0.45 + 0.15 * uniform01(rng));
      const double cx = s * (0.35 + 0.3 * uniform01(rng));
      paint_shape(p, concept_id, cy, cx, r, primary, secondary);
      return p;
    }
  }
  throw InputError("unknown domain");
}

EmbeddingSpace::EmbeddingSpace(const SpaceConfig& config)
    : config_(config), vocab_(config.concepts) {
  const int d = config_.dim;
  const int f = config_.feature_dim();
  if (d < f)
    throw InputError("embedding dim " + std::to_string(d) +
                     " is smaller than the feature dim " + std::to_string(f));
  if (config_.noise_sigma < 0) throw InputError("noise_sigma must be >= 0");
  if (config_.max_text_tokens < 1) throw InputError("max_text_tokens must be >= 1");
  Rng rng(config_.seed);
  Mat g(d, f);
  for (int j = 0; j < f; ++j)
    for (int i = 0; i < d; ++i) g(i, j) = gaussian(rng);
  Eigen::HouseholderQR<Mat> qr(g);
  projection_ = qr.householderQ() * Mat::Identity(d, f);
  // Fix column signs so R has a positive diagonal.
  const Mat r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < f; ++j)
    if (r(j, j) < 0) projection_.col(j) *= -1.0;
  token_proj_.resize(d, vocab_.size());
  for (int j = 0; j < vocab_.size(); ++j)
    for (int i = 0; i < d; ++i) token_proj_(i, j) = gaussian(rng);
}

Vec EmbeddingSpace::image_features(const RasterPatch& patch, int concept_id,
                                   Domain domain) const {
  vocab_.concept_token(concept_id);
  const int dom = static_cast<int>(domain);
  if (dom < 0 || dom >= kDomainCount) throw InputError("unknown domain");
  Vec f = Vec::Zero(feature_dim());
  f[concept_id] = 1.0;
  f[config_.concepts + dom] = 1.0;
  const auto h = coarse_rgb_histogram(patch);
  for (int i = 0; i < kCoarseBins; ++i) f[config_.concepts + kDomainCount + i] = h[i];
  return f;
}

ImageEmbedding EmbeddingSpace::embed_features(const Vec& features, Rng* rng) const {
  Vec v = projection_ * features;
  if (rng && config_.noise_sigma > 0)
    v += config_.noise_sigma * gaussian_vec(*rng, config_.dim);
  const double n = v.norm();
  if (!(n > 0) || !std::isfinite(n)) throw NumericError("cannot normalize embedding");
  return {v / n};
}

ImageEmbedding EmbeddingSpace::encode_image(const RasterPatch& patch, int concept_id,
                                            Domain domain, Rng& rng) const {
  return embed_features(image_features(patch, concept_id, domain), &rng);
}

ImageEmbedding EmbeddingSpace::encode_image_exact(const RasterPatch& patch,
                                                  int concept_id,
                                                  Domain domain) const {
  return embed_features(image_features(patch, concept_id, domain), nullptr);
}

TextEmbedding EmbeddingSpace::encode_text(const std::vector<int>& token_ids) const {
  if (token_ids.empty()) throw InputError("caption must contain at least one token");
  if (static_cast<int>(token_ids.size()) > config_.max_text_tokens)
    throw InputError("caption longer than max_text_tokens");
  Vec f = Vec::Zero(feature_dim());
  TextEmbedding out;
  out.tokens.resize(static_cast<Eigen::Index>(token_ids.size()), config_.dim);
  for (std::size_t i = 0; i < token_ids.size(); ++i) {
    const int t = token_ids[i];
    vocab_.name(t);  // validates the id
    if (vocab_.is_concept(t)) f[t] = 1.0;
    if (auto c = vocab_.color_of_token(t))
      f[config_.concepts + kDomainCount + coarse_bin(vocab_.named_color(*c))] = 1.0;
    out.tokens.row(static_cast<Eigen::Index>(i)) =
        token_proj_.col(t).normalized().transpose();
  }
  const double n = (projection_ * f).norm();
  if (!(n > 0)) {
    // Domain-word-only captions carry no features; fall back to the
    // mean token direction so the pooled vector stays unit norm.
    out.pooled = out.tokens.colwise().sum().transpose().normalized();
  } else {
    out.pooled = projection_ * f / n;
  }
  return out;
}

Decoded EmbeddingSpace::decode(const ImageEmbedding& emb, int palette_size) const {
  if (emb.vec.size() != config_.dim) throw InputError("embedding dimension mismatch");
  if (!emb.vec.allFinite()) throw NumericError("non-finite embedding");
  const Vec f = projection_.transpose() * emb.vec;
  Decoded out;
  Eigen::Index best = 0;
  f.head(config_.concepts).maxCoeff(&best);
  out.concept_id = static_cast<int>(best);
  f.segment(config_.concepts, kDomainCount).maxCoeff(&best);
  out.domain = static_cast<Domain>(best);
  double total = 0.0;
  for (int i = 0; i < kCoarseBins; ++i) {
    out.palette_hist[i] = std::max(0.0, f[config_.concepts + kDomainCount + i]);
    total += out.palette_hist[i];
  }
  if (!(total > 1e-12))
    throw DegenerateEmbeddingError("embedding has an all-zero color block");
  for (double& v : out.palette_hist) v /= total;

  std::array<int, kCoarseBins> order;
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return out.palette_hist[a] > out.palette_hist[b];
  });
  // Keep bins carrying at least a quarter of the top bin's mass.
  const double floor_mass = 0.25 * out.palette_hist[order[0]];
  for (int i = 0; i < palette_size && i < kCoarseBins; ++i) {
    if (i > 0 && out.palette_hist[order[i]] < floor_mass) break;
    out.palette.push_back(coarse_bin_color(order[i]));
  }
  out.patch = render_patch(out.concept_id, out.domain, out.palette, 0,
                           config_.patch_size, config_.concepts);
  return out;
}

DatasetRecord gen_record(const EmbeddingSpace& space, const DatasetSpec& spec,
                         std::size_t index) {
  const auto& vocab = space.vocab();
  Rng rng(derive_seed(spec.seed, index));
  DatasetRecord r;
  r.id = index;

  const double u = uniform01(rng);
  double acc = 0.0;
  int dom = kDomainCount - 1;
  for (int i = 0; i < kDomainCount; ++i) {
    acc += spec.mix[i];
    if (u < acc) {
      dom = i;
      break;
    }
  }
  // Guard against rounding when trailing proportions are zero.
  while (spec.mix[dom] <= 0.0 && dom > 0) --dom;
  r.domain = static_cast<Domain>(dom);
  r.concept_id = static_cast<int>(rng() % static_cast<std::uint64_t>(vocab.concept_count()));

  const int ncolors = 1 + static_cast<int>(rng() % 3);
  std::vector<int> picks(vocab.color_count());
  std::iota(picks.begin(), picks.end(), 0);
  for (int i = 0; i < ncolors; ++i) {
    const int j = i + static_cast<int>(rng() % static_cast<std::uint64_t>(picks.size() - i));
    std::swap(picks[i], picks[j]);
    Color c = vocab.named_color(picks[i]);
    for (double& v : c) v = std::clamp(v + (uniform01(rng) - 0.5) * 0.12, 0.0, 1.0);
    r.palette.push_back(c);
  }
  r.render_seed = rng();
  r.patch = render_patch(r.concept_id, r.domain, r.palette, r.render_seed,
                         space.config().patch_size, vocab.concept_count());

  if (uniform01(rng) < spec.color_word_prob)
    r.caption.push_back(vocab.color_token(picks[0]));
  r.caption.push_back(vocab.concept_token(r.concept_id));

  r.text = space.encode_text(r.caption);
  r.image = space.encode_image(r.patch, r.concept_id, r.domain, rng);
  r.lab_hist = colorlab::lab_histogram(r.patch, spec.hist_layout);
  return r;
}

std::vector<DatasetRecord> gen_dataset(const EmbeddingSpace& space,
                                       const DatasetSpec& spec) {
  if (spec.n < 1) throw InputError("dataset size must be >= 1");
  double total = 0.0;
  for (double p : spec.mix) {
    if (p < 0.0) throw InputError("domain mix proportions must be nonnegative");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw InputError("domain mix must sum to 1");
  std::vector<DatasetRecord> out(spec.n);
  parallel_for(spec.n, [&](std::size_t i) { out[i] = gen_record(space, spec, i); });
  return out;
}

std::uint64_t dataset_fingerprint(const std::vector<DatasetRecord>& records) {
  std::vector<const DatasetRecord*> sorted;
  for (const auto& r : records) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(),
            [](auto* a, auto* b) { return a->id < b->id; });
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto* r : sorted) {
    h = fnv1a(&r->id, sizeof(r->id), h);
    h = fnv1a(r->image.vec.data(), sizeof(double) * r->image.vec.size(), h);
    h = fnv1a(r->text.pooled.data(), sizeof(double) * r->text.pooled.size(), h);
  }
  return h;
}

}  // namespace priorforge::synth
