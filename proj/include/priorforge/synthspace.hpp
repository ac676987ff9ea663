#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "priorforge/colorlab.hpp"
#include "priorforge/common.hpp"
#include "priorforge/raster.hpp"

namespace priorforge::synth {

enum class Domain : int { texture = 0, vector = 1, isolated = 2, photo = 3 };
inline constexpr int kDomainCount = 4;

const char* domain_name(Domain d);
Domain parse_domain(const std::string& name);

using Color = std::array<double, 3>;

/// Token inventory shared by captions and the text encoder.
/// Ids are dense: concepts first, then domain words, then color words.
class Vocabulary {
 public:
  explicit Vocabulary(int concept_count = 16);

  int size() const { return static_cast<int>(names_.size()); }
  int concept_count() const { return concept_count_; }
  int color_count() const { return static_cast<int>(colors_.size()); }

  int concept_token(int concept_id) const;
  int domain_token(Domain d) const { return concept_count_ + static_cast<int>(d); }
  int color_token(int color_index) const;

  bool is_concept(int token) const { return token >= 0 && token < concept_count_; }
  std::optional<int> color_of_token(int token) const;

  const std::string& name(int token) const;
  int id(const std::string& name) const;
  const Color& named_color(int color_index) const { return colors_.at(color_index); }

  /// Space-separated words -> token ids. Throws InputError on unknown words.
  std::vector<int> tokenize(const std::string& caption) const;
  std::string detokenize(const std::vector<int>& ids) const;

 private:
  int concept_count_;
  std::vector<std::string> names_;
  std::vector<Color> colors_;
  std::map<std::string, int> ids_;
};

inline constexpr int kCoarseBins = 27;  // 3 x 3 x 3 RGB

int coarse_bin(const Color& c);
/// Bin representative with components drawn from {0, 0.5, 1}.
Color coarse_bin_color(int bin);
std::array<double, kCoarseBins> coarse_rgb_histogram(const RasterPatch& patch);

struct SpaceConfig {
  int dim = 64;
  int concepts = 16;
  double noise_sigma = 0.02;
  std::uint64_t seed = 1234;
  int max_text_tokens = 8;
  int patch_size = 32;

  int feature_dim() const { return concepts + kDomainCount + kCoarseBins; }
  bool operator==(const SpaceConfig&) const = default;
};

struct TextEmbedding {
  Vec pooled;
  Mat tokens;  // n x d, row i encodes caption token i
};

struct ImageEmbedding {
  Vec vec;
};

struct Decoded {
  int concept_id = 0;
  Domain domain = Domain::photo;
  std::array<double, kCoarseBins> palette_hist{};
  std::vector<Color> palette;
  RasterPatch patch;
};

/// Thrown when an embedding carries no recoverable color mass.
class DegenerateEmbeddingError : public InputError {
 public:
  using InputError::InputError;
};

/// Frozen joint text/image space with an orthonormal feature projection.
class EmbeddingSpace {
 public:
  explicit EmbeddingSpace(const SpaceConfig& config = {});

  const SpaceConfig& config() const { return config_; }
  const Vocabulary& vocab() const { return vocab_; }
  int dim() const { return config_.dim; }
  int feature_dim() const { return config_.feature_dim(); }
  const Mat& projection() const { return projection_; }
  const Mat& token_projection() const { return token_proj_; }

  /// [one-hot concept; one-hot domain; coarse RGB histogram].
  Vec image_features(const RasterPatch& patch, int concept_id, Domain domain) const;

  ImageEmbedding encode_image(const RasterPatch& patch, int concept_id,
                              Domain domain, Rng& rng) const;
  /// Noise-free encoding (sigma treated as 0).
  ImageEmbedding encode_image_exact(const RasterPatch& patch, int concept_id,
                                    Domain domain) const;
  TextEmbedding encode_text(const std::vector<int>& token_ids) const;

  /// Inverts the projection and renders a companion patch from the top
  /// histogram bins.
  Decoded decode(const ImageEmbedding& emb, int palette_size = 3) const;

 private:
  ImageEmbedding embed_features(const Vec& features, Rng* rng) const;

  SpaceConfig config_;
  Vocabulary vocab_;
  Mat projection_;  // d x F, orthonormal columns
  Mat token_proj_;  // d x V
};

RasterPatch render_patch(int concept_id, Domain domain,
                         const std::vector<Color>& palette, std::uint64_t seed,
                         int size = 32, int concept_count = 16);

struct DatasetRecord {
  std::uint64_t id = 0;
  std::vector<int> caption;
  RasterPatch patch;
  Domain domain = Domain::photo;
  int concept_id = 0;
  std::vector<Color> palette;
  std::uint64_t render_seed = 0;
  TextEmbedding text;
  ImageEmbedding image;
  colorlab::ColorHistogram lab_hist;
};

using DomainMix = std::array<double, kDomainCount>;

struct DatasetSpec {
  std::size_t n = 10000;
  DomainMix mix{0.25, 0.25, 0.25, 0.25};
  std::uint64_t seed = 7;
  double color_word_prob = 0.3;
  colorlab::HistogramLayout hist_layout{};
};

std::vector<DatasetRecord> gen_dataset(const EmbeddingSpace& space,
                                       const DatasetSpec& spec);

/// Builds one record from its index; gen_dataset is this mapped over 0..n-1.
DatasetRecord gen_record(const EmbeddingSpace& space, const DatasetSpec& spec,
                         std::size_t index);

/// Order-independent 64-bit digest of record ids and embeddings.
std::uint64_t dataset_fingerprint(const std::vector<DatasetRecord>& records);

}  // namespace priorforge::synth
