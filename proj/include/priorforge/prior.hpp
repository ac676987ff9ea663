#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "priorforge/common.hpp"
#include "priorforge/diffusion.hpp"
#include "priorforge/synthspace.hpp"

namespace priorforge::prior {

using MatF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using VecF = Eigen::VectorXf;
/// Parameter and gradient storage. Fixed 64-byte alignment keeps Eigen's
/// vectorized summation order, and so results, identical across allocations.
using FloatBuffer = std::vector<float, Eigen::aligned_allocator<float>>;

struct PriorConfig {
  int width = 64;
  int depth = 4;
  int heads = 4;
  int mlp_ratio = 4;
  /// Text slots in the sequence: the pooled embedding plus
  /// max_text_tokens - 1 per-token encodings.
  int max_text_tokens = 8;
  bool color_conditioned = false;
  diffusion::ScheduleKind schedule = diffusion::ScheduleKind::cosine;
  int timesteps = 1000;

  void validate() const;
  int word_slots() const { return max_text_tokens - 1; }
  int seq_len() const { return max_text_tokens + 3 + (color_conditioned ? 1 : 0); }
  int color_slot() const { return 0; }
  int pooled_slot() const { return color_conditioned ? 1 : 0; }
  int time_slot() const { return pooled_slot() + max_text_tokens; }
  int noised_slot() const { return time_slot() + 1; }
  int query_slot() const { return time_slot() + 2; }
  bool operator==(const PriorConfig&) const = default;
};

/// Named row-major parameter tensor inside the flat parameter vector.
struct ParamTensor {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::size_t offset = 0;
  std::size_t size() const { return static_cast<std::size_t>(rows) * cols; }
};

/// Offsets of every parameter tensor, derived from the config.
struct ParamLayout {
  struct Block {
    std::size_t ln1_g, ln1_b, qkv_w, qkv_b, attn_out_w, attn_out_b;
    std::size_t ln2_g, ln2_b, mlp_in_w, mlp_in_b, mlp_out_w, mlp_out_b;
  };
  std::size_t pos_emb, time_w, time_b, null_text, null_text_fill, null_color,
      query, lnf_g, lnf_b, out_w, out_b;
  std::vector<Block> blocks;
  std::vector<ParamTensor> tensors;
  std::size_t total = 0;

  explicit ParamLayout(const PriorConfig& c);
};

class PriorParams {
 public:
  explicit PriorParams(const PriorConfig& config);
  /// Small Gaussian weights, unit LayerNorm gains.
  static PriorParams initialize(const PriorConfig& config, std::uint64_t seed);

  const PriorConfig& config() const { return config_; }
  const ParamLayout& layout() const { return layout_; }
  FloatBuffer& data() { return data_; }
  const FloatBuffer& data() const { return data_; }
  std::size_t count() const { return data_.size(); }

  const float* ptr(std::size_t offset) const { return data_.data() + offset; }
  float* ptr(std::size_t offset) { return data_.data() + offset; }

  bool all_finite() const;

 private:
  PriorConfig config_;
  ParamLayout layout_;
  FloatBuffer data_;
};

/// Closed-form parameter count for a config.
std::size_t parameter_count(const PriorConfig& c);

/// Sinusoidal features of t at d/2 angular frequencies spaced geometrically
/// from 1 down to 1e-4: [sin(t w_k)..., cos(t w_k)...].
VecF timestep_features(int t, int d);
/// Learned projection of the sinusoidal features.
VecF timestep_embedding(const PriorParams& params, int t);

/// Where a sequence slot's input came from; drives gradient routing.
enum class SlotSource : std::uint8_t {
  external,
  pad,
  null_text,
  null_text_fill,
  null_color,
  timestep,
  query
};

/// Token inputs before position embeddings, one row per slot.
struct Sequence {
  MatF tokens;
  std::vector<SlotSource> sources;
  int t = 0;
};

struct Conditioning {
  const synth::TextEmbedding* text = nullptr;
  const std::vector<double>* color_token = nullptr;  // width-length or null
  bool drop_text = false;
  bool drop_color = false;
};

Sequence build_sequence(const PriorParams& params, const Conditioning& cond, int t,
                        const Vec& z_noised);

/// Causal transformer forward; returns one unnormalized z0 estimate per
/// sequence (output projection of the query slot).
std::vector<Vec> denoise_batch(const PriorParams& params,
                               std::span<const Sequence> seqs);
Vec denoise(const PriorParams& params, const Sequence& seq);

/// Residual-stream states after the input embedding and after each block
/// (depth + 1 matrices, seq_len x width). Used by causality tests.
std::vector<MatF> hidden_states(const PriorParams& params, const Sequence& seq);

/// Classifier-free guidance over the fully conditioned and fully null arms.
/// For color-conditioned models without a color token, the text-only arm is
/// the conditional arm.
Vec cfg_denoise(const PriorParams& params, const synth::TextEmbedding& text,
                const std::vector<double>* color_token, int t, const Vec& z_noised,
                double guidance_scale);

/// Per-sequence targets for training. Returns the mean over sequences of
/// ||denoise - target||^2 and accumulates d(loss)/d(params) into grad.
double loss_and_grad(const PriorParams& params, std::span<const Sequence> seqs,
                     std::span<const Vec> targets, FloatBuffer& grad);

}  // namespace priorforge::prior
