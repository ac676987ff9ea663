#include "priorforge/prior.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace priorforge::prior {

namespace {

using MapC = Eigen::Map<const MatF>;
using MapM = Eigen::Map<MatF>;
using RowC = Eigen::Map<const Eigen::RowVectorXf>;
using RowM = Eigen::Map<Eigen::RowVectorXf>;

constexpr float kLnEps = 1e-5f;
constexpr float kGeluK = 0.7978845608028654f;  // sqrt(2/pi)
constexpr float kGeluC = 0.044715f;

struct LnCache {
  MatF xhat;
  VecF rstd;
};

void layer_norm(const MatF& x, const float* gain, const float* bias, MatF& y,
                LnCache* cache) {
  const auto n = x.rows();
  const auto d = x.cols();
  y.resize(n, d);
  if (cache) {
    cache->xhat.resize(n, d);
    cache->rstd.resize(n);
  }
  const RowC g(gain, d), b(bias, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const float mean = x.row(i).mean();
    const float var = (x.row(i).array() - mean).square().mean();
    const float rstd = 1.0f / std::sqrt(var + kLnEps);
    const Eigen::RowVectorXf xhat = (x.row(i).array() - mean) * rstd;
    y.row(i) = xhat.array() * g.array() + b.array();
    if (cache) {
      cache->xhat.row(i) = xhat;
      cache->rstd[i] = rstd;
    }
  }
}

// dy -> dx (overwrites dx), accumulating gain/bias gradients.
void layer_norm_backward(const LnCache& c, const float* gain, const MatF& dy,
                         MatF& dx, float* dgain, float* dbias) {
  const auto n = dy.rows();
  const auto d = dy.cols();
  const RowC g(gain, d);
  RowM dg(dgain, d), db(dbias, d);
  dx.resize(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::RowVectorXf dxhat = dy.row(i).array() * g.array();
    dg.array() += dy.row(i).array() * c.xhat.row(i).array();
    db += dy.row(i);
    const float s1 = dxhat.sum();
    const float s2 = (dxhat.array() * c.xhat.row(i).array()).sum();
    dx.row(i) = (c.rstd[i] / static_cast<float>(d)) *
                (static_cast<float>(d) * dxhat.array() - s1 -
                 c.xhat.row(i).array() * s2);
  }
}

float gelu(float u) {
  return 0.5f * u * (1.0f + std::tanh(kGeluK * (u + kGeluC * u * u * u)));
}

float gelu_grad(float u) {
  const float th = std::tanh(kGeluK * (u + kGeluC * u * u * u));
  return 0.5f * (1.0f + th) +
         0.5f * u * (1.0f - th * th) * kGeluK * (1.0f + 3.0f * kGeluC * u * u);
}

// y = x W + b for W stored (in x out) row-major at `w`.
void linear(const MatF& x, const float* w, const float* b, int out, MatF& y) {
  const MapC W(w, x.cols(), out);
  y.noalias() = x * W;
  y.rowwise() += RowC(b, out);
}

void linear_backward(const MatF& x, const float* w, const MatF& dy, float* dw,
                     float* db, MatF* dx) {
  const auto in = x.cols();
  const auto out = dy.cols();
  MapM dW(dw, in, out);
  dW.noalias() += x.transpose() * dy;
  RowM(db, out) += dy.colwise().sum();
  if (dx) dx->noalias() = dy * MapC(w, in, out).transpose();
}

struct BlockCache {
  MatF x_in;
  LnCache ln1;
  MatF h1;
  MatF qkv;
  std::vector<MatF> probs;  // (sample, head) -> L x L
  MatF attn;
  MatF x_mid;
  LnCache ln2;
  MatF h2;
  MatF u;
  MatF gel;
};

struct ForwardCache {
  std::vector<BlockCache> blocks;
  MatF q_in;
  LnCache lnf;
  MatF hf;
};

// Causal multi-head attention over B stacked sequences of length L.
void attention(const PriorConfig& c, const MatF& qkv, int batch, MatF& out,
               std::vector<MatF>* probs) {
  const int L = c.seq_len();
  const int d = c.width;
  const int dh = d / c.heads;
  const float scale = 1.0f / std::sqrt(static_cast<float>(dh));
  out.resize(qkv.rows(), d);
  if (probs) probs->resize(static_cast<std::size_t>(batch) * c.heads);
  MatF s(L, L);
  for (int b = 0; b < batch; ++b) {
    const int r0 = b * L;
    for (int h = 0; h < c.heads; ++h) {
      const auto q = qkv.block(r0, h * dh, L, dh);
      const auto k = qkv.block(r0, d + h * dh, L, dh);
      const auto v = qkv.block(r0, 2 * d + h * dh, L, dh);
      s.noalias() = (q * k.transpose()) * scale;
      for (int i = 0; i < L; ++i) {
        const float mx = s.row(i).head(i + 1).maxCoeff();
        float z = 0.0f;
        for (int j = 0; j <= i; ++j) {
          s(i, j) = std::exp(s(i, j) - mx);
          z += s(i, j);
        }
        for (int j = 0; j <= i; ++j) s(i, j) /= z;
        for (int j = i + 1; j < L; ++j) s(i, j) = 0.0f;
      }
      out.block(r0, h * dh, L, dh).noalias() = s * v;
      if (probs) (*probs)[static_cast<std::size_t>(b) * c.heads + h] = s;
    }
  }
}

MatF embed_inputs(const PriorParams& p, std::span<const Sequence> seqs) {
  const auto& c = p.config();
  const int L = c.seq_len();
  const int d = c.width;
  MatF x(static_cast<Eigen::Index>(seqs.size()) * L, d);
  const MapC pos(p.ptr(p.layout().pos_emb), L, d);
  for (std::size_t s = 0; s < seqs.size(); ++s) {
    if (seqs[s].tokens.rows() != L || seqs[s].tokens.cols() != d)
      throw InputError("sequence shape does not match the prior config");
    x.block(static_cast<Eigen::Index>(s) * L, 0, L, d) = seqs[s].tokens + pos;
  }
  return x;
}

// Runs all blocks in place on x; returns the (B x d) output projection.
MatF forward(const PriorParams& p, MatF x, int batch, ForwardCache* cache,
             std::vector<MatF>* hidden) {
  const auto& c = p.config();
  const auto& lay = p.layout();
  const int d = c.width;
  const int m = c.width * c.mlp_ratio;
  const int L = c.seq_len();
  if (cache) cache->blocks.resize(lay.blocks.size());
  if (hidden) hidden->push_back(x);
  MatF h, qkv, attn, proj, u;
  for (std::size_t bi = 0; bi < lay.blocks.size(); ++bi) {
    const auto& B = lay.blocks[bi];
    BlockCache* bc = cache ? &cache->blocks[bi] : nullptr;
    if (bc) bc->x_in = x;
    layer_norm(x, p.ptr(B.ln1_g), p.ptr(B.ln1_b), h, bc ? &bc->ln1 : nullptr);
    linear(h, p.ptr(B.qkv_w), p.ptr(B.qkv_b), 3 * d, qkv);
    attention(c, qkv, batch, attn, bc ? &bc->probs : nullptr);
    linear(attn, p.ptr(B.attn_out_w), p.ptr(B.attn_out_b), d, proj);
    if (bc) {
      bc->h1 = h;
      bc->qkv = qkv;
      bc->attn = attn;
    }
    x += proj;
    if (bc) bc->x_mid = x;
    layer_norm(x, p.ptr(B.ln2_g), p.ptr(B.ln2_b), h, bc ? &bc->ln2 : nullptr);
    linear(h, p.ptr(B.mlp_in_w), p.ptr(B.mlp_in_b), m, u);
    if (bc) {
      bc->h2 = h;
      bc->u = u;
    }
    u = u.unaryExpr([](float v) { return gelu(v); });
    if (bc) bc->gel = u;
    linear(u, p.ptr(B.mlp_out_w), p.ptr(B.mlp_out_b), d, proj);
    x += proj;
    if (hidden) hidden->push_back(x);
  }
  MatF q(batch, d);
  for (int b = 0; b < batch; ++b) q.row(b) = x.row(b * L + c.query_slot());
  MatF hf, out;
  layer_norm(q, p.ptr(lay.lnf_g), p.ptr(lay.lnf_b), hf, cache ? &cache->lnf : nullptr);
  linear(hf, p.ptr(lay.out_w), p.ptr(lay.out_b), d, out);
  if (cache) {
    cache->q_in = q;
    cache->hf = hf;
  }
  return out;
}

// Backprop from d(out) to d(input tokens); parameter gradients accumulate in g.
MatF backward(const PriorParams& p, const ForwardCache& cache, const MatF& dout,
              int batch, float* g) {
  const auto& c = p.config();
  const auto& lay = p.layout();
  const int d = c.width;
  const int L = c.seq_len();
  const int dh = d / c.heads;
  const float scale = 1.0f / std::sqrt(static_cast<float>(dh));

  MatF dhf, dq;
  linear_backward(cache.hf, p.ptr(lay.out_w), dout, g + lay.out_w, g + lay.out_b, &dhf);
  layer_norm_backward(cache.lnf, p.ptr(lay.lnf_g), dhf, dq, g + lay.lnf_g, g + lay.lnf_b);
  MatF dx = MatF::Zero(static_cast<Eigen::Index>(batch) * L, d);
  for (int b = 0; b < batch; ++b) dx.row(b * L + c.query_slot()) = dq.row(b);

  MatF dgel, du, dnorm, dtmp, dattn, dqkv;
  MatF dp(L, L), ds(L, L);
  for (std::size_t bi = lay.blocks.size(); bi-- > 0;) {
    const auto& B = lay.blocks[bi];
    const auto& bc = cache.blocks[bi];
    // MLP branch
    linear_backward(bc.gel, p.ptr(B.mlp_out_w), dx, g + B.mlp_out_w, g + B.mlp_out_b,
                    &dgel);
    du = dgel.cwiseProduct(bc.u.unaryExpr([](float v) { return gelu_grad(v); }));
    linear_backward(bc.h2, p.ptr(B.mlp_in_w), du, g + B.mlp_in_w, g + B.mlp_in_b, &dnorm);
    layer_norm_backward(bc.ln2, p.ptr(B.ln2_g), dnorm, dtmp, g + B.ln2_g, g + B.ln2_b);
    dx += dtmp;
    // Attention branch
    linear_backward(bc.attn, p.ptr(B.attn_out_w), dx, g + B.attn_out_w,
                    g + B.attn_out_b, &dattn);
    dqkv.resize(bc.qkv.rows(), 3 * d);
    for (int b = 0; b < batch; ++b) {
      const int r0 = b * L;
      for (int h = 0; h < c.heads; ++h) {
        const MatF& P = bc.probs[static_cast<std::size_t>(b) * c.heads + h];
        const auto q = bc.qkv.block(r0, h * dh, L, dh);
        const auto k = bc.qkv.block(r0, d + h * dh, L, dh);
        const auto v = bc.qkv.block(r0, 2 * d + h * dh, L, dh);
        const auto dO = dattn.block(r0, h * dh, L, dh);
        dqkv.block(r0, 2 * d + h * dh, L, dh).noalias() = P.transpose() * dO;
        dp.noalias() = dO * v.transpose();
        for (int i = 0; i < L; ++i) {
          const float dot = (dp.row(i).array() * P.row(i).array()).sum();
          ds.row(i) = P.row(i).array() * (dp.row(i).array() - dot);
        }
        ds *= scale;
        dqkv.block(r0, h * dh, L, dh).noalias() = ds * k;
        dqkv.block(r0, d + h * dh, L, dh).noalias() = ds.transpose() * q;
      }
    }
    linear_backward(bc.h1, p.ptr(B.qkv_w), dqkv, g + B.qkv_w, g + B.qkv_b, &dnorm);
    layer_norm_backward(bc.ln1, p.ptr(B.ln1_g), dnorm, dtmp, g + B.ln1_g, g + B.ln1_b);
    dx += dtmp;
  }
  return dx;
}

void check_finite(const MatF& m, const char* what) {
  if (!m.allFinite())
    throw NumericError(std::string("non-finite activations in ") + what);
}

}  // namespace

void PriorConfig::validate() const {
  if (width < 2 || width % 2 != 0) throw InputError("prior width must be even and >= 2");
  if (depth < 1) throw InputError("prior depth must be >= 1");
  if (heads < 1 || width % heads != 0)
    throw InputError("prior width must be divisible by heads");
  if (mlp_ratio < 1) throw InputError("mlp_ratio must be >= 1");
  if (max_text_tokens < 1) throw InputError("max_text_tokens must be >= 1");
  if (timesteps < 1) throw InputError("timesteps must be >= 1");
}

ParamLayout::ParamLayout(const PriorConfig& c) {
  c.validate();
  const int d = c.width;
  const int m = c.width * c.mlp_ratio;
  auto add = [this](const std::string& name, int rows, int cols) {
    tensors.push_back({name, rows, cols, total});
    total += static_cast<std::size_t>(rows) * cols;
    return tensors.back().offset;
  };
  pos_emb = add("pos_emb", c.seq_len(), d);
  time_w = add("time_w", d, d);
  time_b = add("time_b", 1, d);
  null_text = add("null_text", 1, d);
  null_text_fill = add("null_text_fill", 1, d);
  null_color = add("null_color", 1, d);
  query = add("query", 1, d);
  for (int i = 0; i < c.depth; ++i) {
    const std::string pre = "blocks." + std::to_string(i) + ".";
    Block b{};
    b.ln1_g = add(pre + "ln1_g", 1, d);
    b.ln1_b = add(pre + "ln1_b", 1, d);
    b.qkv_w = add(pre + "qkv_w", d, 3 * d);
    b.qkv_b = add(pre + "qkv_b", 1, 3 * d);
    b.attn_out_w = add(pre + "attn_out_w", d, d);
    b.attn_out_b = add(pre + "attn_out_b", 1, d);
    b.ln2_g = add(pre + "ln2_g", 1, d);
    b.ln2_b = add(pre + "ln2_b", 1, d);
    b.mlp_in_w = add(pre + "mlp_in_w", d, m);
    b.mlp_in_b = add(pre + "mlp_in_b", 1, m);
    b.mlp_out_w = add(pre + "mlp_out_w", m, d);
    b.mlp_out_b = add(pre + "mlp_out_b", 1, d);
    blocks.push_back(b);
  }
  lnf_g = add("lnf_g", 1, d);
  lnf_b = add("lnf_b", 1, d);
  out_w = add("out_w", d, d);
  out_b = add("out_b", 1, d);
}

PriorParams::PriorParams(const PriorConfig& config)
    : config_(config), layout_(config), data_(layout_.total, 0.0f) {}

PriorParams PriorParams::initialize(const PriorConfig& config, std::uint64_t seed) {
  PriorParams p(config);
  Rng rng(seed);
  const float resid_std = 0.02f / std::sqrt(2.0f * static_cast<float>(config.depth));
  for (const auto& t : p.layout_.tensors) {
    const std::string& n = t.name;
    float* dst = p.data_.data() + t.offset;
    const bool gain = n.ends_with("_g");
    const bool bias = n.ends_with("_b");
    if (gain) {
      std::fill(dst, dst + t.size(), 1.0f);
    } else if (!bias) {
      const bool resid = n.ends_with("attn_out_w") || n.ends_with("mlp_out_w");
      const float stdv = resid ? resid_std : 0.02f;
      for (std::size_t i = 0; i < t.size(); ++i)
        dst[i] = stdv * static_cast<float>(gaussian(rng));
    }
  }
  return p;
}

bool PriorParams::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

std::size_t parameter_count(const PriorConfig& c) {
  const std::size_t d = c.width;
  const std::size_t m = d * c.mlp_ratio;
  const std::size_t L = c.seq_len();
  const std::size_t per_block =
      2 * d + (d * 3 * d + 3 * d) + (d * d + d) + 2 * d + (d * m + m) + (m * d + d);
  return L * d + (d * d + d) + 4 * d + c.depth * per_block + 2 * d + (d * d + d);
}

VecF timestep_features(int t, int d) {
  const int half = d / 2;
  VecF f(2 * half);
  for (int k = 0; k < half; ++k) {
    const double w = half == 1 ? 1.0 : std::pow(10.0, -4.0 * k / (half - 1));
    f[k] = static_cast<float>(std::sin(t * w));
    f[half + k] = static_cast<float>(std::cos(t * w));
  }
  return f;
}

VecF timestep_embedding(const PriorParams& params, int t) {
  const int d = params.config().width;
  if (t < 0 || t > params.config().timesteps) throw InputError("timestep out of range");
  const VecF f = timestep_features(t, d);
  const MapC W(params.ptr(params.layout().time_w), d, d);
  return (f.transpose() * W + RowC(params.ptr(params.layout().time_b), d)).transpose();
}

Sequence build_sequence(const PriorParams& params, const Conditioning& cond, int t,
                        const Vec& z_noised) {
  const auto& c = params.config();
  const auto& lay = params.layout();
  const int d = c.width;
  if (z_noised.size() != d) throw InputError("noised embedding width mismatch");
  if (cond.color_token && !c.color_conditioned)
    throw InputError("color token given to a prior without color conditioning");
  if (!cond.drop_text && !cond.text)
    throw InputError("text conditioning required unless dropped");

  Sequence s;
  s.t = t;
  s.tokens = MatF::Zero(c.seq_len(), d);
  s.sources.assign(c.seq_len(), SlotSource::external);
  auto set_param = [&](int slot, std::size_t offset, SlotSource src) {
    s.tokens.row(slot) = RowC(params.ptr(offset), d);
    s.sources[slot] = src;
  };

  if (c.color_conditioned) {
    if (cond.drop_color || !cond.color_token) {
      set_param(c.color_slot(), lay.null_color, SlotSource::null_color);
    } else {
      if (static_cast<int>(cond.color_token->size()) != d)
        throw InputError("color token width does not match the prior width");
      for (int i = 0; i < d; ++i)
        s.tokens(c.color_slot(), i) = static_cast<float>((*cond.color_token)[i]);
    }
  }
  if (cond.drop_text) {
    set_param(c.pooled_slot(), lay.null_text, SlotSource::null_text);
    for (int i = 0; i < c.word_slots(); ++i)
      set_param(c.pooled_slot() + 1 + i, lay.null_text_fill, SlotSource::null_text_fill);
  } else {
    const auto& text = *cond.text;
    if (text.pooled.size() != d || (text.tokens.rows() > 0 && text.tokens.cols() != d))
      throw InputError("text embedding width does not match the prior width");
    s.tokens.row(c.pooled_slot()) = text.pooled.cast<float>().transpose();
    const int n = static_cast<int>(text.tokens.rows());
    for (int i = 0; i < c.word_slots(); ++i) {
      const int slot = c.pooled_slot() + 1 + i;
      if (i < n) {
        s.tokens.row(slot) = text.tokens.row(i).cast<float>();
      } else {
        s.sources[slot] = SlotSource::pad;
      }
    }
  }
  s.tokens.row(c.time_slot()) = timestep_embedding(params, t).transpose();
  s.sources[c.time_slot()] = SlotSource::timestep;
  s.tokens.row(c.noised_slot()) = z_noised.cast<float>().transpose();
  set_param(c.query_slot(), lay.query, SlotSource::query);
  return s;
}

std::vector<Vec> denoise_batch(const PriorParams& params, std::span<const Sequence> seqs) {
  if (seqs.empty()) return {};
  const int batch = static_cast<int>(seqs.size());
  const MatF out = forward(params, embed_inputs(params, seqs), batch, nullptr, nullptr);
  check_finite(out, "denoise");
  std::vector<Vec> res(seqs.size());
  for (int b = 0; b < batch; ++b) res[b] = out.row(b).transpose().cast<double>();
  return res;
}

Vec denoise(const PriorParams& params, const Sequence& seq) {
  return denoise_batch(params, std::span<const Sequence>(&seq, 1)).front();
}

std::vector<MatF> hidden_states(const PriorParams& params, const Sequence& seq) {
  std::vector<MatF> hidden;
  forward(params, embed_inputs(params, std::span<const Sequence>(&seq, 1)), 1, nullptr,
          &hidden);
  return hidden;
}

Vec cfg_denoise(const PriorParams& params, const synth::TextEmbedding& text,
                const std::vector<double>* color_token, int t, const Vec& z_noised,
                double guidance_scale) {
  const bool color_model = params.config().color_conditioned;
  if (color_token && !color_model)
    throw InputError("color token given to a prior without color conditioning");
  Conditioning cond{&text, color_token, false, color_model && !color_token};
  Conditioning null{nullptr, nullptr, true, true};
  const Sequence seqs[2] = {build_sequence(params, cond, t, z_noised),
                            build_sequence(params, null, t, z_noised)};
  const auto out = denoise_batch(params, seqs);
  return diffusion::cfg_combine(out[1], out[0], guidance_scale);
}

double loss_and_grad(const PriorParams& params, std::span<const Sequence> seqs,
                     std::span<const Vec> targets, FloatBuffer& grad) {
  if (seqs.empty()) throw InputError("empty training batch");
  if (seqs.size() != targets.size()) throw InputError("targets do not match sequences");
  const auto& c = params.config();
  const auto& lay = params.layout();
  const int d = c.width;
  const int L = c.seq_len();
  const int batch = static_cast<int>(seqs.size());
  if (grad.size() != params.count()) grad.assign(params.count(), 0.0f);

  ForwardCache cache;
  const MatF out = forward(params, embed_inputs(params, seqs), batch, &cache, nullptr);
  MatF dout(batch, d);
  double loss = 0.0;
  for (int b = 0; b < batch; ++b) {
    if (targets[b].size() != d) throw InputError("target width mismatch");
    for (int i = 0; i < d; ++i) {
      const double diff = static_cast<double>(out(b, i)) - targets[b][i];
      loss += diff * diff;
      dout(b, i) = static_cast<float>(2.0 * diff / batch);
    }
  }
  loss /= batch;
  if (!std::isfinite(loss)) throw NumericError("non-finite training loss");

  float* g = grad.data();
  const MatF dx = backward(params, cache, dout, batch, g);

  MapM dpos(g + lay.pos_emb, L, d);
  MapM dtime_w(g + lay.time_w, d, d);
  RowM dtime_b(g + lay.time_b, d);
  for (int b = 0; b < batch; ++b) {
    const auto& seq = seqs[b];
    for (int j = 0; j < L; ++j) {
      const auto row = dx.row(b * L + j);
      dpos.row(j) += row;
      switch (seq.sources[j]) {
        case SlotSource::null_text: RowM(g + lay.null_text, d) += row; break;
        case SlotSource::null_text_fill: RowM(g + lay.null_text_fill, d) += row; break;
        case SlotSource::null_color: RowM(g + lay.null_color, d) += row; break;
        case SlotSource::query: RowM(g + lay.query, d) += row; break;
        case SlotSource::timestep:
          dtime_w.noalias() += timestep_features(seq.t, d) * row;
          dtime_b += row;
          break;
        default: break;
      }
    }
  }
  return loss;
}

}  // namespace priorforge::prior
