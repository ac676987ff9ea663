#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "priorforge/prior.hpp"

using namespace priorforge;
using namespace priorforge::prior;

namespace {

synth::TextEmbedding random_text(Rng& rng, int d, int words) {
  synth::TextEmbedding t;
  t.pooled = gaussian_vec(rng, d).normalized();
  t.tokens.resize(words, d);
  for (int i = 0; i < words; ++i) t.tokens.row(i) = gaussian_vec(rng, d).normalized().transpose();
  return t;
}

}  // namespace

TEST_CASE("sequence layout") {
  PriorConfig c;
  CHECK(c.seq_len() == 11);
  c.color_conditioned = true;
  CHECK(c.seq_len() == 12);
  CHECK(c.pooled_slot() == 1);
  CHECK(c.time_slot() == 9);
  CHECK(c.noised_slot() == 10);
  CHECK(c.query_slot() == 11);
}

// Hand count for width 64, depth 4, mlp 256:
//   embeddings: pos L*64, time 64*64+64, null_text/null_text_fill/null_color/query 4*64
//   block: 2*64 + 64*192+192 + 64*64+64 + 2*64 + 64*256+256 + 256*64+64 = 49984
//   head: 2*64 + 64*64+64
TEST_CASE("parameter count") {
  PriorConfig c;
  c.color_conditioned = true;
  CHECK(parameter_count(c) == 12 * 64 + 4160 + 256 + 4 * 49984 + 4288);
  c.color_conditioned = false;
  CHECK(parameter_count(c) == 11 * 64 + 4160 + 256 + 4 * 49984 + 4288);
  const auto p = PriorParams::initialize(c, 1);
  CHECK(p.count() == parameter_count(c));
  CHECK(p.layout().total == p.count());
  std::size_t sum = 0;
  for (const auto& t : p.layout().tensors) sum += t.size();
  CHECK(sum == p.count());
  c.heads = 5;
  CHECK_THROWS_AS(PriorParams::initialize(c, 1), InputError);
}

TEST_CASE("initialization is seeded") {
  PriorConfig c;
  const auto a = PriorParams::initialize(c, 3);
  const auto b = PriorParams::initialize(c, 3);
  const auto d = PriorParams::initialize(c, 4);
  CHECK(a.data() == b.data());
  CHECK_FALSE(a.data() == d.data());
  CHECK(a.all_finite());
}

TEST_CASE("timestep features") {
  const auto f = timestep_features(0, 8);
  for (int i = 0; i < 4; ++i) {
    CHECK(f[i] == 0.0f);
    CHECK(f[4 + i] == 1.0f);
  }
  const auto g = timestep_features(3, 8);
  CHECK(g[0] == doctest::Approx(std::sin(3.0)));
  CHECK(g[4] == doctest::Approx(std::cos(3.0)));
  CHECK(g[3] == doctest::Approx(std::sin(3e-4)));
}

TEST_CASE("build_sequence places conditioning") {
  PriorConfig c;
  c.color_conditioned = true;
  const auto p = PriorParams::initialize(c, 2);
  Rng rng(1);
  const auto text = random_text(rng, 64, 2);
  std::vector<double> col(64, 0.125);
  const Vec z = gaussian_vec(rng, 64);
  const auto s = build_sequence(p, {&text, &col, false, false}, 17, z);
  CHECK(s.tokens.rows() == 12);
  CHECK(s.sources[0] == SlotSource::external);
  CHECK(s.tokens(0, 5) == 0.125f);
  CHECK(s.tokens(1, 0) == static_cast<float>(text.pooled[0]));
  CHECK(s.sources[4] == SlotSource::pad);
  CHECK(s.sources[c.time_slot()] == SlotSource::timestep);
  CHECK(s.sources[c.query_slot()] == SlotSource::query);
  const auto dropped = build_sequence(p, {&text, &col, false, true}, 17, z);
  CHECK(dropped.sources[0] == SlotSource::null_color);
  const auto none = build_sequence(p, {nullptr, nullptr, true, true}, 17, z);
  CHECK(none.sources[1] == SlotSource::null_text);

  PriorConfig plain;
  const auto q = PriorParams::initialize(plain, 2);
  CHECK_THROWS_AS(build_sequence(q, {&text, &col, false, false}, 17, z), InputError);
  CHECK_THROWS_AS(build_sequence(q, {&text, nullptr, false, false}, 17, Vec::Zero(3)), InputError);
}

TEST_CASE("attention is causal in every layer") {
  PriorConfig c;
  c.color_conditioned = true;
  c.depth = 3;
  const auto p = PriorParams::initialize(c, 8);
  Rng rng(4);
  const auto text = random_text(rng, 64, 3);
  std::vector<double> col(64, 0.1);
  const auto base = build_sequence(p, {&text, &col, false, false}, 300, gaussian_vec(rng, 64));
  const auto h0 = hidden_states(p, base);
  REQUIRE(h0.size() == 4);
  for (int j = 0; j < c.seq_len(); ++j) {
    auto pert = base;
    pert.tokens.row(j).array() += 0.7f;
    const auto h1 = hidden_states(p, pert);
    for (std::size_t layer = 0; layer < h0.size(); ++layer) {
      for (int i = 0; i < j; ++i) CHECK(h1[layer].row(i) == h0[layer].row(i));
      CHECK_FALSE(h1[layer].row(j) == h0[layer].row(j));
    }
  }
}

TEST_CASE("batched and single denoise agree") {
  PriorConfig c;
  const auto p = PriorParams::initialize(c, 5);
  Rng rng(6);
  const auto t1 = random_text(rng, 64, 1);
  const auto t2 = random_text(rng, 64, 4);
  std::vector<Sequence> seqs{build_sequence(p, {&t1}, 10, gaussian_vec(rng, 64)),
                             build_sequence(p, {&t2}, 900, gaussian_vec(rng, 64))};
  const auto batch = denoise_batch(p, seqs);
  for (int i = 0; i < 2; ++i) CHECK((batch[i] - denoise(p, seqs[i])).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("CFG endpoints") {
  PriorConfig c;
  c.color_conditioned = true;
  const auto p = PriorParams::initialize(c, 9);
  Rng rng(2);
  const auto text = random_text(rng, 64, 2);
  std::vector<double> col(64, 0.1);
  const Vec z = gaussian_vec(rng, 64);
  const Vec cond = denoise(p, build_sequence(p, {&text, &col, false, false}, 50, z));
  const Vec text_only = denoise(p, build_sequence(p, {&text, &col, false, true}, 50, z));
  const Vec null = denoise(p, build_sequence(p, {&text, &col, true, true}, 50, z));
  CHECK((cfg_denoise(p, text, &col, 50, z, 1.0) - cond).norm() < 1e-9);
  CHECK((cfg_denoise(p, text, &col, 50, z, 0.0) - null).norm() < 1e-9);
  CHECK((cfg_denoise(p, text, nullptr, 50, z, 1.0) - text_only).norm() < 1e-9);
  const Vec g = cfg_denoise(p, text, &col, 50, z, 4.0);
  CHECK(((g - null) - 4.0 * (cond - null)).norm() < 1e-6);
}

TEST_CASE("analytic gradient matches finite differences") {
  PriorConfig c;
  c.width = 8;
  c.depth = 2;
  c.heads = 2;
  c.max_text_tokens = 3;
  c.color_conditioned = true;
  c.timesteps = 50;
  auto p = PriorParams::initialize(c, 3);
  for (auto& v : p.data()) v *= 10.0f;
  for (const auto& t : p.layout().tensors)
    if (t.name.ends_with("_g"))
      for (std::size_t i = 0; i < t.size(); ++i) p.data()[t.offset + i] = 1.0f + 0.1f * i;
  Rng rng(5);
  const auto text = random_text(rng, 8, 1);
  std::vector<double> col(8, 0.3);
  const Vec za = gaussian_vec(rng, 8), zb = gaussian_vec(rng, 8);
  const std::vector<Vec> targets{gaussian_vec(rng, 8), gaussian_vec(rng, 8)};
  auto seqs = [&](const PriorParams& q) {
    return std::vector<Sequence>{build_sequence(q, {&text, &col, false, false}, 7, za),
                                 build_sequence(q, {nullptr, nullptr, true, true}, 30, zb)};
  };
  FloatBuffer grad;
  loss_and_grad(p, seqs(p), targets, grad);
  REQUIRE(grad.size() == p.count());
  double worst = 0.0;
  for (std::size_t k = 0; k < p.count(); ++k) {
    const float o = p.data()[k];
    const float h = 1e-2f * std::max(1.0f, std::abs(o));
    FloatBuffer scratch;
    p.data()[k] = o + h;
    const double lp = loss_and_grad(p, seqs(p), targets, scratch);
    p.data()[k] = o - h;
    const double lm = loss_and_grad(p, seqs(p), targets, scratch);
    p.data()[k] = o;
    const double fd = (lp - lm) / (2.0 * h);
    worst = std::max(worst, std::abs(fd - grad[k]) / std::max(1e-2, std::abs(fd) + std::abs(grad[k])));
  }
  CHECK(worst < 0.05);
}
