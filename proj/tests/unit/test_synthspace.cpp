#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "priorforge/evalx.hpp"
#include "priorforge/synthspace.hpp"

using namespace priorforge;
using namespace priorforge::synth;

TEST_CASE("vocabulary ids and round trip") {
  const Vocabulary v;
  CHECK(v.size() == 16 + 4 + 8);
  CHECK(v.name(v.concept_token(0)) == "berry");
  CHECK(v.name(v.domain_token(Domain::photo)) == "photo");
  const auto ids = v.tokenize("red berry");
  REQUIRE(ids.size() == 2);
  CHECK(v.color_of_token(ids[0]).has_value());
  CHECK(v.is_concept(ids[1]));
  CHECK(v.detokenize(ids) == "red berry");
  CHECK_THROWS_AS(v.tokenize("red zeppelin"), InputError);
  CHECK(parse_domain("vector") == Domain::vector);
  CHECK_THROWS_AS(parse_domain("oil"), InputError);
}

TEST_CASE("coarse bins") {
  CHECK(coarse_bin({0, 0, 0}) == 0);
  CHECK(coarse_bin({1, 1, 1}) == 26);
  CHECK(coarse_bin_color(coarse_bin({1, 0.5, 0})) == Color{1, 0.5, 0});
  RasterPatch p(2, 2, {1, 0, 0});
  const auto h = coarse_rgb_histogram(p);
  CHECK(h[coarse_bin({1, 0, 0})] == 1.0);
}

TEST_CASE("projection has orthonormal columns and is seed-determined") {
  const EmbeddingSpace a, b;
  const Mat gram = a.projection().transpose() * a.projection();
  CHECK((gram - Mat::Identity(a.feature_dim(), a.feature_dim())).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(a.projection() == b.projection());
  SpaceConfig c;
  c.seed = 99;
  CHECK_FALSE(EmbeddingSpace(c).projection() == a.projection());
  SpaceConfig tiny;
  tiny.dim = 16;
  CHECK_THROWS_AS(EmbeddingSpace{tiny}, InputError);
}

TEST_CASE("encodings are unit norm and cross-modally aligned") {
  const EmbeddingSpace space;
  const auto& v = space.vocab();
  const auto text = space.encode_text(v.tokenize("kite"));
  CHECK(text.pooled.norm() == doctest::Approx(1.0));
  CHECK(text.tokens.rows() == 1);
  const RasterPatch patch = render_patch(7, Domain::vector, {{1, 0, 0}, {1, 1, 1}}, 3);
  const auto match = space.encode_image_exact(patch, 7, Domain::vector);
  const auto other = space.encode_image_exact(patch, 2, Domain::vector);
  CHECK(match.vec.norm() == doctest::Approx(1.0));
  CHECK(evalx::relevance_score(text, match) > evalx::relevance_score(text, other));
  CHECK_THROWS_AS(space.encode_text({}), InputError);
  CHECK_THROWS_AS(space.encode_text(std::vector<int>(9, 0)), InputError);
}

TEST_CASE("decode recovers concept, domain and dominant color") {
  const EmbeddingSpace space;
  for (int concept_id : {0, 5, 11, 15}) {
    for (int d = 0; d < kDomainCount; ++d) {
      const auto dom = static_cast<Domain>(d);
      const RasterPatch patch = render_patch(concept_id, dom, {{0, 0, 1}, {1, 1, 0}}, 9);
      const auto dec = space.decode(space.encode_image_exact(patch, concept_id, dom));
      CHECK(dec.concept_id == concept_id);
      CHECK(dec.domain == dom);
      CHECK_FALSE(dec.palette.empty());
      CHECK(dec.patch.height == 32);
    }
  }
  CHECK_THROWS_AS(space.decode({Vec::Zero(64)}), DegenerateEmbeddingError);
  CHECK_THROWS_AS(space.decode({Vec::Zero(10)}), InputError);
}

TEST_CASE("render_patch domains") {
  const RasterPatch iso = render_patch(0, Domain::isolated, {{1, 0, 0}}, 1);
  std::size_t white = 0;
  for (std::size_t i = 0; i < iso.pixel_count(); ++i)
    if (iso.pixel(i) == std::array<double, 3>{1, 1, 1}) ++white;
  const double coverage = 1.0 - static_cast<double>(white) / iso.pixel_count();
  CHECK(coverage > 0.2);
  CHECK(coverage < 0.4);
  CHECK(render_patch(3, Domain::texture, {{0, 1, 0}}, 5).pixels ==
        render_patch(3, Domain::texture, {{0, 1, 0}}, 5).pixels);
  CHECK_THROWS_AS(render_patch(0, Domain::photo, {}, 1), InputError);
  CHECK_THROWS_AS(render_patch(0, Domain::photo, {{2, 0, 0}}, 1), InputError);
}

TEST_CASE("dataset generation is deterministic and order independent") {
  const EmbeddingSpace space;
  DatasetSpec spec;
  spec.n = 400;
  const auto a = gen_dataset(space, spec);
  const auto b = gen_dataset(space, spec);
  REQUIRE(a.size() == 400);
  CHECK(dataset_fingerprint(a) == dataset_fingerprint(b));
  const auto r = gen_record(space, spec, 123);
  CHECK(r.image.vec == a[123].image.vec);
  CHECK(r.caption == a[123].caption);
  auto shuffled = a;
  std::reverse(shuffled.begin(), shuffled.end());
  CHECK(dataset_fingerprint(shuffled) == dataset_fingerprint(a));
  spec.seed = 8;
  CHECK(dataset_fingerprint(gen_dataset(space, spec)) != dataset_fingerprint(a));
}

TEST_CASE("domain mix and captions") {
  const EmbeddingSpace space;
  DatasetSpec spec;
  spec.n = 4000;
  const auto recs = gen_dataset(space, spec);
  std::array<int, kDomainCount> counts{};
  int with_color = 0;
  for (const auto& r : recs) {
    ++counts[static_cast<int>(r.domain)];
    CHECK(space.vocab().is_concept(r.caption.back()));
    CHECK(r.caption.back() == space.vocab().concept_token(r.concept_id));
    if (r.caption.size() == 2) ++with_color;
    CHECK(r.lab_hist.sum() == doctest::Approx(1.0));
  }
  for (int c : counts) CHECK(std::abs(c / 4000.0 - 0.25) < 0.03);
  CHECK(std::abs(with_color / 4000.0 - 0.3) < 0.03);

  spec.mix = {1.0, 0.0, 0.0, 0.0};
  spec.n = 200;
  for (const auto& r : gen_dataset(space, spec)) CHECK(r.domain == Domain::texture);
  spec.mix = {0.5, 0.6, 0.0, 0.0};
  CHECK_THROWS_AS(gen_dataset(space, spec), InputError);
}

TEST_CASE("noise-free embeddings are linearly separable by domain") {
  SpaceConfig c;
  c.noise_sigma = 0.0;
  const EmbeddingSpace space(c);
  DatasetSpec spec;
  spec.n = 600;
  const auto recs = gen_dataset(space, spec);
  const auto probe = evalx::train_domain_probe(recs);
  std::vector<Vec> x;
  std::vector<int> y;
  for (const auto& r : recs) {
    x.push_back(r.image.vec);
    y.push_back(static_cast<int>(r.domain));
  }
  CHECK(evalx::accuracy(probe, x, y) == 1.0);
}
