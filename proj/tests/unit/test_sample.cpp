#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "priorforge/sample.hpp"

using namespace priorforge;
using namespace priorforge::sample;

namespace {

struct Fixture {
  synth::EmbeddingSpace space;
  prior::PriorParams plain = prior::PriorParams::initialize(cfg(false), 1);
  prior::PriorParams color = prior::PriorParams::initialize(cfg(true), 2);
  synth::TextEmbedding text = space.encode_text(space.vocab().tokenize("red kite"));

  static prior::PriorConfig cfg(bool color) {
    prior::PriorConfig c;
    c.depth = 2;
    c.color_conditioned = color;
    return c;
  }
};

SampleConfig quick(int k = 1, std::uint64_t seed = 0) {
  SampleConfig c;
  c.steps = 10;
  c.k = k;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("candidate seeds are nested") {
  CHECK(candidate_seed(77, 0) == 77);
  CHECK(candidate_seed(77, 3) == derive_seed(77, 3));
}

TEST_CASE("argmax ties go to the lowest index") {
  const std::vector<double> s{0.1, 0.5, 0.5, 0.2};
  CHECK(argmax_score(s) == 1);
  CHECK_THROWS_AS(argmax_score(std::vector<double>{}), InputError);
}

TEST_CASE("sampling is deterministic and unit norm") {
  Fixture f;
  const auto a = sample_embedding(f.plain, f.text, nullptr, quick());
  const auto b = sample_embedding(f.plain, f.text, nullptr, quick());
  CHECK(a.vec == b.vec);
  CHECK(a.vec.norm() == doctest::Approx(1.0));
  CHECK_FALSE(sample_embedding(f.plain, f.text, nullptr, quick(1, 5)).vec == a.vec);
  SampleConfig bad = quick();
  bad.steps = 0;
  CHECK_THROWS_AS(sample_embedding(f.plain, f.text, nullptr, bad), InputError);
}

TEST_CASE("best-of-k with nested seeds never scores below k=1") {
  Fixture f;
  const auto one = best_of_k(f.plain, f.text, nullptr, quick(1, 9));
  const auto ten = best_of_k(f.plain, f.text, nullptr, quick(10, 9));
  REQUIRE(ten.scores.size() == 10);
  CHECK(ten.scores[0] == one.score);
  CHECK(ten.score >= one.score);
  CHECK(one.embedding.vec == sample_embedding(f.plain, f.text, nullptr, quick(1, 9)).vec);
}

TEST_CASE("composition validation") {
  Fixture f;
  const std::vector<PriorTerm> terms{{&f.plain, &f.text, nullptr}, {&f.color, &f.text, nullptr}};
  CHECK_THROWS_AS(compose_sample(terms, std::vector<double>{0.7, 0.2}, quick()), InputError);
  CHECK_THROWS_AS(compose_sample(terms, std::vector<double>{1.5, -0.5}, quick()), InputError);
  CHECK_THROWS_AS(compose_sample(terms, std::vector<double>{1.0}, quick()), InputError);

  prior::PriorConfig narrow;
  narrow.width = 32;
  narrow.depth = 1;
  const auto small = prior::PriorParams::initialize(narrow, 3);
  const std::vector<PriorTerm> mixed{{&f.plain, &f.text, nullptr}, {&small, &f.text, nullptr}};
  CHECK_THROWS_AS(compose_sample(mixed, std::vector<double>{0.5, 0.5}, quick()), InputError);

  prior::PriorConfig lin = Fixture::cfg(false);
  lin.schedule = diffusion::ScheduleKind::linear;
  const auto linear = prior::PriorParams::initialize(lin, 3);
  const std::vector<PriorTerm> sched{{&f.plain, &f.text, nullptr}, {&linear, &f.text, nullptr}};
  CHECK_THROWS_AS(compose_sample(sched, std::vector<double>{0.5, 0.5}, quick()), InputError);

  std::vector<double> tok(64, 0.1);
  const std::vector<PriorTerm> wrong{{&f.plain, &f.text, &tok}, {&f.color, &f.text, nullptr}};
  CHECK_THROWS_AS(compose_sample(wrong, std::vector<double>{0.5, 0.5}, quick()), InputError);
}

TEST_CASE("weights (1,0) reproduce the single-prior sample bitwise") {
  Fixture f;
  const std::vector<PriorTerm> terms{{&f.plain, &f.text, nullptr}, {&f.color, &f.text, nullptr}};
  const auto single = best_of_k(f.plain, f.text, nullptr, quick(3, 4));
  const auto composed = compose_best_of_k(terms, std::vector<double>{1.0, 0.0}, quick(3, 4));
  CHECK(single.embedding.vec == composed.embedding.vec);
  CHECK(single.scores == composed.scores);
  const auto mixed = compose_sample(terms, std::vector<double>{0.5, 0.5}, quick());
  CHECK(mixed.vec.allFinite());
}

TEST_CASE("generate reports decoded output and color metrics") {
  Fixture f;
  const RasterPatch exemplar(16, 16, {0.1, 0.2, 0.9});
  const auto g = generate(f.space.vocab().tokenize("kite"), &exemplar, f.color, f.space, quick(2));
  CHECK(g.report.at("prompt") == "kite");
  CHECK(g.report.contains("hellinger"));
  CHECK(g.report.contains("kl_divergence"));
  CHECK(g.report.at("scores").size() == 2);
  CHECK(g.patch.height == 32);
  CHECK_THROWS_AS(generate(f.space.vocab().tokenize("kite"), &exemplar, f.plain, f.space, quick()),
                  InputError);
  const auto plain = generate(f.space.vocab().tokenize("kite"), nullptr, f.plain, f.space, quick());
  CHECK_FALSE(plain.report.contains("hellinger"));
}
