#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "priorforge/train.hpp"

using namespace priorforge;
using namespace priorforge::train;

TEST_CASE("dropout frequencies follow the nested plan") {
  Rng rng(21);
  const int n = 100000;
  int both = 0, color_only = 0, kept = 0;
  for (int i = 0; i < n; ++i) {
    const auto m = dropout_mask(rng, true);
    CHECK_FALSE((m.drop_text && !m.drop_color));
    if (m.drop_text) ++both;
    else if (m.drop_color) ++color_only;
    else ++kept;
  }
  CHECK(std::abs(both / double(n) - 0.10) < 0.01);
  CHECK(std::abs(color_only / double(n) - 0.45) < 0.01);
  CHECK(std::abs(kept / double(n) - 0.45) < 0.01);

  Rng plain(21);
  int text_dropped = 0;
  for (int i = 0; i < n; ++i) {
    const auto m = dropout_mask(plain, false);
    CHECK(m.drop_color);
    if (m.drop_text) ++text_dropped;
  }
  CHECK(std::abs(text_dropped / double(n) - 0.10) < 0.01);

  Rng none(1);
  CHECK(dropout_mask(none, true, DropoutPlan::none()) == DropMask{});
  CHECK_THROWS_AS((DropoutPlan{1.5, 0.0}.validate()), InputError);
}

TEST_CASE("mask streams stay aligned across color and plain models") {
  Rng a(5), b(5);
  for (int i = 0; i < 100; ++i) {
    const auto ma = dropout_mask(a, true);
    const auto mb = dropout_mask(b, false);
    CHECK(ma.drop_text == mb.drop_text);
  }
  CHECK(a() == b());
}

TEST_CASE("learning-rate schedule") {
  TrainConfig c;
  c.steps = 1000;
  c.optimizer.warmup_steps = 100;
  c.final_lr_fraction = 0.1;
  CHECK(lr_scale_at(c, 0) == doctest::Approx(0.01));
  CHECK(lr_scale_at(c, 99) == doctest::Approx(1.0));
  CHECK(lr_scale_at(c, 999) == doctest::Approx(0.1).epsilon(1e-3));
  double prev = 2.0;
  for (long s = 100; s < 1000; ++s) {
    const double v = lr_scale_at(c, s);
    CHECK(v <= prev + 1e-12);
    prev = v;
  }
}

TEST_CASE("AdamW decays only weight matrices and clips the global norm") {
  prior::PriorConfig pc;
  pc.width = 8;
  pc.depth = 1;
  pc.heads = 2;
  auto p = prior::PriorParams::initialize(pc, 1);
  const auto before = p.data();
  AdamWConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.5;
  cfg.warmup_steps = 0;
  AdamW opt(p.count(), cfg);
  prior::FloatBuffer grad(p.count(), 0.0f);
  opt.step(p, grad, 1.0);
  for (const auto& t : p.layout().tensors) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      const float b = before[t.offset + i];
      const float a = p.data()[t.offset + i];
      if (t.name.ends_with("_w")) CHECK(a == doctest::Approx(b * (1.0 - 0.05)));
      else CHECK(a == b);
    }
  }
  prior::FloatBuffer bad(p.count(), 0.0f);
  bad[0] = NAN;
  CHECK_THROWS_AS(opt.step(p, bad, 1.0), NumericError);
}

TEST_CASE("training reduces loss and is reproducible") {
  const synth::EmbeddingSpace space;
  synth::DatasetSpec spec;
  spec.n = 300;
  const auto records = synth::gen_dataset(space, spec);
  prior::PriorConfig pc;
  pc.depth = 2;
  TrainConfig tc;
  tc.steps = 60;
  tc.batch_size = 16;
  tc.log_every = 10;
  tc.optimizer.lr = 1e-3;
  tc.optimizer.warmup_steps = 5;
  const auto a = train_prior(records, pc, tc);
  const auto b = train_prior(records, pc, tc);
  CHECK(a.params.data() == b.params.data());
  const auto& curve = a.report.at("loss_curve");
  REQUIRE(curve.size() == 6);
  CHECK(curve.back().at("loss").get<double>() < curve.front().at("loss").get<double>());
  CHECK(a.report.at("records").get<std::size_t>() == 300);

  auto reversed = records;
  std::reverse(reversed.begin(), reversed.end());
  CHECK(train_prior(reversed, pc, tc).params.data() == a.params.data());

  tc.domain_filter = synth::Domain::vector;
  const auto v = train_prior(records, pc, tc);
  CHECK(v.report.at("domain_filter") == "vector");
  CHECK(v.report.at("records").get<std::size_t>() == filter_by_domain(records, synth::Domain::vector).size());
  CHECK_THROWS_AS(train_prior({}, pc, tc), InputError);
}

TEST_CASE("probe-based curation keeps confident records") {
  const synth::EmbeddingSpace space;
  synth::DatasetSpec spec;
  spec.n = 400;
  const auto records = synth::gen_dataset(space, spec);
  const auto probe = evalx::train_domain_probe(records);
  const auto kept = filter_dataset_by_probe(records, probe, "texture", 0.5);
  CHECK_FALSE(kept.empty());
  for (const auto& r : kept) CHECK(r.domain == synth::Domain::texture);
}
