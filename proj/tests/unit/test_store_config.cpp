#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <map>

#include "priorforge/pipeline.hpp"

using namespace priorforge;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("priorforge_unit_store_" + name);
  fs::remove_all(p);
  return p;
}

std::map<std::string, std::vector<unsigned char>> snapshot(const fs::path& dir) {
  std::map<std::string, std::vector<unsigned char>> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file())
      out[fs::relative(e.path(), dir).string()] = io::read_file(e.path().string());
  return out;
}

config::RunConfig small_config() {
  config::RunConfig rc;
  rc.dataset.spec.n = 120;
  rc.dataset.preview_count = 5;
  rc.model.depth = 1;
  rc.train.steps = 5;
  rc.train.batch_size = 8;
  return rc;
}

}  // namespace

TEST_CASE("config defaults and strictness") {
  const auto rc = config::run_config_from_json(json::object());
  CHECK(rc.dataset.spec.n == 10000);
  CHECK(rc.sample.steps == 100);
  CHECK(rc.sample.k == 10);
  CHECK(rc.sample.guidance_scale == 3.0);
  CHECK(rc.train.dropout.p_drop_both == 0.1);
  CHECK_THROWS_AS(config::run_config_from_json(json{{"bogus", 1}}), InputError);
  CHECK_THROWS_AS(config::run_config_from_json(json{{"train", {{"stepz", 3}}}}), InputError);
  CHECK_THROWS_AS(config::run_config_from_json(json{{"train", {{"steps", "many"}}}}), InputError);
  CHECK_THROWS_AS(config::run_config_from_json(json{{"train", {{"domain", "oil"}}}}), InputError);
  CHECK_THROWS_AS(config::run_config_from_json(json{{"model", {{"heads", 7}}}}), InputError);
  const auto part = config::run_config_from_json(json{{"sample", {{"k", 3}}}, {"train", {{"domain", "vector"}}}});
  CHECK(part.sample.k == 3);
  CHECK(part.sample.steps == 100);
  CHECK(part.train.domain_filter == synth::Domain::vector);
}

TEST_CASE("config JSON round trip") {
  config::RunConfig rc = small_config();
  rc.train.domain_filter = synth::Domain::isolated;
  rc.model.color_conditioned = true;
  rc.model.schedule = diffusion::ScheduleKind::linear;
  rc.dataset.spec.mix = {0.1, 0.2, 0.3, 0.4};
  rc.eval.guidance_sweep = {1.5};
  const json j = config::to_json(rc);
  const auto back = config::run_config_from_json(j);
  CHECK(config::to_json(back) == j);
  CHECK(back.model == rc.model);
  CHECK(back.space == rc.space);
}

TEST_CASE("dataset directory round-trips byte for byte") {
  const auto dir = scratch_dir("ds");
  const auto rc = small_config();
  const json counts = pipeline::gen_data(rc, dir.string());
  CHECK(counts.at("records") == 120);
  CHECK(fs::exists(dir / "previews" / "000004.ppm"));
  CHECK_FALSE(fs::exists(dir / "previews" / "000005.ppm"));
  const auto ds = store::read_dataset(dir.string());
  REQUIRE(ds.records.size() == 120);
  const auto again = scratch_dir("ds_again");
  store::write_dataset(again.string(), ds.records, ds.config);
  CHECK(snapshot(dir) == snapshot(again));

  const auto rerun = scratch_dir("ds_rerun");
  pipeline::gen_data(rc, rerun.string());
  CHECK(snapshot(dir) == snapshot(rerun));

  const auto fresh = synth::gen_dataset(synth::EmbeddingSpace(rc.space), rc.dataset.spec);
  CHECK(ds.records[7].caption == fresh[7].caption);
  CHECK((ds.records[7].image.vec - fresh[7].image.vec).cwiseAbs().maxCoeff() < 1e-7);
  CHECK(ds.records[7].text.tokens.rows() == fresh[7].text.tokens.rows());
  CHECK_THROWS_AS(store::read_dataset((dir / "nothing").string()), InputError);
}

TEST_CASE("single-domain datasets and histogram-free datasets") {
  auto rc = small_config();
  pipeline::restrict_domains(rc, {synth::Domain::texture});
  const auto dir = scratch_dir("tex");
  const json counts = pipeline::gen_data(rc, dir.string());
  CHECK(counts.at("per_domain").at("texture") == 120);
  CHECK(counts.at("per_domain").at("photo") == 0);

  auto nh = small_config();
  nh.dataset.with_histograms = false;
  const auto ndir = scratch_dir("nohist");
  pipeline::gen_data(nh, ndir.string());
  CHECK_FALSE(fs::exists(ndir / "lab_hist.prft"));
  auto train_rc = nh;
  train_rc.model.color_conditioned = true;
  CHECK_THROWS_AS(pipeline::train_prior(ndir.string(), train_rc, (ndir / "m.prfm").string()),
                  InputError);
}

TEST_CASE("model files round-trip byte for byte") {
  prior::PriorConfig pc;
  pc.depth = 2;
  pc.color_conditioned = true;
  const auto p = prior::PriorParams::initialize(pc, 4);
  config::RunConfig rc;
  rc.model = pc;
  const json meta = {{"domain_filter", "texture"}};
  const auto bytes = store::encode_model(p, rc, meta);
  const auto m = store::decode_model(bytes);
  CHECK(m.params.config() == pc);
  CHECK(m.params.data() == p.data());
  CHECK(m.header.at("meta") == meta);
  CHECK(m.header.at("schedule").at("kind") == "cosine");
  CHECK(store::encode_model(m.params, config::run_config_from_json(m.run_config()), m.header.at("meta")) ==
        bytes);
  auto cut = bytes;
  cut.resize(cut.size() - 3);
  CHECK_THROWS_AS(store::decode_model(cut), InputError);
  auto bad = bytes;
  bad[1] = 'X';
  CHECK_THROWS_AS(store::decode_model(bad), InputError);
}

TEST_CASE("holdout split takes the id tail") {
  std::vector<synth::DatasetRecord> recs(20);
  for (std::size_t i = 0; i < recs.size(); ++i) recs[i].id = 19 - i;
  const auto [train, held] = store::split_holdout(recs, 0.1);
  CHECK(train.size() == 18);
  REQUIRE(held.size() == 2);
  CHECK(held[0].id == 18);
  CHECK(held[1].id == 19);
  CHECK_THROWS_AS(store::split_holdout(recs, 1.0), InputError);
}

TEST_CASE("pipeline train, sample and compose") {
  const auto dir = scratch_dir("pipe");
  auto rc = small_config();
  pipeline::gen_data(rc, (dir / "ds").string());
  rc.train.domain_filter = synth::Domain::vector;
  const json rep = pipeline::train_prior((dir / "ds").string(), rc, (dir / "v.prfm").string());
  CHECK(rep.at("domain_filter") == "vector");
  const auto m = store::read_model((dir / "v.prfm").string());
  CHECK(m.header.at("meta").at("domain_filter") == "vector");
  CHECK(fs::exists(dir / "v.prfm.report.json"));

  pipeline::SampleRequest req;
  req.prompts = {"red kite", "tile"};
  req.sample.steps = 5;
  req.sample.k = 2;
  const json s = pipeline::sample((dir / "v.prfm").string(), req, (dir / "s").string());
  CHECK(s.at("samples").size() == 2);
  CHECK(fs::exists(dir / "s" / "prompt_001.ppm"));

  req.color_image = (dir / "ds" / "previews" / "000000.ppm").string();
  CHECK_THROWS_AS(pipeline::sample((dir / "v.prfm").string(), req, (dir / "s2").string()),
                  InputError);
  req.color_image.reset();
  pipeline::compose({(dir / "v.prfm").string(), (dir / "v.prfm").string()}, {1.0, 0.0}, req,
                    (dir / "c").string());
  CHECK(io::read_file((dir / "c" / "prompt_000.ppm").string()) ==
        io::read_file((dir / "s" / "prompt_000.ppm").string()));
  CHECK_THROWS_AS(pipeline::compose({(dir / "v.prfm").string(), (dir / "v.prfm").string()},
                                    {0.6, 0.6}, req, (dir / "c2").string()),
                  InputError);
}
