#include <doctest.h>

#include "emadapt/config.hpp"
#include "emadapt/io.hpp"
#include "helpers.hpp"

using namespace emadapt;

namespace {

template <class T>
T round_trip(const T& value) {
  Json j = value;
  T back;
  from_json(parse_json(dump_json(j)), back);
  return back;
}

RunRecord record(std::uint64_t seed, double vi) {
  RunRecord r;
  r.target = "T";
  r.mode = AdaptMode::kActiveMinMmd;
  r.sampler = SamplerKind::kMedianUncertainty;
  r.plan = plan_budget(4, 8, 4);
  r.seed = seed;
  Evaluation e;
  e.mean.vi_total = vi;
  e.mean.vi_split = vi / 2;
  e.mean.vi_merge = vi / 2;
  r.test = e;
  return r;
}

}  // namespace

TEST_SUITE("config") {

TEST_CASE("config structs round trip") {
  ModelConfig m;
  m.depth = 2;
  m.dropout_rate = 0.25;
  CHECK(round_trip(m) == m);
  TrainConfig t;
  t.learning_rate = 5e-4;
  t.seed = 9;
  CHECK(round_trip(t) == t);
  DomainSpec d;
  d.name = "z";
  d.white_stripe_prob = 0.3;
  const DomainSpec db = round_trip(d);
  CHECK(db.name == "z");
  CHECK(db.white_stripe_prob == 0.3);
  KernelConfig k{2.5};
  CHECK(round_trip(k).bandwidth == 2.5);
  CHECK(!round_trip(KernelConfig{}).bandwidth.has_value());
  CHECK(Json(KernelConfig{})["bandwidth"] == "median-heuristic");
  AdaptConfig a;
  a.mode = AdaptMode::kActiveMaxMmd;
  a.sampler = SamplerKind::kClue;
  a.annotations = 7;
  const AdaptConfig ab = round_trip(a);
  CHECK(ab.mode == a.mode);
  CHECK(ab.sampler == a.sampler);
  CHECK(ab.annotations == 7);
  GridConfig g;
  g.targets = {"A1"};
  g.seeds = {4, 5};
  const GridConfig gb = round_trip(g);
  CHECK(gb.targets == g.targets);
  CHECK(gb.seeds == g.seeds);
  CHECK(gb.modes == g.modes);
}

TEST_CASE("partial configs keep defaults") {
  ModelConfig m;
  from_json(parse_json(R"({"depth": 2})"), m);
  CHECK(m.depth == 2);
  CHECK(m.base_channels == ModelConfig{}.base_channels);
}

TEST_CASE("bad configs") {
  ModelConfig m;
  CHECK_ERROR_CODE(from_json(parse_json(R"({"depht": 2})"), m), ErrorCode::kInvalidConfig);
  CHECK_ERROR_CODE(from_json(parse_json(R"({"depth": "two"})"), m), ErrorCode::kInvalidConfig);
  KernelConfig k;
  CHECK_ERROR_CODE(from_json(parse_json(R"({"bandwidth": "wide"})"), k), ErrorCode::kInvalidConfig);
  CHECK_ERROR_CODE(parse_json("{ nope"), ErrorCode::kParse);
}

TEST_CASE("run manifest aggregation") {
  TempDir dir("runs");
  const std::vector<RunRecord> records{record(0, 0.5), record(1, 0.6), record(2, 0.7)};
  const Json cfg{{"note", "x"}};
  write_run_manifest(cfg, records, dir / "summary.json");
  const Json j = parse_json(read_text(dir / "summary.json"));
  REQUIRE(j["groups"].size() == 1);
  const Json& g = j["groups"][0];
  CHECK(g["mean"].get<double>() == doctest::Approx(0.6).epsilon(1e-14));
  CHECK(g["std"].get<double>() == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(g["seeds"] == Json::array({0, 1, 2}));
  // Reloading the per-seed values reproduces the aggregate.
  std::vector<double> vis;
  for (const auto& v : g["vi"]) vis.push_back(v["vi_total"].get<double>());
  const MeanSd again = mean_sd(vis);
  CHECK(again.mean == g["mean"].get<double>());
  CHECK(again.sd == g["std"].get<double>());
  const std::string csv = read_text(dir / "summary.csv");
  CHECK(csv.rfind("target,method,transfer_domain,sample_size,seed,vi_split,vi_merge,vi_total\n", 0) == 0);
  CHECK(j["config_hash"].get<std::string>().size() == 40);
  CHECK_ERROR_CODE(run_manifest(cfg, std::vector<RunRecord>{}), ErrorCode::kEmptyRun);
}

}
