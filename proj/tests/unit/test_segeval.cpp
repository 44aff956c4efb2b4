#include <doctest.h>

#include <cmath>
#include <set>

#include "emadapt/rng.hpp"
#include "emadapt/segeval.hpp"
#include "emadapt/synthdomains.hpp"
#include "emadapt/text.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace emadapt;

namespace {

std::size_t instance_count(const LabelMap& m) {
  std::set<std::uint32_t> s(m.labels().begin(), m.labels().end());
  return s.size();
}

LabelMap row(std::vector<std::uint32_t> v) {
  const int w = static_cast<int>(v.size());
  return LabelMap(w, 1, std::move(v));
}

}  // namespace

TEST_SUITE("segeval") {

TEST_CASE("flat background gives one instance") {
  const std::vector<double> zero(16 * 16, 0.0);
  WatershedConfig c;
  const LabelMap seeds = watershed_seeds(zero, 16, 16, c);
  CHECK(instance_count(seeds) == 1);
  const LabelMap ws = seeded_watershed(zero, 16, 16, c);
  CHECK(instance_count(ws) == 1);
  CHECK(ws.at(0, 0) == 1);
}

TEST_CASE("a vertical ridge splits the image in two") {
  std::vector<double> m(16 * 16, 0.0);
  for (int y = 0; y < 16; ++y) m[static_cast<std::size_t>(y) * 16 + 7] = 1.0;
  const LabelMap ws = seeded_watershed(m, 16, 16, WatershedConfig{});
  CHECK(instance_count(ws) == 2);
  CHECK(ws.at(0, 0) != ws.at(15, 15));
}

TEST_CASE("no seeds") {
  const std::vector<double> ones(64, 1.0);
  CHECK_ERROR_CODE(watershed_seeds(ones, 8, 8, WatershedConfig{}), ErrorCode::kNoSeeds);
  // Seeds smaller than the minimum area do not count.
  std::vector<double> speck(64, 1.0);
  speck[9] = 0.0;
  CHECK_ERROR_CODE(watershed_seeds(speck, 8, 8, WatershedConfig{}), ErrorCode::kNoSeeds);
  WatershedConfig tiny;
  tiny.min_seed_area = 1;
  CHECK(instance_count(watershed_seeds(speck, 8, 8, tiny)) == 2);
}

TEST_CASE("seeds are labeled in raster order") {
  std::vector<double> m(4 * 4, 1.0);
  m[3] = 0.0;   // (3, 0)
  m[12] = 0.0;  // (0, 3)
  WatershedConfig c;
  c.min_seed_area = 1;
  const LabelMap s = watershed_seeds(m, 4, 4, c);
  CHECK(s.at(3, 0) == 1);
  CHECK(s.at(0, 3) == 2);
}

TEST_CASE("watershed of ground-truth membranes reproduces the instances") {
  DomainSpec spec;
  spec.seed = 4;
  for (std::size_t i = 0; i < 5; ++i) {
    const Sample s = generate_sample(spec, i);
    const LabelMap ws = seeded_watershed(membrane_probs_from_labels(*s.labels), WatershedConfig{});
    CHECK(variation_of_information(ws, *s.labels).vi_total <= 0.05);
  }
}

TEST_CASE("VI hand example") {
  const VIResult r = variation_of_information(row({1, 1, 1, 1}), row({1, 1, 2, 2}));
  CHECK(r.vi_split == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  CHECK(r.vi_merge == 0.0);
  CHECK(r.pixel_count == 4);
}

TEST_CASE("VI is zero under relabeling and symmetric with roles swapped") {
  const LabelMap a = row({1, 1, 2, 2, 3, 3});
  const LabelMap b = row({7, 7, 5, 5, 9, 9});
  CHECK(variation_of_information(b, a).vi_total == 0.0);
  const LabelMap c = row({1, 2, 2, 2, 3, 1});
  const VIResult ab = variation_of_information(c, a, false);
  const VIResult ba = variation_of_information(a, c, false);
  CHECK(ab.vi_split == doctest::Approx(ba.vi_merge).epsilon(1e-14));
  CHECK(ab.vi_merge == doctest::Approx(ba.vi_split).epsilon(1e-14));
}

TEST_CASE("VI agrees with the entropy-identity oracle") {
  SeededRng rng(17);
  for (int trial = 0; trial < 300; ++trial) {
    const int w = 1 + static_cast<int>(rng.uniform_index(6));
    const int h = 1 + static_cast<int>(rng.uniform_index(6));
    const std::size_t n = static_cast<std::size_t>(w * h);
    std::vector<std::uint32_t> p(n);
    std::vector<std::uint32_t> g(n);
    const std::size_t kp = 1 + rng.uniform_index(4);
    const std::size_t kg = 1 + rng.uniform_index(4);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = static_cast<std::uint32_t>(rng.uniform_index(kp));
      g[i] = static_cast<std::uint32_t>(rng.uniform_index(kg));
    }
    const bool ignore = trial % 2 == 0;
    const auto o = oracle::variation_of_information(p, g, ignore);
    const LabelMap pm(w, h, p);
    const LabelMap gm(w, h, g);
    bool counted = !ignore;
    for (auto v : g) counted = counted || v != 0;
    if (!counted) {
      CHECK_ERROR_CODE(variation_of_information(pm, gm, ignore), ErrorCode::kZeroPixels);
      continue;
    }
    const VIResult r = variation_of_information(pm, gm, ignore);
    CHECK(std::abs(r.vi_split - static_cast<double>(o.split)) <= 1e-12);
    CHECK(std::abs(r.vi_merge - static_cast<double>(o.merge)) <= 1e-12);
    CHECK(std::abs(r.vi_total - static_cast<double>(o.total)) <= 1e-12);
  }
}

TEST_CASE("shape mismatch") {
  CHECK_ERROR_CODE(variation_of_information(row({1, 1}), row({1, 1, 1})), ErrorCode::kShapeError);
}

TEST_CASE("pool evaluation means") {
  DomainSpec spec;
  spec.seed = 8;
  const Sample a = generate_sample(spec, 0);
  const Sample b = generate_sample(spec, 1);
  // A prediction that merges everything scores badly; the GT one scores well.
  ProbMap blank(64, 64, 2);
  for (std::size_t p = 0; p < 4096; ++p) {
    blank.value(0, p) = 0.0;
    blank.value(1, p) = 1.0;
  }
  const DomainPool one("d", {a});
  const std::vector<ProbMap> pa{blank};
  const Evaluation e1 = evaluate_predictions(pa, one, WatershedConfig{});
  CHECK(e1.mean.vi_total == e1.per_image[0].vi.vi_total);

  const DomainPool two("d", {a, b});
  const std::vector<ProbMap> pb{membrane_probs_from_labels(*a.labels),
                                membrane_probs_from_labels(*b.labels)};
  const Evaluation e2 = evaluate_predictions(pb, two, WatershedConfig{});
  CHECK(e2.mean.vi_total <= 0.05);

  const DomainPool dup("d", {a, a});
  const std::vector<ProbMap> pd{blank, blank};
  CHECK(evaluate_predictions(pd, dup, WatershedConfig{}).mean.vi_total ==
        doctest::Approx(e1.mean.vi_total).epsilon(1e-15));

  const std::vector<ProbMap> wrong{blank};
  CHECK_ERROR_CODE(evaluate_predictions(wrong, two, WatershedConfig{}), ErrorCode::kLengthMismatch);
  const std::string csv = evaluation_to_csv(e2);
  CHECK(csv.rfind("image_id,", 0) == 0);
}

TEST_CASE("no-seed maps are scored as one instance when allowed") {
  DomainSpec spec;
  spec.seed = 8;
  const Sample a = generate_sample(spec, 0);
  ProbMap all_membrane(64, 64, 2);
  for (std::size_t p = 0; p < 4096; ++p) all_membrane.value(0, p) = 1.0;
  const DomainPool one("d", {a});
  const std::vector<ProbMap> preds{all_membrane};
  const Evaluation e = evaluate_predictions(preds, one, WatershedConfig{});
  CHECK(e.per_image[0].no_seeds);
  WatershedConfig strict;
  strict.single_instance_on_no_seeds = false;
  CHECK_ERROR_CODE(evaluate_predictions(preds, one, strict), ErrorCode::kNoSeeds);
}

TEST_CASE("sampler efficacy") {
  const std::vector<std::string> names{"random", "max-unc", "median-unc"};
  const std::vector<SamplerResult> one{
      {"T", 4, "random", 0.5}, {"T", 4, "max-unc", 0.4}, {"T", 4, "median-unc", 0.3}};
  const EfficacyReport r1 = sampler_efficacy(one, names);
  CHECK(r1.entries[2].percent == 100.0);
  CHECK(r1.entries[0].percent == 0.0);
  CHECK(r1.entries[1].percent == 0.0);

  std::vector<SamplerResult> two = one;
  two.push_back({"T", 2, "random", 0.1});
  two.push_back({"T", 2, "max-unc", 0.4});
  two.push_back({"T", 2, "median-unc", 0.3});
  const EfficacyReport r2 = sampler_efficacy(two, names);
  CHECK(r2.entries[0].percent == 50.0);
  CHECK(r2.entries[2].percent == 50.0);
  CHECK(r2.settings_used == 2);

  const std::vector<SamplerResult> tie{
      {"T", 1, "random", 0.2}, {"T", 1, "max-unc", 0.2}, {"T", 1, "median-unc", 0.3}};
  const EfficacyReport r3 = sampler_efficacy(tie, names);
  CHECK(r3.entries[0].percent == 50.0);
  CHECK(r3.entries[1].percent == 50.0);

  std::vector<SamplerResult> partial = one;
  partial.push_back({"U", 4, "random", 0.1});
  const EfficacyReport r4 = sampler_efficacy(partial, names);
  CHECK(r4.settings_used == 1);
  CHECK(!r4.warnings.empty());

  const std::string csv = efficacy_to_csv(r1);
  const auto rows = parse_csv(csv);
  CHECK(rows[0] == std::vector<std::string>{"sampler", "strategy", "efficacy_percent"});
  CHECK(rows[3][0] == "median-unc");
  CHECK(rows[3][1] == "Uncertainty");
  CHECK_ERROR_CODE(sampler_efficacy(std::vector<SamplerResult>{}, names), ErrorCode::kEmptySet);
}

}
