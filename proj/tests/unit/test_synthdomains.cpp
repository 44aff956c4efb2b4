#include <doctest.h>

#include <set>

#include "emadapt/synthdomains.hpp"
#include "helpers.hpp"

using namespace emadapt;

TEST_SUITE("synthdomains") {

TEST_CASE("no stripes at probability zero") {
  DomainSpec s;
  s.seed = 2;
  const DomainPool p = generate_domain(s, 30);
  for (const auto& smp : p.samples()) CHECK(!smp.artifacts.any());
}

TEST_CASE("artifact probability one flags every image") {
  DomainSpec s;
  s.white_stripe_prob = 1.0;
  s.black_tile_prob = 1.0;
  s.contrast_prob = 1.0;
  const DomainPool p = generate_domain(s, 5);
  for (const auto& smp : p.samples()) {
    CHECK(smp.artifacts.white_stripe);
    CHECK(smp.artifacts.black_tile);
    CHECK(smp.artifacts.contrast);
  }
}

TEST_CASE("white stripes are full-height saturated bands") {
  DomainSpec s;
  s.white_stripe_prob = 1.0;
  s.seed = 12;
  for (std::size_t i = 0; i < 10; ++i) {
    const Sample smp = generate_sample(s, i);
    int run = 0;
    int longest = 0;
    int bands = 0;
    for (int x = 0; x < s.width; ++x) {
      bool full = true;
      for (int y = 0; y < s.height; ++y) full = full && smp.image.at(x, y) == 255;
      if (full) {
        if (run == 0) ++bands;
        ++run;
        longest = std::max(longest, run);
      } else {
        run = 0;
      }
    }
    CHECK(bands >= 1);
    CHECK(longest >= 2);
    CHECK(longest <= 12);  // two 6-wide stripes may touch
  }
}

TEST_CASE("same spec and seed give identical pools") {
  DomainSpec s;
  s.seed = 5;
  s.white_stripe_prob = 0.3;
  CHECK(generate_domain(s, 6) == generate_domain(s, 6));
  DomainSpec t = s;
  t.seed = 6;
  CHECK(!(generate_domain(t, 6) == generate_domain(s, 6)));
  CHECK(generate_sample(s, 3).id == "synth_0003");
}

TEST_CASE("membrane pixels sit between two cells") {
  DomainSpec s;
  s.seed = 3;
  const int reach = static_cast<int>(s.membrane_thickness) + 1;
  for (std::size_t i = 0; i < 4; ++i) {
    const Sample smp = generate_sample(s, i);
    const LabelMap& l = *smp.labels;
    std::size_t bad = 0;
    // Near the frame the second cell may lie outside the image.
    for (int y = reach; y < l.height() - reach; ++y) {
      for (int x = reach; x < l.width() - reach; ++x) {
        if (l.at(x, y) != 0) continue;
        std::set<std::uint32_t> near;
        for (int dy = -reach; dy <= reach; ++dy) {
          for (int dx = -reach; dx <= reach; ++dx) {
            const int xx = x + dx;
            const int yy = y + dy;
            if (xx < 0 || yy < 0 || xx >= l.width() || yy >= l.height()) continue;
            if (l.at(xx, yy) != 0) near.insert(l.at(xx, yy));
          }
        }
        bad += near.size() < 2;
      }
    }
    CHECK(bad == 0);
  }
}

TEST_CASE("instance labels are relabeled in raster order") {
  DomainSpec s;
  const Sample smp = generate_sample(s, 0);
  std::uint32_t next = 1;
  for (std::uint32_t v : smp.labels->labels()) {
    if (v == 0) continue;
    CHECK(v <= next);
    if (v == next) ++next;
  }
  CHECK(next > 4);
}

TEST_CASE("membrane fraction tracks the analytic value") {
  DomainSpec s;
  s.seed = 1;
  const DomainPool p = generate_domain(s, 20);
  double membrane = 0.0;
  double total = 0.0;
  for (const auto& smp : p.samples()) {
    for (std::uint32_t v : smp.labels->labels()) membrane += v == 0;
    total += static_cast<double>(smp.labels->size());
  }
  const double expected = analytic_membrane_fraction(s);
  CHECK(expected == doctest::Approx(2.0 * 2.0 / 14.0));
  CHECK(std::abs(membrane / total - expected) <= 0.2 * expected);
}

TEST_CASE("spec validation") {
  DomainSpec s;
  s.cell_diameter = 6.0;
  CHECK_ERROR_CODE(s.validate(), ErrorCode::kSpecInfeasible);
  s = DomainSpec{};
  s.cell_diameter = 40.0;
  CHECK_ERROR_CODE(s.validate(), ErrorCode::kSpecInfeasible);
  s = DomainSpec{};
  s.white_stripe_prob = 1.5;
  CHECK_ERROR_CODE(s.validate(), ErrorCode::kInvalidConfig);
  s = DomainSpec{};
  s.gamma = 0.0;
  CHECK_ERROR_CODE(s.validate(), ErrorCode::kInvalidConfig);
  s = DomainSpec{};
  s.cell_intensity_lo = 0.95;
  CHECK_ERROR_CODE(s.validate(), ErrorCode::kInvalidConfig);
}

TEST_CASE("default benchmark layout") {
  const Benchmark b = make_benchmark(6, 0);
  REQUIRE(b.specs.size() == 6);
  CHECK(b.families.k == 3);
  CHECK(b.families.assignment == std::vector<int>{0, 0, 1, 1, 2, 2});
  CHECK(b.specs[0].name == "A1");
  CHECK(b.specs[5].name == "C2");
  CHECK(b.specs[0].cell_diameter == b.specs[1].cell_diameter);
  CHECK(b.specs[0].cell_diameter != b.specs[2].cell_diameter);
  CHECK(b.specs[0].noise_sigma != b.specs[1].noise_sigma);
  for (const auto& s : b.specs) s.validate();

  const Benchmark odd = make_benchmark(std::vector<int>{3, 2, 1}, 0);
  CHECK(odd.specs.size() == 6);
  CHECK(odd.families.assignment == std::vector<int>{0, 0, 0, 1, 1, 2});
  const auto pools = generate_benchmark(odd, 2);
  CHECK(pools.size() == 6);
  CHECK(pools[4].name() == "B2");
}

}
