#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "emadapt/datamodel.hpp"
#include "emadapt/stats.hpp"

namespace emadapt {

// Intensities are fractions of full scale before gamma.
struct DomainSpec {
  std::string name = "synth";
  int width = 64;
  int height = 64;
  double cell_diameter = 14.0;     // grid spacing of the jittered Voronoi centers
  double diameter_jitter = 0.1;    // relative sd of the per-image diameter
  double membrane_thickness = 2.0;
  double noise_sigma = 0.05;
  double gamma = 1.0;
  double cell_intensity_lo = 0.55;
  double cell_intensity_hi = 0.9;
  double membrane_intensity = 0.15;
  double white_stripe_prob = 0.0;
  double black_tile_prob = 0.0;
  double contrast_prob = 0.0;
  std::uint64_t seed = 0;

  // InvalidConfig for bad ranges, SpecInfeasible when no two cells fit or the
  // diameter is below four membrane thicknesses.
  void validate() const;
};

// Sample i of the domain; depends only on (spec, i).
Sample generate_sample(const DomainSpec& spec, std::size_t index);
DomainPool generate_domain(const DomainSpec& spec, int n_samples);

// Expected membrane pixel fraction: boundary length per unit area (2 / d)
// times thickness.
double analytic_membrane_fraction(const DomainSpec& spec);

struct Benchmark {
  std::vector<DomainSpec> specs;
  Clustering families;  // planted grouping over spec names
};

// Families differ in cell diameter, gamma and brightness; members of a family
// differ only in noise level.
Benchmark make_benchmark(std::span<const int> family_sizes, std::uint64_t seed,
                         int image_size = 64);
// n_domains >= 3 split into families of two (the last family takes any odd one).
Benchmark make_benchmark(int n_domains, std::uint64_t seed, int image_size = 64);

std::vector<DomainPool> generate_benchmark(const Benchmark& benchmark, int n_samples);

}  // namespace emadapt
