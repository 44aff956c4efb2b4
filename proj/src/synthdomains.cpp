#include "emadapt/synthdomains.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>

#include "emadapt/error.hpp"
#include "emadapt/rng.hpp"

namespace emadapt {

void DomainSpec::validate() const {
  auto prob = [](double p, const char* what) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw Error(ErrorCode::kInvalidConfig, std::string(what) + " must lie in [0, 1]");
    }
  };
  prob(white_stripe_prob, "white_stripe_prob");
  prob(black_tile_prob, "black_tile_prob");
  prob(contrast_prob, "contrast_prob");
  prob(cell_intensity_lo, "cell_intensity_lo");
  prob(cell_intensity_hi, "cell_intensity_hi");
  prob(membrane_intensity, "membrane_intensity");
  if (cell_intensity_lo > cell_intensity_hi) {
    throw Error(ErrorCode::kInvalidConfig, "cell_intensity_lo exceeds cell_intensity_hi");
  }
  if (width < 8 || height < 8) throw Error(ErrorCode::kInvalidConfig, "image must be >= 8x8");
  if (!(gamma > 0.0)) throw Error(ErrorCode::kInvalidConfig, "gamma must be positive");
  if (!(noise_sigma >= 0.0)) throw Error(ErrorCode::kInvalidConfig, "noise_sigma must be >= 0");
  if (!(diameter_jitter >= 0.0 && diameter_jitter < 0.5)) {
    throw Error(ErrorCode::kInvalidConfig, "diameter_jitter must lie in [0, 0.5)");
  }
  if (!(membrane_thickness > 0.0)) {
    throw Error(ErrorCode::kInvalidConfig, "membrane_thickness must be positive");
  }
  if (cell_diameter < 4.0 * membrane_thickness) {
    throw Error(ErrorCode::kSpecInfeasible, "cell diameter below four membrane thicknesses");
  }
  if (cell_diameter * 2.0 > static_cast<double>(std::max(width, height))) {
    throw Error(ErrorCode::kSpecInfeasible, "cells too large for two to fit in the image");
  }
}

namespace {

struct Center {
  double x;
  double y;
};

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

Sample generate_sample(const DomainSpec& spec, std::size_t index) {
  spec.validate();
  SeededRng rng(derive_seed(spec.seed, index));
  const int w = spec.width;
  const int h = spec.height;

  const double d = spec.cell_diameter *
                   std::clamp(1.0 + spec.diameter_jitter * rng.normal(), 0.5, 1.5);
  const double ox = rng.uniform(0.0, d);
  const double oy = rng.uniform(0.0, d);
  std::vector<Center> centers;
  for (double gy = -d + oy; gy < h + d; gy += d) {
    for (double gx = -d + ox; gx < w + d; gx += d) {
      centers.push_back({gx + rng.uniform(-0.35, 0.35) * d, gy + rng.uniform(-0.35, 0.35) * d});
    }
  }
  std::vector<double> intensity(centers.size());
  for (double& v : intensity) v = rng.uniform(spec.cell_intensity_lo, spec.cell_intensity_hi);

  const double half_t = spec.membrane_thickness / 2.0;
  const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  std::vector<std::uint32_t> owner(n);
  std::vector<bool> membrane(n);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double px = x + 0.5;
      const double py = y + 0.5;
      std::size_t best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < centers.size(); ++c) {
        const double dx = px - centers[c].x;
        const double dy = py - centers[c].y;
        const double dd = dx * dx + dy * dy;
        if (dd < bd) {
          bd = dd;
          best = c;
        }
      }
      // Distance to the nearest bisector with any other center.
      double boundary = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < centers.size(); ++c) {
        if (c == best) continue;
        const double dx = px - centers[c].x;
        const double dy = py - centers[c].y;
        const double sep = std::hypot(centers[c].x - centers[best].x, centers[c].y - centers[best].y);
        boundary = std::min(boundary, (dx * dx + dy * dy - bd) / (2.0 * sep));
      }
      const std::size_t p = static_cast<std::size_t>(y) * w + x;
      owner[p] = static_cast<std::uint32_t>(best);
      membrane[p] = boundary <= half_t;
    }
  }

  std::vector<std::uint32_t> labels(n, kMembraneLabel);
  std::map<std::uint32_t, std::uint32_t> relabel;
  std::vector<double> value(n);
  for (std::size_t p = 0; p < n; ++p) {
    if (membrane[p]) {
      value[p] = spec.membrane_intensity;
      continue;
    }
    auto it = relabel.find(owner[p]);
    if (it == relabel.end()) {
      it = relabel.emplace(owner[p], static_cast<std::uint32_t>(relabel.size() + 1)).first;
    }
    labels[p] = it->second;
    value[p] = intensity[owner[p]];
  }
  for (double& v : value) {
    v += spec.noise_sigma * rng.normal();
    v = std::pow(std::clamp(v, 0.0, 1.0), spec.gamma);
  }

  Sample s;
  char id[32];
  std::snprintf(id, sizeof id, "%04zu", index);
  s.id = spec.name + "_" + id;
  // Artifact draws happen in a fixed order so flags never shift the stream.
  const bool contrast = rng.bernoulli(spec.contrast_prob);
  const double factor = rng.bernoulli(0.5) ? rng.uniform(0.4, 0.7) : rng.uniform(1.5, 2.0);
  const bool tile = rng.bernoulli(spec.black_tile_prob);
  const int tile_size = std::max(2, w / 4);
  const int tile_x = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(w - tile_size + 1)));
  const int tile_y = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(h - tile_size + 1)));
  const bool stripe = rng.bernoulli(spec.white_stripe_prob);
  const int n_stripes = 1 + static_cast<int>(rng.uniform_index(2));
  std::vector<std::pair<int, int>> stripes;
  for (int i = 0; i < n_stripes; ++i) {
    const int sw = 2 + static_cast<int>(rng.uniform_index(5));
    const int sx = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(w - sw + 1)));
    stripes.emplace_back(sx, sw);
  }

  if (contrast) {
    for (double& v : value) v = 0.5 + (v - 0.5) * factor;
  }
  if (tile) {
    for (int y = tile_y; y < tile_y + tile_size; ++y) {
      for (int x = tile_x; x < tile_x + tile_size; ++x) value[static_cast<std::size_t>(y) * w + x] = 0.0;
    }
  }
  if (stripe) {
    for (const auto& [sx, sw] : stripes) {
      for (int y = 0; y < h; ++y) {
        for (int x = sx; x < sx + sw; ++x) value[static_cast<std::size_t>(y) * w + x] = 1.0;
      }
    }
  }
  std::vector<std::uint8_t> pixels(n);
  for (std::size_t p = 0; p < n; ++p) pixels[p] = to_byte(value[p]);
  s.image = GrayImage(w, h, std::move(pixels));
  s.labels = LabelMap(w, h, std::move(labels));
  s.artifacts = {stripe, tile, contrast};
  return s;
}

DomainPool generate_domain(const DomainSpec& spec, int n_samples) {
  if (n_samples < 1) throw Error(ErrorCode::kInvalidConfig, "n_samples must be >= 1");
  spec.validate();
  std::vector<Sample> samples;
  samples.reserve(static_cast<std::size_t>(n_samples));
  for (int i = 0; i < n_samples; ++i) samples.push_back(generate_sample(spec, static_cast<std::size_t>(i)));
  return DomainPool(spec.name, std::move(samples));
}

double analytic_membrane_fraction(const DomainSpec& spec) {
  return 2.0 * spec.membrane_thickness / spec.cell_diameter;
}

Benchmark make_benchmark(std::span<const int> family_sizes, std::uint64_t seed, int image_size) {
  if (family_sizes.empty()) throw Error(ErrorCode::kInvalidConfig, "no families given");
  int total = 0;
  for (int s : family_sizes) {
    if (s < 1) throw Error(ErrorCode::kInvalidConfig, "family sizes must be >= 1");
    total += s;
  }
  if (total < 3) throw Error(ErrorCode::kInvalidConfig, "a benchmark needs at least 3 domains");
  if (image_size < 32) throw Error(ErrorCode::kInvalidConfig, "benchmark image_size must be >= 32");

  const std::size_t nf = family_sizes.size();
  Benchmark b;
  std::vector<std::string> names;
  std::vector<int> family;
  for (std::size_t f = 0; f < nf; ++f) {
    const double t = nf == 1 ? 0.5 : static_cast<double>(f) / static_cast<double>(nf - 1);
    for (int m = 0; m < family_sizes[f]; ++m) {
      DomainSpec s;
      s.name = std::string(1, static_cast<char>('A' + f % 26)) + std::to_string(m + 1);
      if (f >= 26) s.name = "F" + std::to_string(f) + "_" + std::to_string(m + 1);
      s.width = image_size;
      s.height = image_size;
      s.cell_diameter = image_size * (0.16 + 0.18 * t);
      s.membrane_thickness = 2.0;
      s.gamma = 0.6 * std::pow(1.6 / 0.6, t);
      s.cell_intensity_lo = 0.5 + 0.1 * t;
      s.cell_intensity_hi = 0.8 + 0.1 * t;
      s.noise_sigma = 0.03 + 0.05 * m;
      s.seed = derive_seed(seed, static_cast<std::uint64_t>(names.size()));
      names.push_back(s.name);
      family.push_back(static_cast<int>(f));
      b.specs.push_back(s);
    }
  }
  b.families = make_clustering(names, family);
  return b;
}

Benchmark make_benchmark(int n_domains, std::uint64_t seed, int image_size) {
  if (n_domains < 3) throw Error(ErrorCode::kInvalidConfig, "a benchmark needs at least 3 domains");
  std::vector<int> sizes(static_cast<std::size_t>(n_domains / 2), 2);
  if (n_domains % 2 == 1) sizes.back() += 1;
  return make_benchmark(sizes, seed, image_size);
}

std::vector<DomainPool> generate_benchmark(const Benchmark& benchmark, int n_samples) {
  std::vector<DomainPool> pools;
  for (const auto& s : benchmark.specs) pools.push_back(generate_domain(s, n_samples));
  return pools;
}

}  // namespace emadapt
