#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <string>

#include "coboom/data.hpp"
#include "coboom/error.hpp"
#include "coboom/random.hpp"

namespace coboom {

namespace {

// Blob centres as fractions of the image side. The first two classes differ
// vertically so a horizontal flip never maps one onto the other.
constexpr std::array<std::array<double, 2>, 8> kClassCentres{{
    {0.50, 0.22}, {0.50, 0.78}, {0.22, 0.50}, {0.78, 0.50},
    {0.25, 0.25}, {0.75, 0.75}, {0.75, 0.25}, {0.25, 0.75},
}};

constexpr double kBandContrast = 0.08;
constexpr std::array<double, 3> kBandRadii{0.35, 0.6, 0.85};

}  // namespace

Tensor ImageSample::to_tensor() const { return Tensor({1, height, width}, pixels); }

std::vector<std::size_t> Dataset::indices(Split which) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < split.size(); ++i) {
    if (split[i] == which) out.push_back(i);
  }
  return out;
}

Dataset generate_synthetic(long long n, long long classes, long long size, std::uint64_t seed,
                           const SyntheticParams& params) {
  if (n < 2) throw ConfigError("synthetic dataset needs n >= 2, got " + std::to_string(n));
  if (classes < 2 || classes > 8) {
    throw ConfigError("synthetic dataset needs 2..8 classes, got " + std::to_string(classes));
  }
  if (size < 16) throw ConfigError("synthetic images need size >= 16, got " + std::to_string(size));

  Dataset ds;
  ds.image_size = static_cast<std::size_t>(size);
  ds.classes = static_cast<std::size_t>(classes);
  const auto side = static_cast<double>(size);
  const std::size_t train_count = static_cast<std::size_t>(n) * 4 / 5;

  for (long long i = 0; i < n; ++i) {
    Rng rng(mix64(seed, static_cast<std::uint64_t>(i)));
    const double cj = params.centre_jitter;
    const double cx = (side - 1.0) / 2.0 + rng.uniform(-cj, cj);
    const double cy = (side - 1.0) / 2.0 + rng.uniform(-cj, cj);
    const double radius = 1.0 + rng.uniform(-params.radius_jitter, params.radius_jitter);
    const auto label = static_cast<std::size_t>(i % classes);
    const double bj = params.blob_jitter;
    const double bx = kClassCentres[label][0] * (side - 1.0) + rng.uniform(-bj, bj);
    const double by = kClassCentres[label][1] * (side - 1.0) + rng.uniform(-bj, bj);
    const double blob_sigma = params.blob_sigma * side;
    const double ax = 0.5 * side * radius;
    const double ay = 0.4 * side * radius;

    ImageSample s;
    char id[32];
    std::snprintf(id, sizeof id, "img%05lld", i);
    s.id = id;
    s.width = s.height = ds.image_size;
    s.pixels.resize(s.width * s.height);
    for (std::size_t y = 0; y < s.height; ++y) {
      for (std::size_t x = 0; x < s.width; ++x) {
        const double dx = static_cast<double>(x) - cx;
        const double dy = static_cast<double>(y) - cy;
        const double d = std::sqrt(dx * dx + dy * dy) / (0.6 * side * radius);
        double v = 0.2 + 0.6 * std::exp(-d * d);
        const double e = std::sqrt((dx / ax) * (dx / ax) + (dy / ay) * (dy / ay));
        for (double rb : kBandRadii) {
          const double t = (e - rb) / 0.05;
          v += kBandContrast * std::exp(-t * t);
        }
        const double ux = static_cast<double>(x) - bx;
        const double uy = static_cast<double>(y) - by;
        v += params.blob_contrast * std::exp(-(ux * ux + uy * uy) / (2.0 * blob_sigma * blob_sigma));
        // Stored at 8-bit precision so the PGM round trip is exact.
        s.pixels[y * s.width + x] = std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
      }
    }
    s.labels.assign(ds.classes, 0);
    s.labels[label] = 1;
    ds.samples.push_back(std::move(s));
    ds.split.push_back(static_cast<std::size_t>(i) < train_count ? Split::train : Split::test);
  }
  return ds;
}

}  // namespace coboom
