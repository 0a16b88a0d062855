#include <algorithm>
#include <cmath>

#include "coboom/data.hpp"
#include "coboom/error.hpp"
#include "coboom/random.hpp"

namespace coboom {

void AugmentConfig::validate() const {
  if (!(crop_low > 0.0 && crop_low <= crop_high && crop_high <= 1.0)) {
    throw ConfigError("crop_scale must satisfy 0 < low <= high <= 1");
  }
  if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) throw ConfigError("flip_prob must lie in [0, 1]");
  if (noise_std < 0.0 || brightness_jitter < 0.0) {
    throw ConfigError("noise_std and brightness_jitter must be nonnegative");
  }
}

std::uint64_t RngStream::seed() const { return mix64(global_seed, sample_index, epoch); }
std::uint64_t RngStream::substream(std::uint64_t k) const { return mix64(seed(), k + 1); }

namespace {

double sample_bilinear(const ImageSample& img, double sx, double sy) {
  const double maxx = static_cast<double>(img.width - 1);
  const double maxy = static_cast<double>(img.height - 1);
  sx = std::clamp(sx, 0.0, maxx);
  sy = std::clamp(sy, 0.0, maxy);
  const auto x0 = static_cast<std::size_t>(std::floor(sx));
  const auto y0 = static_cast<std::size_t>(std::floor(sy));
  const std::size_t x1 = std::min(x0 + 1, img.width - 1);
  const std::size_t y1 = std::min(y0 + 1, img.height - 1);
  const double fx = sx - static_cast<double>(x0);
  const double fy = sy - static_cast<double>(y0);
  const auto at = [&](std::size_t x, std::size_t y) { return img.pixels[y * img.width + x]; };
  const double top = at(x0, y0) * (1.0 - fx) + at(x1, y0) * fx;
  const double bottom = at(x0, y1) * (1.0 - fx) + at(x1, y1) * fx;
  return top * (1.0 - fy) + bottom * fy;
}

Tensor augment_view(const ImageSample& img, const AugmentConfig& cfg, Rng& rng) {
  const std::size_t w = img.width, h = img.height;
  const double area = rng.uniform(cfg.crop_low, cfg.crop_high);
  const double frac = std::sqrt(area);
  const double crop_w = frac * static_cast<double>(w);
  const double crop_h = frac * static_cast<double>(h);
  const double off_x = rng.uniform(0.0, static_cast<double>(w) - crop_w);
  const double off_y = rng.uniform(0.0, static_cast<double>(h) - crop_h);
  const bool flip = rng.uniform() < cfg.flip_prob;

  const double step_x = w > 1 ? (crop_w - 1.0) / static_cast<double>(w - 1) : 0.0;
  const double step_y = h > 1 ? (crop_h - 1.0) / static_cast<double>(h - 1) : 0.0;
  std::vector<double> out(w * h);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double v = sample_bilinear(img, off_x + static_cast<double>(x) * step_x,
                                       off_y + static_cast<double>(y) * step_y);
      out[y * w + (flip ? w - 1 - x : x)] = v;
    }
  }
  if (cfg.noise_std > 0.0) {
    for (double& v : out) v = std::clamp(v + rng.normal(0.0, cfg.noise_std), 0.0, 1.0);
  }
  const double gain = 1.0 + cfg.brightness_jitter * rng.uniform(-1.0, 1.0);
  for (double& v : out) v = std::clamp(v * gain, 0.0, 1.0);
  return Tensor({1, h, w}, std::move(out));
}

}  // namespace

ViewPair augment_pair(const ImageSample& img, const AugmentConfig& cfg, const RngStream& stream) {
  cfg.validate();
  Rng first(stream.substream(0));
  Rng second(stream.substream(1));
  return {augment_view(img, cfg, first), augment_view(img, cfg, second)};
}

}  // namespace coboom
