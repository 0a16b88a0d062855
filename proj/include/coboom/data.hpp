#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "coboom/tensor.hpp"

namespace coboom {

// Single-channel image with pixels in [0, 1] and a multi-hot label vector.
struct ImageSample {
  std::string id;
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> pixels;  // row-major
  std::vector<std::uint8_t> labels;

  Tensor to_tensor() const;  // [1, H, W]
};

enum class Split { train, test };

struct Dataset {
  std::size_t image_size = 0;
  std::size_t classes = 0;
  std::vector<ImageSample> samples;
  std::vector<Split> split;

  std::vector<std::size_t> indices(Split which) const;
};

// Shared anatomy (radial gradient plus three elliptical bands, jittered per
// sample) with a class-specific Gaussian blob. Sample i has class i % classes;
// the first 80% of samples form the training split.
struct SyntheticParams {
  double blob_contrast = 0.3;
  double blob_sigma = 0.08;   // fraction of the image side
  double blob_jitter = 1.0;   // pixels, uniform per axis
  double centre_jitter = 2.0; // pixels
  double radius_jitter = 0.05;
};

Dataset generate_synthetic(long long n, long long classes, long long size, std::uint64_t seed,
                           const SyntheticParams& params = {});

struct AugmentConfig {
  double crop_low = 0.6;
  double crop_high = 1.0;
  double flip_prob = 0.5;
  double noise_std = 0.05;
  double brightness_jitter = 0.2;

  void validate() const;
};

// Per-sample randomness: identical (global_seed, sample_index, epoch) always
// yields identical draws.
struct RngStream {
  std::uint64_t global_seed = 0;
  std::uint64_t sample_index = 0;
  std::uint64_t epoch = 0;

  std::uint64_t seed() const;
  std::uint64_t substream(std::uint64_t k) const;
};

struct ViewPair {
  Tensor x1;
  Tensor x2;
};

// Random area crop resized back (bilinear, corner aligned), horizontal flip,
// additive noise, multiplicative brightness; each view from its own substream.
ViewPair augment_pair(const ImageSample& img, const AugmentConfig& cfg, const RngStream& rng);

// Binary PGM (P5), maxval 255.
ImageSample load_pgm(const std::filesystem::path& path);
void write_pgm(const ImageSample& img, const std::filesystem::path& path);

struct LabelTable {
  std::vector<std::string> class_names;
  std::vector<std::string> ids;  // file order
  std::map<std::string, std::vector<std::uint8_t>> rows;
};

LabelTable parse_labels_csv(const std::string& text, const std::string& source = "labels.csv");
LabelTable load_labels_csv(const std::filesystem::path& path);
std::string format_labels_csv(const Dataset& ds);

// Writes images/<id>.pgm, labels.csv and manifest.json under `dir`.
void write_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& manifest);

}  // namespace coboom
