#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "coboom/tensor.hpp"

namespace coboom {

struct ConvLayer {
  Tensor weight;  // [C_out, C_in, 3, 3]
  Tensor bias;    // [C_out]
  std::size_t stride = 1;
  std::size_t pad = 1;
};

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]
};

// Stride-2 convolution stack with relu after every layer. Output channels of
// the last layer equal the token dimension.
struct EncoderParams {
  std::size_t input_size = 0;
  std::vector<ConvLayer> layers;
};

// Three linear layers, relu between them.
struct MLPHead {
  std::array<Linear, 3> layers;

  std::size_t in_features() const { return layers[0].weight.dim(0); }
  std::size_t out_features() const { return layers[2].weight.dim(1); }
};

// (nearest x2 upsample, 3x3 conv, relu) per stage, then a 3x3 conv to one channel.
struct DecoderParams {
  std::size_t grid = 0;
  std::vector<ConvLayer> stages;
  ConvLayer output;
};

// He-normal weights, zero biases.
ConvLayer init_conv(std::size_t in_channels, std::size_t out_channels, std::size_t stride,
                    std::uint64_t seed);
Linear init_linear(std::size_t in, std::size_t out, std::uint64_t seed);
MLPHead init_mlp(std::size_t in, std::size_t hidden, std::size_t out, std::uint64_t seed);
EncoderParams init_encoder(std::size_t input_size, std::size_t dim,
                           const std::vector<std::size_t>& strides, std::uint64_t seed);
DecoderParams init_decoder(std::size_t grid, std::size_t image_size, std::size_t dim,
                           std::uint64_t seed);

// Spatial side of the encoder output for a square input.
std::size_t encoder_grid(std::size_t input_size, const std::vector<std::size_t>& strides);

// image [1, H, W] -> tokens [H'W', D] in row-major spatial order.
Tensor encode(const EncoderParams& enc, const Tensor& image);
Tensor global_avg_pool(const Tensor& tokens);
Tensor apply_linear(const Linear& layer, const Tensor& v);
Tensor project(const MLPHead& head, const Tensor& v);
// tokens [g*g, D] -> image [1, H, W]
Tensor decode(const DecoderParams& dec, const Tensor& tokens);

EncoderParams clone(const EncoderParams& enc);
MLPHead clone(const MLPHead& head);

}  // namespace coboom
