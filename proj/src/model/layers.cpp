#include "coboom/layers.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "coboom/error.hpp"
#include "coboom/ops.hpp"
#include "coboom/random.hpp"

namespace coboom {

namespace {

Tensor he_normal(Shape shape, std::size_t fan_in, std::uint64_t seed) {
  Rng rng(seed);
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.normal(0.0, stddev);
  Tensor t(std::move(shape), std::move(v));
  t.set_requires_grad(true);
  return t;
}

Tensor zeros_param(Shape shape) {
  Tensor t(std::move(shape), 0.0);
  t.set_requires_grad(true);
  return t;
}

Tensor clone_param(const Tensor& t) { return t.defined() ? t.clone() : Tensor{}; }

}  // namespace

ConvLayer init_conv(std::size_t in_channels, std::size_t out_channels, std::size_t stride,
                    std::uint64_t seed) {
  return {he_normal({out_channels, in_channels, 3, 3}, in_channels * 9, seed),
          zeros_param({out_channels}), stride, 1};
}

Linear init_linear(std::size_t in, std::size_t out, std::uint64_t seed) {
  return {he_normal({in, out}, in, seed), zeros_param({out})};
}

MLPHead init_mlp(std::size_t in, std::size_t hidden, std::size_t out, std::uint64_t seed) {
  return {{init_linear(in, hidden, mix64(seed, 0)), init_linear(hidden, hidden, mix64(seed, 1)),
           init_linear(hidden, out, mix64(seed, 2))}};
}

std::size_t encoder_grid(std::size_t input_size, const std::vector<std::size_t>& strides) {
  std::size_t side = input_size;
  for (std::size_t s : strides) {
    if (s == 0) throw ConfigError("encoder strides must be positive");
    if (side + 2 < 3) throw ConfigError("encoder input too small");
    side = (side + 2 - 3) / s + 1;
  }
  return side;
}

EncoderParams init_encoder(std::size_t input_size, std::size_t dim,
                           const std::vector<std::size_t>& strides, std::uint64_t seed) {
  if (strides.empty()) throw ConfigError("encoder needs at least one layer");
  EncoderParams enc;
  enc.input_size = input_size;
  std::size_t in = 1;
  const std::size_t depth = strides.size();
  for (std::size_t i = 0; i < depth; ++i) {
    const std::size_t out = std::max<std::size_t>(1, dim >> (depth - 1 - i));
    enc.layers.push_back(init_conv(in, out, strides[i], mix64(seed, i)));
    in = out;
  }
  return enc;
}

DecoderParams init_decoder(std::size_t grid, std::size_t image_size, std::size_t dim,
                           std::uint64_t seed) {
  std::size_t side = grid;
  std::size_t stages = 0;
  while (side < image_size) {
    side *= 2;
    ++stages;
  }
  if (side != image_size) {
    throw ConfigError("decoder cannot restore " + std::to_string(image_size) + " from a " +
                      std::to_string(grid) + "x" + std::to_string(grid) + " token grid by x2 steps");
  }
  DecoderParams dec;
  dec.grid = grid;
  std::size_t in = dim;
  for (std::size_t i = 0; i < stages; ++i) {
    const std::size_t out = std::max<std::size_t>(1, dim >> (i + 1));
    dec.stages.push_back(init_conv(in, out, 1, mix64(seed, i)));
    in = out;
  }
  dec.output = init_conv(in, 1, 1, mix64(seed, 1000));
  return dec;
}

Tensor encode(const EncoderParams& enc, const Tensor& image) {
  if (image.shape() != Shape{1, enc.input_size, enc.input_size}) {
    throw DimensionError("encode: image " + shape_str(image.shape()) + " expected [1x" +
                         std::to_string(enc.input_size) + "x" + std::to_string(enc.input_size) + "]");
  }
  Tensor x = image;
  for (const auto& layer : enc.layers) {
    x = relu(conv2d(x, layer.weight, layer.bias, layer.stride, layer.pad));
  }
  const std::size_t c = x.dim(0), n = x.dim(1) * x.dim(2);
  return transpose(reshape(x, {c, n}));
}

Tensor global_avg_pool(const Tensor& tokens) { return mean_rows(tokens); }

Tensor apply_linear(const Linear& layer, const Tensor& v) {
  if (v.rank() != 1 || v.dim(0) != layer.weight.dim(0)) {
    throw DimensionError("linear layer expects width " + std::to_string(layer.weight.dim(0)) +
                         ", got " + shape_str(v.shape()));
  }
  const Tensor row = reshape(v, {1, v.dim(0)});
  return reshape(add(matmul(row, layer.weight), layer.bias), {layer.weight.dim(1)});
}

Tensor project(const MLPHead& head, const Tensor& v) {
  Tensor h = relu(apply_linear(head.layers[0], v));
  h = relu(apply_linear(head.layers[1], h));
  return apply_linear(head.layers[2], h);
}

Tensor decode(const DecoderParams& dec, const Tensor& tokens) {
  if (tokens.rank() != 2 || tokens.dim(0) != dec.grid * dec.grid) {
    throw DimensionError("decode: tokens " + shape_str(tokens.shape()) + " do not form a " +
                         std::to_string(dec.grid) + "x" + std::to_string(dec.grid) + " grid");
  }
  Tensor x = reshape(transpose(tokens), {tokens.dim(1), dec.grid, dec.grid});
  for (const auto& stage : dec.stages) {
    x = relu(conv2d(upsample_nearest2x(x), stage.weight, stage.bias, stage.stride, stage.pad));
  }
  return conv2d(x, dec.output.weight, dec.output.bias, dec.output.stride, dec.output.pad);
}

EncoderParams clone(const EncoderParams& enc) {
  EncoderParams out{enc.input_size, {}};
  for (const auto& l : enc.layers) {
    out.layers.push_back({clone_param(l.weight), clone_param(l.bias), l.stride, l.pad});
  }
  return out;
}

MLPHead clone(const MLPHead& head) {
  MLPHead out;
  for (std::size_t i = 0; i < head.layers.size(); ++i) {
    out.layers[i] = {clone_param(head.layers[i].weight), clone_param(head.layers[i].bias)};
  }
  return out;
}

}  // namespace coboom
