// Copyright 2026 The heinfer Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

/**
 * @file model.hpp
 * @brief Layer graph of the actor network: convolution blocks, the
 * flatten+dense linear block, dense layers and the three-layer Gym head.
 */
#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "heinfer/activations.hpp"
#include "heinfer/convolution.hpp"
#include "heinfer/tensor.hpp"

namespace heinfer {

inline const std::string kConvolutionBlock = "Convolution";
inline const std::string kLinearBlock = "Linear";
inline const std::string kGymBlock = "OpenAI Gym Library Blackbox";

enum class Activation { none, relu, tanh };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::none: break;
  }
  return "none";
}

inline Activation parse_activation(const std::string& s) {
  if (s == "none") return Activation::none;
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw FormatError("unknown activation '" + s + "'");
}

/// Convolution, folded batch norm and activation.
struct ConvBlock {
  std::string name;
  ConvLayerWeights weights;
  Activation activation = Activation::relu;
  ScaleInfo scale;

  std::size_t in_channels() const { return weights.kernels.empty() ? 0 : weights.kernels.front().size(); }
  std::size_t out_channels() const { return weights.kernels.size(); }
  std::size_t kernel() const {
    return weights.kernels.empty() || weights.kernels.front().empty()
               ? 0
               : weights.kernels.front().front().rows;
  }
};

/// Dense layer reading the compact channel-major flattening of the last
/// feature maps.
struct FlattenDense {
  std::string name;
  Matrix weight;  ///< out x (channels * height * width)
  std::vector<double> bias;
  Activation activation = Activation::relu;
  ScaleInfo scale;
};

struct Dense {
  std::string name;
  Matrix weight;  ///< out x in
  std::vector<double> bias;
  Activation activation = Activation::none;
  ScaleInfo scale;
};

struct GymHead {
  std::string name = "gym";
  std::array<Dense, 3> layers;
};

using LayerSpec = std::variant<ConvBlock, FlattenDense, Dense, GymHead>;

struct ModelSpec {
  std::string name = "custom";
  std::size_t input_rows = 0;
  std::size_t input_cols = 0;
  /// Width of the vector entering the Gym head.
  std::size_t latent = 64;
  std::vector<LayerSpec> layers;
};

inline const std::string& layer_name(const LayerSpec& l) {
  return std::visit([](const auto& x) -> const std::string& { return x.name; }, l);
}

inline const std::string& block_label(const LayerSpec& l) {
  if (std::holds_alternative<ConvBlock>(l)) return kConvolutionBlock;
  if (std::holds_alternative<GymHead>(l)) return kGymBlock;
  return kLinearBlock;
}

/// Compact shape of a feature-map stack plus the spacing of its samples in
/// the packed layout.
struct FeatureGeometry {
  std::size_t channels = 1;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t spacing = 1;

  std::size_t size() const { return channels * height * width; }
};

inline FeatureGeometry after_conv(const FeatureGeometry& g, const ConvBlock& c) {
  const std::size_t k = c.kernel();
  const std::size_t s = c.weights.stride;
  if (c.in_channels() != g.channels) {
    throw ShapeError(c.name + ": expects " + std::to_string(c.in_channels()) +
                     " input channels, got " + std::to_string(g.channels));
  }
  if (k == 0 || s == 0 || k > g.height || k > g.width) {
    throw ShapeError(c.name + ": kernel " + std::to_string(k) + " does not fit " +
                     std::to_string(g.height) + "x" + std::to_string(g.width));
  }
  return {c.out_channels(), (g.height - k) / s + 1, (g.width - k) / s + 1, g.spacing * s};
}

/// Geometry after the leading convolution blocks.
inline FeatureGeometry conv_geometry(const ModelSpec& m) {
  FeatureGeometry g{1, m.input_rows, m.input_cols, 1};
  for (const auto& l : m.layers) {
    if (const auto* c = std::get_if<ConvBlock>(&l)) g = after_conv(g, *c);
  }
  return g;
}

namespace detail {

inline void check_dense(const Dense& d, std::size_t in) {
  if (d.weight.cols != in) {
    throw ShapeError(d.name + ": expects input width " + std::to_string(d.weight.cols) +
                     ", got " + std::to_string(in));
  }
  if (d.bias.size() != d.weight.rows) throw ShapeError(d.name + ": bias size mismatch");
}

inline void check_kernels(const ConvBlock& c) {
  if (c.weights.kernels.empty()) throw ShapeError(c.name + ": no output channels");
  const std::size_t k = c.kernel();
  for (const auto& stack : c.weights.kernels) {
    if (stack.size() != c.in_channels()) throw ShapeError(c.name + ": ragged kernel stack");
    for (const auto& m : stack) {
      if (m.rows != k || m.cols != k) throw ShapeError(c.name + ": kernels must be square and equal");
    }
  }
  if (c.weights.bias.size() != c.out_channels()) throw ShapeError(c.name + ": bias size mismatch");
}

}  // namespace detail

/**
 * @brief Checks that layer shapes compose: convolution blocks, one flatten
 * dense, dense layers, and a final Gym head fed by `latent` values.
 */
inline void validate(const ModelSpec& m) {
  if (m.input_rows == 0 || m.input_cols == 0) throw ShapeError("model input is empty");
  enum class Stage { conv, vector, done } stage = Stage::conv;
  FeatureGeometry g{1, m.input_rows, m.input_cols, 1};
  std::size_t width = 0;
  for (const auto& l : m.layers) {
    if (stage == Stage::done) throw ShapeError("layers after the Gym head");
    if (const auto* c = std::get_if<ConvBlock>(&l)) {
      if (stage != Stage::conv) throw ShapeError(c->name + ": convolution after a dense layer");
      detail::check_kernels(*c);
      g = after_conv(g, *c);
    } else if (const auto* f = std::get_if<FlattenDense>(&l)) {
      if (stage != Stage::conv) throw ShapeError(f->name + ": flatten must follow the convolutions");
      if (f->weight.cols != g.size()) {
        throw ShapeError(f->name + ": expects " + std::to_string(f->weight.cols) +
                         " flattened features, got " + std::to_string(g.size()));
      }
      if (f->bias.size() != f->weight.rows) throw ShapeError(f->name + ": bias size mismatch");
      width = f->weight.rows;
      stage = Stage::vector;
    } else if (const auto* d = std::get_if<Dense>(&l)) {
      if (stage != Stage::vector) throw ShapeError(d->name + ": dense layer needs a vector input");
      detail::check_dense(*d, width);
      width = d->weight.rows;
    } else {
      const auto& h = std::get<GymHead>(l);
      if (stage != Stage::vector) throw ShapeError(h.name + ": Gym head needs a vector input");
      if (width != m.latent) {
        throw ShapeError(h.name + ": latent width " + std::to_string(width) +
                         " differs from " + std::to_string(m.latent));
      }
      for (const auto& d : h.layers) {
        detail::check_dense(d, width);
        width = d.weight.rows;
      }
      stage = Stage::done;
    }
  }
  if (stage != Stage::done) throw ShapeError("model must end with a Gym head");
}

/// Width of the action vector.
inline std::size_t action_dim(const ModelSpec& m) {
  if (m.layers.empty()) return 0;
  const auto* h = std::get_if<GymHead>(&m.layers.back());
  return h ? h->layers.back().weight.rows : 0;
}

/// Sets every activation to none.
inline ModelSpec linearized(ModelSpec m) {
  for (auto& l : m.layers) {
    std::visit(
        [](auto& x) {
          using T = std::decay_t<decltype(x)>;
          if constexpr (std::is_same_v<T, GymHead>) {
            for (auto& d : x.layers) d.activation = Activation::none;
          } else {
            x.activation = Activation::none;
          }
        },
        l);
  }
  return m;
}

// ============================================================================
// Batch-norm folding
// ============================================================================

struct BatchNorm {
  std::vector<double> gamma;
  std::vector<double> beta;
  std::vector<double> mean;
  std::vector<double> var;
  double eps = 1e-5;
};

namespace detail {

inline std::vector<double> bn_factors(const BatchNorm& bn, std::size_t channels) {
  if (bn.gamma.size() != channels || bn.beta.size() != channels ||
      bn.mean.size() != channels || bn.var.size() != channels) {
    throw ShapeError("batch-norm parameters do not match " + std::to_string(channels) + " channels");
  }
  std::vector<double> f(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    const double v = bn.var[c] + bn.eps;
    if (!(v > 0.0)) throw NumericalError("non-positive batch-norm variance in channel " + std::to_string(c));
    f[c] = bn.gamma[c] / std::sqrt(v);
  }
  return f;
}

}  // namespace detail

/// W' = W * g / sqrt(var + eps), b' = (b - mean) * g / sqrt(var + eps) + beta.
inline void fold_batchnorm(ConvLayerWeights& w, const BatchNorm& bn) {
  const auto f = detail::bn_factors(bn, w.kernels.size());
  for (std::size_t c = 0; c < w.kernels.size(); ++c) {
    for (auto& k : w.kernels[c]) {
      for (auto& v : k.data) v *= f[c];
    }
    w.bias[c] = (w.bias[c] - bn.mean[c]) * f[c] + bn.beta[c];
  }
}

inline void fold_batchnorm(Matrix& weight, std::vector<double>& bias, const BatchNorm& bn) {
  if (bias.size() != weight.rows) throw ShapeError("bias size mismatch");
  const auto f = detail::bn_factors(bn, weight.rows);
  for (std::size_t r = 0; r < weight.rows; ++r) {
    for (std::size_t c = 0; c < weight.cols; ++c) weight(r, c) *= f[r];
    bias[r] = (bias[r] - bn.mean[r]) * f[r] + bn.beta[r];
  }
}

}  // namespace heinfer
