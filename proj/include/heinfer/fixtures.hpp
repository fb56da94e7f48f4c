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
 * @file fixtures.hpp
 * @brief Default architectures, seeded random weights with calibrated
 * activation scales, and synthetic camera frames.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "heinfer/model.hpp"
#include "heinfer/oracle.hpp"
#include "heinfer/tensor.hpp"

namespace heinfer {

/// Hyperparameters of an actor network.
struct Architecture {
  std::string name = "custom";
  std::size_t input_rows = 50;
  std::size_t input_cols = 150;
  std::vector<std::size_t> filters;
  std::vector<std::size_t> strides;
  std::size_t kernel = 3;
  std::size_t latent = 64;
  /// Gym head widths after the latent vector: hidden, hidden, actions.
  std::size_t head_hidden1 = 64;
  std::size_t head_hidden2 = 32;
  std::size_t actions = 2;

  static Architecture teacher() { return {"teacher", 50, 150, {64, 64, 128}, {2, 2, 2}}; }
  static Architecture student1() { return {"student1", 50, 150, {64, 64}, {2, 2}}; }
  static Architecture student2() { return {"student2", 50, 150, {32, 32}, {2, 2}}; }

  /// Student2 layout with `f` filters in each convolution block.
  static Architecture student2_with_filters(std::size_t f) {
    Architecture a = student2();
    a.name = "student2-f" + std::to_string(f);
    a.filters = {f, f};
    return a;
  }

  static Architecture by_name(const std::string& name) {
    if (name == "teacher") return teacher();
    if (name == "student1") return student1();
    if (name == "student2") return student2();
    throw ConfigError("unknown architecture '" + name + "'");
  }
};

/// Three 50x50-style frames side by side: bright Gaussian blobs drifting
/// between frames over a low noise floor, values in [0, 1].
inline Matrix synthetic_frames(std::size_t rows, std::size_t cols, std::mt19937_64& rng,
                               std::size_t frames = 3) {
  if (frames == 0 || cols % frames != 0) throw ConfigError("width must split into whole frames");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t fw = cols / frames;
  Matrix m(rows, cols);
  for (auto& v : m.data) v = 0.1 * u(rng);

  const int blobs = 1 + static_cast<int>(u(rng) * 3.0);
  for (int b = 0; b < blobs; ++b) {
    double r0 = u(rng) * static_cast<double>(rows);
    double c0 = u(rng) * static_cast<double>(fw);
    const double dr = (u(rng) - 0.5) * 6.0;
    const double dc = (u(rng) - 0.5) * 6.0;
    const double amp = 0.5 + 0.5 * u(rng);
    const double sigma = 2.0 + 4.0 * u(rng);
    for (std::size_t f = 0; f < frames; ++f) {
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < fw; ++c) {
          const double y = static_cast<double>(r) - r0;
          const double x = static_cast<double>(c) - c0;
          m(r, f * fw + c) += amp * std::exp(-(x * x + y * y) / (2.0 * sigma * sigma));
        }
      }
      r0 += dr;
      c0 += dc;
    }
  }
  for (auto& v : m.data) v = std::clamp(v, 0.0, 1.0);
  return m;
}

inline std::vector<Matrix> synthetic_batch(std::size_t count, std::size_t rows, std::size_t cols,
                                           std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Matrix> batch;
  for (std::size_t i = 0; i < count; ++i) batch.push_back(synthetic_frames(rows, cols, rng));
  return batch;
}

namespace detail {

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline BatchNorm random_bn(std::size_t n, std::mt19937_64& rng) {
  BatchNorm bn;
  for (std::size_t i = 0; i < n; ++i) {
    bn.gamma.push_back(uniform(rng, 0.8, 1.2));
    bn.beta.push_back(uniform(rng, -0.1, 0.1));
    bn.mean.push_back(uniform(rng, -0.1, 0.1));
    bn.var.push_back(uniform(rng, 0.5, 1.5));
  }
  return bn;
}

inline Dense random_dense(const std::string& name, std::size_t in, std::size_t out,
                          Activation act, std::mt19937_64& rng) {
  const double a = std::sqrt(3.0 / static_cast<double>(in));
  Dense d{name, random_matrix(out, in, rng, -a, a), {}, act, {}};
  for (std::size_t i = 0; i < out; ++i) d.bias.push_back(uniform(rng, -0.1, 0.1));
  return d;
}

}  // namespace detail

/// Pointers to the weight, bias and scale of every activation site, in
/// evaluation order and named as the oracle names them.
struct ActivationSite {
  std::string name;
  Activation activation;
  std::vector<double*> weights;
  std::vector<double>* bias;
  ScaleInfo* scale;
};

inline std::vector<ActivationSite> activation_sites(ModelSpec& m) {
  std::vector<ActivationSite> sites;
  auto dense_site = [&](const std::string& name, Dense& d) {
    if (d.activation == Activation::none) return;
    ActivationSite s{name, d.activation, {}, &d.bias, &d.scale};
    for (auto& v : d.weight.data) s.weights.push_back(&v);
    sites.push_back(std::move(s));
  };
  for (auto& l : m.layers) {
    if (auto* c = std::get_if<ConvBlock>(&l)) {
      if (c->activation == Activation::none) continue;
      ActivationSite s{c->name, c->activation, {}, &c->weights.bias, &c->scale};
      for (auto& stack : c->weights.kernels) {
        for (auto& k : stack) {
          for (auto& v : k.data) s.weights.push_back(&v);
        }
      }
      sites.push_back(std::move(s));
    } else if (auto* f = std::get_if<FlattenDense>(&l)) {
      if (f->activation == Activation::none) continue;
      ActivationSite s{f->name, f->activation, {}, &f->bias, &f->scale};
      for (auto& v : f->weight.data) s.weights.push_back(&v);
      sites.push_back(std::move(s));
    } else if (auto* d = std::get_if<Dense>(&l)) {
      dense_site(d->name, *d);
    } else {
      auto& h = std::get<GymHead>(l);
      for (std::size_t i = 0; i < h.layers.size(); ++i) {
        dense_site(h.name + "." + std::to_string(i), h.layers[i]);
      }
    }
  }
  return sites;
}

/// Largest tanh pre-activation the calibration leaves in place.
inline constexpr double kTanhBound = 2.0;

/**
 * @brief Calibrates activation sites in evaluation order on `batch`.
 *
 * ReLU sites get S = margin * max|pre| (at least 1e-3). Tanh sites whose
 * max|pre| exceeds kTanhBound / margin have their layer weights and bias
 * scaled down to that bound.
 */
inline void calibrate(ModelSpec& m, const std::vector<Matrix>& batch, double margin = 1.1) {
  for (auto& site : activation_sites(m)) {
    double peak = 0.0;
    for (const auto& img : batch) {
      oracle::run_model(m, img, [&](const std::string& name, const std::vector<double>& pre) {
        if (name != site.name) return;
        for (double v : pre) peak = std::max(peak, std::abs(v));
      });
    }
    if (site.activation == Activation::relu) {
      site.scale->scale = std::max(margin * peak, 1e-3);
    } else if (site.activation == Activation::tanh && peak * margin > kTanhBound) {
      const double f = kTanhBound / (margin * peak);
      for (double* w : site.weights) *w *= f;
      for (double& b : *site.bias) b *= f;
    }
  }
}

/**
 * @brief Seeded random actor network with folded batch norm and calibrated
 * activation scales.
 */
inline ModelSpec random_model(const Architecture& a, std::uint64_t seed,
                              std::size_t calibration_images = 16) {
  if (a.filters.size() != a.strides.size()) throw ConfigError("filters and strides differ in length");
  std::mt19937_64 rng(seed);
  ModelSpec m;
  m.name = a.name;
  m.input_rows = a.input_rows;
  m.input_cols = a.input_cols;
  m.latent = a.latent;

  std::size_t in = 1;
  for (std::size_t i = 0; i < a.filters.size(); ++i) {
    ConvBlock c;
    c.name = "conv" + std::to_string(i + 1);
    c.weights.stride = a.strides[i];
    const double bound = std::sqrt(6.0 / static_cast<double>(in * a.kernel * a.kernel));
    c.weights.kernels.assign(a.filters[i], {});
    for (auto& stack : c.weights.kernels) {
      for (std::size_t j = 0; j < in; ++j) stack.push_back(random_matrix(a.kernel, a.kernel, rng, -bound, bound));
    }
    for (std::size_t j = 0; j < a.filters[i]; ++j) c.weights.bias.push_back(detail::uniform(rng, -0.1, 0.1));
    fold_batchnorm(c.weights, detail::random_bn(a.filters[i], rng));
    m.layers.emplace_back(std::move(c));
    in = a.filters[i];
  }

  const FeatureGeometry g = conv_geometry(m);
  Dense lin = detail::random_dense("linear", g.size(), a.latent, Activation::relu, rng);
  fold_batchnorm(lin.weight, lin.bias, detail::random_bn(a.latent, rng));
  m.layers.emplace_back(FlattenDense{lin.name, lin.weight, lin.bias, Activation::relu, {}});

  m.layers.emplace_back(detail::random_dense("fc1", a.latent, a.latent, Activation::tanh, rng));
  m.layers.emplace_back(detail::random_dense("fc2", a.latent, a.latent, Activation::tanh, rng));
  m.layers.emplace_back(detail::random_dense("out", a.latent, a.latent, Activation::none, rng));

  GymHead h;
  h.layers[0] = detail::random_dense("gym.0", a.latent, a.head_hidden1, Activation::tanh, rng);
  h.layers[1] = detail::random_dense("gym.1", a.head_hidden1, a.head_hidden2, Activation::tanh, rng);
  h.layers[2] = detail::random_dense("gym.2", a.head_hidden2, a.actions, Activation::none, rng);
  m.layers.emplace_back(std::move(h));

  validate(m);
  calibrate(m, synthetic_batch(calibration_images, a.input_rows, a.input_cols, seed ^ 0xca11b8a7e5ULL));
  return m;
}

}  // namespace heinfer
