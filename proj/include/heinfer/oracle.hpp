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
 * @file oracle.hpp
 * @brief Plaintext reference network (true ReLU, true tanh, direct spatial
 * convolution) and evaluation metrics.
 *
 * Nothing here touches SlotVm; only the model description types are shared
 * with the encrypted path.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "heinfer/model.hpp"
#include "heinfer/tensor.hpp"

namespace heinfer::oracle {

/// Valid strided cross-correlation.
inline Matrix conv2d(const Matrix& img, const Matrix& k, std::size_t stride) {
  if (k.rows == 0 || k.rows > img.rows || k.cols > img.cols || stride == 0) {
    throw ShapeError("oracle conv2d: kernel does not fit the image");
  }
  Matrix out((img.rows - k.rows) / stride + 1, (img.cols - k.cols) / stride + 1);
  for (std::size_t i = 0; i < out.rows; ++i) {
    for (std::size_t j = 0; j < out.cols; ++j) {
      double acc = 0.0;
      for (std::size_t a = 0; a < k.rows; ++a) {
        for (std::size_t b = 0; b < k.cols; ++b) acc += img(i * stride + a, j * stride + b) * k(a, b);
      }
      out(i, j) = acc;
    }
  }
  return out;
}

inline FeatureMaps conv_layer(const FeatureMaps& in, const ConvLayerWeights& w) {
  FeatureMaps out;
  for (std::size_t c = 0; c < w.kernels.size(); ++c) {
    if (w.kernels[c].size() != in.size()) throw ShapeError("oracle conv_layer: channel mismatch");
    Matrix acc;
    for (std::size_t i = 0; i < in.size(); ++i) {
      Matrix y = conv2d(in[i], w.kernels[c][i], w.stride);
      if (acc.data.empty()) {
        acc = std::move(y);
      } else {
        for (std::size_t t = 0; t < acc.data.size(); ++t) acc.data[t] += y.data[t];
      }
    }
    for (auto& v : acc.data) v += w.bias[c];
    out.push_back(std::move(acc));
  }
  return out;
}

inline double relu(double x) { return x > 0.0 ? x : 0.0; }
inline double tanh(double x) { return std::tanh(x); }

inline double activate(double x, Activation a) {
  switch (a) {
    case Activation::relu: return relu(x);
    case Activation::tanh: return tanh(x);
    case Activation::none: break;
  }
  return x;
}

inline std::vector<double> dense(const std::vector<double>& x, const Matrix& w,
                                 const std::vector<double>& b) {
  if (x.size() != w.cols || b.size() != w.rows) throw ShapeError("oracle dense: shape mismatch");
  std::vector<double> y(w.rows);
  for (std::size_t r = 0; r < w.rows; ++r) {
    double acc = b[r];
    for (std::size_t c = 0; c < w.cols; ++c) acc += w(r, c) * x[c];
    y[r] = acc;
  }
  return y;
}

/// Receives the pre-activation values of every activation site, in order.
/// Site names are the layer name, or "<head>.<index>" inside the Gym head.
using SiteObserver = std::function<void(const std::string& site, const std::vector<double>& pre)>;

struct Trace {
  FeatureMaps conv;
  std::vector<double> linear;
  std::vector<double> action;
};

namespace detail {

inline std::vector<double> activate_all(std::vector<double> v, Activation a,
                                        const std::string& site, const SiteObserver& obs) {
  if (a != Activation::none && obs) obs(site, v);
  for (auto& x : v) x = activate(x, a);
  return v;
}

}  // namespace detail

inline Trace run_model(const ModelSpec& m, const Matrix& input, const SiteObserver& obs = {}) {
  if (input.rows != m.input_rows || input.cols != m.input_cols) {
    throw ShapeError("oracle run_model: input dims do not match the model");
  }
  Trace t;
  FeatureMaps maps{input};
  std::vector<double> v;
  for (const auto& layer : m.layers) {
    if (const auto* c = std::get_if<ConvBlock>(&layer)) {
      maps = conv_layer(maps, c->weights);
      if (c->activation != Activation::none) {
        std::vector<double> all = flatten(maps);
        if (obs) obs(c->name, all);
        for (auto& mm : maps) {
          for (auto& x : mm.data) x = activate(x, c->activation);
        }
      }
    } else if (const auto* f = std::get_if<FlattenDense>(&layer)) {
      t.conv = maps;
      v = detail::activate_all(dense(flatten(maps), f->weight, f->bias), f->activation, f->name, obs);
    } else if (const auto* d = std::get_if<Dense>(&layer)) {
      v = detail::activate_all(dense(v, d->weight, d->bias), d->activation, d->name, obs);
    } else {
      const auto& h = std::get<GymHead>(layer);
      t.linear = v;
      for (std::size_t i = 0; i < h.layers.size(); ++i) {
        const auto& d = h.layers[i];
        v = detail::activate_all(dense(v, d.weight, d.bias), d.activation,
                                 h.name + "." + std::to_string(i), obs);
      }
    }
  }
  t.action = v;
  return t;
}

// ============================================================================
// Metrics
// ============================================================================

inline double mae(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ShapeError("mae: length mismatch");
  if (a.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ShapeError("max_abs_diff: length mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// 1 - SS_res / SS_tot.
inline double r2(const std::vector<double>& pred, const std::vector<double>& target) {
  if (pred.size() != target.size()) throw ShapeError("r2: length mismatch");
  if (target.empty()) throw DegenerateInput("r2: empty target");
  double mean = 0.0;
  for (double y : target) mean += y;
  mean /= static_cast<double>(target.size());
  double ss_tot = 0.0;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    ss_tot += (target[i] - mean) * (target[i] - mean);
    ss_res += (target[i] - pred[i]) * (target[i] - pred[i]);
  }
  if (ss_tot == 0.0) throw DegenerateInput("r2: target has zero variance");
  return 1.0 - ss_res / ss_tot;
}

/// |f(x) - g(x)| / |g(x)| at every point.
inline std::vector<std::pair<double, double>> rel_err(const std::function<double(double)>& f,
                                                      const std::function<double(double)>& g,
                                                      const std::vector<double>& points) {
  std::vector<std::pair<double, double>> curve;
  curve.reserve(points.size());
  for (double x : points) {
    const double ref = g(x);
    if (ref == 0.0) throw DegenerateInput("rel_err: reference is zero at x = " + std::to_string(x));
    curve.emplace_back(x, std::abs(f(x) - ref) / std::abs(ref));
  }
  return curve;
}

/// `count` evenly spaced points on [lo, hi].
inline std::vector<double> linspace(double lo, double hi, std::size_t count) {
  std::vector<double> p(count);
  for (std::size_t i = 0; i < count; ++i) {
    p[i] = count == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
  }
  return p;
}

}  // namespace heinfer::oracle
