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


// Independent reference computations for the tests. Nothing here calls the
// library code it is used to check.

#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <random>
#include <vector>

namespace heinfer::testing {

using C = std::complex<double>;

/// O(M^2) DFT with X_k = sum_j x_j e^{-2 pi i jk/M}.
inline std::vector<C> naive_dft(const std::vector<C>& x) {
  const std::size_t m = x.size();
  std::vector<C> out(m);
  for (std::size_t k = 0; k < m; ++k) {
    C acc = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      acc += x[j] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(j * k % m) /
                                        static_cast<double>(m));
    }
    out[k] = acc;
  }
  return out;
}

inline std::size_t reverse_bits(std::size_t x, std::size_t bits) {
  std::size_t r = 0;
  for (std::size_t b = 0; b < bits; ++b) r |= ((x >> b) & 1u) << (bits - 1 - b);
  return r;
}

/// Valid strided cross-correlation on nested vectors.
inline std::vector<std::vector<double>> naive_conv(const std::vector<std::vector<double>>& img,
                                                   const std::vector<std::vector<double>>& k,
                                                   std::size_t stride) {
  const std::size_t n = k.size();
  const std::size_t oh = (img.size() - n) / stride + 1;
  const std::size_t ow = (img[0].size() - n) / stride + 1;
  std::vector<std::vector<double>> out(oh, std::vector<double>(ow, 0.0));
  for (std::size_t i = 0; i < oh; ++i) {
    for (std::size_t j = 0; j < ow; ++j) {
      for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = 0; b < n; ++b) out[i][j] += img[i * stride + a][j * stride + b] * k[a][b];
      }
    }
  }
  return out;
}

/// Sum of c_i x^i with std::pow, for odd coefficient lists {c1, c3, c5, c7}.
inline double odd_poly(double x, const std::vector<double>& odd) {
  double acc = 0.0;
  for (std::size_t i = 0; i < odd.size(); ++i) acc += odd[i] * std::pow(x, 2.0 * static_cast<double>(i) + 1.0);
  return acc;
}

inline std::vector<double> random_values(std::size_t n, std::mt19937_64& rng, double lo = -1.0,
                                         double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

}  // namespace heinfer::testing
