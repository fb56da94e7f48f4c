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
 * @file activations.hpp
 * @brief ReLU through a composite sign approximation and tanh through a fixed
 * odd polynomial, using only slot-wise multiplications and additions.
 */
#pragma once

#include <cstddef>
#include <string>

#include "heinfer/slotvm.hpp"

namespace heinfer {

/// c0 + c1 x + c3 x^3 + c5 x^5 + c7 x^7.
struct Poly7 {
  double c0 = 0.0;
  double c1 = 0.0;
  double c3 = 0.0;
  double c5 = 0.0;
  double c7 = 0.0;

  double operator()(double x) const {
    const double x2 = x * x;
    return c0 + x * (c1 + x2 * (c3 + x2 * (c5 + x2 * c7)));
  }
};

/// Multiplicative depth of polyeval, independent of the coefficients.
inline constexpr int kPolyDepth = 4;

/**
 * @brief Slot-wise Poly7 with a depth-3 power tree and one level for the
 * coefficient products:
 *
 *     x2 = x*x, x3 = x2*x, x4 = x2*x2, x5 = x4*x, x7 = x4*x3
 */
inline Ciphertext polyeval(SlotVm& vm, const Ciphertext& x, const Poly7& p) {
  const std::size_t n = x.size();
  auto scaled = [&](const Ciphertext& ct, double c) {
    return vm.mul_plain(ct, SlotVector::constant(n, c));
  };
  const Ciphertext x2 = vm.mul(x, x);
  const Ciphertext x3 = vm.mul(x2, x);
  const Ciphertext x4 = vm.mul(x2, x2);
  const Ciphertext x5 = vm.mul(x4, x);
  const Ciphertext x7 = vm.mul(x4, x3);
  Ciphertext acc = vm.add(scaled(x, p.c1), scaled(x3, p.c3));
  acc = vm.add(acc, scaled(x5, p.c5));
  acc = vm.add(acc, scaled(x7, p.c7));
  if (p.c0 != 0.0) acc = vm.add(acc, SlotVector::constant(n, p.c0));
  return acc;
}

/// Odd tanh approximation valid on [-2, 2].
inline constexpr Poly7 kTanhPoly{0.0, 0.987653369, -0.279044879, 0.0605757714,
                                 -0.00564857110};

/// f(x) = (35x - 35x^3 + 21x^5 - 5x^7) / 16; f(+-1) = +-1 and f maps [-1, 1]
/// into itself.
inline constexpr Poly7 kSignComponent{0.0, 35.0 / 16.0, -35.0 / 16.0, 21.0 / 16.0,
                                      -5.0 / 16.0};

struct SignApproxConfig {
  Poly7 component = kSignComponent;
  /// Number of compositions of the component polynomial.
  int depth = 8;

  int levels() const { return depth * kPolyDepth; }
};

/// (f(x) + 1) / 2 with f composed cfg.depth times: about 1 for x > 0, about 0
/// for x < 0 and exactly 0.5 at 0. Input must be scaled into [-1, 1].
inline Ciphertext sign_approx(SlotVm& vm, const Ciphertext& x,
                              const SignApproxConfig& cfg = {}) {
  if (cfg.depth < 1) throw ConfigError("sign composition depth must be >= 1");
  const Poly7& f = cfg.component;
  // The last composition is halved and shifted to produce the 0/1 gate.
  const Poly7 last{0.5, f.c1 / 2, f.c3 / 2, f.c5 / 2, f.c7 / 2};
  Ciphertext s = x;
  for (int i = 0; i + 1 < cfg.depth; ++i) s = polyeval(vm, s, f);
  return polyeval(vm, s, last);
}

/// Plaintext counterpart of sign_approx with identical arithmetic order.
inline double sign_gate(double x, const SignApproxConfig& cfg = {}) {
  const Poly7& f = cfg.component;
  const Poly7 last{0.5, f.c1 / 2, f.c3 / 2, f.c5 / 2, f.c7 / 2};
  for (int i = 0; i + 1 < cfg.depth; ++i) x = f(x);
  return last(x);
}

/// Maximum observed absolute pre-activation of one ReLU site.
struct ScaleInfo {
  double scale = 1.0;
};

/// Levels consumed by relu: input scaling, the sign composition and the gate
/// product.
inline int relu_levels(const SignApproxConfig& cfg = {}) { return cfg.levels() + 2; }

/// x * sign_approx(x / S).
inline Ciphertext relu(SlotVm& vm, const Ciphertext& x, ScaleInfo s,
                       const SignApproxConfig& cfg = {}) {
  if (!(s.scale > 0.0)) throw ConfigError("ReLU scale must be positive");
  const Ciphertext normalized =
      vm.mul_plain(x, SlotVector::constant(x.size(), 1.0 / s.scale));
  return vm.mul(x, sign_approx(vm, normalized, cfg));
}

inline Ciphertext tanh_approx(SlotVm& vm, const Ciphertext& x) {
  return polyeval(vm, x, kTanhPoly);
}

}  // namespace heinfer
