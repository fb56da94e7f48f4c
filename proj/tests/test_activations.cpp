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


#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "heinfer/activations.hpp"
#include "support.hpp"

namespace heinfer {
namespace {

const std::vector<double> kTanhOdd{0.987653369, -0.279044879, 0.0605757714, -0.00564857110};
const std::vector<double> kSignOdd{35.0 / 16, -35.0 / 16, 21.0 / 16, -5.0 / 16};

VmConfig config(std::size_t n, int budget = 40) {
  VmConfig c;
  c.slots = n;
  c.depth_budget = budget;
  return c;
}

std::vector<double> grid(double lo, double hi, std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return v;
}

std::vector<double> eval_vm(SlotVm& vm, const std::vector<double>& xs,
                            const std::function<Ciphertext(const Ciphertext&)>& f) {
  const std::size_t n = vm.slots();
  std::vector<double> out;
  for (std::size_t at = 0; at < xs.size(); at += n) {
    const std::size_t len = std::min(n, xs.size() - at);
    const std::span<const double> chunk(xs.data() + at, len);
    const auto y = vm.decrypt(f(vm.encrypt(encode(chunk, n)))).real_prefix(len);
    out.insert(out.end(), y.begin(), y.end());
  }
  return out;
}

TEST(Tanh, PolynomialMatchesPowerForm) {
  for (double x : grid(-2.0, 2.0, 101)) {
    EXPECT_NEAR(kTanhPoly(x), testing::odd_poly(x, kTanhOdd), 1e-14);
  }
}

TEST(Tanh, ValueAtOne) { EXPECT_NEAR(kTanhPoly(1.0), 0.76353569, 1e-7); }

TEST(Tanh, RelativeErrorWithinTwoPercent) {
  double worst = 0.0;
  for (double x : grid(-2.0, 2.0, 2000)) {
    if (std::abs(x) < 0.01) continue;
    worst = std::max(worst, std::abs(kTanhPoly(x) - std::tanh(x)) / std::abs(std::tanh(x)));
  }
  EXPECT_LE(worst, 0.02);
}

TEST(Tanh, SpotRelativeErrors) {
  auto rel = [](double x) { return std::abs(kTanhPoly(x) - std::tanh(x)) / std::abs(std::tanh(x)); };
  EXPECT_NEAR(rel(1.0), 0.0026, 1e-4);
  EXPECT_NEAR(rel(2.0), 0.0059, 1e-4);
  EXPECT_NEAR(rel(1e-7), std::abs(1.0 - kTanhOdd[0]), 1e-9);
}

TEST(Tanh, EncryptedMatchesPlaintextAndUsesFourLevels) {
  SlotVm vm(config(256));
  const auto xs = grid(-2.0, 2.0, 500);
  int level = 0;
  const auto ys = eval_vm(vm, xs, [&](const Ciphertext& c) {
    Ciphertext y = tanh_approx(vm, c);
    level = y.level();
    return y;
  });
  for (std::size_t i = 0; i < xs.size(); ++i) EXPECT_NEAR(ys[i], kTanhPoly(xs[i]), 1e-13);
  EXPECT_EQ(level, 40 - kPolyDepth);
}

TEST(SignComponent, FixesEndpointsAndMapsIntervalIntoItself) {
  const Poly7& f = kSignComponent;
  EXPECT_NEAR(f(1.0), 1.0, 1e-15);
  EXPECT_NEAR(f(-1.0), -1.0, 1e-15);
  EXPECT_EQ(f(0.0), 0.0);
  for (double x : grid(-1.0, 1.0, 1001)) {
    EXPECT_LE(std::abs(f(x)), 1.0 + 1e-15);
    EXPECT_NEAR(f(-x), -f(x), 1e-15);
    EXPECT_NEAR(f(x), testing::odd_poly(x, kSignOdd), 1e-14);
  }
}

TEST(SignGate, MonotoneWithHalfAtZero) {
  EXPECT_EQ(sign_gate(0.0), 0.5);
  double prev = -1.0;
  for (double x : grid(-1.0, 1.0, 4001)) {
    const double g = sign_gate(x);
    EXPECT_GE(g, prev - 1e-15);
    EXPECT_GE(g, -1e-15);
    EXPECT_LE(g, 1.0 + 1e-15);
    prev = g;
  }
}

TEST(SignGate, ConvergesAwayFromZero) {
  for (double x : grid(1.0 / 128, 1.0, 1000)) {
    EXPECT_NEAR(sign_gate(x), 1.0, 1e-6);
    EXPECT_NEAR(sign_gate(-x), 0.0, 1e-6);
  }
}

TEST(SignGate, EncryptedMatchesPlaintext) {
  SlotVm vm(config(256));
  const auto xs = grid(-1.0, 1.0, 256);
  int level = 0;
  const auto ys = eval_vm(vm, xs, [&](const Ciphertext& c) {
    Ciphertext y = sign_approx(vm, c);
    level = y.level();
    return y;
  });
  for (std::size_t i = 0; i < xs.size(); ++i) EXPECT_NEAR(ys[i], sign_gate(xs[i]), 1e-12);
  EXPECT_EQ(level, 40 - SignApproxConfig{}.levels());
  EXPECT_EQ(SignApproxConfig{}.levels(), 32);
}

TEST(Relu, ErrorBoundedByScaleOnNormalizedRange) {
  SlotVm vm(config(256, 34));
  for (double s : {0.5, 1.0, 7.0}) {
    std::vector<double> xs;
    for (double t : grid(1.0 / 128, 1.0, 500)) {
      xs.push_back(t * s);
      xs.push_back(-t * s);
    }
    const auto ys = eval_vm(vm, xs, [&](const Ciphertext& c) { return relu(vm, c, {s}); });
    for (std::size_t i = 0; i < xs.size(); ++i) {
      EXPECT_LE(std::abs(ys[i] - std::max(0.0, xs[i])), s / 128.0);
    }
  }
}

TEST(Relu, HalfGateAtZeroAndLevelCount) {
  SlotVm vm(config(8, 34));
  const auto y = relu(vm, vm.encrypt(SlotVector(8)), {1.0});
  EXPECT_EQ(y.level(), 0);
  EXPECT_EQ(relu_levels(), 34);
  for (const auto& v : vm.decrypt(y)) EXPECT_EQ(v, Complex(0.0));
  SlotVm short_vm(config(8, 33));
  EXPECT_THROW(relu(short_vm, short_vm.encrypt(SlotVector(8)), {1.0}), DepthExhausted);
}

TEST(Relu, RejectsBadConfig) {
  SlotVm vm(config(8));
  const auto ct = vm.encrypt(SlotVector(8));
  EXPECT_THROW(relu(vm, ct, {0.0}), ConfigError);
  SignApproxConfig cfg;
  cfg.depth = 0;
  EXPECT_THROW(sign_approx(vm, ct, cfg), ConfigError);
}

TEST(Polyeval, DepthIndependentOfCoefficients) {
  SlotVm vm(config(8, 10));
  const auto ct = vm.encrypt(SlotVector::constant(8, 0.5));
  EXPECT_EQ(polyeval(vm, ct, Poly7{0.0, 1.0}).level(), 10 - kPolyDepth);
  const auto y = vm.decrypt(polyeval(vm, ct, Poly7{1.0, 0.0, 0.0, 0.0, 2.0}));
  EXPECT_NEAR(y[0].real(), 1.0 + 2.0 / 128.0, 1e-15);
}

}  // namespace
}  // namespace heinfer
