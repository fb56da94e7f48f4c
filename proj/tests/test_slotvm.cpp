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
#include <random>
#include <vector>

#include "heinfer/slotvm.hpp"
#include "support.hpp"

namespace heinfer {
namespace {

VmConfig config(std::size_t n, int budget = 40) {
  VmConfig c;
  c.slots = n;
  c.depth_budget = budget;
  return c;
}

SlotVector ramp(std::size_t n) {
  SlotVector v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<double>(i + 1);
  return v;
}

TEST(SlotVm, EncryptDecryptRoundTrip) {
  SlotVm vm(config(8));
  const SlotVector v = ramp(8);
  EXPECT_EQ(vm.decrypt(vm.encrypt(v)), v);
  EXPECT_EQ(vm.encrypt(v).level(), 40);
}

TEST(SlotVm, EncodeZeroPadsAndChecksCapacity) {
  const std::vector<double> x{1.0, 2.0, 3.0};
  const SlotVector v = encode(x, 4);
  EXPECT_EQ(v[2], Complex(3.0));
  EXPECT_EQ(v[3], Complex(0.0));
  EXPECT_THROW(encode(x, 2), CapacityError);
  EXPECT_THROW(encode(x, 6), ConfigError);
}

TEST(SlotVm, RejectsBadConfig) {
  EXPECT_THROW(SlotVm(config(6)), ConfigError);
  EXPECT_THROW(SlotVm(config(8, 0)), ConfigError);
  VmConfig c = config(8);
  c.noise_sigma = -1.0;
  EXPECT_THROW(SlotVm{c}, ConfigError);
}

TEST(SlotVm, EncryptRejectsWrongSize) {
  SlotVm vm(config(8));
  EXPECT_THROW(vm.encrypt(SlotVector(4)), ConfigError);
}

TEST(SlotVm, SlotwiseArithmetic) {
  SlotVm vm(config(4));
  const auto a = vm.encrypt(ramp(4));
  const auto b = vm.encrypt(SlotVector::constant(4, 2.0));
  const auto sum = vm.decrypt(vm.add(a, b));
  const auto prod = vm.decrypt(vm.mul(a, b));
  const auto pprod = vm.decrypt(vm.mul_plain(a, SlotVector::constant(4, Complex(0.0, 1.0))));
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(sum[i], Complex(static_cast<double>(i) + 3.0));
    EXPECT_EQ(prod[i], Complex(2.0 * static_cast<double>(i + 1)));
    EXPECT_EQ(pprod[i], Complex(0.0, static_cast<double>(i + 1)));
  }
}

TEST(SlotVm, MultiplicationConsumesOneLevel) {
  SlotVm vm(config(4, 3));
  const auto a = vm.encrypt(ramp(4));
  const auto b = vm.mul(a, a);
  EXPECT_EQ(b.level(), 2);
  EXPECT_EQ(vm.mul_plain(b, ramp(4)).level(), 1);
  EXPECT_EQ(vm.add(a, b).level(), 2);
  EXPECT_EQ(vm.rotate_left(b, 1).level(), 2);
}

TEST(SlotVm, DepthExhaustedAtZeroLevels) {
  SlotVm vm(config(4, 2));
  auto a = vm.encrypt(ramp(4));
  a = vm.mul(a, a);
  a = vm.mul(a, a);
  EXPECT_EQ(a.level(), 0);
  EXPECT_THROW(vm.mul(a, a), DepthExhausted);
  EXPECT_THROW(vm.mul_plain(a, ramp(4)), DepthExhausted);
}

TEST(SlotVm, BootstrapRestoresLevelAndKeepsValues) {
  SlotVm vm(config(4, 2));
  auto a = vm.encrypt(ramp(4));
  a = vm.mul(vm.mul(a, a), a);
  const auto before = vm.decrypt(a);
  const auto b = vm.bootstrap(a);
  EXPECT_EQ(b.level(), 2);
  EXPECT_EQ(vm.decrypt(b), before);
  EXPECT_EQ(vm.ledger().total().bootstraps, 1u);
}

TEST(SlotVm, RotateLeftMatchesDefinition) {
  SlotVm vm(config(8));
  const auto a = vm.encrypt(ramp(8));
  for (long k : {-9L, -1L, 0L, 1L, 3L, 8L, 13L}) {
    const auto r = vm.decrypt(vm.rotate_left(a, k));
    for (long i = 0; i < 8; ++i) {
      EXPECT_EQ(r[static_cast<std::size_t>(i)].real(), static_cast<double>(((i + k) % 8 + 8) % 8 + 1));
    }
  }
}

TEST(SlotVm, RotationsCompose) {
  SlotVm vm(config(16));
  const auto a = vm.encrypt(ramp(16));
  for (long x : {-5L, 2L, 7L}) {
    for (long y : {-3L, 4L, 11L}) {
      EXPECT_EQ(vm.decrypt(vm.rotate_left(vm.rotate_left(a, x), y)), vm.decrypt(vm.rotate_left(a, x + y)));
    }
  }
}

TEST(SlotVm, RotationByMultipleOfNIsFree) {
  SlotVm vm(config(8));
  const auto a = vm.encrypt(ramp(8));
  vm.rotate_left(a, 0);
  vm.rotate_left(a, 16);
  EXPECT_EQ(vm.ledger().total().rotations, 0u);
  vm.rotate_left(a, 1);
  EXPECT_EQ(vm.ledger().total().rotations, 1u);
}

TEST(SlotVm, RotateSumTreeAndLiteralAgree) {
  for (bool literal : {false, true}) {
    VmConfig c = config(16);
    c.literal_rotate_sum = literal;
    SlotVm vm(c);
    const auto r = vm.decrypt(vm.rotate_sum(vm.encrypt(ramp(16))));
    for (const auto& v : r) EXPECT_DOUBLE_EQ(v.real(), 136.0);
    EXPECT_EQ(vm.ledger().total().rotations, literal ? 15u : 4u);
    EXPECT_EQ(vm.ledger().total().adds, literal ? 15u : 4u);
  }
}

TEST(SlotVm, LedgerAttributesToBlockScope) {
  SlotVm vm(config(4));
  const auto a = vm.encrypt(ramp(4));
  {
    SlotVm::BlockScope s(vm, "A");
    vm.mul(a, a);
    {
      SlotVm::BlockScope inner(vm, "B");
      vm.mul_plain(a, ramp(4));
    }
    vm.add(a, a);
  }
  EXPECT_EQ(vm.ledger().block("A").mults_ct_ct, 1u);
  EXPECT_EQ(vm.ledger().block("A").adds, 1u);
  EXPECT_EQ(vm.ledger().block("B").mults_ct_pt, 1u);
  EXPECT_EQ(vm.ledger().total().mults(), 2u);
}

TEST(SlotVm, LedgerMergeIsCommutative) {
  CostLedger a, b;
  a.record("x", {1, 2, 3, 4, 5});
  b.record("x", {1, 0, 0, 0, 0});
  b.record("y", {0, 1, 0, 0, 0});
  CostLedger ab = a, ba = b;
  ab.merge(b);
  ba.merge(a);
  EXPECT_EQ(ab, ba);
  EXPECT_EQ(ab.block("x").mults_ct_ct, 2u);
}

TEST(SlotVm, ShapeMismatchThrows) {
  SlotVm vm(config(8));
  const auto a = vm.encrypt(ramp(8));
  EXPECT_THROW(vm.mul_plain(a, SlotVector(4)), ShapeError);
  EXPECT_THROW(vm.add(a, SlotVector(4)), ShapeError);
}

TEST(SlotVm, NoiseScalesWithSigmaAndIsSeeded) {
  auto run = [](double sigma, std::uint64_t seed) {
    VmConfig c = config(256);
    c.noise_sigma = sigma;
    c.seed = seed;
    SlotVm vm(c);
    const auto a = vm.encrypt(SlotVector::constant(256, 1.0));
    return vm.decrypt(vm.mul(a, a));
  };
  const auto exact = run(0.0, 1);
  for (const auto& v : exact) EXPECT_EQ(v, Complex(1.0));
  const auto n1 = run(1e-3, 7);
  EXPECT_EQ(n1, run(1e-3, 7));
  double sq = 0.0;
  for (const auto& v : n1) sq += std::norm(v - Complex(1.0));
  const double rms = std::sqrt(sq / (2.0 * 256.0));
  EXPECT_GT(rms, 0.5e-3);
  EXPECT_LT(rms, 2e-3);
}

TEST(SlotVm, DryRunCountsMatchRealCounts) {
  auto run = [](bool dry) {
    VmConfig c = config(16, 4);
    c.dry_run = dry;
    SlotVm vm(c);
    auto a = vm.encrypt(ramp(16));
    a = vm.mul(a, vm.rotate_left(a, 3));
    a = vm.rotate_sum(vm.mul_plain(a, ramp(16)));
    a = vm.bootstrap(a);
    return std::pair{vm.ledger(), a.level()};
  };
  EXPECT_EQ(run(true), run(false));
  VmConfig c = config(8);
  c.dry_run = true;
  SlotVm vm(c);
  EXPECT_FALSE(vm.decrypt(vm.encrypt(ramp(8))).any_nonzero());
}

TEST(SlotVm, OperationsDoNotModifyOperands) {
  SlotVm vm(config(8));
  const auto a = vm.encrypt(ramp(8));
  const auto before = vm.decrypt(a);
  vm.mul(a, a);
  vm.rotate_left(a, 2);
  vm.rotate_sum(a);
  EXPECT_EQ(vm.decrypt(a), before);
}

}  // namespace
}  // namespace heinfer
