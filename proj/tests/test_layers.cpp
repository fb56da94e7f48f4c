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
#include <string>
#include <vector>

#include "heinfer/fixtures.hpp"
#include "heinfer/layers.hpp"
#include "heinfer/oracle.hpp"
#include "support.hpp"

namespace heinfer {
namespace {

Architecture tiny() {
  Architecture a;
  a.name = "tiny";
  a.input_rows = 12;
  a.input_cols = 18;
  a.filters = {3, 2};
  a.strides = {2, 1};
  a.latent = 8;
  a.head_hidden1 = 8;
  a.head_hidden2 = 4;
  return a;
}

VmConfig config(std::size_t n = 32, int budget = 40) {
  VmConfig c;
  c.slots = n;
  c.depth_budget = budget;
  return c;
}

std::vector<double> dense_direct(const std::vector<double>& x, const Dense& d) {
  std::vector<double> y(d.bias);
  for (std::size_t r = 0; r < y.size(); ++r) {
    for (std::size_t c = 0; c < x.size(); ++c) y[r] += d.weight(r, c) * x[c];
  }
  return y;
}

TEST(Layers, TinyModelTracksOracle) {
  const ModelSpec m = random_model(tiny(), 5, 4);
  const auto batch = synthetic_batch(3, 12, 18, 99);
  for (const auto& img : batch) {
    SlotVm vm(config());
    RunOptions opt;
    opt.diagnostics = true;
    const RunResult r = run_model(vm, m, img, opt);
    const auto ref = oracle::run_model(m, img);
    ASSERT_TRUE(r.intermediates.has_value());
    EXPECT_LE(oracle::mae(flatten(r.intermediates->conv), flatten(ref.conv)), 0.02);
    EXPECT_LE(oracle::mae(r.intermediates->linear, ref.linear), 0.02);
    EXPECT_LE(oracle::mae(r.action, ref.action), 0.03);
    EXPECT_EQ(r.action.size(), 2u);
  }
}

TEST(Layers, LinearizedModelIsExact) {
  const ModelSpec m = linearized(random_model(tiny(), 6, 4));
  const Matrix img = synthetic_batch(1, 12, 18, 3).front();
  for (auto strategy : {ConvStrategy::spectral, ConvStrategy::per_pair}) {
    SlotVm vm(config());
    RunOptions opt;
    opt.strategy = strategy;
    opt.diagnostics = true;
    const RunResult r = run_model(vm, m, img, opt);
    const auto ref = oracle::run_model(m, img);
    EXPECT_LE(oracle::max_abs_diff(flatten(r.intermediates->conv), flatten(ref.conv)), 1e-6);
    EXPECT_LE(oracle::max_abs_diff(r.intermediates->linear, ref.linear), 1e-6);
    EXPECT_LE(oracle::max_abs_diff(r.action, ref.action), 1e-6);
  }
}

TEST(Layers, LedgerHasThreeBlocksAndResetsPerRun) {
  const ModelSpec m = random_model(tiny(), 7, 2);
  const Matrix img = synthetic_batch(1, 12, 18, 4).front();
  SlotVm vm(config());
  const RunResult a = run_model(vm, m, img);
  const RunResult b = run_model(vm, m, img);
  EXPECT_EQ(a.ledger, b.ledger);
  EXPECT_EQ(a.ledger.blocks().size(), 3u);
  for (const auto& label : {kConvolutionBlock, kLinearBlock, kGymBlock}) {
    EXPECT_GT(a.ledger.block(label).mults(), 0u) << label;
  }
  EXPECT_EQ(a.action, b.action);
}

TEST(Layers, DryRunCountsMatchRealRun) {
  const ModelSpec m = random_model(tiny(), 8, 2);
  const Matrix img = synthetic_batch(1, 12, 18, 5).front();
  for (auto strategy : {ConvStrategy::spectral, ConvStrategy::per_pair}) {
    RunOptions opt;
    opt.strategy = strategy;
    SlotVm real(config());
    VmConfig dc = config();
    dc.dry_run = true;
    SlotVm dry(dc);
    const auto r = run_model(real, m, img, opt);
    const auto d = run_model(dry, m, img, opt);
    EXPECT_EQ(r.ledger, d.ledger);
    EXPECT_EQ(r.levels_consumed, d.levels_consumed);
  }
}

TEST(Layers, LevelsConsumedFollowLayerDepths) {
  const ModelSpec m = random_model(tiny(), 9, 2);
  SlotVm vm(config());
  const RunResult r = run_model(vm, m, synthetic_batch(1, 12, 18, 6).front());
  // conv rows_pad: 12+2 -> 16, then 12+4 -> 16; N = 32.
  const int conv = 2 * (5 + 4) + 4;
  const int expected = 2 * (conv + relu_levels()) + (kDenseDepth + relu_levels()) +
                       2 * (kDenseDepth + kPolyDepth) + kDenseDepth +
                       2 * (kDenseDepth + kPolyDepth) + kDenseDepth;
  EXPECT_EQ(r.levels_consumed, expected);
  EXPECT_GT(r.ledger.total().bootstraps, 0u);
}

TEST(Layers, DepthExhaustedNamesBlockAndLayer) {
  const ModelSpec m = random_model(tiny(), 10, 2);
  SlotVm vm(config(32, 5));
  try {
    run_model(vm, m, synthetic_batch(1, 12, 18, 7).front());
    FAIL() << "expected DepthExhausted";
  } catch (const DepthExhausted& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("Convolution"), std::string::npos) << msg;
    EXPECT_NE(msg.find("conv1"), std::string::npos) << msg;
  }
}

TEST(Layers, ActivationDepthAboveBudgetNamesLinearBlock) {
  ModelSpec m = linearized(random_model(tiny(), 11, 2));
  std::get<Dense>(m.layers[3]).activation = Activation::relu;
  SlotVm vm(config(32, 30));
  try {
    run_model(vm, m, synthetic_batch(1, 12, 18, 8).front());
    FAIL() << "expected DepthExhausted";
  } catch (const DepthExhausted& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("'Linear'"), std::string::npos) << msg;
    EXPECT_NE(msg.find("fc1"), std::string::npos) << msg;
  }
}

TEST(Layers, DenseMatchesDirectProduct) {
  std::mt19937_64 rng(12);
  Dense d{"d", random_matrix(5, 7, rng), testing::random_values(5, rng), Activation::none, {}};
  const auto x = testing::random_values(7, rng);
  SlotVm vm(config(16));
  const auto y = vm.decrypt(dense(vm, vm.encrypt(encode(x, 16)), d)).real_prefix(5);
  const auto ref = dense_direct(x, d);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(y[i], ref[i], 1e-12);
}

TEST(Layers, FlattenDenseReadsCompactChannelMajorOrder) {
  std::mt19937_64 rng(13);
  SlotVm vm(config(16));
  // Two channels of spread 2x3 maps (spacing 2).
  std::vector<PackedImage> maps;
  std::vector<double> flat;
  for (int c = 0; c < 2; ++c) {
    Matrix spread(3, 5);
    for (std::size_t r = 0; r < 2; ++r) {
      for (std::size_t q = 0; q < 3; ++q) {
        spread(r * 2, q * 2) = testing::random_values(1, rng)[0];
        flat.push_back(spread(r * 2, q * 2));
      }
    }
    PackedImage p = pack_image(vm, spread);
    p.spacing = 2;
    maps.push_back(std::move(p));
  }
  FlattenDense f{"lin", random_matrix(4, 12, rng), testing::random_values(4, rng), Activation::none, {}};
  const auto y = vm.decrypt(flatten_dense(vm, maps, f)).real_prefix(4);
  const auto ref = dense_direct(flat, Dense{"", f.weight, f.bias, Activation::none, {}});
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(y[i], ref[i], 1e-12);
}

TEST(Layers, RejectsMismatchedInput) {
  const ModelSpec m = random_model(tiny(), 14, 2);
  SlotVm vm(config());
  EXPECT_THROW(run_model(vm, m, Matrix(10, 18)), ShapeError);
}

TEST(Model, ValidateRejectsBadOrdering) {
  ModelSpec m = random_model(tiny(), 15, 2);
  ModelSpec swapped = m;
  std::swap(swapped.layers[0], swapped.layers[2]);
  EXPECT_THROW(validate(swapped), ShapeError);
  ModelSpec headless = m;
  headless.layers.pop_back();
  EXPECT_THROW(validate(headless), ShapeError);
  ModelSpec wrong_latent = m;
  wrong_latent.latent = 7;
  EXPECT_THROW(validate(wrong_latent), ShapeError);
}

TEST(Model, GeometryOfDefaultArchitectures) {
  const auto s2 = random_model(Architecture::student2(), 1, 1);
  const FeatureGeometry g = conv_geometry(s2);
  EXPECT_EQ(g.channels, 32u);
  EXPECT_EQ(g.height, 11u);
  EXPECT_EQ(g.width, 36u);
  EXPECT_EQ(action_dim(s2), 2u);
}

TEST(BatchNorm, FoldingMatchesExplicitNormalization) {
  std::mt19937_64 rng(16);
  Matrix w = random_matrix(3, 4, rng);
  std::vector<double> b = testing::random_values(3, rng);
  BatchNorm bn{{1.1, 0.9, 1.3}, {0.1, -0.2, 0.0}, {0.05, -0.1, 0.2}, {0.7, 1.2, 0.4}};
  const auto x = testing::random_values(4, rng);
  std::vector<double> ref(3);
  for (std::size_t r = 0; r < 3; ++r) {
    double z = b[r];
    for (std::size_t c = 0; c < 4; ++c) z += w(r, c) * x[c];
    ref[r] = bn.gamma[r] * (z - bn.mean[r]) / std::sqrt(bn.var[r] + bn.eps) + bn.beta[r];
  }
  fold_batchnorm(w, b, bn);
  for (std::size_t r = 0; r < 3; ++r) {
    double z = b[r];
    for (std::size_t c = 0; c < 4; ++c) z += w(r, c) * x[c];
    EXPECT_NEAR(z, ref[r], 1e-12);
  }
}

TEST(BatchNorm, ConvFoldingMatchesExplicitNormalization) {
  std::mt19937_64 rng(17);
  ConvLayerWeights w{{{random_matrix(3, 3, rng)}, {random_matrix(3, 3, rng)}}, {0.1, -0.3}, 1};
  BatchNorm bn{{1.2, 0.8}, {0.0, 0.5}, {0.3, -0.2}, {0.9, 1.4}};
  const Matrix img = random_matrix(6, 6, rng);
  const auto before = oracle::conv_layer({img}, w);
  fold_batchnorm(w, bn);
  const auto after = oracle::conv_layer({img}, w);
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t i = 0; i < before[c].data.size(); ++i) {
      const double want = bn.gamma[c] * (before[c].data[i] - bn.mean[c]) / std::sqrt(bn.var[c] + bn.eps) + bn.beta[c];
      EXPECT_NEAR(after[c].data[i], want, 1e-12);
    }
  }
}

TEST(BatchNorm, RejectsNonPositiveVariance) {
  Matrix w(1, 1, 1.0);
  std::vector<double> b{0.0};
  EXPECT_THROW(fold_batchnorm(w, b, BatchNorm{{1.0}, {0.0}, {0.0}, {-1.0}}), NumericalError);
  EXPECT_THROW(fold_batchnorm(w, b, BatchNorm{{1.0, 1.0}, {0.0}, {0.0}, {1.0}}), ShapeError);
}

TEST(Calibration, ScalesBoundCalibrationActivations) {
  Architecture a = tiny();
  ModelSpec m = random_model(a, 18, 6);
  const auto batch = synthetic_batch(6, 12, 18, 18 ^ 0xca11b8a7e5ULL);
  for (auto& site : activation_sites(m)) {
    double peak = 0.0;
    for (const auto& img : batch) {
      oracle::run_model(m, img, [&](const std::string& name, const std::vector<double>& pre) {
        if (name == site.name) {
          for (double v : pre) peak = std::max(peak, std::abs(v));
        }
      });
    }
    if (site.activation == Activation::relu) {
      EXPECT_GE(site.scale->scale, peak) << site.name;
    } else {
      EXPECT_LE(peak, kTanhBound + 1e-9) << site.name;
    }
  }
}

TEST(Calibration, ZeroNetworkGetsScaleFloor) {
  ModelSpec m = random_model(tiny(), 19, 1);
  for (auto& site : activation_sites(m)) {
    for (double* w : site.weights) *w = 0.0;
    for (double& b : *site.bias) b = 0.0;
  }
  calibrate(m, synthetic_batch(2, 12, 18, 1));
  for (auto& site : activation_sites(m)) {
    if (site.activation == Activation::relu) {
      EXPECT_EQ(site.scale->scale, 1e-3);
    }
  }
}

}  // namespace
}  // namespace heinfer
