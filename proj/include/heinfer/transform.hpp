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
 * @file transform.hpp
 * @brief Homomorphic Fourier transform over slot vectors.
 *
 * The DFT matrix of size M is factored Cooley-Tukey style into log2(M)
 * radix-2 butterfly stages. Each stage is a sparse matrix stored by its
 * generalized diagonals, so applying it to a ciphertext is
 *
 *     out = sum_k diag_k * rotate_left(in, k)
 *
 * which needs one multiplicative level per stage.
 *
 * Convention: H[u] = sum_v h[v] exp(-2 pi i u v / M); the inverse carries the
 * 1/M factor, folded into its last stage.
 *
 * Forward plans use decimation in frequency (natural input, bit-reversed
 * output) and inverse plans use decimation in time (bit-reversed input,
 * natural output). A plan with Ordering::natural appends (forward) or
 * prepends (inverse) an explicit bit-reversal permutation stage. The
 * convolution pipeline uses Ordering::bit_reversed so the two permutations
 * cancel and are never evaluated.
 */
#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <numbers>
#include <optional>
#include <vector>

#include "heinfer/slotvm.hpp"

namespace heinfer {

enum class Direction { forward, inverse };

/// Order of the frequency-side coefficients.
enum class Ordering { natural, bit_reversed };

struct Diagonal {
  /// Rotation amount in [0, slots).
  std::size_t offset = 0;
  SlotVector values;
};

struct DiagonalStage {
  std::vector<Diagonal> diagonals;

  std::size_t rotations() const {
    std::size_t r = 0;
    for (const auto& d : diagonals) r += d.offset != 0 ? 1 : 0;
    return r;
  }
};

struct DftPlan {
  std::size_t size = 0;   ///< transform length M
  std::size_t slots = 0;  ///< ciphertext slot count N >= M
  Direction direction = Direction::forward;
  Ordering ordering = Ordering::natural;
  std::vector<DiagonalStage> stages;

  /// Multiplicative depth of one application.
  std::size_t depth() const { return stages.size(); }
};

inline std::size_t bit_reverse(std::size_t x, std::size_t bits) {
  std::size_t r = 0;
  for (std::size_t b = 0; b < bits; ++b) {
    r = (r << 1) | (x & 1);
    x >>= 1;
  }
  return r;
}

namespace detail {

/// Accumulates matrix entries of one stage, grouped by diagonal.
class StageBuilder {
 public:
  explicit StageBuilder(std::size_t slots) : slots_(slots) {}

  void set(std::size_t row, std::size_t col, Complex value) {
    const std::size_t offset = (col + slots_ - row) % slots_;
    auto [it, inserted] = diagonals_.try_emplace(offset, slots_);
    it->second[row] += value;
  }

  DiagonalStage build(Complex scale = 1.0) && {
    DiagonalStage stage;
    for (auto& [offset, values] : diagonals_) {
      if (!values.any_nonzero()) continue;
      if (scale != Complex(1.0)) {
        for (auto& v : values.values()) v *= scale;
      }
      stage.diagonals.push_back({offset, std::move(values)});
    }
    return stage;
  }

 private:
  std::size_t slots_;
  std::map<std::size_t, SlotVector> diagonals_;
};

inline Complex twiddle(std::size_t k, std::size_t block, Direction dir) {
  const double sign = dir == Direction::forward ? -1.0 : 1.0;
  const double angle = sign * 2.0 * std::numbers::pi *
                       static_cast<double>(k) / static_cast<double>(block);
  return {std::cos(angle), std::sin(angle)};
}

// Gentleman-Sande butterfly with half-width h:
//   y[b+k]   = x[b+k] + x[b+k+h]
//   y[b+k+h] = (x[b+k] - x[b+k+h]) * w^k
inline DiagonalStage dif_stage(std::size_t m, std::size_t slots, std::size_t h,
                               Direction dir, Complex scale) {
  StageBuilder sb(slots);
  for (std::size_t b = 0; b < m; b += 2 * h) {
    for (std::size_t k = 0; k < h; ++k) {
      const Complex w = twiddle(k, 2 * h, dir);
      sb.set(b + k, b + k, 1.0);
      sb.set(b + k, b + k + h, 1.0);
      sb.set(b + k + h, b + k, w);
      sb.set(b + k + h, b + k + h, -w);
    }
  }
  return std::move(sb).build(scale);
}

// Cooley-Tukey butterfly with half-width h:
//   y[b+k]   = x[b+k] + w^k x[b+k+h]
//   y[b+k+h] = x[b+k] - w^k x[b+k+h]
inline DiagonalStage dit_stage(std::size_t m, std::size_t slots, std::size_t h,
                               Direction dir, Complex scale) {
  StageBuilder sb(slots);
  for (std::size_t b = 0; b < m; b += 2 * h) {
    for (std::size_t k = 0; k < h; ++k) {
      const Complex w = twiddle(k, 2 * h, dir);
      sb.set(b + k, b + k, 1.0);
      sb.set(b + k, b + k + h, w);
      sb.set(b + k + h, b + k, 1.0);
      sb.set(b + k + h, b + k + h, -w);
    }
  }
  return std::move(sb).build(scale);
}

inline DiagonalStage bit_reversal_stage(std::size_t m, std::size_t slots) {
  StageBuilder sb(slots);
  const std::size_t bits = log2_exact(m);
  for (std::size_t i = 0; i < m; ++i) sb.set(i, bit_reverse(i, bits), 1.0);
  return std::move(sb).build();
}

}  // namespace detail

/**
 * @brief Builds the diagonal factorization of the size-`size` DFT acting on
 * the first `size` slots of a `slots`-slot ciphertext.
 *
 * @param slots ciphertext slot count; 0 means equal to `size`.
 * @throws ConfigError if size is not a power of two >= 2 or exceeds slots.
 */
inline DftPlan plan_dft(std::size_t size, Direction direction,
                        Ordering ordering = Ordering::natural,
                        std::size_t slots = 0) {
  if (slots == 0) slots = size;
  if (size < 2 || !is_power_of_two(size)) {
    throw ConfigError("DFT size " + std::to_string(size) +
                      " must be a power of two >= 2");
  }
  if (!is_power_of_two(slots) || slots < size) {
    throw ConfigError("slot count " + std::to_string(slots) +
                      " cannot host a DFT of size " + std::to_string(size));
  }

  DftPlan plan{size, slots, direction, ordering, {}};
  const std::size_t levels = log2_exact(size);

  if (direction == Direction::forward) {
    for (std::size_t h = size / 2; h >= 1; h /= 2) {
      plan.stages.push_back(detail::dif_stage(size, slots, h, direction, 1.0));
    }
    if (ordering == Ordering::natural) {
      plan.stages.push_back(detail::bit_reversal_stage(size, slots));
    }
  } else {
    if (ordering == Ordering::natural) {
      plan.stages.push_back(detail::bit_reversal_stage(size, slots));
    }
    const Complex inv_m = 1.0 / static_cast<double>(size);
    for (std::size_t s = 0; s < levels; ++s) {
      const std::size_t h = std::size_t{1} << s;
      const Complex scale = (s + 1 == levels) ? inv_m : Complex(1.0);
      plan.stages.push_back(detail::dit_stage(size, slots, h, direction, scale));
    }
  }
  return plan;
}

/// out = sum_k diag_k * rotate_left(in, k). Costs one level.
inline Ciphertext apply_stage(SlotVm& vm, const Ciphertext& ct,
                              const DiagonalStage& stage) {
  std::optional<Ciphertext> acc;
  for (const auto& d : stage.diagonals) {
    Ciphertext term = vm.mul_plain(vm.rotate_left(ct, static_cast<long>(d.offset)),
                                   d.values);
    acc = acc ? vm.add(*acc, term) : std::move(term);
  }
  if (!acc) throw ConfigError("empty transform stage");
  return std::move(*acc);
}

inline void check_plan(const Ciphertext& ct, const DftPlan& plan,
                       Direction expected) {
  if (ct.size() != plan.slots) {
    throw ShapeError("ciphertext has " + std::to_string(ct.size()) +
                     " slots, plan expects " + std::to_string(plan.slots));
  }
  if (plan.direction != expected) {
    throw ConfigError("plan direction does not match the requested transform");
  }
}

/// Forward homomorphic Fourier transform.
inline Ciphertext hft(SlotVm& vm, const Ciphertext& ct, const DftPlan& plan) {
  check_plan(ct, plan, Direction::forward);
  Ciphertext out = ct;
  for (const auto& stage : plan.stages) out = apply_stage(vm, out, stage);
  return out;
}

/// Inverse homomorphic Fourier transform, including the 1/M factor.
inline Ciphertext ihft(SlotVm& vm, const Ciphertext& ct, const DftPlan& plan) {
  check_plan(ct, plan, Direction::inverse);
  Ciphertext out = ct;
  for (const auto& stage : plan.stages) out = apply_stage(vm, out, stage);
  return out;
}

/// Plaintext radix-2 FFT with the same sign and scaling convention.
inline SlotVector fft_plain(const SlotVector& x, Direction direction) {
  const std::size_t n = x.size();
  if (!is_power_of_two(n)) {
    throw ConfigError("FFT length " + std::to_string(n) +
                      " is not a power of two");
  }
  std::vector<Complex> a(x.begin(), x.end());
  const std::size_t bits = log2_exact(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = bit_reverse(i, bits);
    if (i < j) std::swap(a[i], a[j]);
  }
  const double sign = direction == Direction::forward ? -1.0 : 1.0;
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double angle = sign * 2.0 * std::numbers::pi / static_cast<double>(len);
    for (std::size_t start = 0; start < n; start += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        const Complex w = std::polar(1.0, angle * static_cast<double>(k));
        const Complex u = a[start + k];
        const Complex v = a[start + k + len / 2] * w;
        a[start + k] = u + v;
        a[start + k + len / 2] = u - v;
      }
    }
  }
  if (direction == Direction::inverse) {
    for (auto& v : a) v /= static_cast<double>(n);
  }
  return SlotVector(std::move(a));
}

}  // namespace heinfer
