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
 * @file slotvm.hpp
 * @brief CKKS-style slot virtual machine.
 *
 * Simulates the programming model of an approximate homomorphic scheme:
 * a ciphertext is an opaque vector of N complex slots that can only be
 * combined slot-wise (add, multiply) or cyclically rotated. Every
 * multiplication consumes one level of a fixed depth budget, and every
 * instruction is recorded in a CostLedger under the active block label.
 * No lattice cryptography is performed.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace heinfer {

using Complex = std::complex<double>;

// ============================================================================
// Errors
// ============================================================================

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Payload does not fit into the configured slot count.
class CapacityError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A multiplication was requested on a ciphertext with no remaining level.
class DepthExhausted : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class DegenerateInput : public Error {
 public:
  using Error::Error;
};

/// Malformed or corrupted weight file.
class FormatError : public Error {
 public:
  using Error::Error;
};

inline constexpr bool is_power_of_two(std::size_t n) {
  return n != 0 && (n & (n - 1)) == 0;
}

inline std::size_t log2_exact(std::size_t n) {
  std::size_t r = 0;
  while ((std::size_t{1} << r) < n) ++r;
  return r;
}

inline std::size_t next_power_of_two(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// ============================================================================
// SlotVector
// ============================================================================

/// Plaintext vector of complex slot values.
class SlotVector {
 public:
  SlotVector() = default;
  explicit SlotVector(std::size_t n) : values_(n) {}
  explicit SlotVector(std::vector<Complex> values) : values_(std::move(values)) {}

  static SlotVector constant(std::size_t n, Complex c) {
    return SlotVector(std::vector<Complex>(n, c));
  }

  /// 1 at `index`, 0 elsewhere.
  static SlotVector unit(std::size_t n, std::size_t index) {
    SlotVector v(n);
    v.values_.at(index) = 1.0;
    return v;
  }

  std::size_t size() const { return values_.size(); }
  Complex& operator[](std::size_t i) { return values_[i]; }
  const Complex& operator[](std::size_t i) const { return values_[i]; }
  std::span<const Complex> values() const { return values_; }
  std::span<Complex> values() { return values_; }
  auto begin() const { return values_.begin(); }
  auto end() const { return values_.end(); }

  /// True if any slot is nonzero.
  bool any_nonzero() const {
    return std::any_of(values_.begin(), values_.end(),
                       [](const Complex& c) { return c != Complex{}; });
  }

  /// Real parts of the first `count` slots.
  std::vector<double> real_prefix(std::size_t count) const {
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i) out[i] = values_.at(i).real();
    return out;
  }

  friend bool operator==(const SlotVector&, const SlotVector&) = default;

 private:
  std::vector<Complex> values_;
};

namespace detail {

template <typename T>
SlotVector encode_impl(std::span<const T> values, std::size_t n) {
  if (!is_power_of_two(n)) {
    throw ConfigError("slot count " + std::to_string(n) +
                      " is not a power of two");
  }
  if (values.size() > n) {
    throw CapacityError("payload of " + std::to_string(values.size()) +
                        " values exceeds " + std::to_string(n) + " slots");
  }
  SlotVector out(n);
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = Complex(values[i]);
  return out;
}

}  // namespace detail

/// Copies `values` into an n-slot vector, zero-filling the remainder.
inline SlotVector encode(std::span<const double> values, std::size_t n) {
  return detail::encode_impl(values, n);
}

inline SlotVector encode(std::span<const Complex> values, std::size_t n) {
  return detail::encode_impl(values, n);
}

// ============================================================================
// Configuration and cost accounting
// ============================================================================

struct VmConfig {
  std::size_t slots = 256;
  int depth_budget = 40;
  /// Relative standard deviation of the error injected per multiplication.
  /// Zero selects exact mode.
  double noise_sigma = 0.0;
  /// rotate_sum uses N-1 single-step rotations instead of the log2(N) tree.
  bool literal_rotate_sum = false;
  /// Track levels and instruction counts only; slot values are not stored
  /// and decrypt returns zeros. Counts never depend on slot values.
  bool dry_run = false;
  std::uint64_t seed = 0x5eed;

  void validate() const {
    if (!is_power_of_two(slots)) {
      throw ConfigError("slot count " + std::to_string(slots) +
                        " is not a power of two");
    }
    if (depth_budget < 1) throw ConfigError("depth budget must be >= 1");
    if (!(noise_sigma >= 0.0)) throw ConfigError("noise sigma must be >= 0");
  }
};

struct OpCounts {
  std::uint64_t mults_ct_ct = 0;
  std::uint64_t mults_ct_pt = 0;
  std::uint64_t rotations = 0;
  std::uint64_t adds = 0;
  std::uint64_t bootstraps = 0;

  /// All multiplications that take a ciphertext operand.
  std::uint64_t mults() const { return mults_ct_ct + mults_ct_pt; }

  OpCounts& operator+=(const OpCounts& o) {
    mults_ct_ct += o.mults_ct_ct;
    mults_ct_pt += o.mults_ct_pt;
    rotations += o.rotations;
    adds += o.adds;
    bootstraps += o.bootstraps;
    return *this;
  }
  friend OpCounts operator+(OpCounts a, const OpCounts& b) { return a += b; }
  friend OpCounts operator-(OpCounts a, const OpCounts& b) {
    a.mults_ct_ct -= b.mults_ct_ct;
    a.mults_ct_pt -= b.mults_ct_pt;
    a.rotations -= b.rotations;
    a.adds -= b.adds;
    a.bootstraps -= b.bootstraps;
    return a;
  }
  friend bool operator==(const OpCounts&, const OpCounts&) = default;
};

/// Instruction counters keyed by block label. Merging is commutative and
/// associative, so per-thread ledgers can be combined in any order.
class CostLedger {
 public:
  void record(const std::string& block, const OpCounts& delta) {
    blocks_[block] += delta;
  }

  /// Stable reference to the counters of `label` (created on first use).
  OpCounts& counters(const std::string& label) { return blocks_[label]; }

  OpCounts total() const {
    OpCounts t;
    for (const auto& [_, c] : blocks_) t += c;
    return t;
  }

  OpCounts block(const std::string& label) const {
    auto it = blocks_.find(label);
    return it == blocks_.end() ? OpCounts{} : it->second;
  }

  const std::map<std::string, OpCounts>& blocks() const { return blocks_; }

  void merge(const CostLedger& other) {
    for (const auto& [label, c] : other.blocks_) blocks_[label] += c;
  }

  friend bool operator==(const CostLedger&, const CostLedger&) = default;

 private:
  std::map<std::string, OpCounts> blocks_;
};

// ============================================================================
// Ciphertext and the VM
// ============================================================================

/// Opaque encrypted slot vector. Only SlotVm can read or produce slot
/// contents; there is no per-slot accessor.
class Ciphertext {
 public:
  std::size_t size() const { return size_; }
  /// Remaining multiplicative depth.
  int level() const { return level_; }
  /// Accumulated magnitude of simulated noise.
  double noise() const { return noise_; }

 private:
  friend class SlotVm;
  Ciphertext(std::vector<Complex> slots, std::size_t size, int level, double noise)
      : slots_(std::move(slots)), size_(size), level_(level), noise_(noise) {}

  std::vector<Complex> slots_;
  std::size_t size_ = 0;
  int level_ = 0;
  double noise_ = 0.0;
};

/**
 * @brief Evaluator holding the configuration, the cost ledger and the noise
 * source.
 *
 * The instruction set is encrypt, decrypt, add, mul, mul_plain, rotate_left,
 * rotate_sum and bootstrap. Operations never modify their operands. A SlotVm
 * is not thread-safe; run one per thread and merge the ledgers.
 */
class SlotVm {
 public:
  explicit SlotVm(VmConfig config) : config_(config), rng_(config.seed) {
    config_.validate();
  }
  SlotVm(const SlotVm&) = delete;
  SlotVm& operator=(const SlotVm&) = delete;

  const VmConfig& config() const { return config_; }
  std::size_t slots() const { return config_.slots; }
  const CostLedger& ledger() const { return ledger_; }
  void reset_ledger() {
    ledger_ = CostLedger{};
    current_ = nullptr;
  }

  /// Current block label for ledger attribution.
  const std::string& block() const { return block_; }

  /// Attributes all instructions to `label` for the lifetime of the scope.
  class BlockScope {
   public:
    BlockScope(SlotVm& vm, std::string label)
        : vm_(vm), previous_(std::exchange(vm.block_, std::move(label))) {
      vm_.current_ = nullptr;
    }
    ~BlockScope() {
      vm_.block_ = std::move(previous_);
      vm_.current_ = nullptr;
    }
    BlockScope(const BlockScope&) = delete;
    BlockScope& operator=(const BlockScope&) = delete;

   private:
    SlotVm& vm_;
    std::string previous_;
  };

  Ciphertext encrypt(const SlotVector& pt) {
    if (pt.size() != config_.slots) {
      throw ConfigError("plaintext has " + std::to_string(pt.size()) +
                        " slots, VM expects " + std::to_string(config_.slots));
    }
    auto v = pt.values();
    if (config_.dry_run) return Ciphertext({}, pt.size(), config_.depth_budget, 0.0);
    return Ciphertext({v.begin(), v.end()}, pt.size(), config_.depth_budget, 0.0);
  }

  /// Encryption of the all-zero vector.
  Ciphertext zero() { return encrypt(SlotVector(config_.slots)); }

  SlotVector decrypt(const Ciphertext& ct) const {
    if (config_.dry_run) return SlotVector(ct.size_);
    return SlotVector(ct.slots_);
  }

  Ciphertext add(const Ciphertext& a, const Ciphertext& b) {
    check_shape(a, b.size());
    auto out = generate([&](std::size_t i) { return a.slots_[i] + b.slots_[i]; });
    count([](OpCounts& c) { ++c.adds; });
    return Ciphertext(std::move(out), a.size_, std::min(a.level_, b.level_),
                      a.noise_ + b.noise_);
  }

  Ciphertext add(const Ciphertext& a, const SlotVector& p) {
    check_shape(a, p.size());
    auto out = generate([&](std::size_t i) { return a.slots_[i] + p[i]; });
    count([](OpCounts& c) { ++c.adds; });
    return Ciphertext(std::move(out), a.size_, a.level_, a.noise_);
  }

  Ciphertext mul(const Ciphertext& a, const Ciphertext& b) {
    check_shape(a, b.size());
    const int level = consume_level(std::min(a.level_, b.level_));
    auto out = generate([&](std::size_t i) { return cmul(a.slots_[i], b.slots_[i]); });
    const double injected = inject_noise(out);
    count([](OpCounts& c) { ++c.mults_ct_ct; });
    return Ciphertext(std::move(out), a.size_, level, a.noise_ + b.noise_ + injected);
  }

  Ciphertext mul_plain(const Ciphertext& a, const SlotVector& p) {
    check_shape(a, p.size());
    const int level = consume_level(a.level_);
    auto out = generate([&](std::size_t i) { return cmul(a.slots_[i], p[i]); });
    const double injected = inject_noise(out);
    count([](OpCounts& c) { ++c.mults_ct_pt; });
    return Ciphertext(std::move(out), a.size_, level, a.noise_ + injected);
  }

  /// out[i] = in[(i + k) mod N]. Negative k rotates right. A rotation by a
  /// multiple of N is the identity and is not counted.
  Ciphertext rotate_left(const Ciphertext& ct, long k) {
    const auto n = static_cast<long>(ct.size());
    const auto shift = static_cast<std::size_t>(((k % n) + n) % n);
    if (shift == 0) return ct;
    std::vector<Complex> out;
    if (!config_.dry_run) {
      const auto mid = ct.slots_.begin() + static_cast<std::ptrdiff_t>(shift);
      out.reserve(ct.slots_.size());
      out.insert(out.end(), mid, ct.slots_.end());
      out.insert(out.end(), ct.slots_.begin(), mid);
    }
    count([](OpCounts& c) { ++c.rotations; });
    return Ciphertext(std::move(out), ct.size_, ct.level_, ct.noise_);
  }

  /// Every slot of the result holds the sum of all input slots.
  Ciphertext rotate_sum(const Ciphertext& ct) {
    const auto n = static_cast<long>(ct.size());
    if (config_.literal_rotate_sum) {
      Ciphertext acc = ct;
      Ciphertext shifted = ct;
      for (long i = 1; i < n; ++i) {
        shifted = rotate_left(shifted, 1);
        acc = add(acc, shifted);
      }
      return acc;
    }
    Ciphertext acc = ct;
    for (long step = 1; step < n; step <<= 1) {
      acc = add(acc, rotate_left(acc, step));
    }
    return acc;
  }

  /// Simulated bootstrapping: restores the level to the full depth budget
  /// without changing the slot values.
  Ciphertext bootstrap(const Ciphertext& ct) {
    count([](OpCounts& c) { ++c.bootstraps; });
    return Ciphertext(ct.slots_, ct.size_, config_.depth_budget, ct.noise_);
  }

 private:
  static Complex cmul(const Complex& a, const Complex& b) {
    return {a.real() * b.real() - a.imag() * b.imag(),
            a.real() * b.imag() + a.imag() * b.real()};
  }

  /// Result slots out[i] = f(i); empty in dry-run mode.
  template <typename F>
  std::vector<Complex> generate(F&& f) const {
    if (config_.dry_run) return {};
    std::vector<Complex> out(config_.slots);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(i);
    return out;
  }

  void check_shape(const Ciphertext& a, std::size_t n) const {
    if (a.size() != n || n != config_.slots) {
      throw ShapeError("slot count mismatch: " + std::to_string(a.size()) +
                       " vs " + std::to_string(n));
    }
  }

  int consume_level(int level) const {
    if (level < 1) {
      throw DepthExhausted(
          "multiplication requested with no remaining level (depth budget " +
          std::to_string(config_.depth_budget) + ")");
    }
    return level - 1;
  }

  double inject_noise(std::vector<Complex>& values) {
    if (config_.noise_sigma == 0.0) return 0.0;
    double worst = 0.0;
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (auto& v : values) {
      const double sd = config_.noise_sigma * std::abs(v);
      const Complex e(sd * gauss(rng_), sd * gauss(rng_));
      worst = std::max(worst, std::abs(e));
      v += e;
    }
    return worst;
  }

  template <typename F>
  void count(F&& bump) {
    if (current_ == nullptr) current_ = &ledger_.counters(block_);
    bump(*current_);
  }

  VmConfig config_;
  CostLedger ledger_;
  std::string block_ = "unlabeled";
  OpCounts* current_ = nullptr;
  std::mt19937_64 rng_;
};

}  // namespace heinfer
