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
 * @file layers.hpp
 * @brief Encrypted network operators and the graph executor.
 *
 * The executor splits the circuit into segments (one convolution, one
 * activation, one dense product, the Gym head). Before a segment it
 * bootstraps every operand whose level is below the segment depth; a segment
 * deeper than the whole budget raises DepthExhausted naming the layer.
 */
#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "heinfer/activations.hpp"
#include "heinfer/convolution.hpp"
#include "heinfer/model.hpp"

namespace heinfer {

/// Depth of a dense product: weight multiply, rotate-sum, slot mask.
inline constexpr int kDenseDepth = 2;

inline int activation_levels(Activation a, const SignApproxConfig& sign = {}) {
  switch (a) {
    case Activation::relu: return relu_levels(sign);
    case Activation::tanh: return kPolyDepth;
    case Activation::none: break;
  }
  return 0;
}

inline Ciphertext apply_activation(SlotVm& vm, const Ciphertext& ct, Activation a,
                                   ScaleInfo scale, const SignApproxConfig& sign = {}) {
  switch (a) {
    case Activation::relu: return relu(vm, ct, scale, sign);
    case Activation::tanh: return tanh_approx(vm, ct);
    case Activation::none: break;
  }
  return ct;
}

namespace detail {

/// Adds the slot sum of `t`, masked to `slot`, into `out`.
inline void accumulate_slot(SlotVm& vm, const Ciphertext& t, std::size_t slot,
                            std::optional<Ciphertext>& out) {
  Ciphertext s = vm.mul_plain(vm.rotate_sum(t), SlotVector::unit(vm.slots(), slot));
  out = out ? vm.add(*out, s) : std::move(s);
}

/// Row ciphertexts holding at least one valid sample.
inline std::vector<Ciphertext*> live_rows(std::vector<PackedImage>& maps) {
  std::vector<Ciphertext*> rows;
  for (auto& img : maps) {
    const ImageLayout l = img.layout();
    for (std::size_t i = 0; i < l.compact_height(); ++i) rows.push_back(&img.rows[i * l.spacing]);
  }
  return rows;
}

inline Ciphertext add_bias(SlotVm& vm, std::optional<Ciphertext> out,
                           const std::vector<double>& bias) {
  Ciphertext r = out ? std::move(*out) : vm.zero();
  bool any = false;
  for (double b : bias) any = any || b != 0.0;
  return any ? vm.add(r, encode(std::span<const double>(bias), vm.slots())) : r;
}

}  // namespace detail

/**
 * @brief Fused flatten and dense product over spread feature maps.
 *
 * For every output m the weights of each valid row are placed at the valid
 * slots of that row, multiplied in, summed across rows and channels,
 * rotate-summed and masked to slot m.
 */
inline Ciphertext flatten_dense(SlotVm& vm, const std::vector<PackedImage>& maps,
                                const FlattenDense& layer) {
  if (maps.empty()) throw ShapeError(layer.name + ": no input maps");
  const ImageLayout l = maps.front().layout();
  for (const auto& m : maps) {
    if (m.layout() != l) throw ShapeError(layer.name + ": input maps differ in layout");
  }
  const std::size_t h = l.compact_height();
  const std::size_t w = l.compact_width();
  const std::size_t sp = l.spacing;
  if (layer.weight.cols != maps.size() * h * w) {
    throw ShapeError(layer.name + ": weight expects " + std::to_string(layer.weight.cols) +
                     " features, packed input holds " + std::to_string(maps.size() * h * w));
  }
  if (layer.weight.rows > vm.slots()) throw CapacityError(layer.name + ": too many outputs");
  if (layer.bias.size() != layer.weight.rows) throw ShapeError(layer.name + ": bias size mismatch");

  std::optional<Ciphertext> out;
  for (std::size_t m = 0; m < layer.weight.rows; ++m) {
    std::optional<Ciphertext> acc;
    for (std::size_t c = 0; c < maps.size(); ++c) {
      for (std::size_t i = 0; i < h; ++i) {
        SlotVector wv(vm.slots());
        const std::size_t base = (c * h + i) * w;
        for (std::size_t j = 0; j < w; ++j) wv[j * sp] = layer.weight(m, base + j);
        Ciphertext t = vm.mul_plain(maps[c].rows.at(i * sp), wv);
        acc = acc ? vm.add(*acc, t) : std::move(t);
      }
    }
    detail::accumulate_slot(vm, *acc, m, out);
  }
  return detail::add_bias(vm, std::move(out), layer.bias);
}

/// Slots 0..M-1 of the result hold W x + b for x in slots 0..K-1.
inline Ciphertext dense(SlotVm& vm, const Ciphertext& x, const Dense& layer) {
  const std::size_t n = vm.slots();
  if (layer.weight.cols > n || layer.weight.rows > n) {
    throw CapacityError(layer.name + ": " + std::to_string(layer.weight.rows) + "x" +
                        std::to_string(layer.weight.cols) + " does not fit " +
                        std::to_string(n) + " slots");
  }
  if (layer.bias.size() != layer.weight.rows) throw ShapeError(layer.name + ": bias size mismatch");
  std::optional<Ciphertext> out;
  for (std::size_t m = 0; m < layer.weight.rows; ++m) {
    std::span<const double> row(layer.weight.data.data() + m * layer.weight.cols,
                                layer.weight.cols);
    detail::accumulate_slot(vm, vm.mul_plain(x, encode(row, n)), m, out);
  }
  return detail::add_bias(vm, std::move(out), layer.bias);
}

inline int gym_head_levels(const GymHead& head, const SignApproxConfig& sign = {}) {
  int d = 0;
  for (const auto& l : head.layers) d += kDenseDepth + activation_levels(l.activation, sign);
  return d;
}

/// Three dense layers with their activations (tanh, tanh, none by default).
inline Ciphertext gym_head(SlotVm& vm, const Ciphertext& latent, const GymHead& head,
                           const SignApproxConfig& sign = {}) {
  Ciphertext x = latent;
  for (const auto& l : head.layers) {
    x = apply_activation(vm, dense(vm, x, l), l.activation, l.scale, sign);
  }
  return x;
}

// ============================================================================
// Executor
// ============================================================================

struct RunOptions {
  ConvStrategy strategy = ConvStrategy::spectral;
  /// Decrypt and keep per-block outputs (requires the decryption capability).
  bool diagnostics = false;
  SignApproxConfig sign;
};

/// Decrypted outputs of the three blocks.
struct BlockOutputs {
  FeatureMaps conv;            ///< compact maps after the last conv block
  std::vector<double> linear;  ///< latent vector entering the Gym head
  std::vector<double> action;
};

struct RunResult {
  std::vector<double> action;
  std::optional<BlockOutputs> intermediates;
  CostLedger ledger;
  /// Sum of segment depths, i.e. multiplicative depth of the whole circuit.
  int levels_consumed = 0;
};

namespace detail {

class Executor {
 public:
  Executor(SlotVm& vm, const RunOptions& opt) : vm_(vm), opt_(opt) {}

  /// Bootstraps operands below `required` levels.
  void reserve(std::vector<Ciphertext*> cts, int required, const std::string& what) {
    if (required > vm_.config().depth_budget) {
      throw DepthExhausted(what + " needs " + std::to_string(required) +
                           " levels but the depth budget is " +
                           std::to_string(vm_.config().depth_budget));
    }
    for (auto* ct : cts) {
      if (ct->level() < required) *ct = vm_.bootstrap(*ct);
    }
    levels_ += required;
  }

  std::vector<PackedImage> conv_block(std::vector<PackedImage> in, const ConvBlock& b) {
    const ConvShape shape = conv_shape(in.front().layout(), b.kernel(), b.weights.stride);
    std::vector<Ciphertext*> ops;
    for (auto& img : in) {
      for (auto& r : img.rows) ops.push_back(&r);
    }
    reserve(ops, static_cast<int>(shape.depth()), "convolution");
    auto out = conv_layer(vm_, in, b.weights, opt_.strategy);
    if (b.activation == Activation::none) return out;

    // Rows with no valid sample are exact zeros and stay zero.
    auto live = live_rows(out);
    reserve(live, activation_levels(b.activation, opt_.sign), to_string(b.activation));
    for (auto* ct : live) *ct = apply_activation(vm_, *ct, b.activation, b.scale, opt_.sign);
    return out;
  }

  template <typename Product>
  Ciphertext vector_layer(std::vector<Ciphertext*> ops, Activation act, ScaleInfo scale,
                          Product product) {
    reserve(std::move(ops), kDenseDepth, "dense product");
    Ciphertext y = product();
    if (act == Activation::none) return y;
    reserve({&y}, activation_levels(act, opt_.sign), to_string(act));
    return apply_activation(vm_, y, act, scale, opt_.sign);
  }

  Ciphertext head(Ciphertext x, const GymHead& h) {
    for (const auto& l : h.layers) {
      x = vector_layer({&x}, l.activation, l.scale, [&] { return dense(vm_, x, l); });
    }
    return x;
  }

  int levels() const { return levels_; }

 private:
  SlotVm& vm_;
  const RunOptions& opt_;
  int levels_ = 0;
};

template <typename F>
auto labeled(const LayerSpec& layer, F&& f) -> decltype(f()) {
  const std::string where = "block '" + block_label(layer) + "', layer '" + layer_name(layer) + "': ";
  try {
    return f();
  } catch (const DepthExhausted& e) {
    throw DepthExhausted(where + e.what());
  } catch (const ShapeError& e) {
    throw ShapeError(where + e.what());
  } catch (const CapacityError& e) {
    throw CapacityError(where + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(where + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(where + e.what());
  }
}

inline std::vector<double> decrypt_prefix(const SlotVm& vm, const Ciphertext& ct, std::size_t n) {
  return vm.decrypt(ct).real_prefix(n);
}

}  // namespace detail

/**
 * @brief Encrypts `input` row by row and runs the model on the VM.
 *
 * The VM ledger is reset at entry; the returned ledger holds this inference
 * only, keyed by block label.
 */
inline RunResult run_model(SlotVm& vm, const ModelSpec& model, const Matrix& input,
                           const RunOptions& opt = {}) {
  validate(model);
  if (input.rows != model.input_rows || input.cols != model.input_cols) {
    throw ShapeError("input is " + std::to_string(input.rows) + "x" + std::to_string(input.cols) +
                     ", model expects " + std::to_string(model.input_rows) + "x" +
                     std::to_string(model.input_cols));
  }
  vm.reset_ledger();
  detail::Executor ex(vm, opt);
  RunResult result;
  BlockOutputs diag;

  std::vector<PackedImage> maps;
  {
    SlotVm::BlockScope scope(vm, kConvolutionBlock);
    maps.push_back(pack_image(vm, input));
  }
  std::optional<Ciphertext> vec;
  std::size_t width = 0;

  for (const auto& layer : model.layers) {
    SlotVm::BlockScope scope(vm, block_label(layer));
    detail::labeled(layer, [&] {
      if (const auto* c = std::get_if<ConvBlock>(&layer)) {
        maps = ex.conv_block(std::move(maps), *c);
      } else if (const auto* f = std::get_if<FlattenDense>(&layer)) {
        if (opt.diagnostics) {
          for (const auto& m : maps) diag.conv.push_back(unpack_compact(vm, m));
        }
        vec = ex.vector_layer(detail::live_rows(maps), f->activation, f->scale,
                              [&] { return flatten_dense(vm, maps, *f); });
        maps.clear();
        width = f->weight.rows;
      } else if (const auto* d = std::get_if<Dense>(&layer)) {
        vec = ex.vector_layer({&*vec}, d->activation, d->scale,
                              [&] { return dense(vm, *vec, *d); });
        width = d->weight.rows;
      } else {
        const auto& h = std::get<GymHead>(layer);
        if (opt.diagnostics) diag.linear = detail::decrypt_prefix(vm, *vec, width);
        vec = ex.head(*vec, h);
        width = h.layers.back().weight.rows;
      }
      return 0;
    });
  }

  result.action = detail::decrypt_prefix(vm, *vec, width);
  if (opt.diagnostics) {
    diag.action = result.action;
    result.intermediates = std::move(diag);
  }
  result.ledger = vm.ledger();
  result.levels_consumed = ex.levels();
  return result;
}

}  // namespace heinfer
