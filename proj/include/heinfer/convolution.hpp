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
 * @file convolution.hpp
 * @brief Strided 2D convolution on row-packed encrypted images, evaluated in
 * the frequency domain.
 *
 * An image is packed one row per ciphertext. The 2D DFT is a row transform,
 * a ciphertext-grid transpose, and a column transform on the transposed
 * rows. Convolution multiplies the spectrum by the plaintext filter
 * spectrum, transforms back, realigns the full linear convolution with a
 * left rotation of (N - 2p) mod N and a downward row shift of 2p, and keeps
 * the strided outputs with a 0/1 mask.
 *
 * Strided outputs stay spread out: a layer with stride s leaves its valid
 * outputs at every s-th row and slot. A following layer sees that spacing
 * as a dilation of its kernel, so no per-slot compaction is ever needed.
 */
#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <mutex>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "heinfer/slotvm.hpp"
#include "heinfer/tensor.hpp"
#include "heinfer/transform.hpp"

namespace heinfer {

// ============================================================================
// Packed images
// ============================================================================

/// Geometry of a packed image.
struct ImageLayout {
  std::size_t slots = 0;    ///< slot count N of every row ciphertext
  std::size_t rows = 0;     ///< number of row ciphertexts
  std::size_t height = 0;   ///< row extent of the valid region
  std::size_t width = 0;    ///< slot extent of the valid region
  std::size_t spacing = 1;  ///< distance between valid samples

  std::size_t compact_height() const {
    return height == 0 ? 0 : (height - 1) / spacing + 1;
  }
  std::size_t compact_width() const {
    return width == 0 ? 0 : (width - 1) / spacing + 1;
  }

  friend bool operator==(const ImageLayout&, const ImageLayout&) = default;
};

struct PackedImage {
  std::vector<Ciphertext> rows;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t spacing = 1;

  std::size_t slots() const { return rows.empty() ? 0 : rows.front().size(); }

  ImageLayout layout() const {
    return {slots(), rows.size(), height, width, spacing};
  }
};

/// Encrypts each row of `m` as one ciphertext, zero-padded to N slots.
inline PackedImage pack_image(SlotVm& vm, const Matrix& m) {
  const std::size_t n = vm.slots();
  if (m.rows == 0 || m.cols == 0) throw ShapeError("cannot pack an empty image");
  if (m.rows > n || m.cols > n) {
    throw CapacityError("image " + std::to_string(m.rows) + "x" +
                        std::to_string(m.cols) + " does not fit " +
                        std::to_string(n) + " slots");
  }
  PackedImage img;
  img.rows.reserve(m.rows);
  for (std::size_t r = 0; r < m.rows; ++r) {
    std::span<const double> row(m.data.data() + r * m.cols, m.cols);
    img.rows.push_back(vm.encrypt(encode(row, n)));
  }
  img.height = m.rows;
  img.width = m.cols;
  return img;
}

/// Decrypts the valid region (height x width), including the zeros between
/// spread samples.
inline Matrix unpack_image(const SlotVm& vm, const PackedImage& img) {
  Matrix m(img.height, img.width);
  for (std::size_t r = 0; r < img.height; ++r) {
    const SlotVector v = vm.decrypt(img.rows.at(r));
    for (std::size_t c = 0; c < img.width; ++c) m(r, c) = v[c].real();
  }
  return m;
}

/// Decrypts only the valid samples, dropping the spacing.
inline Matrix unpack_compact(const SlotVm& vm, const PackedImage& img) {
  const ImageLayout l = img.layout();
  Matrix m(l.compact_height(), l.compact_width());
  for (std::size_t r = 0; r < m.rows; ++r) {
    const SlotVector v = vm.decrypt(img.rows.at(r * l.spacing));
    for (std::size_t c = 0; c < m.cols; ++c) m(r, c) = v[c * l.spacing].real();
  }
  return m;
}

namespace detail {

/// out_j = sum_i rotate_left(mul_plain(in_i, e_s), s - i) with s = source(j):
/// slot s of input i lands in slot i of output j. One level, no ct-ct
/// multiplication.
template <typename SourceSlot>
std::vector<Ciphertext> gather_transpose(SlotVm& vm,
                                         std::span<const Ciphertext> in,
                                         std::size_t out_count,
                                         SourceSlot source) {
  const std::size_t n = vm.slots();
  if (in.size() > n || out_count > n) {
    throw ShapeError("transpose of " + std::to_string(in.size()) + "x" +
                     std::to_string(out_count) + " exceeds " +
                     std::to_string(n) + " slots");
  }
  std::vector<Ciphertext> out;
  out.reserve(out_count);
  for (std::size_t j = 0; j < out_count; ++j) {
    const std::size_t s = source(j);
    const SlotVector mask = SlotVector::unit(n, s);
    std::optional<Ciphertext> acc;
    for (std::size_t i = 0; i < in.size(); ++i) {
      Ciphertext term = vm.rotate_left(vm.mul_plain(in[i], mask),
                                       static_cast<long>(s) - static_cast<long>(i));
      acc = acc ? vm.add(*acc, term) : std::move(term);
    }
    out.push_back(acc ? std::move(*acc) : vm.zero());
  }
  return out;
}

inline const DftPlan& cached_plan(std::size_t size, Direction direction,
                                  Ordering ordering, std::size_t slots) {
  static std::mutex mutex;
  static std::map<std::tuple<std::size_t, int, int, std::size_t>, DftPlan> cache;
  const auto key = std::make_tuple(size, static_cast<int>(direction),
                                   static_cast<int>(ordering), slots);
  std::lock_guard lock(mutex);
  auto it = cache.find(key);
  if (it == cache.end()) {
    it = cache.emplace(key, plan_dft(size, direction, ordering, slots)).first;
  }
  return it->second;
}

}  // namespace detail

/// Grid transpose: output row j, slot i holds input row i, slot j.
inline PackedImage transpose(SlotVm& vm, const PackedImage& img) {
  PackedImage out;
  out.rows = detail::gather_transpose(vm, img.rows, img.width,
                                      [](std::size_t j) { return j; });
  out.height = img.width;
  out.width = img.rows.size();
  out.spacing = img.spacing;
  return out;
}

/**
 * @brief 2D DFT of the image zero-padded to rows_pad x N, natural order.
 *
 * Row transform, transpose, column transform, transpose back. rows_pad = 0
 * selects the next power of two of the row count.
 */
inline PackedImage dft2d(SlotVm& vm, const PackedImage& img,
                         std::size_t rows_pad = 0) {
  const std::size_t n = img.slots();
  if (n != vm.slots()) throw ShapeError("image slot count does not match the VM");
  if (rows_pad == 0) rows_pad = next_power_of_two(std::max<std::size_t>(img.rows.size(), 2));
  if (!is_power_of_two(rows_pad) || rows_pad < img.rows.size() || rows_pad > n) {
    throw ShapeError("invalid row padding " + std::to_string(rows_pad));
  }
  const auto& row_plan = detail::cached_plan(n, Direction::forward, Ordering::natural, n);
  const auto& col_plan = detail::cached_plan(rows_pad, Direction::forward, Ordering::natural, n);

  std::vector<Ciphertext> rows;
  rows.reserve(img.rows.size());
  for (const auto& r : img.rows) rows.push_back(hft(vm, r, row_plan));
  auto cols = detail::gather_transpose(vm, rows, n, [](std::size_t j) { return j; });
  for (auto& c : cols) c = hft(vm, c, col_plan);

  PackedImage out;
  out.rows = detail::gather_transpose(vm, cols, rows_pad, [](std::size_t j) { return j; });
  out.height = rows_pad;
  out.width = n;
  return out;
}

/// Inverse of dft2d; the row count must be a power of two.
inline PackedImage idft2d(SlotVm& vm, const PackedImage& img) {
  const std::size_t n = img.slots();
  const std::size_t rows_pad = img.rows.size();
  if (n != vm.slots()) throw ShapeError("image slot count does not match the VM");
  if (rows_pad < 2 || !is_power_of_two(rows_pad) || rows_pad > n) {
    throw ShapeError("spectrum row count " + std::to_string(rows_pad) +
                     " must be a power of two in [2, N]");
  }
  const auto& row_plan = detail::cached_plan(n, Direction::inverse, Ordering::natural, n);
  const auto& col_plan = detail::cached_plan(rows_pad, Direction::inverse, Ordering::natural, n);

  std::vector<Ciphertext> rows;
  rows.reserve(rows_pad);
  for (const auto& r : img.rows) rows.push_back(ihft(vm, r, row_plan));
  auto cols = detail::gather_transpose(vm, rows, n, [](std::size_t j) { return j; });
  for (auto& c : cols) c = ihft(vm, c, col_plan);

  PackedImage out;
  out.rows = detail::gather_transpose(vm, cols, rows_pad, [](std::size_t j) { return j; });
  out.height = rows_pad;
  out.width = n;
  return out;
}

// ============================================================================
// Filters and masks
// ============================================================================

/// Geometry of one strided convolution over a (possibly spread) image.
struct ConvShape {
  ImageLayout input;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t rows_pad = 0;  ///< column transform size, >= rows + extent - 1

  std::size_t slots() const { return input.slots; }
  /// Kernel taps are input.spacing apart.
  std::size_t extent() const { return (kernel - 1) * input.spacing + 1; }
  /// Offset p of the full-convolution layout; outputs are realigned by 2p.
  std::size_t padding() const { return (extent() - 1) / 2; }
  std::size_t out_spacing() const { return input.spacing * stride; }
  std::size_t out_compact_height() const {
    return (input.compact_height() - kernel) / stride + 1;
  }
  std::size_t out_compact_width() const {
    return (input.compact_width() - kernel) / stride + 1;
  }

  ImageLayout output() const {
    return {input.slots, input.rows, (out_compact_height() - 1) * out_spacing() + 1,
            (out_compact_width() - 1) * out_spacing() + 1, out_spacing()};
  }

  /// Multiplicative depth of one convolution.
  std::size_t depth() const {
    return 2 * (log2_exact(input.slots) + log2_exact(rows_pad)) + 4;
  }
};

/// Validates the layout and picks the smallest column transform that keeps
/// the convolution linear.
inline ConvShape conv_shape(const ImageLayout& input, std::size_t kernel,
                            std::size_t stride) {
  if (kernel == 0 || stride == 0) throw ConfigError("kernel and stride must be >= 1");
  if (!is_power_of_two(input.slots)) throw ConfigError("slot count must be a power of two");
  if (input.compact_height() < kernel || input.compact_width() < kernel) {
    throw ShapeError("kernel " + std::to_string(kernel) + "x" +
                     std::to_string(kernel) + " larger than image " +
                     std::to_string(input.compact_height()) + "x" +
                     std::to_string(input.compact_width()));
  }
  ConvShape shape{input, kernel, stride, 0};
  shape.rows_pad = next_power_of_two(std::max<std::size_t>(input.rows + shape.extent() - 1, 2));
  if (shape.rows_pad > input.slots) {
    throw ShapeError("column transform of " + std::to_string(shape.rows_pad) +
                     " rows exceeds " + std::to_string(input.slots) + " slots");
  }
  if (input.width + shape.extent() - 1 > input.slots) {
    throw ShapeError("linear convolution of width " + std::to_string(input.width) +
                     " with extent " + std::to_string(shape.extent()) +
                     " does not fit " + std::to_string(input.slots) + " slots");
  }
  return shape;
}

/// Plaintext spectrum of a kernel embedded for the full-convolution layout.
struct FilterSpectrum {
  ConvShape shape;
  /// rows_pad x slots grid of 2D DFT coefficients, natural order, row-major.
  std::vector<Complex> grid;

  Complex at(std::size_t u, std::size_t v) const {
    return grid[u * shape.slots() + v];
  }

  /// Column q holds the spectrum column in the transposed, bit-reversed
  /// order produced by the forward pipeline.
  std::vector<SlotVector> working_columns() const {
    const std::size_t n = shape.slots();
    const std::size_t rp = shape.rows_pad;
    const std::size_t bits_n = log2_exact(n);
    const std::size_t bits_r = log2_exact(rp);
    std::vector<SlotVector> cols(n, SlotVector(n));
    for (std::size_t q = 0; q < n; ++q) {
      const std::size_t v = bit_reverse(q, bits_n);
      for (std::size_t s = 0; s < rp; ++s) cols[q][s] = at(bit_reverse(s, bits_r), v);
    }
    return cols;
  }
};

/// 0/1 selector of the valid strided outputs, one vector per row ciphertext.
struct StrideMask {
  std::vector<SlotVector> rows;
};

namespace detail {

inline std::size_t wrap(long value, std::size_t modulus) {
  const long m = static_cast<long>(modulus);
  return static_cast<std::size_t>(((value % m) + m) % m);
}

/// Flipped, dilated kernel placed so that valid output (i, j) of the circular
/// convolution sits at (i - 2p, j - 2p).
inline std::vector<Complex> embed_kernel(const Matrix& kernel, const ConvShape& shape) {
  const std::size_t n = shape.slots();
  const std::size_t rp = shape.rows_pad;
  const std::size_t d = shape.input.spacing;
  const long origin = -static_cast<long>(shape.extent() - 1 + 2 * shape.padding());
  std::vector<Complex> grid(rp * n);
  for (std::size_t a = 0; a < shape.kernel; ++a) {
    for (std::size_t b = 0; b < shape.kernel; ++b) {
      const std::size_t r = wrap(origin + static_cast<long>(a * d), rp);
      const std::size_t c = wrap(origin + static_cast<long>(b * d), n);
      grid[r * n + c] += kernel(shape.kernel - 1 - a, shape.kernel - 1 - b);
    }
  }
  return grid;
}

inline void fft2d_inplace(std::vector<Complex>& grid, std::size_t rows,
                          std::size_t cols, Direction dir) {
  for (std::size_t r = 0; r < rows; ++r) {
    SlotVector row(std::vector<Complex>(grid.begin() + static_cast<long>(r * cols),
                                        grid.begin() + static_cast<long>((r + 1) * cols)));
    const SlotVector f = fft_plain(row, dir);
    std::copy(f.begin(), f.end(), grid.begin() + static_cast<long>(r * cols));
  }
  for (std::size_t c = 0; c < cols; ++c) {
    SlotVector col(rows);
    for (std::size_t r = 0; r < rows; ++r) col[r] = grid[r * cols + c];
    const SlotVector f = fft_plain(col, dir);
    for (std::size_t r = 0; r < rows; ++r) grid[r * cols + c] = f[r];
  }
}

}  // namespace detail

inline FilterSpectrum filter_spectrum(const Matrix& kernel, const ConvShape& shape) {
  if (kernel.rows != shape.kernel || kernel.cols != shape.kernel) {
    throw ShapeError("kernel must be " + std::to_string(shape.kernel) + "x" +
                     std::to_string(shape.kernel));
  }
  FilterSpectrum f{shape, detail::embed_kernel(kernel, shape)};
  detail::fft2d_inplace(f.grid, shape.rows_pad, shape.slots(), Direction::forward);
  return f;
}

inline StrideMask stride_mask(const ConvShape& shape) {
  const std::size_t n = shape.slots();
  const std::size_t sp = shape.out_spacing();
  StrideMask mask;
  mask.rows.assign(shape.input.rows, SlotVector(n));
  for (std::size_t i = 0; i < shape.out_compact_height(); ++i) {
    for (std::size_t j = 0; j < shape.out_compact_width(); ++j) {
      mask.rows[i * sp][j * sp] = 1.0;
    }
  }
  return mask;
}

/// Kernel spectrum plus the stride mask for an image with the given layout.
inline std::pair<FilterSpectrum, StrideMask> prepare_filter(
    const Matrix& kernel, std::size_t stride, const ImageLayout& layout) {
  if (kernel.rows != kernel.cols) throw ShapeError("kernel must be square");
  const ConvShape shape = conv_shape(layout, kernel.rows, stride);
  return {filter_spectrum(kernel, shape), stride_mask(shape)};
}

// ============================================================================
// Convolution
// ============================================================================

/// Spectrum of one image in the transposed, bit-reversed working layout:
/// one ciphertext per frequency column.
using SpectrumColumns = std::vector<Ciphertext>;

inline SpectrumColumns forward_spectrum(SlotVm& vm, const PackedImage& img,
                                        const ConvShape& shape) {
  if (img.layout() != shape.input) throw ShapeError("image layout does not match the filter");
  const std::size_t n = shape.slots();
  const auto& row_plan = detail::cached_plan(n, Direction::forward, Ordering::bit_reversed, n);
  const auto& col_plan = detail::cached_plan(shape.rows_pad, Direction::forward,
                                             Ordering::bit_reversed, n);
  std::vector<Ciphertext> rows;
  rows.reserve(img.rows.size());
  for (const auto& r : img.rows) rows.push_back(hft(vm, r, row_plan));
  auto cols = detail::gather_transpose(vm, rows, n, [](std::size_t q) { return q; });
  for (auto& c : cols) c = hft(vm, c, col_plan);
  return cols;
}

inline SpectrumColumns multiply_spectrum(SlotVm& vm, const SpectrumColumns& cols,
                                         const std::vector<SlotVector>& filter) {
  SpectrumColumns out;
  out.reserve(cols.size());
  for (std::size_t q = 0; q < cols.size(); ++q) out.push_back(vm.mul_plain(cols[q], filter[q]));
  return out;
}

/// Inverse transform, realignment, stride mask and bias.
inline PackedImage inverse_to_image(SlotVm& vm, SpectrumColumns cols,
                                    const ConvShape& shape, const StrideMask& mask,
                                    double bias = 0.0) {
  const std::size_t n = shape.slots();
  const std::size_t rp = shape.rows_pad;
  const std::size_t shift = 2 * shape.padding();
  const auto& col_plan = detail::cached_plan(rp, Direction::inverse, Ordering::bit_reversed, n);
  const auto& row_plan = detail::cached_plan(n, Direction::inverse, Ordering::bit_reversed, n);

  for (auto& c : cols) c = ihft(vm, c, col_plan);
  // Downward rotation by 2p folded into the row selection of the transpose.
  auto rows = detail::gather_transpose(vm, cols, shape.input.rows, [&](std::size_t i) {
    return detail::wrap(static_cast<long>(i) - static_cast<long>(shift), rp);
  });

  const long left = static_cast<long>(detail::wrap(static_cast<long>(n) - static_cast<long>(shift), n));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    Ciphertext r = vm.rotate_left(ihft(vm, rows[i], row_plan), left);
    r = vm.mul_plain(r, mask.rows[i]);
    if (bias != 0.0) {
      SlotVector b = mask.rows[i];
      for (auto& v : b.values()) v *= bias;
      r = vm.add(r, b);
    }
    rows[i] = std::move(r);
  }

  const ImageLayout out = shape.output();
  return PackedImage{std::move(rows), out.height, out.width, out.spacing};
}

/// Valid strided cross-correlation of `img` with the prepared filter.
inline PackedImage conv2d(SlotVm& vm, const PackedImage& img,
                          const FilterSpectrum& filter, const StrideMask& mask) {
  if (mask.rows.size() != img.rows.size()) throw ShapeError("mask does not match the image");
  auto cols = forward_spectrum(vm, img, filter.shape);
  return inverse_to_image(vm, multiply_spectrum(vm, cols, filter.working_columns()),
                          filter.shape, mask);
}

namespace detail {

/// exp(-2 pi i k / m).
inline Complex unit_root(std::size_t k, std::size_t m) {
  const double angle = -2.0 * std::numbers::pi * static_cast<double>(k % m) / static_cast<double>(m);
  return {std::cos(angle), std::sin(angle)};
}

/**
 * Working-layout filter columns evaluated directly from the n x n taps,
 * separably: G[a][v] = sum_b k'[a][b] w_N^(v c_b), then
 * F[u][v] = sum_a w_R^(u r_a) G[a][v]. Agrees with
 * filter_spectrum(...).working_columns() without the full-grid FFTs. In
 * dry-run mode the values are irrelevant and zeros are returned.
 */
inline std::vector<SlotVector> filter_columns(const SlotVm& vm, const Matrix& kernel,
                                              const ConvShape& shape) {
  const std::size_t n = shape.slots();
  const std::size_t rp = shape.rows_pad;
  const std::size_t k = shape.kernel;
  if (kernel.rows != k || kernel.cols != k) {
    throw ShapeError("kernel must be " + std::to_string(k) + "x" + std::to_string(k));
  }
  std::vector<SlotVector> cols(n, SlotVector(n));
  if (vm.config().dry_run) return cols;

  const long origin = -static_cast<long>(shape.extent() - 1 + 2 * shape.padding());
  const std::size_t d = shape.input.spacing;
  std::vector<std::size_t> rpos(k), cpos(k);
  for (std::size_t a = 0; a < k; ++a) {
    rpos[a] = wrap(origin + static_cast<long>(a * d), rp);
    cpos[a] = wrap(origin + static_cast<long>(a * d), n);
  }
  std::vector<Complex> g(k * n);
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t v = 0; v < n; ++v) {
      Complex acc = 0.0;
      for (std::size_t b = 0; b < k; ++b) {
        acc += kernel(k - 1 - a, k - 1 - b) * unit_root(v * cpos[b], n);
      }
      g[a * n + v] = acc;
    }
  }
  std::vector<Complex> phase(rp * k);
  for (std::size_t u = 0; u < rp; ++u) {
    for (std::size_t a = 0; a < k; ++a) phase[u * k + a] = unit_root(u * rpos[a], rp);
  }
  const std::size_t bits_n = log2_exact(n);
  const std::size_t bits_r = log2_exact(rp);
  for (std::size_t q = 0; q < n; ++q) {
    const std::size_t v = bit_reverse(q, bits_n);
    for (std::size_t s = 0; s < rp; ++s) {
      const std::size_t u = bit_reverse(s, bits_r);
      Complex acc = 0.0;
      for (std::size_t a = 0; a < k; ++a) acc += phase[u * k + a] * g[a * n + v];
      cols[q][s] = acc;
    }
  }
  return cols;
}

}  // namespace detail

/// Sum of two packed images with identical layout.
inline PackedImage add_images(SlotVm& vm, const PackedImage& a, const PackedImage& b) {
  if (a.layout() != b.layout()) throw ShapeError("image layouts differ");
  PackedImage out{{}, a.height, a.width, a.spacing};
  out.rows.reserve(a.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) out.rows.push_back(vm.add(a.rows[i], b.rows[i]));
  return out;
}

enum class ConvStrategy {
  /// Forward transform once per input channel, accumulate filter products in
  /// the frequency domain, inverse transform once per output channel.
  spectral,
  /// Independent conv2d for every (output, input) pair, summed spatially.
  per_pair,
};

struct ConvLayerWeights {
  std::vector<std::vector<Matrix>> kernels;  ///< [out][in], each n x n
  std::vector<double> bias;                  ///< [out]
  std::size_t stride = 1;
};

/// out_c = sum_in conv2d(in, k[c][in]) + bias_c, bias applied at the valid
/// output positions only.
inline std::vector<PackedImage> conv_layer(SlotVm& vm,
                                           const std::vector<PackedImage>& inputs,
                                           const ConvLayerWeights& w,
                                           ConvStrategy strategy = ConvStrategy::spectral) {
  if (inputs.empty() || w.kernels.empty()) throw ShapeError("empty convolution layer");
  if (w.bias.size() != w.kernels.size()) throw ShapeError("bias count differs from output channels");
  for (const auto& k : w.kernels) {
    if (k.size() != inputs.size()) throw ShapeError("kernel stack does not match input channels");
  }
  for (const auto& in : inputs) {
    if (in.layout() != inputs.front().layout()) throw ShapeError("input channels differ in layout");
  }
  const std::size_t n = w.kernels.front().front().rows;
  const ConvShape shape = conv_shape(inputs.front().layout(), n, w.stride);
  const StrideMask mask = stride_mask(shape);

  std::vector<PackedImage> outputs;
  outputs.reserve(w.kernels.size());

  if (strategy == ConvStrategy::spectral) {
    std::vector<SpectrumColumns> spectra;
    spectra.reserve(inputs.size());
    for (const auto& in : inputs) spectra.push_back(forward_spectrum(vm, in, shape));
    for (std::size_t c = 0; c < w.kernels.size(); ++c) {
      SpectrumColumns acc;
      for (std::size_t i = 0; i < inputs.size(); ++i) {
        const auto filter = detail::filter_columns(vm, w.kernels[c][i], shape);
        auto prod = multiply_spectrum(vm, spectra[i], filter);
        if (acc.empty()) {
          acc = std::move(prod);
        } else {
          for (std::size_t q = 0; q < acc.size(); ++q) acc[q] = vm.add(acc[q], prod[q]);
        }
      }
      outputs.push_back(inverse_to_image(vm, std::move(acc), shape, mask, w.bias[c]));
    }
    return outputs;
  }

  for (std::size_t c = 0; c < w.kernels.size(); ++c) {
    std::optional<PackedImage> acc;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      auto cols = forward_spectrum(vm, inputs[i], shape);
      PackedImage y = inverse_to_image(
          vm, multiply_spectrum(vm, cols, detail::filter_columns(vm, w.kernels[c][i], shape)),
          shape, mask);
      acc = acc ? add_images(vm, *acc, y) : std::move(y);
    }
    if (w.bias[c] != 0.0) {
      for (std::size_t r = 0; r < acc->rows.size(); ++r) {
        SlotVector b = mask.rows[r];
        for (auto& v : b.values()) v *= w.bias[c];
        acc->rows[r] = vm.add(acc->rows[r], b);
      }
    }
    outputs.push_back(std::move(*acc));
  }
  return outputs;
}

/**
 * @brief Spatial-domain baseline evaluated element by element: every output
 * sample costs kernel^2 plaintext multiplications, rotations and additions.
 *
 * Used only to compare instruction counts against the frequency path.
 */
inline PackedImage spatial_conv2d(SlotVm& vm, const PackedImage& img,
                                  const Matrix& kernel, std::size_t stride) {
  if (kernel.rows != kernel.cols) throw ShapeError("kernel must be square");
  const ImageLayout in = img.layout();
  const std::size_t n = kernel.rows;
  const std::size_t d = in.spacing;
  if (in.compact_height() < n || in.compact_width() < n) {
    throw ShapeError("kernel larger than image");
  }
  const std::size_t sp = d * stride;
  const std::size_t out_h = (in.compact_height() - n) / stride + 1;
  const std::size_t out_w = (in.compact_width() - n) / stride + 1;

  PackedImage out;
  out.rows.reserve(in.rows);
  for (std::size_t r = 0; r < in.rows; ++r) {
    if (r % sp != 0 || r / sp >= out_h) {
      out.rows.push_back(vm.zero());
      continue;
    }
    std::optional<Ciphertext> acc;
    for (std::size_t oc = 0; oc < out_w; ++oc) {
      const std::size_t j = oc * sp;
      for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = 0; b < n; ++b) {
          SlotVector w(in.slots);
          w[j + b * d] = kernel(a, b);
          Ciphertext t = vm.rotate_left(vm.mul_plain(img.rows[r + a * d], w),
                                        static_cast<long>(b * d));
          acc = acc ? vm.add(*acc, t) : std::move(t);
        }
      }
    }
    out.rows.push_back(std::move(*acc));
  }
  out.height = (out_h - 1) * sp + 1;
  out.width = (out_w - 1) * sp + 1;
  out.spacing = sp;
  return out;
}

}  // namespace heinfer
