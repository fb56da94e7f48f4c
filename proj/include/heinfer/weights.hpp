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
 * @file weights.hpp
 * @brief WeightStore container: architecture descriptor plus named float64
 * tensors, protected by a CRC-32 of the whole file.
 *
 * Layout (all integers little-endian):
 *
 *     "HEIW"            4 bytes magic
 *     version           u32, currently 1
 *     descriptor_len    u64
 *     descriptor        descriptor_len bytes of compact JSON
 *     tensor data       f64 values, row-major, in descriptor order
 *     crc32             u32 over every preceding byte
 *
 * The descriptor holds {"architecture": {...}, "tensors": [{"name", "shape"}]}
 * and only integers and strings, so re-serialization is byte-identical.
 * Scalars such as activation scales are stored as one-element tensors.
 */
#pragma once

#include <zlib.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "heinfer/model.hpp"

namespace heinfer {

struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  std::size_t numel() const {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }
  friend bool operator==(const Tensor&, const Tensor&) = default;
};

class WeightStore {
 public:
  static constexpr std::uint32_t kVersion = 1;
  static constexpr char kMagic[4] = {'H', 'E', 'I', 'W'};

  nlohmann::json architecture = nlohmann::json::object();

  void put(const std::string& name, Tensor t) {
    if (t.numel() != t.data.size()) throw ShapeError("tensor '" + name + "' shape does not match its data");
    if (!tensors_.contains(name)) order_.push_back(name);
    tensors_[name] = std::move(t);
  }

  bool contains(const std::string& name) const { return tensors_.contains(name); }

  /// Tensor `name`, checked against `shape`.
  const Tensor& get(const std::string& name, const std::vector<std::size_t>& shape) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw FormatError("missing tensor '" + name + "'");
    if (it->second.shape != shape) throw FormatError("tensor '" + name + "' has unexpected shape");
    return it->second;
  }

  const std::vector<std::string>& names() const { return order_; }

  std::vector<std::uint8_t> serialize() const {
    nlohmann::json desc;
    desc["architecture"] = architecture;
    desc["tensors"] = nlohmann::json::array();
    for (const auto& n : order_) desc["tensors"].push_back({{"name", n}, {"shape", tensors_.at(n).shape}});
    const std::string text = desc.dump();

    std::vector<std::uint8_t> out(kMagic, kMagic + 4);
    put_le(out, kVersion);
    put_le(out, static_cast<std::uint64_t>(text.size()));
    out.insert(out.end(), text.begin(), text.end());
    for (const auto& n : order_) {
      for (double v : tensors_.at(n).data) put_le(out, std::bit_cast<std::uint64_t>(v));
    }
    put_le(out, crc(out.data(), out.size()));
    return out;
  }

  static WeightStore parse(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 20 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
      throw FormatError("not a weight file (bad magic)");
    }
    const std::size_t body = bytes.size() - 4;
    if (get_le<std::uint32_t>(bytes, body) != crc(bytes.data(), body)) {
      throw FormatError("weight file checksum mismatch");
    }
    if (get_le<std::uint32_t>(bytes, 4) != kVersion) throw FormatError("unsupported weight file version");
    const auto len = get_le<std::uint64_t>(bytes, 8);
    if (len > body - 16) throw FormatError("truncated descriptor");

    WeightStore ws;
    std::size_t pos = 16 + len;
    try {
      const auto desc = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + static_cast<long>(pos));
      ws.architecture = desc.at("architecture");
      for (const auto& t : desc.at("tensors")) {
        Tensor tensor;
        tensor.shape = t.at("shape").get<std::vector<std::size_t>>();
        const std::size_t n = tensor.numel();
        if (n > (body - pos) / 8) throw FormatError("truncated tensor data");
        tensor.data.resize(n);
        for (auto& v : tensor.data) {
          v = std::bit_cast<double>(get_le<std::uint64_t>(bytes, pos));
          pos += 8;
        }
        const auto name = t.at("name").get<std::string>();
        if (ws.contains(name)) throw FormatError("duplicate tensor '" + name + "'");
        ws.put(name, std::move(tensor));
      }
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("malformed descriptor: ") + e.what());
    }
    if (pos != body) throw FormatError("trailing bytes after tensor data");
    return ws;
  }

  void save(const std::string& path) const {
    const auto bytes = serialize();
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot write '" + path + "'");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw FormatError("write failed for '" + path + "'");
  }

  static WeightStore load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open '" + path + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return parse(bytes);
  }

 private:
  static std::uint32_t crc(const std::uint8_t* p, std::size_t n) {
    uLong c = crc32(0L, Z_NULL, 0);
    while (n > 0) {
      const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
      c = crc32(c, p, chunk);
      p += chunk;
      n -= chunk;
    }
    return static_cast<std::uint32_t>(c);
  }

  template <typename T>
  static void put_le(std::vector<std::uint8_t>& out, T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }

  template <typename T>
  static T get_le(const std::vector<std::uint8_t>& in, std::size_t pos) {
    if (pos + sizeof(T) > in.size()) throw FormatError("unexpected end of weight file");
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(in[pos + i]) << (8 * i);
    return v;
  }

  std::map<std::string, Tensor> tensors_;
  std::vector<std::string> order_;
};

// ============================================================================
// Model <-> store
// ============================================================================

namespace detail {

inline Tensor matrix_tensor(const Matrix& m) { return {{m.rows, m.cols}, m.data}; }
inline Tensor vector_tensor(const std::vector<double>& v) { return {{v.size()}, v}; }
inline Tensor scalar_tensor(double v) { return {{1}, {v}}; }

inline void put_dense(WeightStore& ws, nlohmann::json& layers, const std::string& type,
                      const std::string& name, const Matrix& w, const std::vector<double>& b,
                      Activation act, ScaleInfo s) {
  layers.push_back({{"type", type}, {"name", name}, {"in", w.cols}, {"out", w.rows},
                    {"activation", to_string(act)}});
  ws.put(name + ".weight", matrix_tensor(w));
  ws.put(name + ".bias", vector_tensor(b));
  ws.put(name + ".scale", scalar_tensor(s.scale));
}

template <typename Layer>
Layer get_dense(const WeightStore& ws, const nlohmann::json& j) {
  Layer l;
  l.name = j.at("name").get<std::string>();
  const auto in = j.at("in").get<std::size_t>();
  const auto out = j.at("out").get<std::size_t>();
  l.weight = Matrix(out, in);
  l.weight.data = ws.get(l.name + ".weight", {out, in}).data;
  l.bias = ws.get(l.name + ".bias", {out}).data;
  l.activation = parse_activation(j.at("activation").get<std::string>());
  l.scale.scale = ws.get(l.name + ".scale", {1}).data[0];
  return l;
}

}  // namespace detail

inline WeightStore to_store(const ModelSpec& m) {
  validate(m);
  WeightStore ws;
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& layer : m.layers) {
    if (const auto* c = std::get_if<ConvBlock>(&layer)) {
      const std::size_t co = c->out_channels(), ci = c->in_channels(), k = c->kernel();
      layers.push_back({{"type", "conv"}, {"name", c->name}, {"in", ci}, {"out", co},
                        {"kernel", k}, {"stride", c->weights.stride},
                        {"activation", to_string(c->activation)}});
      Tensor w{{co, ci, k, k}, {}};
      for (const auto& stack : c->weights.kernels) {
        for (const auto& kk : stack) w.data.insert(w.data.end(), kk.data.begin(), kk.data.end());
      }
      ws.put(c->name + ".weight", std::move(w));
      ws.put(c->name + ".bias", detail::vector_tensor(c->weights.bias));
      ws.put(c->name + ".scale", detail::scalar_tensor(c->scale.scale));
    } else if (const auto* f = std::get_if<FlattenDense>(&layer)) {
      detail::put_dense(ws, layers, "flatten_dense", f->name, f->weight, f->bias, f->activation, f->scale);
    } else if (const auto* d = std::get_if<Dense>(&layer)) {
      detail::put_dense(ws, layers, "dense", d->name, d->weight, d->bias, d->activation, d->scale);
    } else {
      const auto& h = std::get<GymHead>(layer);
      nlohmann::json sub = nlohmann::json::array();
      for (const auto& d : h.layers) {
        detail::put_dense(ws, sub, "dense", d.name, d.weight, d.bias, d.activation, d.scale);
      }
      layers.push_back({{"type", "gym_head"}, {"name", h.name}, {"layers", sub}});
    }
  }
  ws.architecture = {{"name", m.name},
                     {"input", {m.input_rows, m.input_cols}},
                     {"latent", m.latent},
                     {"layers", layers}};
  return ws;
}

inline ModelSpec from_store(const WeightStore& ws) {
  ModelSpec m;
  try {
    const auto& a = ws.architecture;
    m.name = a.at("name").get<std::string>();
    m.input_rows = a.at("input").at(0).get<std::size_t>();
    m.input_cols = a.at("input").at(1).get<std::size_t>();
    m.latent = a.at("latent").get<std::size_t>();
    for (const auto& j : a.at("layers")) {
      const auto type = j.at("type").get<std::string>();
      if (type == "conv") {
        ConvBlock c;
        c.name = j.at("name").get<std::string>();
        const auto co = j.at("out").get<std::size_t>(), ci = j.at("in").get<std::size_t>();
        const auto k = j.at("kernel").get<std::size_t>();
        c.weights.stride = j.at("stride").get<std::size_t>();
        const auto& w = ws.get(c.name + ".weight", {co, ci, k, k});
        c.weights.kernels.assign(co, std::vector<Matrix>(ci, Matrix(k, k)));
        for (std::size_t o = 0; o < co; ++o) {
          for (std::size_t i = 0; i < ci; ++i) {
            const auto off = static_cast<long>(((o * ci + i) * k) * k);
            std::copy(w.data.begin() + off, w.data.begin() + off + static_cast<long>(k * k),
                      c.weights.kernels[o][i].data.begin());
          }
        }
        c.weights.bias = ws.get(c.name + ".bias", {co}).data;
        c.activation = parse_activation(j.at("activation").get<std::string>());
        c.scale.scale = ws.get(c.name + ".scale", {1}).data[0];
        m.layers.emplace_back(std::move(c));
      } else if (type == "flatten_dense") {
        m.layers.emplace_back(detail::get_dense<FlattenDense>(ws, j));
      } else if (type == "dense") {
        m.layers.emplace_back(detail::get_dense<Dense>(ws, j));
      } else if (type == "gym_head") {
        GymHead h;
        h.name = j.at("name").get<std::string>();
        const auto& sub = j.at("layers");
        if (sub.size() != 3) throw FormatError("Gym head must have three layers");
        for (std::size_t i = 0; i < 3; ++i) h.layers[i] = detail::get_dense<Dense>(ws, sub[i]);
        m.layers.emplace_back(std::move(h));
      } else {
        throw FormatError("unknown layer type '" + type + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed architecture: ") + e.what());
  }
  try {
    validate(m);
  } catch (const ShapeError& e) {
    throw FormatError(std::string("inconsistent architecture: ") + e.what());
  }
  return m;
}

}  // namespace heinfer
