// Copyright 2026 The exsum Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// Transformer building blocks on top of the tensor core, plus the named
// parameter store and its binary checkpoint format.

#ifndef EXSUM_NN_HPP_
#define EXSUM_NN_HPP_

#include <cmath>
#include <cstring>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "exsum/tensor.hpp"
#include "exsum/util.hpp"
#include "json.hpp"

namespace exsum {

// Ordered, named trainable tensors. Creation order is fixed by the model
// constructors, which keeps seeded initialization reproducible.
class ParamStore {
 public:
  Tensor add(const std::string& name, Shape shape,
             std::vector<double> values) {
    if (index_.count(name)) {
      throw ShapeError("duplicate parameter name: " + name);
    }
    Tensor t = Tensor::param(std::move(shape), std::move(values));
    index_.emplace(name, params_.size());
    params_.emplace_back(name, t);
    return t;
  }

  const Tensor& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw DataError("unknown parameter: " + name);
    return params_[it->second].second;
  }

  std::vector<Tensor> all() const {
    std::vector<Tensor> out;
    out.reserve(params_.size());
    for (const auto& [name, t] : params_) out.push_back(t);
    return out;
  }

  const std::vector<std::pair<std::string, Tensor>>& entries() const {
    return params_;
  }

  void zero_grad() {
    for (auto& [name, t] : params_) t.zero_grad();
  }

  std::size_t total_values() const {
    std::size_t n = 0;
    for (const auto& [name, t] : params_) n += t.size();
    return n;
  }

 private:
  std::vector<std::pair<std::string, Tensor>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

// ---- Initializers ----

inline std::vector<double> xavier_uniform(std::size_t fan_in,
                                          std::size_t fan_out, Rng& rng) {
  const double limit =
      std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> out(fan_in * fan_out);
  for (double& v : out) v = rng.uniform(-limit, limit);
  return out;
}

inline std::vector<double> normal_init(std::size_t n, double stddev,
                                       Rng& rng) {
  std::vector<double> out(n);
  for (double& v : out) v = rng.normal(0.0, stddev);
  return out;
}

inline std::vector<double> const_init(std::size_t n, double v) {
  return std::vector<double>(n, v);
}

// ---- Checkpoints ----
//
// Binary layout (little endian):
//   "EXCK" | u32 version | u64 meta_len | meta (JSON) | u64 count |
//   repeated: u64 name_len | name | u64 ndim | u64 dims... | f64 values...

inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <class T>
void put_raw(std::string& out, const T& v) {
  const char* p = reinterpret_cast<const char*>(&v);
  out.append(p, sizeof(T));
}

template <class T>
T get_raw(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) {
    throw DataError("checkpoint: truncated file");
  }
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace detail

inline void save_checkpoint(const ParamStore& params,
                            const nlohmann::json& meta,
                            const std::filesystem::path& path) {
  std::string out;
  out += "EXCK";
  detail::put_raw<std::uint32_t>(out, kCheckpointVersion);
  const std::string meta_str = meta.dump();
  detail::put_raw<std::uint64_t>(out, meta_str.size());
  out += meta_str;
  detail::put_raw<std::uint64_t>(out, params.entries().size());
  for (const auto& [name, t] : params.entries()) {
    detail::put_raw<std::uint64_t>(out, name.size());
    out += name;
    detail::put_raw<std::uint64_t>(out, t.shape().size());
    for (std::size_t d : t.shape()) detail::put_raw<std::uint64_t>(out, d);
    for (double v : t.values()) detail::put_raw<double>(out, v);
  }
  write_file(path, out);
}

// Loads values into an already constructed store; names and shapes must
// match exactly. Returns the checkpoint's meta JSON.
inline nlohmann::json load_checkpoint(ParamStore& params,
                                      const std::filesystem::path& path) {
  const std::string in = read_file(path);
  std::size_t pos = 0;
  if (in.size() < 4 || in.compare(0, 4, "EXCK") != 0) {
    throw DataError("checkpoint: bad magic in " + path.string());
  }
  pos = 4;
  const auto version = detail::get_raw<std::uint32_t>(in, pos);
  if (version != kCheckpointVersion) {
    throw DataError("checkpoint: unsupported version " +
                    std::to_string(version));
  }
  const auto meta_len = detail::get_raw<std::uint64_t>(in, pos);
  if (pos + meta_len > in.size()) throw DataError("checkpoint: truncated meta");
  nlohmann::json meta = nlohmann::json::parse(in.substr(pos, meta_len));
  pos += meta_len;
  const auto count = detail::get_raw<std::uint64_t>(in, pos);
  if (count != params.entries().size()) {
    throw DataError("checkpoint: has " + std::to_string(count) +
                    " tensors, model expects " +
                    std::to_string(params.entries().size()));
  }
  for (const auto& [name, t] : params.entries()) {
    const auto name_len = detail::get_raw<std::uint64_t>(in, pos);
    if (pos + name_len > in.size()) throw DataError("checkpoint: truncated");
    const std::string got_name = in.substr(pos, name_len);
    pos += name_len;
    if (got_name != name) {
      throw DataError("checkpoint: expected tensor '" + name + "', found '" +
                      got_name + "'");
    }
    const auto ndim = detail::get_raw<std::uint64_t>(in, pos);
    Shape shape(ndim);
    for (auto& d : shape) {
      d = static_cast<std::size_t>(detail::get_raw<std::uint64_t>(in, pos));
    }
    if (shape != t.shape()) {
      throw DataError("checkpoint: shape mismatch for '" + name + "': " +
                      shape_str(shape) + " vs model " + shape_str(t.shape()));
    }
    auto& dst = const_cast<Tensor&>(t).values();
    for (double& v : dst) v = detail::get_raw<double>(in, pos);
  }
  return meta;
}

// ---- Layers ----

struct Linear {
  Tensor w;  // (in, out)
  Tensor b;  // (out)

  static Linear create(ParamStore& store, const std::string& prefix,
                       std::size_t in, std::size_t out, Rng& rng) {
    Linear l;
    l.w = store.add(prefix + ".w", {in, out}, xavier_uniform(in, out, rng));
    l.b = store.add(prefix + ".b", {out}, const_init(out, 0.0));
    return l;
  }

  Tensor forward(const Tensor& x) const {
    return add_rowvec(matmul(x, w), b);
  }
};

struct LayerNormParams {
  Tensor gain;
  Tensor bias;

  static LayerNormParams create(ParamStore& store, const std::string& prefix,
                                std::size_t d) {
    LayerNormParams ln;
    ln.gain = store.add(prefix + ".gain", {d}, const_init(d, 1.0));
    ln.bias = store.add(prefix + ".bias", {d}, const_init(d, 0.0));
    return ln;
  }

  Tensor forward(const Tensor& x) const {
    return layer_norm(x, gain, bias);
  }
};

// Heads-averaged attention distributions, filled by
// MultiHeadAttention::forward when requested (used to pick the exemplar the
// decoder attends to most): the row at the last query position and the mean
// over all query positions.
struct AttnRecord {
  std::vector<double> last_query_row;
  std::vector<double> mean_query_row;
};

inline std::vector<std::uint8_t> causal_mask(std::size_t n) {
  std::vector<std::uint8_t> mask(n * n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) mask[i * n + j] = 1;
  }
  return mask;
}

struct MultiHeadAttention {
  Linear wq, wk, wv, wo;
  std::size_t heads = 1;

  static MultiHeadAttention create(ParamStore& store,
                                   const std::string& prefix, std::size_t d,
                                   std::size_t heads, Rng& rng) {
    if (heads == 0 || d % heads != 0) {
      throw ShapeError("attention: d=" + std::to_string(d) +
                       " not divisible by heads=" + std::to_string(heads));
    }
    MultiHeadAttention m;
    m.wq = Linear::create(store, prefix + ".wq", d, d, rng);
    m.wk = Linear::create(store, prefix + ".wk", d, d, rng);
    m.wv = Linear::create(store, prefix + ".wv", d, d, rng);
    m.wo = Linear::create(store, prefix + ".wo", d, d, rng);
    m.heads = heads;
    return m;
  }

  Tensor forward(const Tensor& q_in, const Tensor& k_in, const Tensor& v_in,
                 const std::vector<std::uint8_t>* mask = nullptr,
                 AttnRecord* record = nullptr) const {
    const std::size_t d = wq.w.cols();
    const std::size_t dh = d / heads;
    const Tensor q = wq.forward(q_in);
    const Tensor k = wk.forward(k_in);
    const Tensor v = wv.forward(v_in);
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<Tensor> ctx;
    ctx.reserve(heads);
    if (record) {
      record->last_query_row.assign(k_in.rows(), 0.0);
      record->mean_query_row.assign(k_in.rows(), 0.0);
    }
    for (std::size_t h = 0; h < heads; ++h) {
      const Tensor qh = slice_cols(q, h * dh, dh);
      const Tensor kh = slice_cols(k, h * dh, dh);
      const Tensor vh = slice_cols(v, h * dh, dh);
      const Tensor scores = scale(matmul_nt(qh, kh), inv_sqrt_dh);
      const Tensor attn = softmax(scores, mask);
      if (record) {
        const std::size_t rows = attn.rows(), cols = attn.cols();
        const double* last = attn.values().data() + (rows - 1) * cols;
        for (std::size_t j = 0; j < cols; ++j) {
          record->last_query_row[j] +=
              last[j] / static_cast<double>(heads);
        }
        const double norm = static_cast<double>(heads * rows);
        for (std::size_t i = 0; i < rows; ++i) {
          const double* row = attn.values().data() + i * cols;
          for (std::size_t j = 0; j < cols; ++j) {
            record->mean_query_row[j] += row[j] / norm;
          }
        }
      }
      ctx.push_back(matmul(attn, vh));
    }
    return wo.forward(concat_cols(ctx));
  }
};

struct FeedForward {
  Linear fc1, fc2;

  static FeedForward create(ParamStore& store, const std::string& prefix,
                            std::size_t d, std::size_t hidden, Rng& rng) {
    FeedForward f;
    f.fc1 = Linear::create(store, prefix + ".fc1", d, hidden, rng);
    f.fc2 = Linear::create(store, prefix + ".fc2", hidden, d, rng);
    return f;
  }

  Tensor forward(const Tensor& x) const {
    return fc2.forward(relu(fc1.forward(x)));
  }
};

inline Tensor multi_head_attention(const MultiHeadAttention& mha,
                                   const Tensor& q, const Tensor& k,
                                   const Tensor& v,
                                   const std::vector<std::uint8_t>* mask) {
  return mha.forward(q, k, v, mask);
}

// Post-norm transformer encoder layer.
struct EncoderLayer {
  MultiHeadAttention self_attn;
  FeedForward ffn;
  LayerNormParams ln1, ln2;

  static EncoderLayer create(ParamStore& store, const std::string& prefix,
                             std::size_t d, std::size_t heads,
                             std::size_t ffn_hidden, Rng& rng) {
    EncoderLayer l;
    l.self_attn =
        MultiHeadAttention::create(store, prefix + ".attn", d, heads, rng);
    l.ffn = FeedForward::create(store, prefix + ".ffn", d, ffn_hidden, rng);
    l.ln1 = LayerNormParams::create(store, prefix + ".ln1", d);
    l.ln2 = LayerNormParams::create(store, prefix + ".ln2", d);
    return l;
  }

  Tensor forward(const Tensor& x, double drop, Rng* rng) const {
    Tensor a = self_attn.forward(x, x, x);
    if (drop > 0.0 && rng) a = dropout(a, drop, *rng);
    Tensor h = ln1.forward(add(x, a));
    Tensor f = ffn.forward(h);
    if (drop > 0.0 && rng) f = dropout(f, drop, *rng);
    return ln2.forward(add(h, f));
  }
};

struct DecoderLayer {
  MultiHeadAttention self_attn;
  MultiHeadAttention cross_attn;
  FeedForward ffn;
  LayerNormParams ln1, ln2, ln3;

  static DecoderLayer create(ParamStore& store, const std::string& prefix,
                             std::size_t d, std::size_t heads,
                             std::size_t ffn_hidden, Rng& rng) {
    DecoderLayer l;
    l.self_attn =
        MultiHeadAttention::create(store, prefix + ".self", d, heads, rng);
    l.cross_attn =
        MultiHeadAttention::create(store, prefix + ".cross", d, heads, rng);
    l.ffn = FeedForward::create(store, prefix + ".ffn", d, ffn_hidden, rng);
    l.ln1 = LayerNormParams::create(store, prefix + ".ln1", d);
    l.ln2 = LayerNormParams::create(store, prefix + ".ln2", d);
    l.ln3 = LayerNormParams::create(store, prefix + ".ln3", d);
    return l;
  }

  Tensor forward(const Tensor& x, const Tensor& h_enc,
                 const std::vector<std::uint8_t>& self_mask, double drop,
                 Rng* rng, AttnRecord* cross_record = nullptr) const {
    Tensor a = self_attn.forward(x, x, x, &self_mask);
    if (drop > 0.0 && rng) a = dropout(a, drop, *rng);
    Tensor h = ln1.forward(add(x, a));
    Tensor c = cross_attn.forward(h, h_enc, h_enc, nullptr, cross_record);
    if (drop > 0.0 && rng) c = dropout(c, drop, *rng);
    h = ln2.forward(add(h, c));
    Tensor f = ffn.forward(h);
    if (drop > 0.0 && rng) f = dropout(f, drop, *rng);
    return ln3.forward(add(h, f));
  }
};

inline std::vector<int> iota_ids(std::size_t n) {
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<int>(i);
  return out;
}

}  // namespace exsum

#endif  // EXSUM_NN_HPP_
