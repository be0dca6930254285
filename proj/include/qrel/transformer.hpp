//
// Copyright 2026 The qrel Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

// CPU forward passes for the two transformer families the metric consumes:
// a post-LayerNorm BERT encoder returning every layer's attention
// probabilities and hidden states, and a pre-LayerNorm GPT-2 decoder with a
// tied output embedding. Inference only; weights are immutable after load so
// concurrent forwards on one instance are safe.

#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "qrel/error.hpp"
#include "qrel/safetensors.hpp"
#include "qrel/tokenizer.hpp"

namespace qrel::nn {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<float, 1, Eigen::Dynamic>;

struct Linear {
  RowMatrix weight;  // [out, in]
  RowVector bias;    // [out]

  RowMatrix operator()(const RowMatrix& x) const {
    RowMatrix y = x * weight.transpose();
    y.rowwise() += bias;
    return y;
  }
};

struct LayerNorm {
  RowVector gamma;
  RowVector beta;
  float eps = 1e-5f;

  void apply_inplace(RowMatrix& x) const {
    const Eigen::Index d = x.cols();
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      double mean = 0.0;
      for (Eigen::Index c = 0; c < d; ++c) mean += x(r, c);
      mean /= static_cast<double>(d);
      double var = 0.0;
      for (Eigen::Index c = 0; c < d; ++c) {
        const double z = x(r, c) - mean;
        var += z * z;
      }
      var /= static_cast<double>(d);
      const double inv = 1.0 / std::sqrt(var + static_cast<double>(eps));
      for (Eigen::Index c = 0; c < d; ++c) {
        x(r, c) = static_cast<float>((x(r, c) - mean) * inv) * gamma(c) + beta(c);
      }
    }
  }
};

inline void gelu_erf_inplace(RowMatrix& x) {
  x = x.unaryExpr([](float v) {
    return static_cast<float>(0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0))));
  });
}

inline void gelu_tanh_inplace(RowMatrix& x) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  x = x.unaryExpr([](float v) {
    const double u = static_cast<double>(v);
    return static_cast<float>(0.5 * u * (1.0 + std::tanh(kC * (u + 0.044715 * u * u * u))));
  });
}

/// Row softmax. With `causal`, row r covers columns [0, r] and the rest are zeroed.
inline void softmax_rows_inplace(RowMatrix& s, bool causal) {
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    const Eigen::Index width = causal ? r + 1 : s.cols();
    float mx = s(r, 0);
    for (Eigen::Index c = 1; c < width; ++c) mx = std::max(mx, s(r, c));
    double sum = 0.0;
    for (Eigen::Index c = 0; c < width; ++c) {
      const float e = std::exp(s(r, c) - mx);
      s(r, c) = e;
      sum += e;
    }
    const float inv = static_cast<float>(1.0 / sum);
    for (Eigen::Index c = 0; c < width; ++c) s(r, c) *= inv;
    for (Eigen::Index c = width; c < s.cols(); ++c) s(r, c) = 0.0f;
  }
}

/// Architecture hyper-parameters read from the model file metadata or a
/// sibling config.json.
struct ArchConfig {
  std::string architecture;  // "bert" or "gpt2"
  int num_layers = 0;
  int num_heads = 0;
  int hidden_dim = 0;
  int max_positions = 0;
  float layer_norm_eps = 1e-12f;
  std::vector<std::string> outputs;
  std::optional<TokenId> bos_token_id;
};

namespace detail {

inline Tensor find_tensor(const SafeTensorFile& f, const std::vector<std::string>& prefixes,
                          const std::string& name) {
  for (const auto& p : prefixes) {
    if (f.contains(p + name)) return f.tensor(p + name);
  }
  throw FormatError("model file lacks tensor '" + name + "'");
}

inline bool has_tensor(const SafeTensorFile& f, const std::vector<std::string>& prefixes,
                       const std::string& name) {
  for (const auto& p : prefixes) {
    if (f.contains(p + name)) return true;
  }
  return false;
}

inline RowMatrix to_matrix(const Tensor& t) {
  if (t.shape.size() != 2) throw FormatError("expected a 2-D tensor");
  RowMatrix m(t.shape[0], t.shape[1]);
  std::copy(t.data.begin(), t.data.end(), m.data());
  return m;
}

inline RowVector to_vector(const Tensor& t) {
  RowVector v(static_cast<Eigen::Index>(t.numel()));
  std::copy(t.data.begin(), t.data.end(), v.data());
  return v;
}

inline void expect_shape(const RowMatrix& m, Eigen::Index rows, Eigen::Index cols,
                         const std::string& what) {
  if (m.rows() != rows || m.cols() != cols) {
    throw FormatError(what + " has shape [" + std::to_string(m.rows()) + ", " +
                      std::to_string(m.cols()) + "], expected [" + std::to_string(rows) + ", " +
                      std::to_string(cols) + "]");
  }
}

}  // namespace detail

/// Output of one encoder pass. attentions is [L][H][T][T], hidden is [L][T][D].
struct EncoderOutput {
  int layers = 0;
  int heads = 0;
  int length = 0;
  int hidden_dim = 0;
  std::vector<float> attentions;
  std::vector<float> hidden;
};

class BertEncoder {
 public:
  BertEncoder(const SafeTensorFile& file, const ArchConfig& cfg) : cfg_(cfg) {
    const std::vector<std::string> pre{"", "bert."};
    auto ln = [&](const std::string& base) {
      LayerNorm n;
      const bool legacy = !detail::has_tensor(file, pre, base + ".weight");
      n.gamma = detail::to_vector(detail::find_tensor(file, pre, base + (legacy ? ".gamma" : ".weight")));
      n.beta = detail::to_vector(detail::find_tensor(file, pre, base + (legacy ? ".beta" : ".bias")));
      n.eps = cfg.layer_norm_eps;
      return n;
    };
    auto lin = [&](const std::string& base) {
      Linear l;
      l.weight = detail::to_matrix(detail::find_tensor(file, pre, base + ".weight"));
      l.bias = detail::to_vector(detail::find_tensor(file, pre, base + ".bias"));
      return l;
    };
    word_ = detail::to_matrix(detail::find_tensor(file, pre, "embeddings.word_embeddings.weight"));
    position_ = detail::to_matrix(detail::find_tensor(file, pre, "embeddings.position_embeddings.weight"));
    token_type_ = detail::to_matrix(detail::find_tensor(file, pre, "embeddings.token_type_embeddings.weight"));
    embed_ln_ = ln("embeddings.LayerNorm");
    const Eigen::Index d = cfg.hidden_dim;
    if (word_.cols() != d) throw FormatError("hidden_dim does not match word embeddings");
    if (position_.rows() < cfg.max_positions) {
      throw FormatError("position table is shorter than max_positions");
    }
    for (int l = 0; l < cfg.num_layers; ++l) {
      const std::string p = "encoder.layer." + std::to_string(l) + ".";
      Layer layer{lin(p + "attention.self.query"), lin(p + "attention.self.key"),
                  lin(p + "attention.self.value"), lin(p + "attention.output.dense"),
                  ln(p + "attention.output.LayerNorm"), lin(p + "intermediate.dense"),
                  lin(p + "output.dense"), ln(p + "output.LayerNorm")};
      detail::expect_shape(layer.query.weight, d, d, p + "query");
      layers_.push_back(std::move(layer));
    }
  }

  std::size_t vocab_size() const { return static_cast<std::size_t>(word_.rows()); }

  EncoderOutput forward(std::span<const TokenId> ids, std::span<const int> type_ids) const {
    const int t = static_cast<int>(ids.size());
    const int d = cfg_.hidden_dim;
    const int heads = cfg_.num_heads;
    const int dh = d / heads;
    if (t == 0) throw PreconditionError("empty input sequence");
    if (t > cfg_.max_positions) throw OverLengthError("sequence exceeds max_positions");
    RowMatrix x(t, d);
    for (int i = 0; i < t; ++i) {
      const auto id = ids[static_cast<std::size_t>(i)];
      const int tt = type_ids.empty() ? 0 : type_ids[static_cast<std::size_t>(i)];
      if (id < 0 || id >= word_.rows()) throw PreconditionError("token id out of vocabulary range");
      x.row(i) = word_.row(id) + position_.row(i) + token_type_.row(tt);
    }
    embed_ln_.apply_inplace(x);

    EncoderOutput out;
    out.layers = cfg_.num_layers;
    out.heads = heads;
    out.length = t;
    out.hidden_dim = d;
    out.attentions.resize(static_cast<std::size_t>(cfg_.num_layers) * heads * t * t);
    out.hidden.resize(static_cast<std::size_t>(cfg_.num_layers) * t * d);
    const float scale = 1.0f / std::sqrt(static_cast<float>(dh));

    for (int l = 0; l < cfg_.num_layers; ++l) {
      const Layer& L = layers_[static_cast<std::size_t>(l)];
      const RowMatrix q = L.query(x);
      const RowMatrix k = L.key(x);
      const RowMatrix v = L.value(x);
      RowMatrix ctx(t, d);
      for (int h = 0; h < heads; ++h) {
        RowMatrix s = (q.middleCols(h * dh, dh) * k.middleCols(h * dh, dh).transpose()) * scale;
        softmax_rows_inplace(s, false);
        float* dst = out.attentions.data() + ((static_cast<std::size_t>(l) * heads + h) * t * t);
        std::copy(s.data(), s.data() + static_cast<std::size_t>(t) * t, dst);
        ctx.middleCols(h * dh, dh) = s * v.middleCols(h * dh, dh);
      }
      RowMatrix a = L.attn_out(ctx) + x;
      L.attn_ln.apply_inplace(a);
      RowMatrix inter = L.intermediate(a);
      gelu_erf_inplace(inter);
      RowMatrix o = L.output(inter) + a;
      L.out_ln.apply_inplace(o);
      x = std::move(o);
      std::copy(x.data(), x.data() + static_cast<std::size_t>(t) * d,
                out.hidden.data() + static_cast<std::size_t>(l) * t * d);
    }
    return out;
  }

 private:
  struct Layer {
    Linear query, key, value, attn_out;
    LayerNorm attn_ln;
    Linear intermediate, output;
    LayerNorm out_ln;
  };

  ArchConfig cfg_;
  RowMatrix word_, position_, token_type_;
  LayerNorm embed_ln_;
  std::vector<Layer> layers_;
};

class Gpt2Decoder {
 public:
  Gpt2Decoder(const SafeTensorFile& file, const ArchConfig& cfg) : cfg_(cfg) {
    const std::vector<std::string> pre{"", "transformer."};
    auto ln = [&](const std::string& base) {
      LayerNorm n;
      n.gamma = detail::to_vector(detail::find_tensor(file, pre, base + ".weight"));
      n.beta = detail::to_vector(detail::find_tensor(file, pre, base + ".bias"));
      n.eps = cfg.layer_norm_eps;
      return n;
    };
    // Conv1D stores [in, out]; keep everything as [out, in].
    auto conv = [&](const std::string& base) {
      Linear l;
      l.weight = detail::to_matrix(detail::find_tensor(file, pre, base + ".weight")).transpose();
      l.bias = detail::to_vector(detail::find_tensor(file, pre, base + ".bias"));
      return l;
    };
    wte_ = detail::to_matrix(detail::find_tensor(file, pre, "wte.weight"));
    wpe_ = detail::to_matrix(detail::find_tensor(file, pre, "wpe.weight"));
    const Eigen::Index d = cfg.hidden_dim;
    if (wte_.cols() != d) throw FormatError("hidden_dim does not match token embeddings");
    if (wpe_.rows() < cfg.max_positions) {
      throw FormatError("position table is shorter than max_positions");
    }
    for (int l = 0; l < cfg.num_layers; ++l) {
      const std::string p = "h." + std::to_string(l) + ".";
      Block b{ln(p + "ln_1"), conv(p + "attn.c_attn"), conv(p + "attn.c_proj"),
              ln(p + "ln_2"), conv(p + "mlp.c_fc"), conv(p + "mlp.c_proj")};
      detail::expect_shape(b.qkv.weight, 3 * d, d, p + "attn.c_attn");
      blocks_.push_back(std::move(b));
    }
    final_ln_ = ln("ln_f");
  }

  std::size_t vocab_size() const { return static_cast<std::size_t>(wte_.rows()); }

  /// Final-layer-normed hidden states [T, D].
  RowMatrix hidden(std::span<const TokenId> ids) const {
    const int t = static_cast<int>(ids.size());
    const int d = cfg_.hidden_dim;
    const int heads = cfg_.num_heads;
    const int dh = d / heads;
    if (t == 0) throw PreconditionError("empty input sequence");
    if (t > cfg_.max_positions) throw OverLengthError("sequence exceeds max_positions");
    RowMatrix x(t, d);
    for (int i = 0; i < t; ++i) {
      const auto id = ids[static_cast<std::size_t>(i)];
      if (id < 0 || id >= wte_.rows()) throw PreconditionError("token id out of vocabulary range");
      x.row(i) = wte_.row(id) + wpe_.row(i);
    }
    const float scale = 1.0f / std::sqrt(static_cast<float>(dh));
    for (const Block& b : blocks_) {
      RowMatrix a = x;
      b.ln1.apply_inplace(a);
      const RowMatrix qkv = b.qkv(a);
      RowMatrix ctx(t, d);
      for (int h = 0; h < heads; ++h) {
        RowMatrix s = (qkv.middleCols(h * dh, dh) * qkv.middleCols(d + h * dh, dh).transpose()) * scale;
        softmax_rows_inplace(s, true);
        ctx.middleCols(h * dh, dh) = s * qkv.middleCols(2 * d + h * dh, dh);
      }
      x += b.proj(ctx);
      RowMatrix m = x;
      b.ln2.apply_inplace(m);
      RowMatrix f = b.fc(m);
      gelu_tanh_inplace(f);
      x += b.mlp_proj(f);
    }
    final_ln_.apply_inplace(x);
    return x;
  }

  /// Natural-log probability of targets[i] under the next-token distribution
  /// at hidden row rows[i]. Log-softmax is taken in double precision.
  std::vector<double> token_logprobs(const RowMatrix& h, std::span<const Eigen::Index> rows,
                                     std::span<const TokenId> targets) const {
    std::vector<double> out(rows.size());
    constexpr std::size_t kBlock = 32;
    for (std::size_t start = 0; start < rows.size(); start += kBlock) {
      const std::size_t n = std::min(kBlock, rows.size() - start);
      RowMatrix sel(static_cast<Eigen::Index>(n), h.cols());
      for (std::size_t i = 0; i < n; ++i) sel.row(static_cast<Eigen::Index>(i)) = h.row(rows[start + i]);
      const RowMatrix logits = sel * wte_.transpose();
      for (std::size_t i = 0; i < n; ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        const float mx = logits.row(r).maxCoeff();
        double sum = 0.0;
        for (Eigen::Index c = 0; c < logits.cols(); ++c) sum += std::exp(static_cast<double>(logits(r, c) - mx));
        const double lse = static_cast<double>(mx) + std::log(sum);
        out[start + i] = static_cast<double>(logits(r, targets[start + i])) - lse;
      }
    }
    return out;
  }

 private:
  struct Block {
    LayerNorm ln1;
    Linear qkv, proj;
    LayerNorm ln2;
    Linear fc, mlp_proj;
  };

  ArchConfig cfg_;
  RowMatrix wte_, wpe_;
  std::vector<Block> blocks_;
  LayerNorm final_ln_;
};

}  // namespace qrel::nn
