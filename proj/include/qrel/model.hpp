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

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "qrel/error.hpp"
#include "qrel/safetensors.hpp"
#include "qrel/tokenizer.hpp"
#include "qrel/transformer.hpp"

namespace qrel {

enum class ModelKind { masked_lm, causal_lm };

inline std::string_view to_string(ModelKind k) {
  return k == ModelKind::masked_lm ? "masked_lm" : "causal_lm";
}

/// A loaded model and its tokenizer. Immutable and cheap to copy; copies
/// share the same weights. Forward passes on a handle may run concurrently.
class ModelHandle {
 public:
  ModelHandle() = default;

  const std::filesystem::path& model_path() const { return state().model_path; }
  const std::filesystem::path& tokenizer_path() const { return state().tokenizer_path; }
  ModelKind kind() const { return state().kind; }
  int max_positions() const { return state().arch.max_positions; }
  int num_layers() const { return state().arch.num_layers; }
  int num_heads() const { return state().arch.num_heads; }
  int hidden_dim() const { return state().arch.hidden_dim; }
  /// SHA-256 of the model file.
  const std::string& fingerprint() const { return state().fingerprint; }
  std::optional<TokenId> bos_token_id() const { return state().arch.bos_token_id; }
  const Tokenizer& tokenizer() const { return *state().tokenizer; }
  explicit operator bool() const { return static_cast<bool>(state_); }

  const nn::BertEncoder& encoder() const {
    if (kind() != ModelKind::masked_lm) throw PreconditionError("handle is not a masked LM");
    return std::get<nn::BertEncoder>(state().network);
  }
  const nn::Gpt2Decoder& decoder() const {
    if (kind() != ModelKind::causal_lm) throw PreconditionError("handle is not a causal LM");
    return std::get<nn::Gpt2Decoder>(state().network);
  }

 private:
  struct State {
    std::filesystem::path model_path;
    std::filesystem::path tokenizer_path;
    ModelKind kind;
    nn::ArchConfig arch;
    std::string fingerprint;
    std::unique_ptr<Tokenizer> tokenizer;
    std::variant<std::monostate, nn::BertEncoder, nn::Gpt2Decoder> network;
  };

  const State& state() const {
    if (!state_) throw PreconditionError("model handle is empty");
    return *state_;
  }

  std::shared_ptr<const State> state_;

  friend ModelHandle load_model(const std::filesystem::path&, const std::filesystem::path&,
                                ModelKind);
};

namespace detail {

inline std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline bool contains(const std::vector<std::string>& v, std::string_view s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

/// Merges the model-file metadata with a sibling config.json, metadata first.
inline nn::ArchConfig resolve_arch(const SafeTensorFile& file,
                                   const std::filesystem::path& model_path, ModelKind kind) {
  const auto& meta = file.metadata();
  nlohmann::json config;
  const auto config_path = model_path.parent_path() / "config.json";
  if (std::filesystem::exists(config_path)) config = read_json_file(config_path);

  auto meta_int = [&](const char* key) -> std::optional<int> {
    auto it = meta.find(key);
    if (it == meta.end()) return std::nullopt;
    try {
      return std::stoi(it->second);
    } catch (const std::exception&) {
      throw FormatError(model_path.string() + ": metadata " + key + " is not an integer");
    }
  };
  auto cfg_int = [&](std::initializer_list<const char*> keys) -> std::optional<int> {
    for (const char* k : keys) {
      if (config.contains(k) && config[k].is_number_integer()) return config[k].get<int>();
    }
    return std::nullopt;
  };
  auto require = [&](std::optional<int> v, const char* what) {
    if (!v || *v <= 0) {
      throw FormatError(model_path.string() + ": missing or invalid " + what +
                        " (neither file metadata nor config.json provide it)");
    }
    return *v;
  };

  nn::ArchConfig arch;
  if (auto it = meta.find("kind"); it != meta.end() && it->second != to_string(kind)) {
    throw FormatError(model_path.string() + ": model file declares kind '" + it->second +
                      "' but a " + std::string(to_string(kind)) + " was requested");
  }
  if (auto it = meta.find("architecture"); it != meta.end()) {
    arch.architecture = it->second;
  } else if (config.contains("model_type")) {
    arch.architecture = config["model_type"].get<std::string>();
  } else {
    arch.architecture = kind == ModelKind::masked_lm ? "bert" : "gpt2";
  }
  const std::string expected_arch = kind == ModelKind::masked_lm ? "bert" : "gpt2";
  if (arch.architecture != expected_arch) {
    throw FormatError(model_path.string() + ": unsupported architecture '" + arch.architecture +
                      "' for a " + std::string(to_string(kind)) + " (expected " +
                      expected_arch + ")");
  }
  arch.num_layers = require(meta_int("num_layers") ? meta_int("num_layers")
                                                   : cfg_int({"num_hidden_layers", "n_layer"}),
                            "num_layers");
  arch.num_heads = require(meta_int("num_heads") ? meta_int("num_heads")
                                                 : cfg_int({"num_attention_heads", "n_head"}),
                           "num_heads");
  arch.hidden_dim = require(meta_int("hidden_dim") ? meta_int("hidden_dim")
                                                   : cfg_int({"hidden_size", "n_embd"}),
                            "hidden_dim");
  arch.max_positions = require(
      meta_int("max_positions") ? meta_int("max_positions")
                                : cfg_int({"max_position_embeddings", "n_positions", "n_ctx"}),
      "max_positions");
  if (arch.hidden_dim % arch.num_heads != 0) {
    throw FormatError(model_path.string() + ": hidden_dim is not divisible by num_heads");
  }
  arch.layer_norm_eps = kind == ModelKind::masked_lm ? 1e-12f : 1e-5f;
  if (auto it = meta.find("layer_norm_eps"); it != meta.end()) {
    arch.layer_norm_eps = std::stof(it->second);
  } else {
    for (const char* k : {"layer_norm_eps", "layer_norm_epsilon"}) {
      if (config.contains(k)) arch.layer_norm_eps = config[k].get<float>();
    }
  }
  if (auto it = meta.find("outputs"); it != meta.end()) {
    arch.outputs = split_csv(it->second);
  } else {
    if (config.value("output_attentions", false)) arch.outputs.push_back("attentions");
    if (config.value("output_hidden_states", false)) arch.outputs.push_back("hidden_states");
    if (kind == ModelKind::causal_lm && !config.is_null()) arch.outputs.push_back("logits");
  }
  if (kind == ModelKind::masked_lm &&
      (!contains(arch.outputs, "attentions") || !contains(arch.outputs, "hidden_states"))) {
    throw FormatError(model_path.string() +
                      ": masked-LM export does not declare 'attentions' and 'hidden_states' "
                      "outputs; re-export with output_attentions=True and "
                      "output_hidden_states=True");
  }
  if (kind == ModelKind::causal_lm && !contains(arch.outputs, "logits")) {
    throw FormatError(model_path.string() + ": causal-LM export does not declare a 'logits' output");
  }
  if (auto v = meta_int("bos_token_id")) {
    arch.bos_token_id = *v;
  } else if (auto c = cfg_int({"bos_token_id"}); c && kind == ModelKind::causal_lm) {
    arch.bos_token_id = *c;
  }
  return arch;
}

}  // namespace detail

/// Loads a model file (safetensors weights whose metadata, or a sibling
/// config.json, describes the architecture) and its tokenizer JSON.
inline ModelHandle load_model(const std::filesystem::path& model_path,
                              const std::filesystem::path& tokenizer_path, ModelKind kind) {
  if (!std::filesystem::exists(model_path)) {
    throw MissingFileError("model file not found: " + model_path.string());
  }
  if (!std::filesystem::exists(tokenizer_path)) {
    throw MissingFileError("tokenizer file not found: " + tokenizer_path.string());
  }
  auto state = std::make_shared<ModelHandle::State>();
  state->model_path = model_path;
  state->tokenizer_path = tokenizer_path;
  state->kind = kind;
  state->tokenizer = load_tokenizer(tokenizer_path);
  {
    const SafeTensorFile file(model_path);
    state->arch = detail::resolve_arch(file, model_path, kind);
    if (kind == ModelKind::masked_lm) {
      state->network.emplace<nn::BertEncoder>(file, state->arch);
    } else {
      state->network.emplace<nn::Gpt2Decoder>(file, state->arch);
    }
  }
  const std::size_t model_vocab = kind == ModelKind::masked_lm
                                      ? std::get<nn::BertEncoder>(state->network).vocab_size()
                                      : std::get<nn::Gpt2Decoder>(state->network).vocab_size();
  if (state->tokenizer->vocab_size() > model_vocab) {
    throw FormatError("tokenizer " + tokenizer_path.string() + " has " +
                      std::to_string(state->tokenizer->vocab_size()) +
                      " entries but the model embeds only " + std::to_string(model_vocab));
  }
  if (kind == ModelKind::masked_lm) {
    for (const char* tok : {"[CLS]", "[SEP]"}) {
      if (!state->tokenizer->token_to_id(tok)) {
        throw FormatError(tokenizer_path.string() + ": masked-LM tokenizer lacks " + tok);
      }
    }
  }
  state->fingerprint = sha256_file(model_path);
  ModelHandle h;
  h.state_ = std::move(state);
  return h;
}

/// [CLS] candidate [SEP] context [SEP], with position bookkeeping.
struct TokenizedPair {
  std::vector<TokenId> candidate_ids;
  std::vector<TokenId> context_ids;
  std::vector<TokenId> full_sequence;
  std::vector<int> segment_ids;  // 0 for the candidate segment, 1 for the context segment
  std::vector<std::size_t> candidate_positions;
  std::vector<std::size_t> context_positions;
  std::vector<bool> special_mask;

  std::size_t candidate_size() const { return candidate_positions.size(); }
  std::size_t context_size() const { return context_positions.size(); }
};

/// Number of context tokens that fit next to `candidate_tokens` candidate
/// tokens in one masked-LM input.
inline int mlm_context_capacity(const ModelHandle& mlm, std::size_t candidate_tokens) {
  return mlm.max_positions() - 3 - static_cast<int>(candidate_tokens);
}

/// Builds a pair from already tokenized sides.
inline TokenizedPair make_pair_from_ids(const ModelHandle& mlm, std::vector<TokenId> candidate_ids,
                                        std::vector<TokenId> context_ids) {
  if (candidate_ids.empty()) throw PreconditionError("candidate has no tokens");
  if (context_ids.empty()) throw PreconditionError("context has no tokens");
  const std::size_t total = candidate_ids.size() + context_ids.size() + 3;
  if (total > static_cast<std::size_t>(mlm.max_positions())) {
    throw OverLengthError("pair of " + std::to_string(total) + " tokens exceeds the masked LM's " +
                          std::to_string(mlm.max_positions()) + " positions; chunk the context");
  }
  const TokenId cls = *mlm.tokenizer().token_to_id("[CLS]");
  const TokenId sep = *mlm.tokenizer().token_to_id("[SEP]");
  TokenizedPair p;
  p.full_sequence.reserve(total);
  p.full_sequence.push_back(cls);
  p.segment_ids.push_back(0);
  p.special_mask.push_back(true);
  for (TokenId id : candidate_ids) {
    p.candidate_positions.push_back(p.full_sequence.size());
    p.full_sequence.push_back(id);
    p.segment_ids.push_back(0);
    p.special_mask.push_back(false);
  }
  p.full_sequence.push_back(sep);
  p.segment_ids.push_back(0);
  p.special_mask.push_back(true);
  for (TokenId id : context_ids) {
    p.context_positions.push_back(p.full_sequence.size());
    p.full_sequence.push_back(id);
    p.segment_ids.push_back(1);
    p.special_mask.push_back(false);
  }
  p.full_sequence.push_back(sep);
  p.segment_ids.push_back(1);
  p.special_mask.push_back(true);
  p.candidate_ids = std::move(candidate_ids);
  p.context_ids = std::move(context_ids);
  return p;
}

inline bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

/// Never truncates: over-length pairs raise OverLengthError.
inline TokenizedPair tokenize_pair(const ModelHandle& mlm, std::string_view candidate,
                                   std::string_view context) {
  if (mlm.kind() != ModelKind::masked_lm) throw PreconditionError("tokenize_pair needs a masked LM");
  if (is_blank(candidate)) throw PreconditionError("candidate is empty");
  if (is_blank(context)) throw PreconditionError("context is empty");
  return make_pair_from_ids(mlm, mlm.tokenizer().encode(candidate).ids,
                            mlm.tokenizer().encode(context).ids);
}

/// Every layer's attention probabilities [L][H][T][T] and hidden states
/// [L][T][D]. Layer indices are 0-based transformer layers; the input
/// embedding layer is not included.
class LayerActivations {
 public:
  explicit LayerActivations(nn::EncoderOutput out) : out_(std::move(out)) {}

  int num_layers() const { return out_.layers; }
  int num_heads() const { return out_.heads; }
  int length() const { return out_.length; }
  int hidden_dim() const { return out_.hidden_dim; }

  float attention(int layer, int head, std::size_t query, std::size_t key) const {
    return out_.attentions[index(layer, head) * static_cast<std::size_t>(out_.length) * out_.length +
                           query * static_cast<std::size_t>(out_.length) + key];
  }

  /// Attention row of one query position over all key positions.
  std::span<const float> attention_row(int layer, int head, std::size_t query) const {
    const std::size_t t = static_cast<std::size_t>(out_.length);
    return {out_.attentions.data() + index(layer, head) * t * t + query * t, t};
  }

  std::span<const float> embedding(int layer, std::size_t position) const {
    check_layer(layer);
    const std::size_t d = static_cast<std::size_t>(out_.hidden_dim);
    return {out_.hidden.data() + (static_cast<std::size_t>(layer) * out_.length + position) * d, d};
  }

  const std::vector<float>& raw_attentions() const { return out_.attentions; }
  const std::vector<float>& raw_hidden_states() const { return out_.hidden; }

 private:
  void check_layer(int layer) const {
    if (layer < 0 || layer >= out_.layers) {
      throw PreconditionError("layer " + std::to_string(layer) + " out of range [0, " +
                              std::to_string(out_.layers) + ")");
    }
  }
  std::size_t index(int layer, int head) const {
    check_layer(layer);
    return static_cast<std::size_t>(layer) * out_.heads + static_cast<std::size_t>(head);
  }

  nn::EncoderOutput out_;
};

inline LayerActivations mlm_forward(const ModelHandle& mlm, const TokenizedPair& pair) {
  return LayerActivations(mlm.encoder().forward(pair.full_sequence, pair.segment_ids));
}

/// Natural-log conditional probability per scored token.
struct TokenLogProbs {
  std::vector<double> logprobs;
  std::vector<TokenId> token_ids;
};

/// Maximum number of tokens one causal-LM call can score (the begin-of-
/// sequence token, when the model has one, takes a position).
inline int clm_capacity(const ModelHandle& clm) {
  return clm.max_positions() - (clm.bos_token_id() ? 1 : 0);
}

/// Scores `scored` conditioned on [BOS] + `prefix`. Only the scored
/// positions' logits are materialized.
inline TokenLogProbs clm_logprobs_after(const ModelHandle& clm, std::span<const TokenId> prefix,
                                        std::span<const TokenId> scored) {
  if (scored.empty()) throw PreconditionError("nothing to score");
  const std::size_t n = prefix.size() + scored.size();
  if (n > static_cast<std::size_t>(clm_capacity(clm))) {
    throw OverLengthError("sequence of " + std::to_string(n) + " tokens exceeds the causal LM's " +
                          std::to_string(clm_capacity(clm)) + "-token capacity");
  }
  const auto bos = clm.bos_token_id();
  std::vector<TokenId> seq;
  seq.reserve(n + 1);
  if (bos) seq.push_back(*bos);
  seq.insert(seq.end(), prefix.begin(), prefix.end());
  seq.insert(seq.end(), scored.begin(), scored.end());
  const nn::RowMatrix h = clm.decoder().hidden(seq);

  TokenLogProbs out;
  out.token_ids.assign(scored.begin(), scored.end());
  out.logprobs.assign(scored.size(), 0.0);
  // Position of scored[i] in seq, and the row whose output predicts it.
  const std::size_t first = (bos ? 1 : 0) + prefix.size();
  std::vector<Eigen::Index> rows;
  std::vector<TokenId> targets;
  std::vector<std::size_t> slots;
  for (std::size_t i = 0; i < scored.size(); ++i) {
    const std::size_t pos = first + i;
    if (pos == 0) {
      // No BOS and nothing before: uniform over the vocabulary.
      out.logprobs[i] = -std::log(static_cast<double>(clm.decoder().vocab_size()));
      continue;
    }
    rows.push_back(static_cast<Eigen::Index>(pos - 1));
    targets.push_back(scored[i]);
    slots.push_back(i);
  }
  const auto lp = clm.decoder().token_logprobs(h, rows, targets);
  for (std::size_t k = 0; k < slots.size(); ++k) out.logprobs[slots[k]] = lp[k];
  return out;
}

inline TokenLogProbs clm_logprobs(const ModelHandle& clm, std::span<const TokenId> token_ids) {
  return clm_logprobs_after(clm, {}, token_ids);
}

}  // namespace qrel
