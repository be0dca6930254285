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

// Readers for the serialized tokenizer JSON format: WordPiece with the BERT
// normalizer/pre-tokenizer, and byte-level BPE as used by GPT-2. Only the
// configurations those two model families ship with are supported.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"
#include "qrel/error.hpp"
#include "qrel/unicode.hpp"

namespace qrel {

using TokenId = std::int32_t;

/// Byte range [begin, end) of a token in the encoded text.
struct Offset {
  std::size_t begin = 0;
  std::size_t end = 0;
  bool operator==(const Offset&) const = default;
};

struct Encoding {
  std::vector<TokenId> ids;
  std::vector<Offset> offsets;

  std::size_t size() const { return ids.size(); }
  bool empty() const { return ids.empty(); }
};

class Tokenizer {
 public:
  virtual ~Tokenizer() = default;

  /// Encodes text without adding any special tokens.
  virtual Encoding encode(std::string_view text) const = 0;
  virtual std::size_t vocab_size() const = 0;
  virtual std::optional<TokenId> token_to_id(std::string_view token) const = 0;
  virtual std::string id_to_token(TokenId id) const = 0;
};

namespace detail {

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw MissingFileError("file not found: " + path.string());
  }
  std::ifstream in(path);
  if (!in) throw MissingFileError("cannot open: " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

inline std::unordered_map<std::string, TokenId> read_vocab(const nlohmann::json& vocab) {
  if (!vocab.is_object()) throw FormatError("tokenizer model.vocab must be an object");
  std::unordered_map<std::string, TokenId> out;
  out.reserve(vocab.size());
  for (const auto& [tok, id] : vocab.items()) out.emplace(tok, id.get<TokenId>());
  return out;
}

inline std::vector<std::string> invert_vocab(
    const std::unordered_map<std::string, TokenId>& vocab) {
  TokenId max_id = -1;
  for (const auto& [tok, id] : vocab) max_id = std::max(max_id, id);
  std::vector<std::string> out(static_cast<std::size_t>(max_id + 1));
  for (const auto& [tok, id] : vocab) out[static_cast<std::size_t>(id)] = tok;
  return out;
}

}  // namespace detail

/// BERT-style WordPiece: clean text, isolate CJK characters, strip accents,
/// lowercase, split on whitespace and punctuation, then greedy longest-match
/// subwords with a continuation prefix.
class WordPieceTokenizer final : public Tokenizer {
 public:
  struct Options {
    bool clean_text = true;
    bool handle_chinese_chars = true;
    bool strip_accents = true;
    bool lowercase = true;
    std::string unk_token = "[UNK]";
    std::string continuing_prefix = "##";
    std::size_t max_input_chars_per_word = 100;
  };

  WordPieceTokenizer(std::unordered_map<std::string, TokenId> vocab, Options options)
      : vocab_(std::move(vocab)), options_(std::move(options)) {
    inverse_ = detail::invert_vocab(vocab_);
    auto unk = vocab_.find(options_.unk_token);
    if (unk == vocab_.end()) {
      throw FormatError("WordPiece vocab lacks unk token " + options_.unk_token);
    }
    unk_id_ = unk->second;
  }

  Encoding encode(std::string_view text) const override {
    Encoding enc;
    for (const auto& word : pre_tokenize(normalize(text))) encode_word(word, enc);
    return enc;
  }

  std::size_t vocab_size() const override { return inverse_.size(); }

  std::optional<TokenId> token_to_id(std::string_view token) const override {
    auto it = vocab_.find(std::string(token));
    if (it == vocab_.end()) return std::nullopt;
    return it->second;
  }

  std::string id_to_token(TokenId id) const override {
    if (id < 0 || static_cast<std::size_t>(id) >= inverse_.size()) return {};
    return inverse_[static_cast<std::size_t>(id)];
  }

  const Options& options() const { return options_; }

 private:
  // A normalized character remembers the source byte range it came from.
  struct NormChar {
    char32_t c;
    Offset src;
  };
  using Word = std::vector<NormChar>;

  std::vector<NormChar> normalize(std::string_view text) const {
    std::vector<NormChar> out;
    out.reserve(text.size());
    for (const auto& cp : unicode::decode(text)) {
      const Offset src{cp.begin, cp.end};
      char32_t c = cp.value;
      if (options_.clean_text) {
        if (c == 0 || c == 0xFFFD || unicode::is_control(c)) continue;
        if (unicode::is_whitespace(c)) c = U' ';
      }
      if (options_.handle_chinese_chars && unicode::is_cjk(c)) {
        out.push_back({U' ', src});
        out.push_back({c, src});
        out.push_back({U' ', src});
        continue;
      }
      std::u32string piece(1, c);
      if (options_.strip_accents) piece = unicode::strip_accents(c);
      for (char32_t p : piece) {
        if (options_.lowercase) {
          for (char32_t l : unicode::to_lower(p)) out.push_back({l, src});
        } else {
          out.push_back({p, src});
        }
      }
    }
    return out;
  }

  static std::vector<Word> pre_tokenize(const std::vector<NormChar>& chars) {
    std::vector<Word> words;
    Word current;
    auto flush = [&] {
      if (!current.empty()) words.push_back(std::move(current));
      current.clear();
    };
    for (const auto& nc : chars) {
      if (unicode::is_whitespace(nc.c)) {
        flush();
      } else if (unicode::is_punctuation(nc.c)) {
        flush();
        words.push_back({nc});
      } else {
        current.push_back(nc);
      }
    }
    flush();
    return words;
  }

  void encode_word(const Word& word, Encoding& enc) const {
    const Offset whole{word.front().src.begin, word.back().src.end};
    if (word.size() > options_.max_input_chars_per_word) {
      enc.ids.push_back(unk_id_);
      enc.offsets.push_back(whole);
      return;
    }
    std::vector<std::string> prefixes(word.size() + 1);
    for (std::size_t i = 0; i < word.size(); ++i) {
      prefixes[i + 1] = prefixes[i] + unicode::encode(word[i].c);
    }
    std::vector<TokenId> ids;
    std::vector<Offset> offsets;
    std::size_t start = 0;
    while (start < word.size()) {
      std::size_t end = word.size();
      std::optional<TokenId> found;
      while (start < end) {
        std::string sub = prefixes[end].substr(prefixes[start].size());
        if (start > 0) sub = options_.continuing_prefix + sub;
        auto it = vocab_.find(sub);
        if (it != vocab_.end()) {
          found = it->second;
          break;
        }
        --end;
      }
      if (!found) {
        enc.ids.push_back(unk_id_);
        enc.offsets.push_back(whole);
        return;
      }
      ids.push_back(*found);
      offsets.push_back({word[start].src.begin, word[end - 1].src.end});
      start = end;
    }
    enc.ids.insert(enc.ids.end(), ids.begin(), ids.end());
    enc.offsets.insert(enc.offsets.end(), offsets.begin(), offsets.end());
  }

  std::unordered_map<std::string, TokenId> vocab_;
  std::vector<std::string> inverse_;
  Options options_;
  TokenId unk_id_ = 0;
};

/// GPT-2 byte-level BPE.
class ByteLevelBpeTokenizer final : public Tokenizer {
 public:
  ByteLevelBpeTokenizer(std::unordered_map<std::string, TokenId> vocab,
                        const std::vector<std::pair<std::string, std::string>>& merges)
      : vocab_(std::move(vocab)) {
    inverse_ = detail::invert_vocab(vocab_);
    ranks_.reserve(merges.size());
    for (std::size_t i = 0; i < merges.size(); ++i) {
      ranks_.emplace(merges[i].first + " " + merges[i].second, static_cast<int>(i));
    }
    byte_symbols_ = byte_to_unicode();
    for (int b = 0; b < 256; ++b) {
      if (!vocab_.count(byte_symbols_[static_cast<std::size_t>(b)])) {
        throw FormatError("byte-level vocab is missing the symbol for byte " +
                          std::to_string(b));
      }
    }
  }

  Encoding encode(std::string_view text) const override {
    Encoding enc;
    for (const Offset& piece : split_pieces(text)) {
      std::vector<std::string> symbols;
      std::vector<std::size_t> widths;  // source bytes per symbol
      for (std::size_t i = piece.begin; i < piece.end; ++i) {
        symbols.push_back(byte_symbols_[static_cast<unsigned char>(text[i])]);
        widths.push_back(1);
      }
      merge(symbols, widths);
      std::size_t pos = piece.begin;
      for (std::size_t i = 0; i < symbols.size(); ++i) {
        auto it = vocab_.find(symbols[i]);
        if (it == vocab_.end()) {
          throw FormatError("BPE symbol missing from vocab: " + symbols[i]);
        }
        enc.ids.push_back(it->second);
        enc.offsets.push_back({pos, pos + widths[i]});
        pos += widths[i];
      }
    }
    return enc;
  }

  std::size_t vocab_size() const override { return inverse_.size(); }

  std::optional<TokenId> token_to_id(std::string_view token) const override {
    auto it = vocab_.find(std::string(token));
    if (it == vocab_.end()) return std::nullopt;
    return it->second;
  }

  std::string id_to_token(TokenId id) const override {
    if (id < 0 || static_cast<std::size_t>(id) >= inverse_.size()) return {};
    return inverse_[static_cast<std::size_t>(id)];
  }

  /// The GPT-2 pre-tokenization pattern
  ///   's|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+
  /// evaluated by hand over code points. Returns byte ranges.
  static std::vector<Offset> split_pieces(std::string_view text) {
    const auto cps = unicode::decode(text);
    const std::size_t n = cps.size();
    std::vector<Offset> out;
    auto is_other = [](char32_t c) {
      return !unicode::is_whitespace(c) && !unicode::is_letter(c) && !unicode::is_number(c);
    };
    auto run = [&](std::size_t i, auto pred) {
      while (i < n && pred(cps[i].value)) ++i;
      return i;
    };
    std::size_t i = 0;
    while (i < n) {
      const char32_t c = cps[i].value;
      std::size_t j = i;
      if (c == U'\'' && i + 1 < n) {
        const char32_t a = cps[i + 1].value;
        const char32_t b = i + 2 < n ? cps[i + 2].value : 0;
        if (a == U's' || a == U't' || a == U'm' || a == U'd') {
          j = i + 2;
        } else if ((a == U'r' && b == U'e') || (a == U'v' && b == U'e') ||
                   (a == U'l' && b == U'l')) {
          j = i + 3;
        }
      }
      if (j == i) {
        const std::size_t k = (c == U' ' && i + 1 < n) ? i + 1 : i;
        const char32_t d = cps[k].value;
        if (unicode::is_letter(d)) {
          j = run(k, unicode::is_letter);
        } else if (unicode::is_number(d)) {
          j = run(k, unicode::is_number);
        } else if (is_other(d)) {
          j = run(k, is_other);
        }
      }
      if (j == i) {
        // whitespace
        const std::size_t end = run(i, unicode::is_whitespace);
        if (end == n || end - i == 1) {
          j = end;
        } else {
          j = end - 1;
        }
      }
      out.push_back({cps[i].begin, cps[j - 1].end});
      i = j;
    }
    return out;
  }

 private:
  static std::array<std::string, 256> byte_to_unicode() {
    std::array<std::string, 256> out;
    std::array<bool, 256> direct{};
    for (int b = '!'; b <= '~'; ++b) direct[static_cast<std::size_t>(b)] = true;
    for (int b = 0xA1; b <= 0xAC; ++b) direct[static_cast<std::size_t>(b)] = true;
    for (int b = 0xAE; b <= 0xFF; ++b) direct[static_cast<std::size_t>(b)] = true;
    char32_t extra = 256;
    for (int b = 0; b < 256; ++b) {
      const char32_t cp = direct[static_cast<std::size_t>(b)] ? static_cast<char32_t>(b) : extra++;
      out[static_cast<std::size_t>(b)] = unicode::encode(cp);
    }
    return out;
  }

  void merge(std::vector<std::string>& symbols, std::vector<std::size_t>& widths) const {
    while (symbols.size() > 1) {
      int best = std::numeric_limits<int>::max();
      std::size_t best_at = 0;
      for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
        auto it = ranks_.find(symbols[i] + " " + symbols[i + 1]);
        if (it != ranks_.end() && it->second < best) {
          best = it->second;
          best_at = i;
        }
      }
      if (best == std::numeric_limits<int>::max()) break;
      const std::string left = symbols[best_at];
      const std::string right = symbols[best_at + 1];
      std::vector<std::string> merged;
      std::vector<std::size_t> merged_widths;
      merged.reserve(symbols.size());
      for (std::size_t i = 0; i < symbols.size();) {
        if (i + 1 < symbols.size() && symbols[i] == left && symbols[i + 1] == right) {
          merged.push_back(left + right);
          merged_widths.push_back(widths[i] + widths[i + 1]);
          i += 2;
        } else {
          merged.push_back(symbols[i]);
          merged_widths.push_back(widths[i]);
          ++i;
        }
      }
      symbols = std::move(merged);
      widths = std::move(merged_widths);
    }
  }

  std::unordered_map<std::string, TokenId> vocab_;
  std::vector<std::string> inverse_;
  std::unordered_map<std::string, int> ranks_;
  std::array<std::string, 256> byte_symbols_;
};

/// Reads a tokenizer JSON file and builds the matching tokenizer. Added
/// tokens listed in the file are registered in the vocabulary.
inline std::unique_ptr<Tokenizer> load_tokenizer(const std::filesystem::path& path) {
  const nlohmann::json doc = detail::read_json_file(path);
  if (!doc.contains("model") || !doc["model"].contains("type")) {
    throw FormatError(path.string() + ": not a tokenizer JSON (no model.type)");
  }
  const auto& model = doc["model"];
  auto vocab = detail::read_vocab(model.at("vocab"));
  if (doc.contains("added_tokens") && doc["added_tokens"].is_array()) {
    for (const auto& t : doc["added_tokens"]) {
      vocab.emplace(t.at("content").get<std::string>(), t.at("id").get<TokenId>());
    }
  }
  const std::string type = model["type"].get<std::string>();
  try {
    if (type == "WordPiece") {
      WordPieceTokenizer::Options opt;
      opt.unk_token = model.value("unk_token", opt.unk_token);
      opt.continuing_prefix = model.value("continuing_subword_prefix", opt.continuing_prefix);
      opt.max_input_chars_per_word =
          model.value("max_input_chars_per_word", opt.max_input_chars_per_word);
      if (doc.contains("normalizer") && doc["normalizer"].is_object()) {
        const auto& norm = doc["normalizer"];
        if (norm.value("type", "") != "BertNormalizer") {
          throw FormatError(path.string() + ": unsupported WordPiece normalizer " +
                            norm.value("type", std::string("?")));
        }
        opt.clean_text = norm.value("clean_text", true);
        opt.handle_chinese_chars = norm.value("handle_chinese_chars", true);
        opt.lowercase = norm.value("lowercase", true);
        const auto& sa = norm.contains("strip_accents") ? norm["strip_accents"] : nlohmann::json();
        opt.strip_accents = sa.is_boolean() ? sa.get<bool>() : opt.lowercase;
      }
      return std::make_unique<WordPieceTokenizer>(std::move(vocab), std::move(opt));
    }
    if (type == "BPE") {
      std::vector<std::pair<std::string, std::string>> merges;
      for (const auto& m : model.at("merges")) {
        if (m.is_string()) {
          const auto s = m.get<std::string>();
          const auto sp = s.find(' ');
          if (sp == std::string::npos) throw FormatError("malformed merge entry: " + s);
          merges.emplace_back(s.substr(0, sp), s.substr(sp + 1));
        } else {
          merges.emplace_back(m.at(0).get<std::string>(), m.at(1).get<std::string>());
        }
      }
      return std::make_unique<ByteLevelBpeTokenizer>(std::move(vocab), merges);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  throw FormatError(path.string() + ": unsupported tokenizer model type " + type);
}

}  // namespace qrel
