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

// Evaluation records and their on-disk forms: JSON Lines (one record per
// line) and SQuAD-style nested JSON, which is flattened to one record per
// question with the gold question kept as a reference.

#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "qrel/error.hpp"
#include "qrel/safetensors.hpp"
#include "qrel/tokenizer.hpp"

namespace qrel {

enum class DatasetFormat { jsonl, squad_json };

inline DatasetFormat parse_dataset_format(std::string_view s) {
  if (s == "jsonl") return DatasetFormat::jsonl;
  if (s == "squad_json" || s == "squad") return DatasetFormat::squad_json;
  throw PreconditionError("unknown dataset format '" + std::string(s) +
                          "'; expected jsonl or squad_json");
}

inline std::string_view to_string(DatasetFormat f) {
  return f == DatasetFormat::jsonl ? "jsonl" : "squad_json";
}

/// Entity annotations by group ("person", "location_org", "number").
using EntityAnnotations = std::map<std::string, std::vector<std::string>>;

struct EvalRecord {
  std::string id;
  std::string context;
  std::string candidate;
  std::optional<std::string> answer;
  std::vector<std::string> references;
  std::map<std::string, double> human;
  std::optional<EntityAnnotations> entities;
  /// Fields carried through to score rows unchanged (label, kind, ...).
  nlohmann::ordered_json passthrough = nlohmann::ordered_json::object();
};

namespace detail {

inline const std::vector<std::string>& passthrough_fields() {
  static const std::vector<std::string> f{"label", "kind", "seed", "original_id", "edit_span"};
  return f;
}

inline std::string where(const std::filesystem::path& path, std::size_t line) {
  return path.string() + ":" + std::to_string(line);
}

inline bool is_meta_line(const nlohmann::json& row) {
  return row.is_object() && row.size() == 1 && row.contains("meta");
}

inline EvalRecord record_from_json(const nlohmann::json& row, const std::string& at) {
  if (!row.is_object()) throw FormatError(at + ": row is not a JSON object");
  std::vector<std::string> missing;
  if (!row.contains("id")) missing.push_back("id");
  if (!row.contains("context")) missing.push_back("context");
  if (!row.contains("candidate") && !row.contains("question")) missing.push_back("candidate");
  if (!missing.empty()) {
    std::string m;
    for (const auto& f : missing) m += (m.empty() ? "" : ", ") + ("'" + f + "'");
    throw FormatError(at + ": missing field " + m);
  }
  try {
    EvalRecord r;
    r.id = row["id"].is_string() ? row["id"].get<std::string>() : row["id"].dump();
    r.context = row["context"].get<std::string>();
    r.candidate = row.contains("candidate") ? row["candidate"].get<std::string>()
                                            : row["question"].get<std::string>();
    if (row.contains("answer") && !row["answer"].is_null()) r.answer = row["answer"].get<std::string>();
    if (row.contains("references")) r.references = row["references"].get<std::vector<std::string>>();
    if (row.contains("human")) {
      for (const auto& [k, v] : row["human"].items()) {
        if (v.is_number()) r.human[k] = v.get<double>();
      }
    }
    if (row.contains("entities") && row["entities"].is_object()) {
      EntityAnnotations e;
      for (const auto& [k, v] : row["entities"].items()) e[k] = v.get<std::vector<std::string>>();
      r.entities = std::move(e);
    }
    for (const auto& f : passthrough_fields()) {
      if (row.contains(f)) r.passthrough[f] = row[f];
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(at + ": " + e.what());
  }
}

}  // namespace detail

inline std::vector<EvalRecord> load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingFileError("dataset not found: " + path.string());
  std::vector<EvalRecord> out;
  std::set<std::string> seen;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json row;
    try {
      row = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(detail::where(path, n) + ": malformed JSON: " + e.what());
    }
    if (detail::is_meta_line(row)) continue;
    EvalRecord r = detail::record_from_json(row, detail::where(path, n));
    if (!seen.insert(r.id).second) {
      throw FormatError(detail::where(path, n) + ": duplicate id '" + r.id + "'");
    }
    out.push_back(std::move(r));
  }
  return out;
}

/// Flattens data[].paragraphs[].qas[] into one record per question. The gold
/// question becomes the single reference; the candidate stays empty.
inline std::vector<EvalRecord> load_squad_json(const std::filesystem::path& path) {
  const nlohmann::json doc = detail::read_json_file(path);
  if (!doc.is_object() || !doc.contains("data") || !doc["data"].is_array()) {
    throw FormatError(path.string() + ": expected a top-level 'data' array");
  }
  std::vector<EvalRecord> out;
  std::set<std::string> seen;
  for (std::size_t a = 0; a < doc["data"].size(); ++a) {
    const auto& article = doc["data"][a];
    if (!article.contains("paragraphs")) continue;
    for (std::size_t p = 0; p < article["paragraphs"].size(); ++p) {
      const auto& para = article["paragraphs"][p];
      const std::string at = path.string() + ": data[" + std::to_string(a) + "].paragraphs[" +
                             std::to_string(p) + "]";
      if (!para.contains("context") || !para["context"].is_string()) {
        throw FormatError(at + ": missing field 'context'");
      }
      const std::string context = para["context"];
      if (!para.contains("qas")) continue;
      for (std::size_t q = 0; q < para["qas"].size(); ++q) {
        const auto& qa = para["qas"][q];
        const std::string qat = at + ".qas[" + std::to_string(q) + "]";
        if (!qa.contains("id")) throw FormatError(qat + ": missing field 'id'");
        if (!qa.contains("question")) throw FormatError(qat + ": missing field 'question'");
        EvalRecord r;
        r.id = qa["id"].is_string() ? qa["id"].get<std::string>() : qa["id"].dump();
        r.context = context;
        r.references.push_back(qa["question"].get<std::string>());
        if (qa.contains("answers") && qa["answers"].is_array() && !qa["answers"].empty() &&
            qa["answers"][0].contains("text")) {
          r.answer = qa["answers"][0]["text"].get<std::string>();
        }
        if (!seen.insert(r.id).second) throw FormatError(qat + ": duplicate id '" + r.id + "'");
        out.push_back(std::move(r));
      }
    }
  }
  return out;
}

inline std::vector<EvalRecord> load_dataset(const std::filesystem::path& path, DatasetFormat format) {
  if (!std::filesystem::exists(path)) throw MissingFileError("dataset not found: " + path.string());
  return format == DatasetFormat::jsonl ? load_jsonl(path) : load_squad_json(path);
}

/// Uses each record's gold question (first reference) as its candidate.
inline void use_references_as_candidates(std::vector<EvalRecord>& records) {
  for (auto& r : records) {
    if (r.candidate.empty() && !r.references.empty()) r.candidate = r.references.front();
  }
}

/// Fills candidates from a predictions file: either a JSON object mapping id
/// to question text, or JSON Lines rows with "id" and "candidate" (or
/// "question"). Records without a prediction are left unchanged. Returns the
/// number of records updated.
inline std::size_t merge_predictions(std::vector<EvalRecord>& records,
                                     const std::filesystem::path& path) {
  std::unordered_map<std::string, std::string> preds;
  std::ifstream in(path);
  if (!in) throw MissingFileError("predictions not found: " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  nlohmann::json whole = nlohmann::json::parse(text, nullptr, false);
  if (!whole.is_discarded() && whole.is_object() && !whole.contains("id")) {
    for (const auto& [k, v] : whole.items()) preds[k] = v.get<std::string>();
  } else {
    std::size_t n = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      const std::size_t end = std::min(text.find('\n', pos), text.size());
      const std::string line = text.substr(pos, end - pos);
      ++n;
      pos = end + 1;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      nlohmann::json row = nlohmann::json::parse(line, nullptr, false);
      if (row.is_discarded() || !row.is_object()) {
        throw FormatError(detail::where(path, n) + ": malformed prediction row");
      }
      if (detail::is_meta_line(row)) continue;
      if (!row.contains("id")) throw FormatError(detail::where(path, n) + ": missing field 'id'");
      const char* field = row.contains("candidate") ? "candidate" : "question";
      if (!row.contains(field)) throw FormatError(detail::where(path, n) + ": missing field 'candidate'");
      const std::string id = row["id"].is_string() ? row["id"].get<std::string>() : row["id"].dump();
      preds[id] = row[field].get<std::string>();
    }
  }
  std::size_t updated = 0;
  for (auto& r : records) {
    const auto it = preds.find(r.id);
    if (it == preds.end()) continue;
    r.candidate = it->second;
    ++updated;
  }
  return updated;
}

/// Throws if any record lacks a candidate or context.
inline void require_scorable(const std::vector<EvalRecord>& records) {
  for (const auto& r : records) {
    if (r.context.find_first_not_of(" \t\r\n") == std::string::npos) {
      throw PreconditionError("record '" + r.id + "' has an empty context");
    }
    if (r.candidate.find_first_not_of(" \t\r\n") == std::string::npos) {
      throw PreconditionError("record '" + r.id +
                              "' has no candidate; merge a predictions file or use the gold "
                              "questions as candidates");
    }
  }
}

/// Content hash of the fields scoring depends on, independent of file format.
inline std::string dataset_fingerprint(const std::vector<EvalRecord>& records) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : records) rows.push_back({r.id, r.candidate, r.context});
  return sha256_string(rows.dump());
}

}  // namespace qrel
