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

// Score rows and their JSON Lines files. Every file starts with a
// {"meta": ...} line holding the effective configuration.

#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "qrel/dataset.hpp"
#include "qrel/relevance.hpp"

namespace qrel {

inline nlohmann::ordered_json to_json(const ScoringConfig& c) {
  nlohmann::ordered_json j;
  j["tag"] = c.tag;
  j["combine"] = to_string(c.combine);
  if (c.lrm) {
    j["lrm"] = {{"layers", c.lrm->layers},
                {"p", c.lrm->p},
                {"aggregation", to_string(c.lrm->agg)},
                {"baseline", c.lrm->baseline}};
  }
  if (c.grg) {
    j["grg"] = {{"gain_mode", to_string(c.grg->gain_mode)},
                {"baseline", c.grg->baseline},
                {"separator", c.grg->separator}};
  }
  return j;
}

namespace detail {

inline nlohmann::ordered_json optional_number(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

}  // namespace detail

/// {id, lrm_raw, lrm, grg_raw, grg, qrel, ref_qrel?, variant, chunks}
/// followed by the record's human ratings and passthrough fields.
inline nlohmann::ordered_json score_row(const EvalRecord& r, const RelevanceScore& s,
                                        std::optional<double> ref_qrel = std::nullopt) {
  nlohmann::ordered_json j;
  j["id"] = r.id;
  j["lrm_raw"] = detail::optional_number(s.lrm_raw);
  j["lrm"] = detail::optional_number(s.lrm);
  j["grg_raw"] = detail::optional_number(s.grg_raw);
  j["grg"] = detail::optional_number(s.grg);
  j["qrel"] = s.combined;
  if (ref_qrel) j["ref_qrel"] = *ref_qrel;
  j["variant"] = s.config_tag;
  j["chunks"] = s.chunk_scores.size();
  if (!r.human.empty()) j["human"] = r.human;
  for (const auto& [k, v] : r.passthrough.items()) j[k] = v;
  return j;
}

/// Line-oriented writer to a file, or to stdout when the path is empty or "-".
class JsonlWriter {
 public:
  JsonlWriter(const std::filesystem::path& path, const nlohmann::ordered_json& meta) {
    if (!path.empty() && path != "-") {
      if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
      file_.open(path, std::ios::binary);
      if (!file_) throw Error("cannot write " + path.string());
    }
    write(nlohmann::ordered_json{{"meta", meta}});
  }

  void write(const nlohmann::ordered_json& row) { out() << row.dump() << '\n'; }

  void close() {
    out().flush();
    if (file_.is_open()) file_.close();
  }

 private:
  std::ostream& out() { return file_.is_open() ? static_cast<std::ostream&>(file_) : std::cout; }
  std::ofstream file_;
};

}  // namespace qrel
