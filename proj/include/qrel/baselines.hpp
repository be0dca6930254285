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

// Rescaling baselines: mean raw component scores over randomly mismatched
// candidate/context pairs, stored per variant next to the fingerprints of
// the data and models they were measured on.

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qrel/dataset.hpp"
#include "qrel/error.hpp"
#include "qrel/parallel.hpp"
#include "qrel/relevance.hpp"
#include "qrel/rng.hpp"

namespace qrel {

struct BaselineStats {
  std::optional<double> b_lrm;
  std::optional<double> b_grg;
  std::size_t n_pairs = 0;
  std::uint64_t seed = 0;
  std::string dataset_id;
  std::string mlm_fingerprint;
  std::string clm_fingerprint;
  std::string variant_tag;

  bool operator==(const BaselineStats&) const = default;
};

/// Default pair count: min(1000, dataset size).
inline std::size_t default_baseline_pairs(std::size_t dataset_size) {
  return std::min<std::size_t>(1000, dataset_size);
}

/// Uniformly random permutation without fixed points (rejection sampling).
inline std::vector<std::size_t> random_derangement(std::size_t n, Rng& rng) {
  if (n < 2) throw PreconditionError("a derangement needs at least 2 elements");
  std::vector<std::size_t> p(n);
  for (;;) {
    for (std::size_t i = 0; i < n; ++i) p[i] = i;
    rng.shuffle(p);
    bool ok = true;
    for (std::size_t i = 0; i < n && ok; ++i) ok = p[i] != i;
    if (ok) return p;
  }
}

/// `n_pairs` (candidate index, context index) pairs with distinct indices.
/// Each block of n pairs comes from a fresh derangement, taken in a random
/// candidate order, so no pair is repeated within a block.
inline std::vector<std::pair<std::size_t, std::size_t>> mismatched_pairs(std::size_t n,
                                                                         std::size_t n_pairs,
                                                                         std::uint64_t seed) {
  if (n < 2) throw PreconditionError("baseline estimation needs at least 2 records");
  if (n_pairs == 0) throw PreconditionError("baseline estimation needs at least 1 pair");
  Rng rng(seed);
  std::vector<std::pair<std::size_t, std::size_t>> out;
  out.reserve(n_pairs);
  while (out.size() < n_pairs) {
    const auto d = random_derangement(n, rng);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(order);
    for (std::size_t k = 0; k < n && out.size() < n_pairs; ++k) out.emplace_back(order[k], d[order[k]]);
  }
  return out;
}

/// Estimates baselines for every config at once on one shared pairing.
/// Configs' own baselines are ignored. Means are summed in pair order.
inline std::vector<BaselineStats> estimate_baselines(const std::vector<EvalRecord>& records,
                                                     const ScoringModels& models,
                                                     std::vector<ScoringConfig> cfgs,
                                                     std::size_t n_pairs, std::uint64_t seed,
                                                     int workers = 1) {
  if (cfgs.empty()) throw PreconditionError("no configs to estimate baselines for");
  if (n_pairs == 0) n_pairs = default_baseline_pairs(records.size());
  for (auto& c : cfgs) {
    if (c.lrm) c.lrm->baseline = 0.0;
    if (c.grg) c.grg->baseline = 0.0;
  }
  const auto pairs = mismatched_pairs(records.size(), n_pairs, seed);
  const auto scores = ordered_map(pairs.size(), workers, [&](std::size_t k) {
    const auto& [i, j] = pairs[k];
    return score_configs(models, records[i].candidate, records[j].context, cfgs);
  });
  const std::string dataset_id = dataset_fingerprint(records);
  std::vector<BaselineStats> out;
  for (std::size_t c = 0; c < cfgs.size(); ++c) {
    BaselineStats s;
    s.n_pairs = pairs.size();
    s.seed = seed;
    s.dataset_id = dataset_id;
    s.variant_tag = cfgs[c].tag;
    if (cfgs[c].needs_mlm()) {
      double sum = 0.0;
      for (const auto& row : scores) sum += *row[c].lrm_raw;
      s.b_lrm = sum / static_cast<double>(scores.size());
      s.mlm_fingerprint = models.mlm->fingerprint();
    }
    if (cfgs[c].needs_clm()) {
      double sum = 0.0;
      for (const auto& row : scores) sum += *row[c].grg_raw;
      s.b_grg = sum / static_cast<double>(scores.size());
      s.clm_fingerprint = models.clm->fingerprint();
    }
    out.push_back(std::move(s));
  }
  return out;
}

inline BaselineStats estimate_baselines(const std::vector<EvalRecord>& records,
                                        const ScoringModels& models, const ScoringConfig& cfg,
                                        std::size_t n_pairs, std::uint64_t seed, int workers = 1) {
  return estimate_baselines(records, models, std::vector<ScoringConfig>{cfg}, n_pairs, seed, workers)
      .front();
}

/// Copies the stats' baselines into the components `cfg` uses.
inline void apply_baselines(ScoringConfig& cfg, const BaselineStats& s) {
  if (cfg.needs_mlm()) {
    if (!s.b_lrm) throw PreconditionError("baseline entry '" + s.variant_tag + "' has no b_lrm");
    cfg.lrm->baseline = *s.b_lrm;
  }
  if (cfg.needs_clm()) {
    if (!s.b_grg) throw PreconditionError("baseline entry '" + s.variant_tag + "' has no b_grg");
    cfg.grg->baseline = *s.b_grg;
  }
}

// ---------------------------------------------------------------------------
// Persistence.

inline constexpr const char* kBaselineFormat = "qrel-baselines";

inline nlohmann::ordered_json to_json(const BaselineStats& s) {
  nlohmann::ordered_json j;
  j["variant_tag"] = s.variant_tag;
  j["b_lrm"] = s.b_lrm ? nlohmann::ordered_json(*s.b_lrm) : nlohmann::ordered_json(nullptr);
  j["b_grg"] = s.b_grg ? nlohmann::ordered_json(*s.b_grg) : nlohmann::ordered_json(nullptr);
  j["n_pairs"] = s.n_pairs;
  j["seed"] = s.seed;
  j["dataset_id"] = s.dataset_id;
  j["mlm_fingerprint"] = s.mlm_fingerprint;
  j["clm_fingerprint"] = s.clm_fingerprint;
  return j;
}

inline BaselineStats baseline_from_json(const nlohmann::json& j) {
  BaselineStats s;
  s.variant_tag = j.at("variant_tag").get<std::string>();
  if (!j.at("b_lrm").is_null()) s.b_lrm = j["b_lrm"].get<double>();
  if (!j.at("b_grg").is_null()) s.b_grg = j["b_grg"].get<double>();
  s.n_pairs = j.at("n_pairs").get<std::size_t>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.dataset_id = j.at("dataset_id").get<std::string>();
  s.mlm_fingerprint = j.at("mlm_fingerprint").get<std::string>();
  s.clm_fingerprint = j.at("clm_fingerprint").get<std::string>();
  if (s.n_pairs < 1) throw FormatError("baseline entry has n_pairs < 1");
  return s;
}

inline void save_baselines(const std::vector<BaselineStats>& stats, const std::filesystem::path& path,
                           const nlohmann::ordered_json& meta = nlohmann::ordered_json::object()) {
  nlohmann::ordered_json doc;
  doc["format"] = kBaselineFormat;
  doc["version"] = 1;
  if (!meta.empty()) doc["meta"] = meta;
  doc["entries"] = nlohmann::ordered_json::array();
  for (const auto& s : stats) doc["entries"].push_back(to_json(s));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write baseline file " + path.string());
  out << doc.dump(2) << '\n';
}

struct FingerprintCheck {
  std::string mlm;  // empty skips the check
  std::string clm;
  bool allow_mismatch = false;
};

/// Loads every entry, refusing entries measured with different models unless
/// `check.allow_mismatch` is set (then a diagnostic is emitted instead).
inline std::vector<BaselineStats> load_baselines(const std::filesystem::path& path,
                                                 const FingerprintCheck& check = {}) {
  if (!std::filesystem::exists(path)) throw MissingFileError("baseline file not found: " + path.string());
  const nlohmann::json doc = detail::read_json_file(path);
  std::vector<BaselineStats> out;
  try {
    if (doc.value("format", "") != kBaselineFormat) {
      throw FormatError(path.string() + " is not a baseline file");
    }
    for (const auto& e : doc.at("entries")) out.push_back(baseline_from_json(e));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed baseline file " + path.string() + ": " + e.what());
  }
  for (const auto& s : out) {
    auto guard = [&](const std::string& stored, const std::string& current, const char* which) {
      if (stored.empty() || current.empty() || stored == current) return;
      const std::string msg = std::string("baseline entry '") + s.variant_tag + "' was estimated with a different " +
                              which + " (" + stored.substr(0, 12) + " vs " + current.substr(0, 12) + ")";
      if (!check.allow_mismatch) throw FingerprintMismatchError(msg + "; re-run the baseline step");
      diagnostic(msg + "; using it anyway");
    };
    guard(s.mlm_fingerprint, check.mlm, "masked LM");
    guard(s.clm_fingerprint, check.clm, "causal LM");
  }
  return out;
}

inline const BaselineStats& find_baseline(const std::vector<BaselineStats>& stats, std::string_view tag) {
  for (const auto& s : stats) {
    if (s.variant_tag == tag) return s;
  }
  throw PreconditionError("baseline file has no entry for variant '" + std::string(tag) +
                          "'; run the baseline subcommand with --variant " + std::string(tag));
}

}  // namespace qrel
