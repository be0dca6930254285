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

// Named ablation configurations. M1-M7 vary the local component (layer
// subset and aggregation), M8-M9 the global one (gain mode); "full" is the
// complete metric.

#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "qrel/error.hpp"
#include "qrel/relevance.hpp"

namespace qrel {

inline const std::vector<std::string>& variant_tags() {
  static const std::vector<std::string> tags{"M1", "M2", "M3", "M4", "M5",
                                             "M6", "M7", "M8", "M9", "full"};
  return tags;
}

inline bool is_variant_tag(std::string_view tag) {
  for (const auto& t : variant_tags()) {
    if (t == tag) return true;
  }
  return false;
}

/// Configuration for `tag`. Baselines are left at 0; callers fill them from
/// the variant's baseline file.
inline ScoringConfig variant_config(std::string_view tag) {
  ScoringConfig c;
  c.tag = std::string(tag);
  auto lrm = [&](std::vector<int> layers, Aggregation agg) {
    LrmConfig l;
    l.layers = std::move(layers);
    l.agg = agg;
    c.lrm = l;
    c.combine = Combine::lrm_only;
  };
  auto grg = [&](GainMode mode) {
    GrgConfig g;
    g.gain_mode = mode;
    c.grg = g;
    c.combine = Combine::grg_only;
  };
  if (tag == "M1") {
    lrm({}, Aggregation::max);
  } else if (tag == "M2") {
    lrm({0, 1, 2, 3}, Aggregation::max);
  } else if (tag == "M3") {
    lrm({4, 5, 6, 7}, Aggregation::max);
  } else if (tag == "M4") {
    lrm({8, 9, 10, 11}, Aggregation::max);
  } else if (tag == "M5") {
    lrm({0, 3, 7, 11}, Aggregation::max);
  } else if (tag == "M6") {
    lrm({}, Aggregation::avg);
  } else if (tag == "M7") {
    lrm({}, Aggregation::emd);
  } else if (tag == "M8") {
    grg(GainMode::ratio);
  } else if (tag == "M9") {
    grg(GainMode::absolute);
  } else if (tag == "full") {
    c.lrm = LrmConfig{};
    c.grg = GrgConfig{};
    c.combine = Combine::harmonic;
  } else {
    throw PreconditionError("unknown variant '" + std::string(tag) +
                            "'; expected one of M1..M9 or full");
  }
  return c;
}

inline std::vector<ScoringConfig> variant_grid() {
  std::vector<ScoringConfig> out;
  for (const auto& t : variant_tags()) out.push_back(variant_config(t));
  return out;
}

}  // namespace qrel
