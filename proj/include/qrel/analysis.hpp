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

// Metric-vs-human analysis over score tables: segment-level correlations,
// adversarial AUC and directional rates, score distributions, and
// cross-validated forward selection of metrics as linear predictors of a
// human rating.

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qrel/error.hpp"
#include "qrel/rng.hpp"
#include "qrel/stats.hpp"

namespace qrel {

/// Declared range of each known human rating dimension.
inline std::optional<std::pair<double, double>> human_range(const std::string& dim) {
  if (dim == "grammaticality" || dim == "answerability") return std::pair{1.0, 3.0};
  if (dim == "relevance") return std::pair{1.0, 2.0};
  return std::nullopt;
}

struct ScoreTable {
  std::vector<std::string> ids;
  std::vector<std::string> metric_names;
  std::map<std::string, std::vector<double>> metrics;
  std::map<std::string, std::vector<std::optional<double>>> human;
  std::vector<std::optional<std::string>> labels;
  std::vector<std::optional<std::string>> kinds;
  std::vector<std::optional<std::string>> original_ids;

  std::size_t size() const { return ids.size(); }
  const std::vector<double>& metric(const std::string& name) const {
    const auto it = metrics.find(name);
    if (it == metrics.end()) throw PreconditionError("score table has no metric '" + name + "'");
    return it->second;
  }
};

namespace detail {

inline bool non_metric_field(const std::string& k) {
  return k == "id" || k == "seed" || k == "chunks" || k == "variant" || k == "label" ||
         k == "kind" || k == "original_id" || k == "human" || k == "edit_span" ||
         k == "question" || k == "context" || k == "candidate";
}

struct TableBuilder {
  ScoreTable t;
  std::optional<std::vector<std::string>> metric_set;

  void add(std::string id, std::map<std::string, double> metrics, std::map<std::string, double> human,
           std::optional<std::string> label, std::optional<std::string> kind,
           std::optional<std::string> original_id, const std::string& at) {
    std::vector<std::string> names;
    for (const auto& [k, v] : metrics) names.push_back(k);
    if (!metric_set) {
      metric_set = names;
      t.metric_names = names;
    } else if (*metric_set != names) {
      throw FormatError(at + ": row metrics differ from the first row's");
    }
    for (const auto& [dim, v] : human) {
      if (const auto r = human_range(dim); r && (v < r->first || v > r->second)) {
        throw FormatError(at + ": human rating '" + dim + "' = " + std::to_string(v) + " outside [" +
                          std::to_string(r->first) + ", " + std::to_string(r->second) + "]");
      }
      auto& col = t.human[dim];
      col.resize(t.ids.size());
      col.push_back(v);
    }
    for (auto& [dim, col] : t.human) col.resize(t.ids.size() + 1);
    for (const auto& [k, v] : metrics) t.metrics[k].push_back(v);
    t.ids.push_back(std::move(id));
    t.labels.push_back(std::move(label));
    t.kinds.push_back(std::move(kind));
    t.original_ids.push_back(std::move(original_id));
  }
};

inline std::optional<std::string> optional_string(const nlohmann::json& row, const char* key) {
  if (!row.contains(key) || row[key].is_null()) return std::nullopt;
  return row[key].is_string() ? row[key].get<std::string>() : row[key].dump();
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace detail

/// Loads score rows. Every top-level numeric field is a metric except
/// bookkeeping fields; "human" holds rating dimensions. Meta header lines
/// are skipped.
inline ScoreTable load_score_table_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingFileError("score table not found: " + path.string());
  detail::TableBuilder b;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string at = path.string() + ":" + std::to_string(n);
    nlohmann::json row = nlohmann::json::parse(line, nullptr, false);
    if (row.is_discarded() || !row.is_object()) throw FormatError(at + ": malformed row");
    if (row.size() == 1 && row.contains("meta")) continue;
    if (!row.contains("id")) throw FormatError(at + ": missing field 'id'");
    std::map<std::string, double> metrics;
    for (const auto& [k, v] : row.items()) {
      if (!detail::non_metric_field(k) && v.is_number()) metrics[k] = v.get<double>();
    }
    std::map<std::string, double> human;
    if (row.contains("human") && row["human"].is_object()) {
      for (const auto& [k, v] : row["human"].items()) {
        if (v.is_number()) human[k] = v.get<double>();
      }
    }
    b.add(*detail::optional_string(row, "id"), std::move(metrics), std::move(human),
          detail::optional_string(row, "label"), detail::optional_string(row, "kind"),
          detail::optional_string(row, "original_id"), at);
  }
  return std::move(b.t);
}

/// CSV with a header row. Columns "id", "label", "kind", "original_id" are
/// bookkeeping; "human.<dim>" columns or known dimension names are human
/// ratings; everything else must be numeric and is a metric. Empty human
/// cells mean "not rated".
inline ScoreTable load_score_table_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingFileError("score table not found: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": empty CSV");
  const auto header = detail::split_csv_line(line);
  detail::TableBuilder b;
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r,") == std::string::npos) continue;
    const std::string at = path.string() + ":" + std::to_string(n);
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size()) throw FormatError(at + ": expected " + std::to_string(header.size()) + " cells");
    std::optional<std::string> id, label, kind, original_id;
    std::map<std::string, double> metrics;
    std::map<std::string, double> human;
    for (std::size_t c = 0; c < header.size(); ++c) {
      const std::string& h = header[c];
      const std::string& v = cells[c];
      if (h == "id") {
        id = v;
      } else if (h == "label") {
        if (!v.empty()) label = v;
      } else if (h == "kind") {
        if (!v.empty()) kind = v;
      } else if (h == "original_id") {
        if (!v.empty()) original_id = v;
      } else {
        const bool is_human = h.rfind("human.", 0) == 0 || human_range(h).has_value();
        const std::string key = h.rfind("human.", 0) == 0 ? h.substr(6) : h;
        if (is_human && v.empty()) continue;
        std::size_t used = 0;
        double x = 0.0;
        try {
          x = std::stod(v, &used);
        } catch (const std::exception&) {
          used = 0;
        }
        if (used == 0 || used != v.size()) throw FormatError(at + ": column '" + h + "' is not numeric");
        (is_human ? human : metrics)[key] = x;
      }
    }
    if (!id) throw FormatError(path.string() + ": CSV has no 'id' column");
    b.add(*id, std::move(metrics), std::move(human), label, kind, original_id, at);
  }
  return std::move(b.t);
}

inline ScoreTable load_score_table(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".csv") return load_score_table_csv(path);
  return load_score_table_jsonl(path);
}

// ---------------------------------------------------------------------------
// Correlation and classification.

struct CorrelationRow {
  std::string metric;
  std::string dimension;
  std::size_t n = 0;
  double pearson = 0.0;
  double spearman = 0.0;
  double kendall = 0.0;
};

/// Metric/rating pairs restricted to rows with that rating present.
inline std::pair<std::vector<double>, std::vector<double>> paired(const ScoreTable& t, const std::string& metric,
                                                                  const std::string& dim) {
  const auto& m = t.metric(metric);
  const auto it = t.human.find(dim);
  if (it == t.human.end()) throw PreconditionError("score table has no human dimension '" + dim + "'");
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!it->second[i]) continue;
    xs.push_back(m[i]);
    ys.push_back(*it->second[i]);
  }
  return {xs, ys};
}

inline std::vector<CorrelationRow> correlation_report(const ScoreTable& t) {
  std::vector<CorrelationRow> out;
  for (const auto& [dim, col] : t.human) {
    for (const auto& m : t.metric_names) {
      const auto [xs, ys] = paired(t, m, dim);
      CorrelationRow r{m, dim, xs.size()};
      r.pearson = stats::pearson(xs, ys);
      r.spearman = stats::spearman(xs, ys);
      r.kendall = stats::kendall(xs, ys);
      out.push_back(r);
    }
  }
  return out;
}

inline std::vector<bool> positive_labels(const ScoreTable& t) {
  std::vector<bool> pos;
  pos.reserve(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!t.labels[i]) throw PreconditionError("row '" + t.ids[i] + "' has no label");
    const std::string& l = *t.labels[i];
    if (l == "positive" || l == "1" || l == "true") {
      pos.push_back(true);
    } else if (l == "negative" || l == "0" || l == "false") {
      pos.push_back(false);
    } else {
      throw PreconditionError("row '" + t.ids[i] + "' has unknown label '" + l + "'");
    }
  }
  return pos;
}

inline bool has_labels(const ScoreTable& t) {
  return t.size() > 0 && std::all_of(t.labels.begin(), t.labels.end(), [](const auto& l) { return l.has_value(); });
}

inline double metric_auc(const ScoreTable& t, const std::string& metric) {
  return stats::roc_auc(t.metric(metric), positive_labels(t));
}

struct DirectionalResult {
  std::size_t pairs = 0;
  std::size_t lower = 0;
  double rate() const { return pairs ? static_cast<double>(lower) / static_cast<double>(pairs) : 0.0; }
};

/// Fraction of negatives scoring strictly below their own original (matched
/// by original_id to the positive row of the same anchor).
inline DirectionalResult directional_rate(const ScoreTable& t, const std::string& metric) {
  const auto& m = t.metric(metric);
  const auto pos = positive_labels(t);
  std::map<std::string, double> originals;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (pos[i] && t.original_ids[i]) originals.emplace(*t.original_ids[i], m[i]);
  }
  DirectionalResult r;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (pos[i] || !t.original_ids[i]) continue;
    const auto it = originals.find(*t.original_ids[i]);
    if (it == originals.end()) continue;
    ++r.pairs;
    if (m[i] < it->second) ++r.lower;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Distributions.

struct DistributionSummary {
  std::string group;
  std::size_t count = 0;
  double mean = 0.0;
  double min = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double max = 0.0;
  std::vector<std::size_t> histogram;  // 20 equal-width bins over [0, 1]
};

inline constexpr int kHistogramBins = 20;

inline DistributionSummary summarize(std::string group, std::vector<double> values) {
  if (values.empty()) throw StatisticsError("group '" + group + "' is empty");
  std::sort(values.begin(), values.end());
  DistributionSummary s;
  s.group = std::move(group);
  s.count = values.size();
  s.mean = stats::mean(values);
  s.min = values.front();
  s.max = values.back();
  s.q1 = stats::quantile_sorted(values, 0.25);
  s.median = stats::quantile_sorted(values, 0.5);
  s.q3 = stats::quantile_sorted(values, 0.75);
  s.histogram.assign(kHistogramBins, 0);
  for (double v : values) {
    const int bin = std::clamp(static_cast<int>(std::floor(v * kHistogramBins)), 0, kHistogramBins - 1);
    ++s.histogram[static_cast<std::size_t>(bin)];
  }
  return s;
}

inline std::string format_rating(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

/// Per-rating-value summaries of `metric`, or one "all" group when
/// `group_by` is empty. Groups are ordered by rating.
inline std::vector<DistributionSummary> score_distribution(const ScoreTable& t, const std::string& metric,
                                                           const std::string& group_by = "") {
  const auto& m = t.metric(metric);
  if (group_by.empty()) return {summarize("all", m)};
  const auto it = t.human.find(group_by);
  if (it == t.human.end()) throw PreconditionError("score table has no human dimension '" + group_by + "'");
  std::map<double, std::vector<double>> groups;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (it->second[i]) groups[*it->second[i]].push_back(m[i]);
  }
  if (groups.empty()) throw StatisticsError("no rows carry rating '" + group_by + "'");
  std::vector<DistributionSummary> out;
  for (auto& [rating, values] : groups) out.push_back(summarize(format_rating(rating), std::move(values)));
  return out;
}

// ---------------------------------------------------------------------------
// Forward selection.

struct SelectionStep {
  std::string metric;  // most frequently chosen at this step across repeats
  std::size_t votes = 0;
  double mse = 0.0;  // mean over repeats
  double r2 = 0.0;
};

struct SelectionResult {
  std::string target;
  std::size_t samples = 0;
  std::size_t repeats = 0;
  std::size_t folds = 0;
  std::vector<SelectionStep> steps;
};

namespace detail {

/// Cross-validated MSE of an intercept + columns OLS fit. Rank-deficient
/// designs are solved by pivoted QR, so redundant columns add nothing.
inline double cv_mse(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const std::vector<int>& fold_of,
                     int folds) {
  const Eigen::Index n = x.rows();
  double sse = 0.0;
  for (int f = 0; f < folds; ++f) {
    Eigen::Index ntrain = 0;
    for (Eigen::Index i = 0; i < n; ++i) ntrain += fold_of[static_cast<std::size_t>(i)] != f;
    Eigen::MatrixXd a(ntrain, x.cols() + 1);
    Eigen::VectorXd b(ntrain);
    Eigen::Index r = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (fold_of[static_cast<std::size_t>(i)] == f) continue;
      a(r, 0) = 1.0;
      a.row(r).tail(x.cols()) = x.row(i);
      b(r) = y(i);
      ++r;
    }
    const Eigen::VectorXd beta = a.colPivHouseholderQr().solve(b);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (fold_of[static_cast<std::size_t>(i)] != f) continue;
      const double pred = beta(0) + x.row(i).dot(beta.tail(x.cols()));
      sse += (y(i) - pred) * (y(i) - pred);
    }
  }
  return sse / static_cast<double>(n);
}

}  // namespace detail

/// Greedy forward selection: each step adds the metric whose inclusion gives
/// the lowest k-fold cross-validated MSE of a linear fit to `target`.
/// Repeated with fresh fold assignments; each step reports the modal choice
/// and the mean MSE and R^2 (1 - MSE / variance of the target).
inline SelectionResult forward_selection(const ScoreTable& t, const std::string& target, int folds = 5,
                                         int repeats = 10, std::uint64_t seed = 0) {
  if (t.metric_names.size() < 2) throw PreconditionError("forward selection needs at least 2 metrics");
  const auto it = t.human.find(target);
  if (it == t.human.end()) throw PreconditionError("score table has no human dimension '" + target + "'");
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (it->second[i]) rows.push_back(i);
  }
  if (rows.size() < 20) {
    throw PreconditionError("forward selection needs at least 20 rated samples, got " + std::to_string(rows.size()));
  }
  if (folds < 2 || static_cast<std::size_t>(folds) > rows.size()) throw PreconditionError("invalid fold count");
  const auto nm = t.metric_names.size();
  const auto n = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd all(n, static_cast<Eigen::Index>(nm));
  Eigen::VectorXd y(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    y(r) = *it->second[rows[static_cast<std::size_t>(r)]];
    for (std::size_t c = 0; c < nm; ++c) {
      all(r, static_cast<Eigen::Index>(c)) = t.metric(t.metric_names[c])[rows[static_cast<std::size_t>(r)]];
    }
  }
  const double var = (y.array() - y.mean()).square().mean();

  // Metrics that are exact linear copies of earlier ones are flagged once.
  {
    Eigen::MatrixXd design(n, 1);
    design.setOnes();
    for (std::size_t c = 0; c < nm; ++c) {
      Eigen::MatrixXd next(n, design.cols() + 1);
      next << design, all.col(static_cast<Eigen::Index>(c));
      Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(next);
      if (qr.rank() < next.cols()) {
        diagnostic("metric '" + t.metric_names[c] +
                   "' is linearly dependent on earlier metrics; it cannot improve the fit");
      } else {
        design = next;
      }
    }
  }

  std::vector<std::map<std::string, std::size_t>> votes(nm);
  std::vector<double> mse_sum(nm, 0.0);
  std::vector<double> r2_sum(nm, 0.0);
  for (int rep = 0; rep < repeats; ++rep) {
    std::vector<std::size_t> perm(rows.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    Rng rng(derive_seed(seed, "folds", static_cast<std::uint64_t>(rep)));
    rng.shuffle(perm);
    std::vector<int> fold_of(rows.size());
    for (std::size_t k = 0; k < perm.size(); ++k) fold_of[perm[k]] = static_cast<int>(k % static_cast<std::size_t>(folds));

    std::vector<std::size_t> chosen;
    std::vector<bool> used(nm, false);
    for (std::size_t step = 0; step < nm; ++step) {
      double best = std::numeric_limits<double>::infinity();
      std::size_t best_c = nm;
      for (std::size_t c = 0; c < nm; ++c) {
        if (used[c]) continue;
        Eigen::MatrixXd x(n, static_cast<Eigen::Index>(chosen.size() + 1));
        for (std::size_t k = 0; k < chosen.size(); ++k) {
          x.col(static_cast<Eigen::Index>(k)) = all.col(static_cast<Eigen::Index>(chosen[k]));
        }
        x.col(static_cast<Eigen::Index>(chosen.size())) = all.col(static_cast<Eigen::Index>(c));
        const double mse = detail::cv_mse(x, y, fold_of, folds);
        if (mse < best) {
          best = mse;
          best_c = c;
        }
      }
      used[best_c] = true;
      chosen.push_back(best_c);
      ++votes[step][t.metric_names[best_c]];
      mse_sum[step] += best;
      r2_sum[step] += var > 0.0 ? 1.0 - best / var : 0.0;
    }
  }

  SelectionResult out;
  out.target = target;
  out.samples = rows.size();
  out.repeats = static_cast<std::size_t>(repeats);
  out.folds = static_cast<std::size_t>(folds);
  for (std::size_t step = 0; step < nm; ++step) {
    SelectionStep s;
    for (const auto& name : t.metric_names) {
      const auto v = votes[step].find(name);
      if (v != votes[step].end() && v->second > s.votes) {
        s.votes = v->second;
        s.metric = name;
      }
    }
    s.mse = mse_sum[step] / repeats;
    s.r2 = r2_sum[step] / repeats;
    out.steps.push_back(s);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Report serialization.

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string format_number(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

inline std::string correlation_csv(const std::vector<CorrelationRow>& rows) {
  std::string out = "metric,dimension,n,pearson,spearman,kendall\n";
  for (const auto& r : rows) {
    out += csv_escape(r.metric) + "," + csv_escape(r.dimension) + "," + std::to_string(r.n) + "," +
           format_number(r.pearson) + "," + format_number(r.spearman) + "," + format_number(r.kendall) + "\n";
  }
  return out;
}

inline nlohmann::ordered_json to_json(const DistributionSummary& s) {
  nlohmann::ordered_json j;
  j["group"] = s.group;
  j["count"] = s.count;
  j["mean"] = s.mean;
  j["min"] = s.min;
  j["q1"] = s.q1;
  j["median"] = s.median;
  j["q3"] = s.q3;
  j["max"] = s.max;
  j["bin_edges"] = nlohmann::ordered_json::array();
  for (int b = 0; b <= kHistogramBins; ++b) j["bin_edges"].push_back(static_cast<double>(b) / kHistogramBins);
  j["histogram"] = s.histogram;
  return j;
}

inline nlohmann::ordered_json to_json(const SelectionResult& r) {
  nlohmann::ordered_json j;
  j["target"] = r.target;
  j["samples"] = r.samples;
  j["folds"] = r.folds;
  j["repeats"] = r.repeats;
  j["steps"] = nlohmann::ordered_json::array();
  for (const auto& s : r.steps) {
    j["steps"].push_back({{"metric", s.metric}, {"votes", s.votes}, {"mse", s.mse}, {"r2", s.r2}});
  }
  return j;
}

}  // namespace qrel
