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

// Acceptance suite: one PASS/FAIL line per criterion. Criteria that need
// pretrained models or SQuAD dev read them from the environment:
//
//   QREL_BERT_BASE_DIR  exported BERT-base (model.safetensors + tokenizer.json)
//   QREL_GPT2_DIR       exported GPT-2
//   QREL_SQUAD_DEV      SQuAD v1.1 dev-v1.1.json
//   QREL_BASELINE_FILE  optional baseline file for the pretrained pair
//
// and fail as blocked when they are absent.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <sstream>

#include "qrel/qrel.hpp"
#include "stats_oracle.hpp"
#include "test_support.hpp"
#include "transport_oracle.hpp"

namespace qrel::acceptance {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Blocked {
  std::string what;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

std::optional<fs::path> env_path(const char* name) {
  const char* v = std::getenv(name);
  if (!v || !*v) return std::nullopt;
  return fs::path(v);
}

const ModelHandle& env_model(const char* var, ModelKind kind) {
  static std::map<std::string, std::unique_ptr<ModelHandle>> cache;
  auto& slot = cache[var];
  if (!slot) {
    const auto dir = env_path(var);
    if (!dir) throw Blocked{std::string(var) + " is not set"};
    if (!fs::exists(*dir / "model.safetensors")) throw Blocked{(*dir / "model.safetensors").string() + " not found"};
    slot = std::make_unique<ModelHandle>(load_model(*dir / "model.safetensors", *dir / "tokenizer.json", kind));
  }
  return *slot;
}

const ModelHandle& bert() { return env_model("QREL_BERT_BASE_DIR", ModelKind::masked_lm); }
const ModelHandle& gpt2() { return env_model("QREL_GPT2_DIR", ModelKind::causal_lm); }

const std::vector<EvalRecord>& squad_dev() {
  static std::optional<std::vector<EvalRecord>> recs;
  if (!recs) {
    const auto p = env_path("QREL_SQUAD_DEV");
    if (!p) throw Blocked{"QREL_SQUAD_DEV is not set"};
    recs = load_dataset(*p, DatasetFormat::squad_json);
    use_references_as_candidates(*recs);
  }
  return *recs;
}

std::vector<EvalRecord> squad_mini() {
  auto recs = load_dataset(testing::data_dir() / "squad_mini.json", DatasetFormat::squad_json);
  use_references_as_candidates(recs);
  return recs;
}

/// `n` records in a seeded order.
std::vector<EvalRecord> seeded_slice(const std::vector<EvalRecord>& all, std::size_t n, std::string_view key) {
  std::vector<std::size_t> order(all.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(0, key));
  rng.shuffle(order);
  std::vector<EvalRecord> out;
  for (std::size_t i = 0; i < std::min(n, all.size()); ++i) out.push_back(all[order[i]]);
  return out;
}

/// Baselines for the full config from QREL_BASELINE_FILE, if given.
std::optional<BaselineStats> pretrained_baseline(const ModelHandle& mlm, const ModelHandle& clm) {
  const auto p = env_path("QREL_BASELINE_FILE");
  if (!p) return std::nullopt;
  return find_baseline(load_baselines(*p, {mlm.fingerprint(), clm.fingerprint(), false}), "full");
}

// ---------------------------------------------------------------------------

Outcome perturbation_ordering() {
  const auto t0 = Clock::now();
  const ModelHandle& mlm = bert();
  const std::string context = "Jack drove his car to the bazaar to purchase milk and honey for his large family.";
  const std::string reference = "Where did Jack buy his milk and honey?";
  const std::vector<std::pair<std::string, std::string>> variants{
      {"entity swap", "Where did Jack buy his car?"},
      {"pronoun swap", "Where did Jack buy your milk and honey?"},
      {"negation", "Where didn't Jack buy his milk and honey?"}};
  const ScoringConfig cfg = variant_config("M1");
  auto lrm = [&](const std::string& q) { return *qrel_score({&mlm, nullptr}, q, context, cfg).lrm_raw; };
  const double ref = lrm(reference);
  bool ok = true;
  std::string detail = "reference " + fmt(ref);
  for (const auto& [name, q] : variants) {
    const double v = lrm(q);
    ok = ok && ref > v;
    detail += ", " + name + " " + fmt(v);
  }
  const double secs = seconds_since(t0);
  detail += "; " + fmt(secs, 1) + " s (limit 30 s)";
  return {ok && secs < 30.0, detail};
}

std::string common_sense_context() {
  const std::string excerpt =
      "In 1987, when some students believed that the observer began to show a conservative bias, "
      "a liberal newspaper, Common Sense was published.";
  if (!env_path("QREL_SQUAD_DEV")) return excerpt;
  for (const auto& r : squad_dev()) {
    if (r.context.find("Common Sense was published") != std::string::npos) return r.context;
  }
  return excerpt;
}

Outcome answerability_ordering() {
  const auto t0 = Clock::now();
  const ModelHandle& mlm = bert();
  const ModelHandle& clm = gpt2();
  ScoringConfig cfg = variant_config("full");
  std::string note = "baselines 0";
  if (const auto b = pretrained_baseline(mlm, clm)) {
    apply_baselines(cfg, *b);
    note = "baselines from QREL_BASELINE_FILE";
  }
  const std::string context = common_sense_context();
  const ScoringModels models{&mlm, &clm};
  auto score = [&](const std::string& q) { return qrel_score(models, q, context, cfg).combined; };
  const double q2 = score("who was Common Sense published for the first time?");
  const std::vector<std::pair<std::string, std::string>> others{
      {"Q1", "when was Common Sense first published?"},
      {"Q3", "in what year did Common Sense begin publication?"},
      {"Q4", "in what year did the student liberal newspaper begin publication?"},
      {"Q5", "when did the observer begin to show a conservative bias?"}};
  bool ok = true;
  std::string detail = "Q2 " + fmt(q2);
  for (const auto& [name, q] : others) {
    const double v = score(q);
    ok = ok && v > q2;
    detail += ", " + name + " " + fmt(v);
  }
  const double secs = seconds_since(t0);
  detail += "; " + note + "; " + fmt(secs, 1) + " s (limit 60 s)";
  return {ok && secs < 60.0, detail};
}

Outcome formula_oracles() {
  int failures = 0;
  int checks = 0;
  auto expect = [&](double got, double want) {
    ++checks;
    if (!(std::abs(got - want) <= 1e-12)) ++failures;
  };
  expect(harmonic_mean(0.5, 0.25), 2.0 * 0.5 * 0.25 / 0.75);
  expect(harmonic_mean(0.5, 0.25), 1.0 / 3.0);
  expect(harmonic_mean(0.7, 0.7), 0.7);
  expect(harmonic_mean(0.0, 1.0), 0.0);

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double p : {1.0, 2.0, 3.0}) {
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<double> v(1 + rng() % 12);
      double acc = 0.0;
      for (double& x : v) {
        x = u(rng);
        acc += std::pow(x, p);
      }
      expect(power_mean(v, p), std::pow(acc / static_cast<double>(v.size()), 1.0 / p));
    }
  }
  const std::vector<double> pair{0.1, 0.9};
  expect(power_mean(pair, 2.0), std::sqrt((0.01 + 0.81) / 2.0));
  const std::vector<double> same{0.37, 0.37, 0.37};
  for (double p : {1.0, 2.0, 3.0}) expect(power_mean(same, p), 0.37);

  expect(gain(-100.0, -90.0, GainMode::ratio), 0.1);
  expect(gain(-40.0, -40.0, GainMode::ratio), 0.0);
  expect(gain(-40.0, -55.0, GainMode::ratio), 0.0);
  expect(gain(-100.0, -90.0, GainMode::absolute), 10.0);
  for (int trial = 0; trial < 50; ++trial) {
    const double base = -1.0 - 100.0 * u(rng);
    const double prompt = base + 20.0 * (u(rng) - 0.5);
    expect(gain(base, prompt, GainMode::ratio), std::max((prompt - base) / -base, 0.0));
  }

  for (double b : {-0.3, 0.0, 0.2, 0.85}) {
    expect(rescale(b, b), 0.0);
    expect(rescale(1.0, b), 1.0);
    expect(rescale(b - 0.1, b), 0.0);
    const double mid = b + 0.5 * (1.0 - b);
    expect(rescale(mid, b), 0.5);
  }
  return {failures == 0, std::to_string(checks - failures) + "/" + std::to_string(checks) +
                             " values within 1e-12"};
}

Outcome transport_oracle() {
  const double grid[] = {0.0, 0.5, 1.0};
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  int instances = 0;
  int failures = 0;
  double worst = 0.0;
  for (auto [m, n] : {std::pair{2, 2}, std::pair{2, 3}}) {
    const int cells = m * n;
    const long combos = static_cast<long>(std::pow(3, cells));
    for (long code = 0; code < combos; ++code) {
      Eigen::MatrixXd cost(m, n);
      Eigen::MatrixXd w(m, n);
      long r = code;
      for (int c = 0; c < cells; ++c) {
        cost(c / n, c % n) = grid[r % 3];
        w(c / n, c % n) = u(rng);
        r /= 3;
      }
      const auto oracle = testing::enumerate_transport(cost, w);
      const double got = emd_aggregate(cost, w);
      double dist = std::numeric_limits<double>::infinity();
      for (double v : oracle.optimal_values) dist = std::min(dist, std::abs(got - v));
      ++instances;
      if (!oracle.matches(got, 1e-6)) {
        ++failures;
        worst = std::max(worst, dist);
      }
    }
  }
  return {failures == 0, std::to_string(instances - failures) + "/" + std::to_string(instances) +
                             " instances within 1e-6" + (failures ? ", worst " + fmt(worst, 9) : "")};
}

Outcome statistics_oracles() {
  std::mt19937_64 rng(29);
  int auc_bad = 0, corr_bad = 0, mono_bad = 0;
  double worst = 0.0;
  int vectors = 0;
  while (vectors < 200) {
    const std::size_t n = 3 + rng() % 10;
    const int levels = 2 + static_cast<int>(rng() % 6);
    std::vector<double> x(n), y(n);
    std::vector<bool> pos(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = static_cast<double>(rng() % levels) / 2.0;
      y[i] = static_cast<double>(rng() % levels);
      pos[i] = rng() % 2;
    }
    const auto constant = [](const std::vector<double>& v) {
      return std::all_of(v.begin(), v.end(), [&](double a) { return a == v.front(); });
    };
    const std::size_t npos = static_cast<std::size_t>(std::count(pos.begin(), pos.end(), true));
    if (constant(x) || constant(y) || npos == 0 || npos == n) continue;
    ++vectors;
    if (stats::roc_auc(x, pos) != testing::brute_auc(x, pos)) ++auc_bad;
    for (auto [got, want] : {std::pair{stats::pearson(x, y), testing::brute_pearson(x, y)},
                             std::pair{stats::spearman(x, y), testing::brute_spearman(x, y)},
                             std::pair{stats::kendall(x, y), testing::brute_kendall(x, y)}}) {
      worst = std::max(worst, std::abs(got - want));
      if (!(std::abs(got - want) <= 1e-9)) ++corr_bad;
    }
  }

  std::uniform_real_distribution<double> u(-2.0, 2.0);
  int maps = 0;
  while (maps < 100) {
    const std::size_t n = 4 + rng() % 9;
    std::vector<double> x(n), y(n), fx(n);
    std::vector<bool> pos(n);
    const double a = 0.1 + 3.0 * std::abs(u(rng));
    const double b = u(rng);
    const int shape = static_cast<int>(rng() % 3);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = std::round(u(rng) * 2.0) / 2.0;
      y[i] = u(rng);
      pos[i] = rng() % 2;
      fx[i] = shape == 0 ? a * x[i] + b : shape == 1 ? std::exp(a * x[i]) + b : std::atan(a * x[i]) + x[i] * x[i] * x[i];
    }
    const std::size_t npos = static_cast<std::size_t>(std::count(pos.begin(), pos.end(), true));
    if (std::all_of(x.begin(), x.end(), [&](double v) { return v == x.front(); }) || npos == 0 || npos == n) continue;
    ++maps;
    const bool same = std::abs(stats::spearman(x, y) - stats::spearman(fx, y)) <= 1e-12 &&
                      std::abs(stats::kendall(x, y) - stats::kendall(fx, y)) <= 1e-12 &&
                      stats::roc_auc(x, pos) == stats::roc_auc(fx, pos);
    if (!same) ++mono_bad;
  }
  return {auc_bad == 0 && corr_bad == 0 && mono_bad == 0,
          "200 vectors: AUC mismatches " + std::to_string(auc_bad) + ", correlation max error " + fmt(worst, 12) +
              "; 100 monotone maps: " + std::to_string(mono_bad) + " changed"};
}

Outcome robustness() {
  const auto t0 = Clock::now();
  const ModelHandle& mlm = bert();
  const ModelHandle& clm = gpt2();
  const auto& dev = squad_dev();
  const ScoringModels models{&mlm, &clm};
  ScoringConfig cfg = variant_config("full");
  const auto anchors = seeded_slice(dev, 200, "robustness-anchors");
  std::string note;
  if (const auto b = pretrained_baseline(mlm, clm)) {
    apply_baselines(cfg, *b);
    note = "baselines from QREL_BASELINE_FILE";
  } else {
    apply_baselines(cfg, estimate_baselines(anchors, models, cfg, 200, derive_seed(0, "baseline-pairs"), 0));
    note = "baselines estimated on the anchors";
  }
  AdversarialRequest req;
  req.positives = 200;
  req.negatives = 200;
  req.kinds = {PerturbationKind::sentence_negation, PerturbationKind::pronoun_swap};
  req.seed = 0;
  const auto rows = build_adversarial_set(anchors, req);
  const auto scores = ordered_map(rows.size(), 0, [&](std::size_t i) {
    return qrel_score(models, rows[i].question, rows[i].context, cfg).combined;
  });
  std::vector<double> s;
  std::vector<bool> pos;
  std::map<std::string, double> original;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    s.push_back(scores[i]);
    pos.push_back(rows[i].label == "positive");
    if (rows[i].label == "positive") original[rows[i].original_id] = scores[i];
  }
  std::size_t pairs = 0, lower = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].label != "negative") continue;
    const auto it = original.find(rows[i].original_id);
    if (it == original.end()) continue;
    ++pairs;
    if (scores[i] < it->second) ++lower;
  }
  const double auc = stats::roc_auc(s, pos);
  const double rate = pairs ? static_cast<double>(lower) / static_cast<double>(pairs) : 0.0;
  const double secs = seconds_since(t0);
  const bool ok = auc >= 0.60 && auc > 0.55 && rate >= 0.70 && secs < 1200.0;
  return {ok, "AUC " + fmt(auc) + " (need >= 0.60), directional " + std::to_string(lower) + "/" +
                  std::to_string(pairs) + " = " + fmt(rate, 3) + " (need >= 0.70); " + note + "; " +
                  fmt(secs, 1) + " s (limit 1200 s)"};
}

/// Baselines, an adversarial set and score rows for `recs`, serialized.
std::string pipeline_bytes(const std::vector<EvalRecord>& recs, int workers) {
  const ModelHandle& mlm = testing::tiny_mlm();
  const ModelHandle& clm = testing::tiny_clm();
  const ScoringModels models{&mlm, &clm};
  std::ostringstream out;
  const auto stats = estimate_baselines(recs, models, variant_grid(), 30, 11, workers);
  for (const auto& s : stats) out << to_json(s).dump() << '\n';
  AdversarialRequest req;
  req.positives = 20;
  req.negatives = 20;
  req.seed = 11;
  for (const auto& r : build_adversarial_set(recs, req)) out << to_json(r).dump() << '\n';
  ScoringConfig cfg = variant_config("full");
  apply_baselines(cfg, find_baseline(stats, "full"));
  const auto rows = ordered_map(recs.size(), workers, [&](std::size_t i) {
    return score_row(recs[i], qrel_score(models, recs[i].candidate, recs[i].context, cfg)).dump();
  });
  for (const auto& r : rows) out << r << '\n';
  return out.str();
}

Outcome determinism_and_chunking() {
  const auto recs = squad_mini();
  const std::vector<EvalRecord> head(recs.begin(), recs.begin() + 40);
  const bool bytes_equal = pipeline_bytes(head, 1) == pipeline_bytes(head, 4);

  const ModelHandle& mlm = testing::tiny_mlm();
  const ModelHandle& clm = testing::tiny_clm();
  const ScoringModels models{&mlm, &clm};
  ScoringConfig cfg = variant_config("full");
  cfg.lrm->baseline = 0.0002;
  cfg.grg->baseline = 0.001;
  std::mt19937_64 rng(41);
  int single_chunk_bad = 0;
  int ids_bad = 0;
  for (int i = 0; i < 100; ++i) {
    const std::string cand = testing::random_text(rng, 3 + rng() % 10);
    const std::string ctx = i % 2 ? recs[rng() % recs.size()].context : testing::random_text(rng, 5 + rng() % 60);
    const RelevanceScore chunked = qrel_score(models, cand, ctx, cfg);
    const ComponentScore lrm = lrm_score(mlm, cand, ctx, *cfg.lrm);
    const ConfidencePair conf = confidence_pair(clm, cand, ctx, *cfg.grg);
    const ComponentScore grg = grg_score(conf, *cfg.grg);
    const double combined = combine_components(lrm.rescaled, grg.rescaled, cfg.combine);
    if (chunked.chunk_scores.size() != 1 || *chunked.lrm_raw != lrm.raw || *chunked.grg_raw != grg.raw ||
        chunked.combined != combined) {
      ++single_chunk_bad;
    }
    const auto alone = clm.tokenizer().encode(ctx).ids;
    if (conf.base_context_ids != conf.prompt_context_ids || conf.base_context_ids != alone ||
        conf.n_context_tokens != alone.size()) {
      ++ids_bad;
    }
  }
  return {bytes_equal && single_chunk_bad == 0 && ids_bad == 0,
          std::string("repeat runs ") + (bytes_equal ? "byte-identical" : "DIFFER") +
              "; single-chunk mismatches " + std::to_string(single_chunk_bad) +
              "/100; context-id mismatches " + std::to_string(ids_bad) + "/100"};
}

/// Mean matched raw LRM and b_LRM (estimated twice) on `recs`.
struct Separation {
  double matched = 0.0;
  double b_lrm = 0.0;
  bool reproducible = false;
};

Separation separation(const std::vector<EvalRecord>& recs, const ModelHandle& mlm) {
  const ScoringModels models{&mlm, nullptr};
  const ScoringConfig cfg = variant_config("M1");
  const auto raw = ordered_map(recs.size(), 0, [&](std::size_t i) {
    return *qrel_score(models, recs[i].candidate, recs[i].context, cfg).lrm_raw;
  });
  Separation s;
  s.matched = std::accumulate(raw.begin(), raw.end(), 0.0) / static_cast<double>(raw.size());
  const auto a = estimate_baselines(recs, models, cfg, recs.size(), 17, 1);
  const auto b = estimate_baselines(recs, models, cfg, recs.size(), 17, 4);
  s.b_lrm = *a.b_lrm;
  s.reproducible = a == b;
  return s;
}

Outcome baseline_separation() {
  auto mini = squad_mini();
  mini.resize(100);
  const Separation fixture = separation(mini, testing::tiny_mlm());
  const std::string fixture_note = "fixture models: matched " + fmt(fixture.matched, 6) + " vs b_LRM " +
                                   fmt(fixture.b_lrm, 6) + ", reproducible " +
                                   (fixture.reproducible ? "yes" : "NO");
  try {
    const auto slice = seeded_slice(squad_dev(), 100, "separation");
    const Separation s = separation(slice, bert());
    return {s.matched > s.b_lrm && s.reproducible,
            "matched " + fmt(s.matched) + " vs b_LRM " + fmt(s.b_lrm) + ", reproducible " +
                (s.reproducible ? "yes" : "NO") + "; " + fixture_note};
  } catch (const Blocked& b) {
    return {false, "blocked: " + b.what + "; " + fixture_note};
  }
}

Outcome variant_grid_properties() {
  auto recs = squad_mini();
  recs.resize(50);
  const ModelHandle& mlm = testing::tiny_mlm();
  const ModelHandle& clm = testing::tiny_clm();
  const ScoringConfig m1 = variant_config("M1");
  const ScoringConfig m6 = variant_config("M6");
  int layer_bad = 0;
  int score_bad = 0;
  int support_bad = 0;
  int layers_checked = 0;
  const std::vector<ScoringConfig> grg{variant_config("M8"), variant_config("M9")};
  for (const auto& r : recs) {
    const TokenizedPair pair = tokenize_pair(mlm, r.candidate, r.context);
    const LayerActivations acts = mlm_forward(mlm, pair);
    for (int l = 0; l < acts.num_layers(); ++l) {
      ++layers_checked;
      if (layer_precision(acts, pair, l, Aggregation::avg) > layer_precision(acts, pair, l, Aggregation::max)) {
        ++layer_bad;
      }
    }
    if (lrm_raw(acts, pair, *m6.lrm) > lrm_raw(acts, pair, *m1.lrm)) ++score_bad;
    const auto s = score_configs({nullptr, &clm}, r.candidate, r.context, grg);
    if ((*s[0].grg_raw > 0.0) != (*s[1].grg_raw > 0.0) || (*s[0].grg > 0.0) != (*s[1].grg > 0.0)) ++support_bad;
  }
  return {layer_bad == 0 && score_bad == 0 && support_bad == 0,
          "50 samples: avg > max on " + std::to_string(layer_bad) + "/" + std::to_string(layers_checked) +
              " layers, M6 > M1 on " + std::to_string(score_bad) + "; M8/M9 support differs on " +
              std::to_string(support_bad)};
}

}  // namespace
}  // namespace qrel::acceptance

int main() {
  using namespace qrel::acceptance;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"perturbation-ordering", perturbation_ordering},
      {"answerability-ordering", answerability_ordering},
      {"formula-oracles", formula_oracles},
      {"transport-oracle", transport_oracle},
      {"statistics-oracles", statistics_oracles},
      {"robustness", robustness},
      {"determinism-chunking", determinism_and_chunking},
      {"baseline-separation", baseline_separation},
      {"variant-grid", variant_grid_properties},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const Blocked& b) {
      o = {false, "blocked: " + b.what};
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("%s %-22s %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
