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

// qrel: score, baseline, perturb, analyze, variants.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "qrel/qrel.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr std::size_t kBlock = 64;

struct Options {
  std::string config;
  std::string mlm_model;
  std::string clm_model;
  std::string tokenizer_mlm;
  std::string tokenizer_clm;
  std::string dataset;
  std::string format;
  std::string baseline_file;
  std::string variant = "full";
  std::uint64_t seed = 0;
  int workers = 1;
  std::string output = "-";

  // dataset shaping
  bool gold_as_candidate = false;
  std::string predictions;

  // score / variants
  bool allow_mismatch = false;
  bool with_references = false;

  // baseline
  std::size_t n_pairs = 0;

  // perturb
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::vector<std::string> kinds{"entity_swap", "pronoun_swap", "sentence_negation"};

  // analyze
  std::string scores;
  std::string metric;
  std::string target;
  std::string group_by;
  std::string csv;
  int folds = 5;
  int repeats = 10;
};

// ---------------------------------------------------------------------------

struct LoadedModels {
  qrel::ModelHandle mlm;
  qrel::ModelHandle clm;
  qrel::ScoringModels view() const { return {mlm ? &mlm : nullptr, clm ? &clm : nullptr}; }
};

fs::path tokenizer_for(const std::string& model, const std::string& tokenizer) {
  if (!tokenizer.empty()) return tokenizer;
  return fs::path(model).parent_path() / "tokenizer.json";
}

LoadedModels load_models(const Options& o, bool need_mlm, bool need_clm) {
  LoadedModels m;
  if (need_mlm) {
    if (o.mlm_model.empty()) throw qrel::PreconditionError("this variant needs --mlm-model");
    m.mlm = qrel::load_model(o.mlm_model, tokenizer_for(o.mlm_model, o.tokenizer_mlm), qrel::ModelKind::masked_lm);
  }
  if (need_clm) {
    if (o.clm_model.empty()) throw qrel::PreconditionError("this variant needs --clm-model");
    m.clm = qrel::load_model(o.clm_model, tokenizer_for(o.clm_model, o.tokenizer_clm), qrel::ModelKind::causal_lm);
  }
  return m;
}

qrel::DatasetFormat dataset_format(const Options& o) {
  if (!o.format.empty()) return qrel::parse_dataset_format(o.format);
  return fs::path(o.dataset).extension() == ".json" ? qrel::DatasetFormat::squad_json : qrel::DatasetFormat::jsonl;
}

std::vector<qrel::EvalRecord> load_records(const Options& o, bool need_candidates) {
  if (o.dataset.empty()) throw qrel::PreconditionError("--dataset is required");
  auto recs = qrel::load_dataset(o.dataset, dataset_format(o));
  if (!o.predictions.empty()) qrel::merge_predictions(recs, o.predictions);
  if (o.gold_as_candidate) qrel::use_references_as_candidates(recs);
  if (need_candidates) qrel::require_scorable(recs);
  return recs;
}

std::vector<std::string> requested_tags(const std::string& variant) {
  if (variant == "all") return qrel::variant_tags();
  if (!qrel::is_variant_tag(variant)) {
    throw qrel::PreconditionError("unknown variant '" + variant + "'; expected one of M1..M9, full or all");
  }
  return {variant};
}

std::vector<qrel::BaselineStats> baselines_for(const Options& o, const LoadedModels& m) {
  if (o.baseline_file.empty()) {
    throw qrel::PreconditionError(
        "no --baseline-file given; estimate one first with `qrel baseline --variant " + o.variant +
        " --output <file>`");
  }
  if (!fs::exists(o.baseline_file)) {
    throw qrel::MissingFileError("baseline file not found: " + o.baseline_file +
                                 "; estimate it first with `qrel baseline --variant " + o.variant +
                                 " --output " + o.baseline_file + "`");
  }
  return qrel::load_baselines(o.baseline_file, {m.mlm ? m.mlm.fingerprint() : "",
                                                m.clm ? m.clm.fingerprint() : "", o.allow_mismatch});
}

ordered_json effective_config(const Options& o, const std::string& command) {
  ordered_json j;
  j["command"] = command;
  j["mlm_model"] = o.mlm_model;
  j["clm_model"] = o.clm_model;
  j["tokenizer_mlm"] = o.mlm_model.empty() ? "" : tokenizer_for(o.mlm_model, o.tokenizer_mlm).string();
  j["tokenizer_clm"] = o.clm_model.empty() ? "" : tokenizer_for(o.clm_model, o.tokenizer_clm).string();
  j["dataset"] = o.dataset;
  j["format"] = o.dataset.empty() ? "" : std::string(qrel::to_string(dataset_format(o)));
  j["baseline_file"] = o.baseline_file;
  j["variant"] = o.variant;
  j["seed"] = o.seed;
  j["gold_as_candidate"] = o.gold_as_candidate;
  j["predictions"] = o.predictions;
  return j;
}

void add_model_fingerprints(ordered_json& meta, const LoadedModels& m) {
  meta["mlm_fingerprint"] = m.mlm ? m.mlm.fingerprint() : "";
  meta["clm_fingerprint"] = m.clm ? m.clm.fingerprint() : "";
}

// ---------------------------------------------------------------------------

void run_score(const Options& o) {
  auto cfg = qrel::variant_config(o.variant);
  const auto recs = load_records(o, true);
  const LoadedModels m = load_models(o, cfg.needs_mlm(), cfg.needs_clm());
  qrel::apply_baselines(cfg, qrel::find_baseline(baselines_for(o, m), cfg.tag));
  cfg.validate();

  ordered_json meta = effective_config(o, "score");
  add_model_fingerprints(meta, m);
  meta["dataset_id"] = qrel::dataset_fingerprint(recs);
  meta["with_references"] = o.with_references;
  meta["scoring"] = qrel::to_json(cfg);
  qrel::JsonlWriter out(o.output, meta);
  const auto models = m.view();
  qrel::ordered_stream(
      recs.size(), o.workers, kBlock,
      [&](std::size_t i) {
        const auto& r = recs[i];
        const auto s = qrel::qrel_score(models, r.candidate, r.context, cfg);
        std::optional<double> ref;
        if (o.with_references && !r.references.empty()) {
          std::vector<double> per_ref;
          for (const auto& text : r.references) per_ref.push_back(qrel::qrel_score(models, r.candidate, text, cfg).combined);
          ref = qrel::ref_qrel_combine(s.combined, per_ref);
        }
        return qrel::score_row(r, s, ref);
      },
      [&](std::size_t, const ordered_json& row) { out.write(row); });
  out.close();
}

void run_variants(const Options& o) {
  auto cfgs = qrel::variant_grid();
  const auto recs = load_records(o, true);
  const LoadedModels m = load_models(o, true, true);
  const auto stats = baselines_for(o, m);
  for (auto& c : cfgs) {
    qrel::apply_baselines(c, qrel::find_baseline(stats, c.tag));
    c.validate();
  }
  ordered_json meta = effective_config(o, "variants");
  add_model_fingerprints(meta, m);
  meta["dataset_id"] = qrel::dataset_fingerprint(recs);
  meta["scoring"] = ordered_json::array();
  for (const auto& c : cfgs) meta["scoring"].push_back(qrel::to_json(c));
  qrel::JsonlWriter out(o.output, meta);
  const auto models = m.view();
  qrel::ordered_stream(
      recs.size(), o.workers, kBlock,
      [&](std::size_t i) {
        const auto& r = recs[i];
        const auto scores = qrel::score_configs(models, r.candidate, r.context, cfgs);
        ordered_json row;
        row["id"] = r.id;
        for (const auto& s : scores) row[s.config_tag] = s.combined;
        row["chunks"] = scores.front().chunk_scores.size();
        if (!r.human.empty()) row["human"] = r.human;
        for (const auto& [k, v] : r.passthrough.items()) row[k] = v;
        return row;
      },
      [&](std::size_t, const ordered_json& row) { out.write(row); });
  out.close();
}

void run_baseline(const Options& o) {
  std::vector<qrel::ScoringConfig> cfgs;
  bool need_mlm = false, need_clm = false;
  for (const auto& t : requested_tags(o.variant)) {
    cfgs.push_back(qrel::variant_config(t));
    need_mlm = need_mlm || cfgs.back().needs_mlm();
    need_clm = need_clm || cfgs.back().needs_clm();
  }
  const auto recs = load_records(o, true);
  const LoadedModels m = load_models(o, need_mlm, need_clm);
  const auto stats = qrel::estimate_baselines(recs, m.view(), cfgs, o.n_pairs,
                                              qrel::derive_seed(o.seed, "baseline-pairs"), o.workers);
  const std::string path = o.output == "-" ? o.baseline_file : o.output;
  if (path.empty() || path == "-") throw qrel::PreconditionError("baseline needs --output <file>");
  ordered_json meta = effective_config(o, "baseline");
  meta["n_pairs_requested"] = o.n_pairs;
  qrel::save_baselines(stats, path, meta);
}

void run_perturb(const Options& o) {
  const auto recs = load_records(o, false);
  qrel::AdversarialRequest req;
  req.positives = o.positives;
  req.negatives = o.negatives;
  req.seed = qrel::derive_seed(o.seed, "perturb");
  req.kinds.clear();
  for (const auto& k : o.kinds) req.kinds.push_back(qrel::parse_perturbation_kind(k));
  if (req.positives == 0 && req.negatives == 0) {
    req.positives = recs.size();
    req.negatives = recs.size();
  }
  const auto rows = qrel::build_adversarial_set(recs, req);
  ordered_json meta = effective_config(o, "perturb");
  meta["positives"] = req.positives;
  meta["negatives"] = req.negatives;
  meta["kinds"] = o.kinds;
  qrel::JsonlWriter out(o.output, meta);
  for (const auto& r : rows) out.write(qrel::to_json(r));
  out.close();
}

void run_analyze(const Options& o) {
  const std::string input = o.scores.empty() ? o.dataset : o.scores;
  if (input.empty()) throw qrel::PreconditionError("analyze needs --scores <score table>");
  const auto t = qrel::load_score_table(input);
  if (t.size() == 0) throw qrel::PreconditionError("score table " + input + " has no rows");
  if (t.metric_names.empty()) {
    throw qrel::PreconditionError("score table " + input + " has no numeric metric columns; score it first");
  }
  std::string metric = o.metric;
  if (metric.empty()) {
    metric = t.metrics.count("qrel") ? "qrel" : (t.metrics.count("full") ? "full" : t.metric_names.front());
  }

  ordered_json meta;
  meta["command"] = "analyze";
  meta["scores"] = input;
  meta["metric"] = metric;
  meta["target"] = o.target;
  meta["group_by"] = o.group_by;
  meta["seed"] = o.seed;
  meta["folds"] = o.folds;
  meta["repeats"] = o.repeats;

  ordered_json report;
  report["meta"] = meta;
  report["rows"] = t.size();
  report["metrics"] = t.metric_names;

  std::vector<std::size_t> order(t.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const auto& m = t.metric(metric);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return m[a] > m[b]; });
  ordered_json ranking = ordered_json::array();
  for (std::size_t i : order) ranking.push_back({{"id", t.ids[i]}, {metric, m[i]}});
  report["ranking"] = ranking;

  if (!t.human.empty()) {
    const auto rows = qrel::correlation_report(t);
    ordered_json corr = ordered_json::array();
    for (const auto& r : rows) {
      corr.push_back({{"metric", r.metric}, {"dimension", r.dimension}, {"n", r.n},
                      {"pearson", r.pearson}, {"spearman", r.spearman}, {"kendall", r.kendall}});
    }
    report["correlations"] = corr;
    if (!o.csv.empty()) {
      std::ofstream csv(o.csv, std::ios::binary);
      if (!csv) throw qrel::Error("cannot write " + o.csv);
      csv << "# " << ordered_json{{"meta", meta}}.dump() << '\n' << qrel::correlation_csv(rows);
    }
  }
  if (qrel::has_labels(t)) {
    ordered_json cls = ordered_json::array();
    for (const auto& name : t.metric_names) {
      const auto d = qrel::directional_rate(t, name);
      cls.push_back({{"metric", name}, {"auc", qrel::metric_auc(t, name)},
                     {"directional_pairs", d.pairs}, {"directional_rate", d.rate()}});
    }
    report["classification"] = cls;
  }
  if (!o.target.empty()) {
    report["selection"] = qrel::to_json(
        qrel::forward_selection(t, o.target, o.folds, o.repeats, qrel::derive_seed(o.seed, "folds")));
  }
  ordered_json dist = ordered_json::array();
  for (const auto& s : qrel::score_distribution(t, metric, o.group_by)) dist.push_back(qrel::to_json(s));
  report["distribution"] = dist;

  const std::string text = report.dump(2) + "\n";
  if (o.output.empty() || o.output == "-") {
    std::cout << text;
  } else {
    std::ofstream out(o.output, std::ios::binary);
    if (!out) throw qrel::Error("cannot write " + o.output);
    out << text;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"QRelScore: reference-free relevance scoring for generated questions"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;

  app.set_config("--config", "", "TOML/INI config file; command-line flags take precedence");
  app.add_option("--mlm-model", o.mlm_model, "Masked LM weights (.safetensors)");
  app.add_option("--clm-model", o.clm_model, "Causal LM weights (.safetensors)");
  app.add_option("--tokenizer-mlm", o.tokenizer_mlm, "Masked LM tokenizer.json (default: next to the model)");
  app.add_option("--tokenizer-clm", o.tokenizer_clm, "Causal LM tokenizer.json (default: next to the model)");
  app.add_option("--dataset", o.dataset, "Dataset file");
  app.add_option("--format", o.format, "Dataset format: jsonl or squad_json (default: by extension)")
      ->check(CLI::IsMember({"jsonl", "squad_json", "squad"}));
  app.add_option("--baseline-file", o.baseline_file, "Baseline file written by `qrel baseline`");
  app.add_option("--variant", o.variant, "M1..M9 or full (baseline also accepts all)")->capture_default_str();
  app.add_option("--seed", o.seed, "Top-level seed")->capture_default_str();
  app.add_option("--workers", o.workers, "Worker threads (0 = all cores)")->capture_default_str();
  app.add_option("--output", o.output, "Output file (- for stdout)")->capture_default_str();
  app.add_flag("--gold-as-candidate", o.gold_as_candidate, "Score the first reference question as the candidate");
  app.add_option("--predictions", o.predictions, "Predictions to merge by id (JSON object or JSONL)");

  auto* score = app.add_subcommand("score", "Score each record with one variant");
  score->add_flag("--allow-fingerprint-mismatch", o.allow_mismatch, "Use baselines measured with other models");
  score->add_flag("--with-references", o.with_references, "Also report the reference-augmented score");

  auto* baseline = app.add_subcommand("baseline", "Estimate rescaling baselines on mismatched pairs");
  baseline->add_option("--n-pairs", o.n_pairs, "Mismatched pairs (default min(1000, dataset size))");

  auto* perturb = app.add_subcommand("perturb", "Build a labeled adversarial set");
  perturb->add_option("--positives", o.positives, "Unmodified questions (default: dataset size)");
  perturb->add_option("--negatives", o.negatives, "Perturbed questions (default: dataset size)");
  perturb->add_option("--kinds", o.kinds, "Perturbation kinds")
      ->delimiter(',')
      ->check(CLI::IsMember({"entity_swap", "pronoun_swap", "sentence_negation"}))
      ->capture_default_str();

  auto* analyze = app.add_subcommand("analyze", "Correlations, AUC, forward selection and distributions");
  analyze->add_option("--scores", o.scores, "Score table (JSONL or CSV)");
  analyze->add_option("--metric", o.metric, "Metric for ranking and distributions (default qrel)");
  analyze->add_option("--target", o.target, "Human dimension for forward selection");
  analyze->add_option("--group-by", o.group_by, "Human dimension to group distributions by");
  analyze->add_option("--csv", o.csv, "Also write the correlation table as CSV");
  analyze->add_option("--folds", o.folds, "Cross-validation folds")->capture_default_str();
  analyze->add_option("--repeats", o.repeats, "Cross-validation repeats")->capture_default_str();

  auto* variants = app.add_subcommand("variants", "Score every record with M1..M9 and full");
  variants->add_flag("--allow-fingerprint-mismatch", o.allow_mismatch, "Use baselines measured with other models");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*score) run_score(o);
    if (*baseline) run_baseline(o);
    if (*perturb) run_perturb(o);
    if (*analyze) run_analyze(o);
    if (*variants) run_variants(o);
  } catch (const qrel::Error& e) {
    std::cerr << "qrel: error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "qrel: unexpected error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
