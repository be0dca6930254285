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

// The relevance metric proper. The local component (LRM) matches every
// candidate token against every context token inside one masked-LM pass,
// weighting layer-wise cosine similarity by cross attention; the global
// component (GRG) measures how much prefixing the candidate raises a causal
// LM's log-likelihood of the context. Both are rescaled against a baseline
// and combined with a harmonic mean.

#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qrel/error.hpp"
#include "qrel/model.hpp"
#include "qrel/transport.hpp"

namespace qrel {

enum class Aggregation { max, avg, emd };
enum class GainMode { ratio, absolute };
enum class Combine { lrm_only, grg_only, harmonic };

inline std::string_view to_string(Aggregation a) {
  switch (a) {
    case Aggregation::max: return "max";
    case Aggregation::avg: return "avg";
    case Aggregation::emd: return "emd";
  }
  return "?";
}

inline std::string_view to_string(GainMode g) {
  return g == GainMode::ratio ? "ratio" : "absolute";
}

inline std::string_view to_string(Combine c) {
  switch (c) {
    case Combine::lrm_only: return "lrm_only";
    case Combine::grg_only: return "grg_only";
    case Combine::harmonic: return "harmonic";
  }
  return "?";
}

struct LrmConfig {
  std::vector<int> layers;  // 0-based; empty means every layer
  double p = 1.0;
  Aggregation agg = Aggregation::max;
  double baseline = 0.0;
  TransportOptions transport;

  void validate() const {
    if (!(p >= 1.0)) throw PreconditionError("power-mean exponent must be >= 1");
    if (!(baseline < 1.0)) throw PreconditionError("LRM baseline must be < 1");
  }
};

struct GrgConfig {
  GainMode gain_mode = GainMode::ratio;
  double baseline = 0.0;
  std::string separator = " ";

  void validate() const {
    if (gain_mode == GainMode::ratio && !(baseline < 1.0)) {
      throw PreconditionError("GRG baseline must be < 1");
    }
    if (!std::isfinite(baseline)) throw PreconditionError("GRG baseline must be finite");
  }
};

struct ScoringConfig {
  std::optional<LrmConfig> lrm;
  std::optional<GrgConfig> grg;
  Combine combine = Combine::harmonic;
  std::string tag = "full";

  bool needs_mlm() const { return combine != Combine::grg_only; }
  bool needs_clm() const { return combine != Combine::lrm_only; }
  void validate() const {
    if (needs_mlm() && !lrm) throw PreconditionError("config '" + tag + "' lacks an LRM section");
    if (needs_clm() && !grg) throw PreconditionError("config '" + tag + "' lacks a GRG section");
    if (lrm) lrm->validate();
    if (grg) grg->validate();
  }
};

/// Borrowed model handles. Either may be null when no config needs it.
struct ScoringModels {
  const ModelHandle* mlm = nullptr;
  const ModelHandle* clm = nullptr;
};

struct ChunkScore {
  std::optional<double> lrm_raw;
  std::optional<double> grg_raw;
};

struct RelevanceScore {
  std::optional<double> lrm_raw;
  std::optional<double> lrm;
  std::optional<double> grg_raw;
  std::optional<double> grg;
  double combined = 0.0;
  std::vector<ChunkScore> chunk_scores;
  std::string config_tag;
};

/// Context log-likelihood with and without the candidate prompt.
struct ConfidencePair {
  double conf_base = 0.0;
  double conf_prompt = 0.0;
  std::size_t n_context_tokens = 0;
  std::vector<TokenId> base_context_ids;
  std::vector<TokenId> prompt_context_ids;
};

// ---------------------------------------------------------------------------
// Scalar pieces.

/// Generalized mean ((1/n) sum v^p)^(1/p). Exactly the arithmetic mean at
/// p = 1. Negative values are clamped to 0 unless p is an odd integer.
inline double power_mean(std::span<const double> values, double p) {
  if (values.empty()) throw PreconditionError("power mean of an empty list");
  if (!(p >= 1.0)) throw PreconditionError("power-mean exponent must be >= 1");
  const double n = static_cast<double>(values.size());
  if (p == 1.0) return std::accumulate(values.begin(), values.end(), 0.0) / n;
  const bool odd = std::floor(p) == p && std::fmod(p, 2.0) == 1.0;
  double acc = 0.0;
  for (double v : values) {
    const double x = (!odd && v < 0.0) ? 0.0 : v;
    acc += std::pow(x, p);
  }
  acc /= n;
  if (acc < 0.0) return -std::pow(-acc, 1.0 / p);
  return std::pow(acc, 1.0 / p);
}

/// clamp((raw - b) / (1 - b), 0, 1).
inline double rescale(double raw, double baseline) {
  if (!(baseline < 1.0)) throw PreconditionError("baseline must be < 1");
  return std::clamp((raw - baseline) / (1.0 - baseline), 0.0, 1.0);
}

/// 2ab / (a + b), with (0, 0) mapped to 0.
inline double harmonic_mean(double a, double b) {
  const double s = a + b;
  if (s == 0.0) return 0.0;
  return 2.0 * a * b / s;
}

/// Clipped confidence gain. Ratio mode divides by |conf_base|.
inline double gain(double conf_base, double conf_prompt, GainMode mode) {
  if (conf_base == 0.0) throw PreconditionError("base confidence is exactly zero");
  const double d = conf_prompt - conf_base;
  if (mode == GainMode::absolute) return std::max(d, 0.0);
  return std::max(d / std::abs(conf_base), 0.0);
}

/// Maps a raw GRG value onto the scale its baseline lives on. Ratio gains are
/// already in [0, 1]; absolute gains (nats) are squashed with x / (1 + x).
inline double grg_rescale(double raw, const GrgConfig& cfg) {
  if (cfg.gain_mode == GainMode::ratio) return rescale(raw, cfg.baseline);
  auto squash = [](double x) { return x / (1.0 + x); };
  return rescale(squash(raw), squash(std::max(cfg.baseline, 0.0)));
}

inline double combine_components(std::optional<double> lrm, std::optional<double> grg,
                                 Combine how) {
  switch (how) {
    case Combine::lrm_only: return lrm.value();
    case Combine::grg_only: return grg.value();
    case Combine::harmonic: return harmonic_mean(lrm.value(), grg.value());
  }
  return 0.0;
}

/// Average of the context score and the best reference score.
inline double ref_qrel_combine(double context_score, std::span<const double> reference_scores) {
  if (reference_scores.empty()) throw PreconditionError("reference list is empty");
  return 0.5 * (context_score + *std::max_element(reference_scores.begin(), reference_scores.end()));
}

// ---------------------------------------------------------------------------
// Local relevance matching.

/// Candidate-to-context attention a[m][n] of one layer: each head's rows are
/// restricted to context keys and renormalized, then the elementwise maximum
/// over heads is taken.
inline Eigen::MatrixXd cross_attention(const LayerActivations& acts, const TokenizedPair& pair,
                                       int layer) {
  const auto m = static_cast<Eigen::Index>(pair.candidate_size());
  const auto n = static_cast<Eigen::Index>(pair.context_size());
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(m, n);
  Eigen::VectorXd row(n);
  for (int h = 0; h < acts.num_heads(); ++h) {
    for (Eigen::Index i = 0; i < m; ++i) {
      const auto att = acts.attention_row(layer, h, pair.candidate_positions[static_cast<std::size_t>(i)]);
      double sum = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        row(j) = att[pair.context_positions[static_cast<std::size_t>(j)]];
        sum += row(j);
      }
      if (sum > 0.0) {
        row /= sum;
      } else {
        row.setConstant(1.0 / static_cast<double>(n));
      }
      out.row(i) = out.row(i).cwiseMax(row.transpose());
    }
  }
  return out;
}

namespace detail {

inline Eigen::MatrixXd unit_rows(const LayerActivations& acts, int layer,
                                 const std::vector<std::size_t>& positions, const char* side) {
  const Eigen::Index d = acts.hidden_dim();
  Eigen::MatrixXd x(static_cast<Eigen::Index>(positions.size()), d);
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const auto e = acts.embedding(layer, positions[i]);
    for (Eigen::Index k = 0; k < d; ++k) x(static_cast<Eigen::Index>(i), k) = e[static_cast<std::size_t>(k)];
    const double norm = x.row(static_cast<Eigen::Index>(i)).norm();
    if (norm > 0.0) {
      x.row(static_cast<Eigen::Index>(i)) /= norm;
    } else {
      diagnostic(std::string("zero-norm ") + side + " embedding at layer " + std::to_string(layer) +
                 ", position " + std::to_string(positions[i]) + "; cosine taken as 0");
    }
  }
  return x;
}

}  // namespace detail

/// Cosine similarity between candidate and context hidden states of one layer.
inline Eigen::MatrixXd cosine_matrix(const LayerActivations& acts, const TokenizedPair& pair,
                                     int layer) {
  const Eigen::MatrixXd c = detail::unit_rows(acts, layer, pair.candidate_positions, "candidate");
  const Eigen::MatrixXd x = detail::unit_rows(acts, layer, pair.context_positions, "context");
  return c * x.transpose();
}

/// Mean over candidate rows of agg over context columns of `sim`. For emd the
/// aggregation is transport-weighted under cost 1 - cosine; on solver failure
/// it degrades to avg with a diagnostic.
inline double aggregate_precision(const Eigen::MatrixXd& sim, const Eigen::MatrixXd& cosine,
                                  Aggregation agg, const TransportOptions& transport = {}) {
  switch (agg) {
    case Aggregation::max:
      return sim.rowwise().maxCoeff().mean();
    case Aggregation::avg:
      return sim.mean();
    case Aggregation::emd:
      try {
        const Eigen::MatrixXd cost = (1.0 - cosine.array()).matrix();
        return emd_aggregate(cost, sim, transport);
      } catch (const TransportError& e) {
        diagnostic(std::string(e.what()) + "; falling back to avg aggregation");
        return sim.mean();
      }
  }
  return 0.0;
}

inline double layer_precision(const LayerActivations& acts, const TokenizedPair& pair, int layer,
                              Aggregation agg, const TransportOptions& transport = {}) {
  const Eigen::MatrixXd a = cross_attention(acts, pair, layer);
  const Eigen::MatrixXd cosine = cosine_matrix(acts, pair, layer);
  const Eigen::MatrixXd sim = (a.array() * cosine.array()).matrix();
  return aggregate_precision(sim, cosine, agg, transport);
}

inline std::vector<int> resolve_layers(const LrmConfig& cfg, int num_layers) {
  if (cfg.layers.empty()) {
    std::vector<int> all(static_cast<std::size_t>(num_layers));
    std::iota(all.begin(), all.end(), 0);
    return all;
  }
  for (int l : cfg.layers) {
    if (l < 0 || l >= num_layers) {
      throw PreconditionError("layer " + std::to_string(l) + " is outside the model's " +
                              std::to_string(num_layers) + " layers");
    }
  }
  return cfg.layers;
}

/// Raw LRM of one forward pass: power mean of the selected layer precisions.
inline double lrm_raw(const LayerActivations& acts, const TokenizedPair& pair, const LrmConfig& cfg) {
  std::vector<double> per_layer;
  for (int l : resolve_layers(cfg, acts.num_layers())) {
    per_layer.push_back(layer_precision(acts, pair, l, cfg.agg, cfg.transport));
  }
  return power_mean(per_layer, cfg.p);
}

struct ComponentScore {
  double raw = 0.0;
  double rescaled = 0.0;
};

/// Unchunked LRM; the pair must fit the masked LM.
inline ComponentScore lrm_score(const ModelHandle& mlm, std::string_view candidate,
                                std::string_view context, const LrmConfig& cfg) {
  cfg.validate();
  const TokenizedPair pair = tokenize_pair(mlm, candidate, context);
  const double raw = lrm_raw(mlm_forward(mlm, pair), pair, cfg);
  return {raw, rescale(raw, cfg.baseline)};
}

// ---------------------------------------------------------------------------
// Global relevance generation.

/// Runs the causal LM on the context alone and on candidate + separator +
/// context. The context ids are spliced in verbatim, so both runs score the
/// same tokens.
inline ConfidencePair confidence_pair_from_ids(const ModelHandle& clm,
                                               std::span<const TokenId> candidate_ids,
                                               std::span<const TokenId> separator_ids,
                                               std::span<const TokenId> context_ids) {
  if (candidate_ids.empty()) throw PreconditionError("candidate has no tokens");
  if (context_ids.empty()) throw PreconditionError("context has no tokens");
  std::vector<TokenId> prompt(candidate_ids.begin(), candidate_ids.end());
  prompt.insert(prompt.end(), separator_ids.begin(), separator_ids.end());
  const TokenLogProbs base = clm_logprobs(clm, context_ids);
  const TokenLogProbs prompted = clm_logprobs_after(clm, prompt, context_ids);
  ConfidencePair out;
  out.conf_base = std::accumulate(base.logprobs.begin(), base.logprobs.end(), 0.0);
  out.conf_prompt = std::accumulate(prompted.logprobs.begin(), prompted.logprobs.end(), 0.0);
  out.n_context_tokens = context_ids.size();
  out.base_context_ids = base.token_ids;
  out.prompt_context_ids = prompted.token_ids;
  if (out.base_context_ids != out.prompt_context_ids) {
    throw Error("context token ids differ between the prompted and unprompted runs");
  }
  return out;
}

inline ConfidencePair confidence_pair(const ModelHandle& clm, std::string_view candidate,
                                      std::string_view context, const GrgConfig& cfg) {
  if (clm.kind() != ModelKind::causal_lm) throw PreconditionError("confidence_pair needs a causal LM");
  if (is_blank(candidate)) throw PreconditionError("candidate is empty");
  if (is_blank(context)) throw PreconditionError("context is empty");
  const auto& tok = clm.tokenizer();
  return confidence_pair_from_ids(clm, tok.encode(candidate).ids, tok.encode(cfg.separator).ids,
                                  tok.encode(context).ids);
}

inline ComponentScore grg_score(const ConfidencePair& pair, const GrgConfig& cfg) {
  cfg.validate();
  const double raw = gain(pair.conf_base, pair.conf_prompt, cfg.gain_mode);
  return {raw, grg_rescale(raw, cfg)};
}

// ---------------------------------------------------------------------------
// Chunked scoring.

/// Contiguous [begin, end) ranges of context tokens.
using ChunkRanges = std::vector<std::pair<std::size_t, std::size_t>>;

/// Splits `n` tokens into `k` contiguous ranges whose sizes differ by at most
/// one, longer ranges first.
inline ChunkRanges split_even(std::size_t n, std::size_t k) {
  ChunkRanges out;
  const std::size_t base = n / k;
  const std::size_t extra = n % k;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t len = base + (i < extra ? 1 : 0);
    out.emplace_back(pos, pos + len);
    pos += len;
  }
  return out;
}

inline std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

/// Both models see the same number of chunks: the fewest that lets every
/// context piece fit next to the candidate in each model that is used.
/// `capacity` of 0 marks an unused model.
inline std::size_t plan_chunk_count(std::size_t mlm_tokens, long mlm_capacity,
                                    std::size_t clm_tokens, long clm_capacity, bool use_mlm,
                                    bool use_clm) {
  std::size_t k = 1;
  if (use_mlm) {
    if (mlm_capacity < 1) throw OverLengthError("candidate alone fills the masked LM's input");
    k = std::max(k, ceil_div(mlm_tokens, static_cast<std::size_t>(mlm_capacity)));
  }
  if (use_clm) {
    if (clm_capacity < 1) throw OverLengthError("candidate alone fills the causal LM's input");
    k = std::max(k, ceil_div(clm_tokens, static_cast<std::size_t>(clm_capacity)));
  }
  if ((use_mlm && k > mlm_tokens) || (use_clm && k > clm_tokens)) {
    throw OverLengthError("context cannot be split into " + std::to_string(k) +
                          " non-empty chunks for both models");
  }
  return k;
}

/// Pre-tokenized inputs for scoring. Either side may be left empty when the
/// corresponding model is unused.
struct TokenizedInput {
  std::vector<TokenId> mlm_candidate;
  std::vector<TokenId> mlm_context;
  std::vector<TokenId> clm_candidate;
  std::vector<TokenId> clm_separator;
  std::vector<TokenId> clm_context;
};

namespace detail {

inline std::string_view grg_separator(std::span<const ScoringConfig> cfgs) {
  std::optional<std::string_view> sep;
  for (const auto& c : cfgs) {
    if (!c.needs_clm()) continue;
    if (sep && *sep != c.grg->separator) {
      throw PreconditionError("configs scored together must share one GRG separator");
    }
    sep = c.grg->separator;
  }
  return sep.value_or(" ");
}

}  // namespace detail

inline TokenizedInput tokenize_input(const ScoringModels& models, std::string_view candidate,
                                     std::string_view context, std::string_view separator,
                                     bool use_mlm, bool use_clm) {
  if (is_blank(candidate)) throw PreconditionError("candidate is empty");
  if (is_blank(context)) throw PreconditionError("context is empty");
  TokenizedInput in;
  if (use_mlm) {
    if (!models.mlm || models.mlm->kind() != ModelKind::masked_lm) {
      throw PreconditionError("a masked LM is required");
    }
    in.mlm_candidate = models.mlm->tokenizer().encode(candidate).ids;
    in.mlm_context = models.mlm->tokenizer().encode(context).ids;
  }
  if (use_clm) {
    if (!models.clm || models.clm->kind() != ModelKind::causal_lm) {
      throw PreconditionError("a causal LM is required");
    }
    in.clm_candidate = models.clm->tokenizer().encode(candidate).ids;
    in.clm_separator = models.clm->tokenizer().encode(separator).ids;
    in.clm_context = models.clm->tokenizer().encode(context).ids;
  }
  return in;
}

/// Scores one input under several configs, sharing the forward passes. Each
/// chunk runs the masked LM once and the causal LM twice; raw components are
/// averaged over chunks, then rescaled and combined.
inline std::vector<RelevanceScore> score_tokenized(const ScoringModels& models,
                                                   const TokenizedInput& in,
                                                   std::span<const ScoringConfig> cfgs) {
  bool use_mlm = false;
  bool use_clm = false;
  for (const auto& c : cfgs) {
    c.validate();
    use_mlm = use_mlm || c.needs_mlm();
    use_clm = use_clm || c.needs_clm();
  }
  if (use_mlm && (in.mlm_candidate.empty() || in.mlm_context.empty())) {
    throw PreconditionError("masked-LM candidate or context has no tokens");
  }
  if (use_clm && (in.clm_candidate.empty() || in.clm_context.empty())) {
    throw PreconditionError("causal-LM candidate or context has no tokens");
  }
  const long mlm_cap = use_mlm ? mlm_context_capacity(*models.mlm, in.mlm_candidate.size()) : 0;
  const long clm_cap = use_clm ? static_cast<long>(clm_capacity(*models.clm)) -
                                     static_cast<long>(in.clm_candidate.size() + in.clm_separator.size())
                               : 0;
  const std::size_t k = plan_chunk_count(in.mlm_context.size(), mlm_cap, in.clm_context.size(),
                                         clm_cap, use_mlm, use_clm);
  const ChunkRanges mlm_chunks = use_mlm ? split_even(in.mlm_context.size(), k) : ChunkRanges{};
  const ChunkRanges clm_chunks = use_clm ? split_even(in.clm_context.size(), k) : ChunkRanges{};

  std::vector<RelevanceScore> out(cfgs.size());
  for (std::size_t c = 0; c < cfgs.size(); ++c) out[c].config_tag = cfgs[c].tag;

  for (std::size_t chunk = 0; chunk < k; ++chunk) {
    std::optional<TokenizedPair> pair;
    std::optional<LayerActivations> acts;
    if (use_mlm) {
      const auto [b, e] = mlm_chunks[chunk];
      pair = make_pair_from_ids(*models.mlm, in.mlm_candidate,
                                std::vector<TokenId>(in.mlm_context.begin() + static_cast<std::ptrdiff_t>(b),
                                                     in.mlm_context.begin() + static_cast<std::ptrdiff_t>(e)));
      acts.emplace(mlm_forward(*models.mlm, *pair));
    }
    std::optional<ConfidencePair> conf;
    if (use_clm) {
      const auto [b, e] = clm_chunks[chunk];
      conf = confidence_pair_from_ids(*models.clm, in.clm_candidate, in.clm_separator,
                                      std::span<const TokenId>(in.clm_context).subspan(b, e - b));
    }
    for (std::size_t c = 0; c < cfgs.size(); ++c) {
      ChunkScore cs;
      if (cfgs[c].needs_mlm()) cs.lrm_raw = lrm_raw(*acts, *pair, *cfgs[c].lrm);
      if (cfgs[c].needs_clm()) {
        cs.grg_raw = gain(conf->conf_base, conf->conf_prompt, cfgs[c].grg->gain_mode);
      }
      out[c].chunk_scores.push_back(cs);
    }
  }

  for (std::size_t c = 0; c < cfgs.size(); ++c) {
    const ScoringConfig& cfg = cfgs[c];
    RelevanceScore& s = out[c];
    const double n = static_cast<double>(s.chunk_scores.size());
    if (cfg.needs_mlm()) {
      double sum = 0.0;
      for (const auto& cs : s.chunk_scores) sum += *cs.lrm_raw;
      s.lrm_raw = sum / n;
      s.lrm = rescale(*s.lrm_raw, cfg.lrm->baseline);
    }
    if (cfg.needs_clm()) {
      double sum = 0.0;
      for (const auto& cs : s.chunk_scores) sum += *cs.grg_raw;
      s.grg_raw = sum / n;
      s.grg = grg_rescale(*s.grg_raw, *cfg.grg);
    }
    s.combined = combine_components(s.lrm, s.grg, cfg.combine);
  }
  return out;
}

inline std::vector<RelevanceScore> score_configs(const ScoringModels& models,
                                                 std::string_view candidate,
                                                 std::string_view context,
                                                 std::span<const ScoringConfig> cfgs) {
  bool use_mlm = false;
  bool use_clm = false;
  for (const auto& c : cfgs) {
    use_mlm = use_mlm || c.needs_mlm();
    use_clm = use_clm || c.needs_clm();
  }
  const TokenizedInput in = tokenize_input(models, candidate, context, detail::grg_separator(cfgs),
                                           use_mlm, use_clm);
  return score_tokenized(models, in, cfgs);
}

/// Chunk-aware score of one candidate against one context.
inline RelevanceScore chunked_score(const ScoringModels& models, std::string_view candidate,
                                    std::string_view context, const ScoringConfig& cfg) {
  return score_configs(models, candidate, context, std::span<const ScoringConfig>(&cfg, 1)).front();
}

inline RelevanceScore qrel_score(const ScoringModels& models, std::string_view candidate,
                                 std::string_view context, const ScoringConfig& cfg) {
  return chunked_score(models, candidate, context, cfg);
}

/// Mean of the context score and the best score against any reference, each
/// reference standing in for the context under the same baselines.
inline double ref_qrel_score(const ScoringModels& models, std::string_view candidate,
                             std::string_view context, std::span<const std::string> references,
                             const ScoringConfig& cfg) {
  if (references.empty()) throw PreconditionError("reference list is empty");
  const double own = qrel_score(models, candidate, context, cfg).combined;
  std::vector<double> refs;
  refs.reserve(references.size());
  for (const auto& r : references) refs.push_back(qrel_score(models, candidate, r, cfg).combined);
  return ref_qrel_combine(own, refs);
}

}  // namespace qrel
