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

// Properties that only hold for trained weights. Skipped unless
// QREL_BERT_BASE_DIR / QREL_GPT2_DIR and QREL_SQUAD_DEV are set.

#include <gtest/gtest.h>

#include <cstdlib>
#include <iterator>
#include <random>
#include <sstream>

#include "qrel/dataset.hpp"
#include "qrel/relevance.hpp"
#include "test_support.hpp"

namespace qrel {
namespace {

namespace fs = std::filesystem;

std::optional<fs::path> env(const char* name) {
  const char* v = std::getenv(name);
  if (!v || !*v) return std::nullopt;
  return fs::path(v);
}

std::optional<ModelHandle> load(const char* var, ModelKind kind) {
  const auto dir = env(var);
  if (!dir) return std::nullopt;
  return load_model(*dir / "model.safetensors", *dir / "tokenizer.json", kind);
}

/// Distinct contexts of SQuAD dev, in file order.
std::vector<std::string> contexts(std::size_t n) {
  std::vector<std::string> out;
  for (const auto& r : load_dataset(*env("QREL_SQUAD_DEV"), DatasetFormat::squad_json)) {
    if (out.empty() || out.back() != r.context) out.push_back(r.context);
    if (out.size() == n) break;
  }
  return out;
}

std::string first_sentence(const std::string& text) {
  const auto end = text.find(". ");
  return end == std::string::npos ? text : text.substr(0, end + 1);
}

std::size_t word_count(const std::string& s) {
  std::istringstream in(s);
  return static_cast<std::size_t>(std::distance(std::istream_iterator<std::string>(in), {}));
}

TEST(Pretrained, IdenticalCandidateBeatsRandomWords) {
  if (!env("QREL_SQUAD_DEV")) GTEST_SKIP() << "QREL_SQUAD_DEV not set";
  const auto mlm = load("QREL_BERT_BASE_DIR", ModelKind::masked_lm);
  if (!mlm) GTEST_SKIP() << "QREL_BERT_BASE_DIR not set";
  std::mt19937_64 rng(3);
  const LrmConfig cfg;
  for (const auto& ctx : contexts(20)) {
    const std::string text = first_sentence(ctx);
    const std::string noise = testing::random_text(rng, word_count(text));
    const double same = lrm_score(*mlm, text, text, cfg).raw;
    const double random = lrm_score(*mlm, noise, text, cfg).raw;
    EXPECT_GT(same, random) << text;
  }
}

TEST(Pretrained, SelfPromptingRaisesContextLikelihood) {
  if (!env("QREL_SQUAD_DEV")) GTEST_SKIP() << "QREL_SQUAD_DEV not set";
  const auto clm = load("QREL_GPT2_DIR", ModelKind::causal_lm);
  if (!clm) GTEST_SKIP() << "QREL_GPT2_DIR not set";
  int raised = 0;
  const auto ctxs = contexts(50);
  for (const auto& ctx : ctxs) {
    const auto ids = clm->tokenizer().encode(ctx).ids;
    const auto cand = clm->tokenizer().encode(first_sentence(ctx)).ids;
    const auto sep = clm->tokenizer().encode(" ").ids;
    const std::size_t room = static_cast<std::size_t>(clm_capacity(*clm)) - cand.size() - sep.size();
    const std::vector<TokenId> head(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(std::min(ids.size(), room)));
    const auto pair = confidence_pair_from_ids(*clm, cand, sep, head);
    if (pair.conf_prompt > pair.conf_base) ++raised;
  }
  EXPECT_GT(raised * 2, static_cast<int>(ctxs.size()));
}

}  // namespace
}  // namespace qrel
