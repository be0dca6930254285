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

#include "qrel/analysis.hpp"

#include <gtest/gtest.h>

#include <random>

#include "test_support.hpp"

namespace qrel {
namespace {

std::filesystem::path write(const std::string& name, const std::string& text) {
  const auto p = testing::scratch_dir() / name;
  std::ofstream(p) << text;
  return p;
}

// Rated rows: "good" tracks relevance, "noise" does not, "copy" = 2 * good.
std::string rated_jsonl(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> eps(0.0, 0.05);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::string out = "{\"meta\":{\"variant\":\"full\"}}\n";
  for (std::size_t i = 0; i < n; ++i) {
    const double rel = 1.0 + static_cast<double>(i % 2);
    const double good = 0.3 * rel + eps(rng);
    nlohmann::ordered_json row{{"id", "r" + std::to_string(i)},
                               {"good", good},
                               {"noise", u(rng)},
                               {"copy", 2.0 * good},
                               {"chunks", 1},
                               {"variant", "full"},
                               {"human", {{"relevance", rel}}}};
    out += row.dump() + "\n";
  }
  return out;
}

TEST(ScoreTable, LoadsJsonlMetricsAndRatings) {
  const auto t = load_score_table(write("rated.jsonl", rated_jsonl(10, 1)));
  EXPECT_EQ(t.size(), 10u);
  EXPECT_EQ(t.metric_names, (std::vector<std::string>{"copy", "good", "noise"}));
  ASSERT_TRUE(t.human.count("relevance"));
  EXPECT_EQ(*t.human.at("relevance")[1], 2.0);
  EXPECT_THROW(t.metric("chunks"), PreconditionError);
}

TEST(ScoreTable, LoadsCsv) {
  const auto t = load_score_table(write("rated.csv",
                                        "id,qrel,bleu,relevance,human.answerability,label\n"
                                        "a,0.9,0.1,2,3,positive\n"
                                        "\"b,1\",0.2,0.3,1,,negative\n"));
  ASSERT_EQ(t.size(), 2u);
  EXPECT_EQ(t.ids[1], "b,1");
  EXPECT_EQ(t.metric("qrel")[1], 0.2);
  EXPECT_EQ(*t.human.at("relevance")[0], 2.0);
  EXPECT_FALSE(t.human.at("answerability")[1]);
  EXPECT_EQ(*t.labels[1], "negative");
  EXPECT_THROW(load_score_table(write("bad.csv", "id,qrel\na,high\n")), FormatError);
}

TEST(ScoreTable, RejectsOutOfRangeRatings) {
  const auto p = write("range.jsonl", "{\"id\":\"a\",\"m\":0.5,\"human\":{\"relevance\":3}}\n");
  EXPECT_THROW(load_score_table(p), FormatError);
}

TEST(Correlation, ReportCoversEveryPair) {
  const auto t = load_score_table(write("rated.jsonl", rated_jsonl(40, 2)));
  const auto rows = correlation_report(t);
  ASSERT_EQ(rows.size(), 3u);
  for (const auto& r : rows) {
    EXPECT_EQ(r.n, 40u);
    if (r.metric == "good") EXPECT_GT(r.pearson, 0.8);
  }
  const auto csv = correlation_csv(rows);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "metric,dimension,n,pearson,spearman,kendall");
}

TEST(Classification, AucAndDirectionalRate) {
  const auto t = load_score_table(write("adv.jsonl",
                                        "{\"id\":\"a#original\",\"qrel\":0.9,\"label\":\"positive\",\"original_id\":\"a\"}\n"
                                        "{\"id\":\"b#original\",\"qrel\":0.4,\"label\":\"positive\",\"original_id\":\"b\"}\n"
                                        "{\"id\":\"a#pronoun_swap\",\"qrel\":0.6,\"label\":\"negative\",\"original_id\":\"a\"}\n"
                                        "{\"id\":\"b#sentence_negation\",\"qrel\":0.3,\"label\":\"negative\",\"original_id\":\"b\"}\n"
                                        "{\"id\":\"c#entity_swap\",\"qrel\":0.1,\"label\":\"negative\",\"original_id\":\"c\"}\n"));
  EXPECT_TRUE(has_labels(t));
  EXPECT_NEAR(metric_auc(t, "qrel"), 5.0 / 6.0, 1e-12);
  const auto d = directional_rate(t, "qrel");
  EXPECT_EQ(d.pairs, 2u);
  EXPECT_EQ(d.lower, 2u);
  EXPECT_DOUBLE_EQ(d.rate(), 1.0);
}

TEST(Distribution, QuartilesAndHistogram) {
  std::string rows;
  const double vals[] = {0.0, 0.1, 0.2, 0.3, 1.0};
  const int rel[] = {1, 1, 2, 2, 2};
  for (int i = 0; i < 5; ++i) {
    rows += "{\"id\":\"" + std::to_string(i) + "\",\"qrel\":" + std::to_string(vals[i]) +
            ",\"human\":{\"relevance\":" + std::to_string(rel[i]) + "}}\n";
  }
  const auto t = load_score_table(write("dist.jsonl", rows));
  const auto all = score_distribution(t, "qrel");
  ASSERT_EQ(all.size(), 1u);
  EXPECT_EQ(all[0].count, 5u);
  EXPECT_DOUBLE_EQ(all[0].median, 0.2);
  EXPECT_DOUBLE_EQ(all[0].q1, 0.1);
  EXPECT_DOUBLE_EQ(all[0].q3, 0.3);
  EXPECT_NEAR(all[0].mean, 0.32, 1e-12);
  ASSERT_EQ(all[0].histogram.size(), 20u);
  EXPECT_EQ(all[0].histogram[0], 1u);
  EXPECT_EQ(all[0].histogram[19], 1u);
  const auto by = score_distribution(t, "qrel", "relevance");
  ASSERT_EQ(by.size(), 2u);
  EXPECT_EQ(by[0].group, "1");
  EXPECT_EQ(by[1].count, 3u);
  EXPECT_EQ(to_json(by[1])["bin_edges"].size(), 21u);
  EXPECT_THROW(score_distribution(t, "qrel", "grammaticality"), PreconditionError);
}

TEST(Selection, PicksInformativeMetricFirst) {
  const auto t = load_score_table(write("sel.jsonl", rated_jsonl(60, 3)));
  std::vector<std::string> seen;
  set_diagnostic_sink([&](std::string_view m) { seen.emplace_back(m); });
  const auto r = forward_selection(t, "relevance", 5, 10, 7);
  set_diagnostic_sink(nullptr);
  ASSERT_EQ(r.steps.size(), 3u);
  EXPECT_TRUE(r.steps[0].metric == "good" || r.steps[0].metric == "copy");
  EXPECT_EQ(r.steps[0].votes, 10u);
  EXPECT_GT(r.steps[0].r2, 0.8);
  EXPECT_EQ(seen.size(), 1u);  // "good" is a multiple of "copy"
  const auto again = forward_selection(t, "relevance", 5, 10, 7);
  EXPECT_EQ(to_json(r).dump(), to_json(again).dump());
}

TEST(Selection, RandomMetricChosenLast) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> eps(0.0, 0.02);
  std::string rows;
  for (int i = 0; i < 80; ++i) {
    const double m1 = u(rng), m2 = u(rng), m3 = u(rng);
    const double target = 1.0 + 0.5 * m1 + 0.5 * m2 + eps(rng);
    rows += nlohmann::json{{"id", std::to_string(i)}, {"m1", m1}, {"m2", m2}, {"m3", m3},
                           {"human", {{"score", target}}}}.dump() + "\n";
  }
  const auto t = load_score_table(write("linear.jsonl", rows));
  const auto r = forward_selection(t, "score", 5, 10, 3);
  ASSERT_EQ(r.steps.size(), 3u);
  EXPECT_EQ(r.steps[2].metric, "m3");
  EXPECT_NE(r.steps[0].metric, "m3");
  EXPECT_NE(r.steps[1].metric, "m3");
  EXPECT_GT(r.steps[1].r2, r.steps[0].r2);
}

TEST(Distribution, UniformScoresFillBinsEvenly) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::string rows;
  for (int i = 0; i < 1000; ++i) rows += nlohmann::json{{"id", std::to_string(i)}, {"qrel", u(rng)}}.dump() + "\n";
  const auto t = load_score_table(write("uniform.jsonl", rows));
  const auto s = score_distribution(t, "qrel").front();
  std::size_t total = 0;
  for (auto c : s.histogram) {
    total += c;
    EXPECT_NEAR(static_cast<double>(c), 50.0, 25.0);
  }
  EXPECT_EQ(total, 1000u);
}

TEST(Selection, Preconditions) {
  const auto small = load_score_table(write("small.jsonl", rated_jsonl(10, 4)));
  EXPECT_THROW(forward_selection(small, "relevance"), PreconditionError);
  const auto one = load_score_table(write("one.jsonl", "{\"id\":\"a\",\"m\":0.5,\"human\":{\"relevance\":1}}\n"));
  EXPECT_THROW(forward_selection(one, "relevance"), PreconditionError);
}

}  // namespace
}  // namespace qrel
