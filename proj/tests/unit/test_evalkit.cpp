#include <doctest.h>

#include <algorithm>

#include "oracles.hpp"
#include "s2r/error.hpp"
#include "s2r/evalkit.hpp"
#include "s2r/textcore.hpp"

using namespace s2r;
using namespace s2r::eval;

namespace {

std::vector<TokenSeq> corpus(std::initializer_list<const char*> lines) {
  std::vector<TokenSeq> out;
  for (const char* l : lines) out.push_back(text::tokenize(l));
  return out;
}

}  // namespace

TEST_CASE("dist-n hand counts") {
  CHECK(dist_n(corpus({"a b", "a c"}), 1) == 0.75);
  CHECK(dist_n(corpus({"a b c"}), 2) == 2.0 / 3.0);
  CHECK(dist_n(corpus({"a"}), 1) == 1.0);
  CHECK(dist_n(corpus({"a", ""}), 1) == 1.0);
  CHECK_THROWS_AS(dist_n(corpus({"", ""}), 1), Error);
  CHECK_THROWS_AS(dist_n({}, 1), Error);
  CHECK_THROWS_AS(dist_n(corpus({"a"}), 0), Error);
}

TEST_CASE("dist-n is order invariant, halves under duplication and matches the oracle") {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<TokenSeq> c;
    for (std::size_t i = 0; i < 1 + uniform_index(rng, 6); ++i)
      c.push_back(oracle::random_tokens(rng, 1 + uniform_index(rng, 6), 5));
    for (std::size_t n : {1, 2}) {
      const double d = dist_n(c, n);
      CHECK(d == oracle::dist_n(c, n));
      auto reversed = c;
      std::reverse(reversed.begin(), reversed.end());
      CHECK(dist_n(reversed, n) == d);
      auto doubled = c;
      doubled.insert(doubled.end(), c.begin(), c.end());
      CHECK(dist_n(doubled, n) == d / 2.0);
    }
  }
}

TEST_CASE("dist-n without query words") {
  const auto responses = corpus({"i like apple", "you like it"});
  const auto queries = corpus({"do you like apple", "why"});
  // Remaining: [i] and [you like it] -> 4 tokens, 4 unigrams.
  CHECK(dist_n_excluding_query(responses, queries, 1) == 1.0);
  CHECK(dist_n_excluding_query(responses, queries, 2) == 0.5);
  CHECK_THROWS_AS(dist_n_excluding_query(responses, corpus({"x"}), 1), Error);
}

TEST_CASE("skeleton metrics") {
  const std::vector<std::vector<int>> gold = {{1, 0, 1, 0}, {1, 0}};
  const auto perfect = skeleton_metrics(gold, gold);
  CHECK(perfect.precision == 1.0);
  CHECK(perfect.recall == 1.0);
  CHECK(perfect.f1 == 1.0);
  CHECK(perfect.accuracy == 1.0);

  const std::vector<std::vector<int>> all_keep = {{1, 1, 1, 1}, {1, 1}};
  const auto keep = skeleton_metrics(all_keep, gold);
  CHECK(keep.recall == 1.0);
  CHECK(keep.accuracy == 0.5);
  CHECK(keep.precision == 0.5);

  // tp 2, fp 1, fn 3, tn 4
  const std::vector<std::vector<int>> pred = {{1, 1, 0, 0, 0}, {1, 0, 0, 0, 0}};
  const std::vector<std::vector<int>> ref = {{1, 0, 1, 1, 0}, {1, 0, 1, 0, 0}};
  const auto s = skeleton_metrics(pred, ref);
  CHECK(s.tp == 2);
  CHECK(s.fp == 1);
  CHECK(s.fn == 3);
  CHECK(s.tn == 4);
  CHECK(std::abs(s.precision - 2.0 / 3.0) < 1e-12);
  CHECK(std::abs(s.recall - 2.0 / 5.0) < 1e-12);
  CHECK(std::abs(s.f1 - 2.0 * (2.0 / 3.0) * 0.4 / (2.0 / 3.0 + 0.4)) < 1e-12);
  CHECK(std::abs(s.accuracy - 0.6) < 1e-12);

  const std::vector<std::vector<int>> none = {{0, 0}};
  const std::vector<std::vector<int>> ones = {{1, 1}};
  const auto zero = skeleton_metrics(none, ones);
  CHECK(zero.precision == 0.0);
  CHECK(zero.recall == 0.0);
  CHECK(zero.f1 == 0.0);

  try {
    skeleton_metrics(std::vector<std::vector<int>>{{1}, {1, 0}}, gold);
    FAIL("expected Error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("example 0") != std::string::npos);
  }
  CHECK_THROWS_AS(skeleton_metrics(std::vector<std::vector<int>>{{1}}, gold), Error);
}

TEST_CASE("skeleton metrics stay in range on random inputs") {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::vector<int>> p(3), g(3);
    for (std::size_t e = 0; e < 3; ++e)
      for (std::size_t i = 0; i < uniform_index(rng, 6); ++i) {
        p[e].push_back(uniform01(rng) < 0.5);
        g[e].push_back(uniform01(rng) < 0.5);
      }
    const auto s = skeleton_metrics(p, g);
    for (double v : {s.precision, s.recall, s.f1, s.accuracy}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    if (s.precision + s.recall == 0.0) CHECK(s.f1 == 0.0);
  }
}

TEST_CASE("similarity buckets partition the records") {
  const std::vector<SimilarityRecord> one = {{0.1, 2.0}, {0.15, 4.0}, {0.0, 6.0}};
  const auto b = similarity_buckets(one);
  REQUIRE(b.size() == 4);
  CHECK(b[0].count == 3);
  CHECK(b[0].mean == 4.0);
  CHECK(b[3].lo == 0.6);
  CHECK(b[3].hi == 1.0);
  for (std::size_t i = 1; i < 4; ++i) CHECK(b[i].count == 0);

  const std::vector<SimilarityRecord> edges = {{0.2, 1}, {0.6, 2}, {1.0, 3}, {-0.5, 4}, {1.5, 5}, {0.59999, 6}};
  const auto e = similarity_buckets(edges);
  CHECK(e[0].count == 1);  // -0.5 clamps down
  CHECK(e[1].count == 1);  // 0.2 opens bucket 1
  CHECK(e[2].count == 1);
  CHECK(e[3].count == 3);  // 0.6, 1.0 and the clamped 1.5

  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<SimilarityRecord> recs;
    for (std::size_t i = 0; i < uniform_index(rng, 30); ++i) recs.push_back({uniform01(rng), uniform01(rng)});
    std::size_t total = 0;
    for (const auto& bucket : similarity_buckets(recs)) total += bucket.count;
    CHECK(total == recs.size());
  }
  const std::vector<double> bad = {0.0, 0.5, 0.5};
  CHECK_THROWS_AS(similarity_buckets(one, bad), Error);
}

TEST_CASE("copy-rate report") {
  const auto gen = corpus({"a b c", "x y", "p"});
  const std::vector<double> sims = {0.1, 0.5, 0.9};
  for (const auto& b : copy_rate_report(gen, gen, sims)) CHECK(b.mean == 0.0);
  const auto other = corpus({"d e", "z", "q r s t"});
  const auto r = copy_rate_report(gen, other, sims);
  CHECK(r.size() == kDefaultEdges.size() - 1);
  CHECK(r[0].mean == 3.0);
  CHECK(r[2].mean == 2.0);
  CHECK(r[3].mean == 4.0);
  CHECK_THROWS_AS(copy_rate_report(gen, other, std::vector<double>{0.1}), Error);
}

TEST_CASE("report rendering") {
  Report rep;
  rep.count = 2;
  rep.dist1 = 0.75;
  rep.dist2 = 0.5;
  rep.has_skeleton = true;
  rep.skeleton.precision = 1.0;
  rep.copy_buckets = {{0.0, 0.5, 1.5, 2}, {0.5, 1.0, 0.0, 0}};
  const auto json = report_json(rep);
  CHECK(json.find("\"dist1\": 0.75") != std::string::npos);
  CHECK(json.find("\"dist2\"") != std::string::npos);
  CHECK(json.find("\"skeleton\"") != std::string::npos);
  CHECK(report_table(rep).find("dist-1") != std::string::npos);
  CHECK(buckets_csv(rep.copy_buckets) == "bucket,lo,hi,mean,count\n0,0,0.5,1.5,2\n1,0.5,1,0,0\n");
}
