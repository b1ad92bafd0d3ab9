#include "s2r/evalkit.hpp"

#include <cstdio>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "s2r/error.hpp"
#include "s2r/textcore.hpp"

namespace s2r::eval {

double dist_n(std::span<const TokenSeq> responses, std::size_t n) {
  if (n == 0) throw Error("dist_n: n must be >= 1");
  std::set<std::vector<std::string>> grams;
  std::size_t tokens = 0;
  for (const auto& r : responses) {
    tokens += r.size();
    for (std::size_t i = 0; i + n <= r.size(); ++i) grams.emplace(r.begin() + i, r.begin() + i + n);
  }
  if (tokens == 0) throw Error("dist_n: all responses are empty");
  return static_cast<double>(grams.size()) / static_cast<double>(tokens);
}

double dist_n_excluding_query(std::span<const TokenSeq> responses, std::span<const TokenSeq> queries, std::size_t n) {
  if (responses.size() != queries.size())
    throw Error("dist_n_excluding_query: " + std::to_string(responses.size()) + " responses but " +
                std::to_string(queries.size()) + " queries");
  std::vector<TokenSeq> filtered;
  filtered.reserve(responses.size());
  for (std::size_t i = 0; i < responses.size(); ++i) {
    const std::set<std::string> q(queries[i].begin(), queries[i].end());
    TokenSeq kept;
    for (const auto& t : responses[i])
      if (!q.count(t)) kept.push_back(t);
    filtered.push_back(std::move(kept));
  }
  return dist_n(filtered, n);
}

SkeletonScores skeleton_metrics(std::span<const std::vector<int>> predicted, std::span<const std::vector<int>> gold) {
  if (predicted.size() != gold.size())
    throw Error("skeleton_metrics: " + std::to_string(predicted.size()) + " predictions for " +
                std::to_string(gold.size()) + " examples");
  SkeletonScores s;
  for (std::size_t e = 0; e < gold.size(); ++e) {
    if (predicted[e].size() != gold[e].size())
      throw Error("skeleton_metrics: example " + std::to_string(e) + " has " + std::to_string(predicted[e].size()) +
                  " predicted labels for " + std::to_string(gold[e].size()) + " tokens");
    for (std::size_t i = 0; i < gold[e].size(); ++i) {
      const bool p = predicted[e][i] != 0, g = gold[e][i] != 0;
      if (p && g) ++s.tp;
      else if (p) ++s.fp;
      else if (g) ++s.fn;
      else ++s.tn;
    }
  }
  auto ratio = [](std::size_t a, std::size_t b) { return b ? static_cast<double>(a) / static_cast<double>(b) : 0.0; };
  s.precision = ratio(s.tp, s.tp + s.fp);
  s.recall = ratio(s.tp, s.tp + s.fn);
  s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  s.accuracy = ratio(s.tp + s.tn, s.tp + s.fp + s.fn + s.tn);
  return s;
}

std::vector<Bucket> similarity_buckets(std::span<const SimilarityRecord> records, std::span<const double> edges) {
  if (edges.size() < 2) throw Error("similarity_buckets: need at least two edges");
  for (std::size_t i = 1; i < edges.size(); ++i)
    if (!(edges[i] > edges[i - 1])) throw Error("similarity_buckets: edges must be strictly increasing");
  std::vector<Bucket> out(edges.size() - 1);
  std::vector<double> sums(out.size(), 0.0);
  for (std::size_t b = 0; b < out.size(); ++b) {
    out[b].lo = edges[b];
    out[b].hi = edges[b + 1];
  }
  for (const auto& r : records) {
    std::size_t b = 0;
    while (b + 1 < out.size() && r.similarity >= edges[b + 1]) ++b;
    sums[b] += r.value;
    ++out[b].count;
  }
  for (std::size_t b = 0; b < out.size(); ++b) out[b].mean = out[b].count ? sums[b] / static_cast<double>(out[b].count) : 0.0;
  return out;
}

std::vector<Bucket> copy_rate_report(std::span<const TokenSeq> generated, std::span<const TokenSeq> retrieved,
                                     std::span<const double> query_similarity, std::span<const double> edges) {
  if (generated.size() != retrieved.size() || generated.size() != query_similarity.size())
    throw Error("copy_rate_report: misaligned inputs (" + std::to_string(generated.size()) + " generated, " +
                std::to_string(retrieved.size()) + " retrieved, " + std::to_string(query_similarity.size()) +
                " similarities)");
  std::vector<SimilarityRecord> records;
  records.reserve(generated.size());
  for (std::size_t i = 0; i < generated.size(); ++i)
    records.push_back({query_similarity[i], static_cast<double>(text::edit_distance(generated[i], retrieved[i]))});
  return similarity_buckets(records, edges);
}

std::string report_json(const Report& report) {
  nlohmann::ordered_json j;
  j["count"] = report.count;
  j["dist1"] = report.dist1;
  j["dist2"] = report.dist2;
  j["dist1_no_query"] = report.dist1_no_query;
  j["dist2_no_query"] = report.dist2_no_query;
  if (report.has_skeleton) {
    const auto& s = report.skeleton;
    j["skeleton"] = {{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}, {"accuracy", s.accuracy},
                     {"tp", s.tp}, {"fp", s.fp}, {"fn", s.fn}, {"tn", s.tn}};
  }
  auto buckets = nlohmann::ordered_json::array();
  for (const auto& b : report.copy_buckets)
    buckets.push_back({{"lo", b.lo}, {"hi", b.hi}, {"mean_edit_distance", b.mean}, {"count", b.count}});
  j["copy_buckets"] = buckets;
  return j.dump(2) + "\n";
}

std::string report_table(const Report& report) {
  std::ostringstream out;
  char line[128];
  std::snprintf(line, sizeof line, "%-22s %10zu\n", "responses", report.count);
  out << line;
  auto row = [&](const char* name, double v) {
    std::snprintf(line, sizeof line, "%-22s %10.4f\n", name, v);
    out << line;
  };
  row("dist-1", report.dist1);
  row("dist-2", report.dist2);
  row("dist-1 (no query)", report.dist1_no_query);
  row("dist-2 (no query)", report.dist2_no_query);
  if (report.has_skeleton) {
    row("skeleton P", report.skeleton.precision);
    row("skeleton R", report.skeleton.recall);
    row("skeleton F1", report.skeleton.f1);
    row("skeleton Acc", report.skeleton.accuracy);
  }
  if (!report.copy_buckets.empty()) {
    out << "\nq-sim bucket        mean edit   count\n";
    for (const auto& b : report.copy_buckets) {
      std::snprintf(line, sizeof line, "[%.2f, %.2f%c      %9.3f %7zu\n", b.lo, b.hi,
                    &b == &report.copy_buckets.back() ? ']' : ')', b.mean, b.count);
      out << line;
    }
  }
  return out.str();
}

std::string buckets_csv(std::span<const Bucket> buckets) {
  std::ostringstream out;
  out << "bucket,lo,hi,mean,count\n";
  char line[160];
  for (std::size_t i = 0; i < buckets.size(); ++i) {
    std::snprintf(line, sizeof line, "%zu,%.17g,%.17g,%.17g,%zu\n", i, buckets[i].lo, buckets[i].hi, buckets[i].mean,
                  buckets[i].count);
    out << line;
  }
  return out.str();
}

}  // namespace s2r::eval
