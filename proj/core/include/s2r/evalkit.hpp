#pragma once

#include <span>
#include <string>
#include <vector>

#include "s2r/types.hpp"

namespace s2r::eval {

/// Unique n-grams across the corpus divided by the total token count.
/// Throws Error when every response is empty.
double dist_n(std::span<const TokenSeq> responses, std::size_t n);

/// dist_n after dropping response tokens that occur in the paired query.
double dist_n_excluding_query(std::span<const TokenSeq> responses, std::span<const TokenSeq> queries, std::size_t n);

struct SkeletonScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

/// Micro-averaged over all tokens with keep (1) as the positive class.
/// Undefined ratios are reported as 0.
SkeletonScores skeleton_metrics(std::span<const std::vector<int>> predicted, std::span<const std::vector<int>> gold);

struct Bucket {
  double lo = 0.0;
  double hi = 0.0;
  double mean = 0.0;
  std::size_t count = 0;
};

struct SimilarityRecord {
  double similarity = 0.0;
  double value = 0.0;
};

inline const std::vector<double> kDefaultEdges = {0.0, 0.2, 0.4, 0.6, 1.0};

/// Buckets are [e_i, e_{i+1}) except the last, which is closed. Values
/// below the first edge land in the first bucket and above the last in
/// the last one, so every record is counted exactly once.
std::vector<Bucket> similarity_buckets(std::span<const SimilarityRecord> records,
                                       std::span<const double> edges = kDefaultEdges);

/// Mean token edit distance between generated and retrieved responses,
/// bucketed by jaccard(q, q').
std::vector<Bucket> copy_rate_report(std::span<const TokenSeq> generated, std::span<const TokenSeq> retrieved,
                                     std::span<const double> query_similarity,
                                     std::span<const double> edges = kDefaultEdges);

struct Report {
  std::size_t count = 0;
  double dist1 = 0.0;
  double dist2 = 0.0;
  double dist1_no_query = 0.0;
  double dist2_no_query = 0.0;
  bool has_skeleton = false;
  SkeletonScores skeleton;
  std::vector<Bucket> copy_buckets;
};

std::string report_json(const Report& report);
std::string report_table(const Report& report);
/// bucket,lo,hi,mean,count
std::string buckets_csv(std::span<const Bucket> buckets);

}  // namespace s2r::eval
