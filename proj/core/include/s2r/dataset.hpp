#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "s2r/textcore.hpp"
#include "s2r/types.hpp"

namespace s2r::data {

struct LoadResult {
  std::vector<DialoguePair> pairs;
  std::size_t skipped = 0;  // records with an empty query or response
};

/// Reads a JSON-lines corpus of {"query": ..., "response": ...} objects.
/// Ids are assigned sequentially to the kept records. Malformed lines throw
/// FormatError naming the 1-based line number.
LoadResult load_pairs(const std::filesystem::path& path, bool lowercase = true);

/// Same, from an in-memory stream of lines (used by tests and the CLI).
LoadResult parse_pairs(std::istream& in, bool lowercase = true);

void save_pairs(const std::filesystem::path& path, std::span<const DialoguePair> pairs);

enum class IndexSide { kQuery, kResponse };

struct Posting {
  std::int64_t pair_id;
  std::uint32_t tf;
};

struct ScoredPair {
  std::int64_t pair_id;
  double score;
};

/// TF-IDF inverted index with cosine scoring over one side of the pairs.
/// idf(t) = ln(1 + N / (1 + df(t))), term weight = tf * idf.
class InvertedIndex {
 public:
  static InvertedIndex build(std::span<const DialoguePair> pairs, IndexSide side);

  IndexSide side() const { return side_; }
  std::size_t doc_count() const { return doc_ids_.size(); }
  const std::vector<Posting>& postings(const std::string& token) const;
  std::size_t doc_length(std::int64_t pair_id) const;
  double idf(const std::string& token) const;

  /// Top-k by cosine, descending, ties by ascending pair id. Candidates
  /// must share at least one indexed token with the probe. `exclude`
  /// removes one pair id (self-match exclusion).
  std::vector<ScoredPair> retrieve(std::span<const std::string> probe, std::size_t k,
                                   std::int64_t exclude = -1) const;

  void save(const std::filesystem::path& path) const;
  static InvertedIndex load(const std::filesystem::path& path);

 private:
  std::size_t slot_of(std::int64_t pair_id) const;

  IndexSide side_ = IndexSide::kResponse;
  std::map<std::string, std::vector<Posting>> postings_;
  std::vector<std::int64_t> doc_ids_;  // sorted
  std::vector<std::size_t> doc_lengths_;
  std::vector<double> doc_norms_;
  std::unordered_map<std::int64_t, std::size_t> slots_;
};

/// Top-k retrieval against a query-keyed index, as used at test time.
/// No similarity-band filtering is applied.
std::vector<ScoredPair> test_retrieval(const InvertedIndex& query_index, std::span<const std::string> query,
                                       std::size_t k);

struct Quadruple {
  TokenSeq q, r, rq, rr;  // query, response, retrieved query, retrieved response
  double score = 0.0;
  std::int64_t pair_id = -1;
  std::int64_t retrieved_id = -1;
};

struct QuadOptions {
  std::size_t k = 30;
  double lo = 0.3;
  double hi = 0.7;
  std::size_t max_quads = 0;  // 0 keeps everything
  std::uint64_t seed = 1;
};

/// For each pair, retrieves k candidates by response similarity (never the
/// pair itself) and keeps those with lo <= jaccard(r, r') <= hi. Output is
/// ordered by (pair id, candidate rank).
std::vector<Quadruple> build_quadruples(std::span<const DialoguePair> pairs, const InvertedIndex& response_index,
                                        const QuadOptions& options = {});

struct ProxySkeleton {
  std::vector<int> labels;  // 1 = keep, one per retrieved-response token
  TokenSeq skeleton;
};

/// Keeps r'_i iff it is not a stop word and it is aligned to the LCS of the
/// stop-word-filtered responses.
ProxySkeleton make_proxy_skeleton(std::span<const std::string> response, std::span<const std::string> retrieved,
                                  const text::StopList& stoplist);

struct LabeledQuad {
  Quadruple quad;
  ProxySkeleton proxy;
};

void write_quads(const std::filesystem::path& path, std::span<const Quadruple> quads);
std::vector<Quadruple> read_quads(const std::filesystem::path& path);

void write_labeled(const std::filesystem::path& path, std::span<const LabeledQuad> quads);
std::vector<LabeledQuad> read_labeled(const std::filesystem::path& path);

}  // namespace s2r::data
