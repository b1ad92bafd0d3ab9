#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "s2r/respgen.hpp"
#include "s2r/skelgen.hpp"
#include "s2r/textcore.hpp"

namespace s2r::pipe {

/// One retrieved prototype (q', r') in retrieval-rank order.
struct Retrieved {
  TokenSeq rq;
  TokenSeq rr;
  double score = 0.0;
  std::int64_t pair_id = -1;
};

enum class Strategy { kGreedy, kBeam };
enum class RetrievalMode { kSingle, kMultiple };

struct DecodeOptions {
  Strategy strategy = Strategy::kGreedy;
  std::size_t width = 5;
  std::size_t max_len = 30;
  /// Rerank an n-best list by the inverse model; forces beam search with
  /// width `nbest`.
  bool mmi = false;
  std::size_t nbest = 100;
  RetrievalMode mode = RetrievalMode::kSingle;
};

struct Generation {
  TokenSeq response;
  IdSeq response_ids;
  TokenSeq skeleton;     // concatenated in multiple mode
  std::size_t chosen = 0;  // index of the winning prototype (single mode)
  double logprob = 0.0;    // per-token average over emitted tokens
  double gate_mean = 0.0;
};

/// Wires a skeleton generator to a response generator. In joint mode the
/// response generator reads the skeleton generator's recurrent states as
/// its skeleton memory; otherwise the thresholded skeleton tokens are
/// re-encoded.
class Generator {
 public:
  Generator(const text::Vocab& vocab, const skel::SkeletonGenerator& ske, const resp::ResponseGenerator& res,
            bool joint, const resp::ResponseGenerator* inverse = nullptr);

  /// Throws Error when `retrieved` is empty or the query is empty.
  Generation generate(const TokenSeq& query, std::span<const Retrieved> retrieved, const DecodeOptions& options) const;

  /// Decodes from an already-built set of memory pools.
  resp::Hypothesis decode(resp::Tape& tape, const resp::MemoryPools& pools, const IdSeq& query,
                          const DecodeOptions& options) const;

 private:
  struct Prepared {
    IdSeq skeleton_ids;
    TokenSeq skeleton;
    std::vector<ad::Var> slots;  // joint mode only
  };
  Prepared prepare(resp::Tape& tape, const TokenSeq& query, const Retrieved& r) const;
  resp::MemoryPools pools_for(resp::Tape& tape, const IdSeq& query, std::span<const Prepared> parts) const;

  const text::Vocab& vocab_;
  const skel::SkeletonGenerator& ske_;
  const resp::ResponseGenerator& res_;
  bool joint_;
  const resp::ResponseGenerator* inverse_;
};

}  // namespace s2r::pipe
