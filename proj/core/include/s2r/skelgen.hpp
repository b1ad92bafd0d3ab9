#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "s2r/autodiff.hpp"
#include "s2r/layers.hpp"
#include "s2r/textcore.hpp"

namespace s2r::skel {

using ad::Tape;
using ad::Var;

/// Insertion words are in the query but not the retrieved query; deletion
/// words the other way round. Both lists are sorted and duplicate-free.
struct WordBags {
  TokenSeq insertion;
  TokenSeq deletion;
};

WordBags word_bags(std::span<const std::string> query, std::span<const std::string> retrieved_query);

struct SkeletonConfig {
  std::size_t vocab = 0;
  std::size_t embedding = 32;
  std::size_t hidden = 64;     // per direction
  std::size_t attention = 32;  // hidden size of the bag-attention scorer
  std::size_t layers = 1;
  double dropout = 0.0;
};

/// Token ids the generator consumes for one (q, q', r') triple.
struct SkeletonInput {
  IdSeq insertion;
  IdSeq deletion;
  IdSeq retrieved;  // r'
};

SkeletonInput make_input(const text::Vocab& vocab, std::span<const std::string> query,
                         std::span<const std::string> retrieved_query, std::span<const std::string> retrieved_response);

struct EditVector {
  Var z;                   // insertion part (+) deletion part, 2 * embedding
  Var insertion_weights;   // invalid when the bag is empty
  Var deletion_weights;
};

struct SkeletonForward {
  std::vector<Var> slots;  // biGRU states over r', one per token
  Var slot_matrix;         // (|r'|, 2 * hidden); invalid when r' is empty
  EditVector edit;
  Var logits;              // (|r'|) pre-sigmoid keep scores; invalid when r' is empty
  std::vector<double> probs;
};

class SkeletonGenerator {
 public:
  SkeletonGenerator(const SkeletonConfig& config, std::uint64_t seed);
  SkeletonGenerator(SkeletonGenerator&&) noexcept = default;
  SkeletonGenerator& operator=(SkeletonGenerator&&) noexcept = default;
  SkeletonGenerator(const SkeletonGenerator&) = delete;
  SkeletonGenerator& operator=(const SkeletonGenerator&) = delete;

  /// Weighted bag sums keyed on `key` (the last biGRU slot). An empty bag
  /// contributes zeros.
  EditVector edit_vector(Tape& tape, const IdSeq& insertion, const IdSeq& deletion, const Var& key, bool train,
                         Rng& rng) const;

  /// Runs the biGRU over r', builds z, and scores every token with
  /// sigmoid(W_m [h_i (+) z] + b_m).
  SkeletonForward forward(Tape& tape, const SkeletonInput& input, bool train, Rng& rng) const;

  /// Keep probabilities without gradient bookkeeping.
  std::vector<double> mask_probs(const SkeletonInput& input) const;

  const SkeletonConfig& config() const { return config_; }
  std::size_t slot_dim() const { return 2 * config_.hidden; }
  ad::ParameterSet& params() { return params_; }
  const ad::ParameterSet& params() const { return params_; }

 private:
  SkeletonConfig config_;
  ad::ParameterSet params_;
  ad::Parameter* embed_ = nullptr;
  nn::BiGru encoder_;
  ad::Parameter *ins_v_ = nullptr, *ins_W_ = nullptr;
  ad::Parameter *del_v_ = nullptr, *del_W_ = nullptr;
  ad::Parameter *mask_W_ = nullptr, *mask_b_ = nullptr;
};

struct MaskDecision {
  std::vector<int> labels;
  double log_prob = 0.0;  // sum_i log p(m_i) under the given probabilities
};

struct ThresholdMode {
  double tau = 0.5;
};
struct SampleMode {
  Rng* rng;
};

MaskDecision decide_mask(std::span<const double> probs, ThresholdMode mode = {});
MaskDecision decide_mask(std::span<const double> probs, SampleMode mode);

/// Replaces tokens with label 0 by "<blank>". Length is preserved.
TokenSeq apply_mask(std::span<const std::string> retrieved, std::span<const int> labels);
IdSeq apply_mask_ids(std::span<const int> retrieved, std::span<const int> labels);

/// sum_i log p(m_i | logits_i) as a differentiable scalar.
Var mask_log_prob(const Var& logits, std::span<const int> labels);

}  // namespace s2r::skel
