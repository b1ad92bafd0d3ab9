#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "s2r/autodiff.hpp"
#include "s2r/layers.hpp"
#include "s2r/textcore.hpp"

namespace s2r::resp {

using ad::Tape;
using ad::Var;

struct ResponseConfig {
  std::size_t vocab = 0;
  std::size_t embedding = 32;
  std::size_t hidden = 64;          // encoder units per direction
  std::size_t layers = 2;           // encoder and decoder depth
  std::size_t decoder_hidden = 64;
  double dropout = 0.0;
  /// When non-zero the skeleton memory is supplied from outside (the
  /// skeleton generator's states) with this slot width, and no skeleton
  /// encoder is built.
  std::size_t external_skeleton_dim = 0;
};

/// Query slots M_q and skeleton slots M_t for one decoding run.
struct MemoryPools {
  Var query_slots;     // (|q|, 2 * hidden)
  Var skeleton_slots;  // (sum of skeleton lengths, skeleton_dim)
  Var query_summary;   // final forward (+) final backward query state
  std::vector<std::size_t> skeleton_lengths;
};

struct DecoderState {
  std::vector<nn::LstmState> layers;
};

struct StepOptions {
  /// Replaces g_t with a constant (testing the gate's two limits).
  std::optional<double> gate_override;
  bool train = false;
};

struct StepResult {
  Var logits;
  Var log_probs;
  Var y;  // pre-projection output, skeleton_dim wide
  Var gate;
  Var query_context;
  Var skeleton_context;
  DecoderState state;
};

struct TeacherForced {
  Var nll_sum;  // -sum_t log p(r_t | r_<t, q, t), including <eos>
  std::size_t tokens = 0;
  std::size_t correct = 0;  // argmax hits
};

class ResponseGenerator {
 public:
  ResponseGenerator(const ResponseConfig& config, std::uint64_t seed, const std::string& prefix = "res");
  ResponseGenerator(ResponseGenerator&&) noexcept = default;
  ResponseGenerator& operator=(ResponseGenerator&&) noexcept = default;
  ResponseGenerator(const ResponseGenerator&) = delete;
  ResponseGenerator& operator=(const ResponseGenerator&) = delete;

  /// Encodes the query and each skeleton separately; skeleton slots are
  /// concatenated. A zero-length skeleton contributes one zero slot.
  MemoryPools encode(Tape& tape, const IdSeq& query, const std::vector<IdSeq>& skeletons, bool train,
                     Rng& rng) const;
  /// Encodes the query and takes skeleton memory as given.
  MemoryPools encode_with_memory(Tape& tape, const IdSeq& query, const Var& skeleton_slots, bool train,
                                 Rng& rng) const;

  /// Per-layer linear projection of the query summary; cell states start at zero.
  DecoderState initial_state(Tape& tape, const MemoryPools& pools) const;
  StepResult step(Tape& tape, const DecoderState& state, int prev_token, const MemoryPools& pools,
                  const StepOptions& options, Rng& rng) const;

  /// Feeds <bos> r_1..r_n and scores r_1..r_n <eos>.
  TeacherForced teacher_force(Tape& tape, const MemoryPools& pools, const IdSeq& target, bool train,
                              Rng& rng) const;

  const ResponseConfig& config() const { return config_; }
  std::size_t query_slot_dim() const { return 2 * config_.hidden; }
  std::size_t skeleton_dim() const {
    return config_.external_skeleton_dim ? config_.external_skeleton_dim : 2 * config_.hidden;
  }
  ad::ParameterSet& params() { return params_; }
  const ad::ParameterSet& params() const { return params_; }

 private:
  ResponseConfig config_;
  ad::ParameterSet params_;
  ad::Parameter* embed_ = nullptr;
  nn::BiLstm query_encoder_;
  std::optional<nn::BiLstm> skeleton_encoder_;
  std::vector<nn::LstmCell> decoder_;
  std::vector<nn::Linear> bridge_;
  ad::Parameter *Wq_ = nullptr, *Wt_ = nullptr, *Wc_ = nullptr;
  ad::Parameter *gate_w_ = nullptr, *gate_b_ = nullptr;
  nn::Linear output_;
};

struct Hypothesis {
  IdSeq tokens;            // without <eos>
  double log_prob = 0.0;   // includes the <eos> step when emitted
  std::size_t steps = 0;   // emitted tokens including <eos>
  bool finished = false;   // ended with <eos>
  double gate_mean = 0.0;
  double score() const { return steps ? log_prob / static_cast<double>(steps) : 0.0; }
};

/// Argmax decoding from <bos> until <eos> or max_len (lowest id wins ties).
Hypothesis greedy_decode(const ResponseGenerator& model, Tape& tape, const MemoryPools& pools, std::size_t max_len,
                         const StepOptions& options = {});

/// Beam search over cumulative log-probability. Hypotheses that emit <eos>
/// are retired; search stops once `width` are retired, no open beam is
/// left, or max_len is reached (open beams are then retired as they are).
/// Results are sorted by length-normalised score (or raw log-probability
/// when `length_normalize` is false), ties by log-probability.
std::vector<Hypothesis> beam_search(const ResponseGenerator& model, Tape& tape, const MemoryPools& pools,
                                    std::size_t width, std::size_t max_len, bool length_normalize = true);

/// log p(target | query, skeletons) under teacher forcing.
double sequence_log_prob(const ResponseGenerator& model, const IdSeq& query, const std::vector<IdSeq>& skeletons,
                         const IdSeq& target);

/// Reorders candidates by log p(query | candidate) under an inverse model
/// fed an empty skeleton. Ties keep the original order.
std::vector<Hypothesis> mmi_rerank(std::span<const Hypothesis> nbest, const ResponseGenerator& inverse,
                                   const IdSeq& query);

}  // namespace s2r::resp
