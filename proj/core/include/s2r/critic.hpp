#pragma once

#include <array>
#include <cstdint>

#include "s2r/autodiff.hpp"
#include "s2r/layers.hpp"
#include "s2r/types.hpp"

namespace s2r::train {

using ad::Tape;
using ad::Var;

struct CriticConfig {
  std::size_t vocab = 0;
  std::size_t embedding = 32;
  std::size_t hidden = 64;
};

/// Comparative classifier: h_x^T M_D h_q for each candidate x in
/// {r_hat, r_bar, r}, softmax over the three.
class Critic {
 public:
  static constexpr std::size_t kGenerated = 0;
  static constexpr std::size_t kRandom = 1;
  static constexpr std::size_t kHuman = 2;

  Critic(const CriticConfig& config, std::uint64_t seed, bool zero_init = false);
  Critic(Critic&&) noexcept = default;
  Critic& operator=(Critic&&) noexcept = default;
  Critic(const Critic&) = delete;
  Critic& operator=(const Critic&) = delete;

  /// Final forward state (+) final backward state of the biLSTM; an empty
  /// sequence maps to the zero vector.
  Var represent(Tape& tape, const IdSeq& seq) const;
  /// Bilinear scores of (r_hat, r_bar, r) against q.
  Var scores(Tape& tape, const IdSeq& q, const IdSeq& r_hat, const IdSeq& r_bar, const IdSeq& r) const;
  /// log D(r | q, r_hat, r_bar, r).
  Var objective(Tape& tape, const IdSeq& q, const IdSeq& r_hat, const IdSeq& r_bar, const IdSeq& r) const;
  /// log D(r_hat | q, r_hat, r_bar, r), at most 0.
  double reward(const IdSeq& q, const IdSeq& r_hat, const IdSeq& r_bar, const IdSeq& r) const;
  /// Index of the highest-scoring candidate, lowest index on ties.
  std::size_t pick(const IdSeq& q, const IdSeq& r_hat, const IdSeq& r_bar, const IdSeq& r) const;

  const CriticConfig& config() const { return config_; }
  ad::ParameterSet& params() { return params_; }
  const ad::ParameterSet& params() const { return params_; }

 private:
  CriticConfig config_;
  ad::ParameterSet params_;
  ad::Parameter* embed_ = nullptr;
  nn::BiLstm encoder_;
  ad::Parameter* M_ = nullptr;
};

}  // namespace s2r::train
