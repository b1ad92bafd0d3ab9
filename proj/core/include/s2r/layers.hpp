#pragma once

#include <string>
#include <vector>

#include "s2r/autodiff.hpp"

namespace s2r::nn {

using ad::Parameter;
using ad::ParameterSet;
using ad::Tape;
using ad::Var;

inline constexpr double kInitRange = 0.08;

/// Weight matrix drawn from uniform(-0.08, 0.08).
Parameter& weight(ParameterSet& set, const std::string& name, std::vector<std::size_t> shape, Rng& rng);
/// Zero-initialised bias vector.
Parameter& bias(ParameterSet& set, const std::string& name, std::size_t n);

/// y = W x + b
class Linear {
 public:
  Linear() = default;
  Linear(ParameterSet& set, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng);
  Var operator()(Tape& tape, const Var& x) const;
  std::size_t in() const { return in_; }
  std::size_t out() const { return out_; }

 private:
  Parameter* W_ = nullptr;
  Parameter* b_ = nullptr;
  std::size_t in_ = 0, out_ = 0;
};

/// r = s(Wr x + Ur h + br), z = s(Wz x + Uz h + bz),
/// n = tanh(Wn x + r * (Un h) + bn), h' = (1 - z) * n + z * h
class GruCell {
 public:
  using State = Var;

  GruCell() = default;
  GruCell(ParameterSet& set, const std::string& prefix, std::size_t in, std::size_t hidden, Rng& rng);

  State initial_state(Tape& tape) const;
  State step(Tape& tape, const Var& x, const State& h) const;
  static const Var& output(const State& s) { return s; }

  std::size_t input_size() const { return in_; }
  std::size_t hidden_size() const { return hidden_; }

 private:
  Parameter* W_ = nullptr;  // (3H, in): reset, update, candidate
  Parameter* U_ = nullptr;  // (3H, H)
  Parameter* b_ = nullptr;  // (3H)
  std::size_t in_ = 0, hidden_ = 0;
};

struct LstmState {
  Var h, c;
};

/// Gates in order input, forget, candidate, output; h = o * tanh(c).
class LstmCell {
 public:
  using State = LstmState;

  LstmCell() = default;
  LstmCell(ParameterSet& set, const std::string& prefix, std::size_t in, std::size_t hidden, Rng& rng);

  State initial_state(Tape& tape) const;
  State step(Tape& tape, const Var& x, const State& s) const;
  static const Var& output(const State& s) { return s.h; }

  std::size_t input_size() const { return in_; }
  std::size_t hidden_size() const { return hidden_; }

 private:
  Parameter* W_ = nullptr;  // (4H, in)
  Parameter* U_ = nullptr;  // (4H, H)
  Parameter* b_ = nullptr;  // (4H)
  std::size_t in_ = 0, hidden_ = 0;
};

/// Runs a cell over a sequence from an initial state; an empty sequence
/// returns the initial state.
template <typename Cell>
typename Cell::State run_cell(Tape& tape, const Cell& cell, const std::vector<Var>& inputs,
                              typename Cell::State state) {
  for (const auto& x : inputs) state = cell.step(tape, x, state);
  return state;
}

struct Encoded {
  std::vector<Var> slots;  // slot k = forward state k (+) backward state k, top layer
  Var final_forward;       // forward state at the last position
  Var final_backward;      // backward state at the first position
};

/// Stacked bidirectional recurrent encoder. Layer l > 0 reads the
/// concatenated slots of layer l - 1.
template <typename Cell>
class BiEncoder {
 public:
  BiEncoder() = default;
  BiEncoder(ParameterSet& set, const std::string& prefix, std::size_t in, std::size_t hidden, std::size_t layers,
            Rng& rng);

  /// Throws ShapeError on an empty sequence. Dropout is applied to each
  /// layer's input when `train` is set.
  Encoded encode(Tape& tape, const std::vector<Var>& inputs, double dropout, bool train, Rng& rng) const;

  std::size_t hidden_size() const { return hidden_; }
  std::size_t slot_dim() const { return 2 * hidden_; }
  std::size_t layers() const { return forward_.size(); }

 private:
  std::vector<Cell> forward_, backward_;
  std::size_t hidden_ = 0;
};

using BiGru = BiEncoder<GruCell>;
using BiLstm = BiEncoder<LstmCell>;

struct Attention {
  Var context;
  Var weights;
};

/// score_k = h_k^T W s; weights = softmax(score); context = sum_k w_k h_k.
/// `slots` is (L, d_h), `key` is (d_s), `W` is (d_h, d_s).
Attention bilinear_attend(const Var& slots, const Var& key, const Var& W);

/// score_w = v^T tanh(W [e_w (+) key]) over a non-empty bag of embeddings;
/// returns sum_w a_w e_w.
Attention additive_attend(const std::vector<Var>& bag, const Var& key, const Var& v, const Var& W);

}  // namespace s2r::nn
