#include "s2r/layers.hpp"

#include <algorithm>

#include "s2r/error.hpp"

namespace s2r::nn {

Parameter& weight(ParameterSet& set, const std::string& name, std::vector<std::size_t> shape, Rng& rng) {
  auto& p = set.add(name, std::move(shape));
  ad::init_uniform(p, rng, -kInitRange, kInitRange);
  return p;
}

Parameter& bias(ParameterSet& set, const std::string& name, std::size_t n) { return set.add(name, {n}); }

Linear::Linear(ParameterSet& set, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng)
    : W_(&weight(set, prefix + "/W", {out, in}, rng)), b_(&bias(set, prefix + "/b", out)), in_(in), out_(out) {}

Var Linear::operator()(Tape& tape, const Var& x) const {
  return ad::add(ad::matmul(tape.param(*W_), x), tape.param(*b_));
}

// --- GRU ----------------------------------------------------------------

GruCell::GruCell(ParameterSet& set, const std::string& prefix, std::size_t in, std::size_t hidden, Rng& rng)
    : W_(&weight(set, prefix + "/W", {3 * hidden, in}, rng)),
      U_(&weight(set, prefix + "/U", {3 * hidden, hidden}, rng)),
      b_(&bias(set, prefix + "/b", 3 * hidden)),
      in_(in),
      hidden_(hidden) {}

GruCell::State GruCell::initial_state(Tape& tape) const { return tape.constant(ad::Tensor({hidden_})); }

GruCell::State GruCell::step(Tape& tape, const Var& x, const State& h) const {
  if (x.size() != in_ || h.size() != hidden_)
    throw ShapeError("gru_step: expected input " + std::to_string(in_) + " and state " + std::to_string(hidden_) +
                     ", got " + x.value().shape_str() + " and " + h.value().shape_str());
  const std::size_t H = hidden_;
  Var gx = ad::add(ad::matmul(tape.param(*W_), x), tape.param(*b_));
  Var gh = ad::matmul(tape.param(*U_), h);
  Var r = ad::sigmoid(ad::add(ad::slice(gx, 0, H), ad::slice(gh, 0, H)));
  Var z = ad::sigmoid(ad::add(ad::slice(gx, H, H), ad::slice(gh, H, H)));
  Var n = ad::tanh(ad::add(ad::slice(gx, 2 * H, H), ad::mul(r, ad::slice(gh, 2 * H, H))));
  // (1 - z) * n + z * h
  return ad::add(ad::mul(ad::affine(z, -1.0, 1.0), n), ad::mul(z, h));
}

// --- LSTM ---------------------------------------------------------------

LstmCell::LstmCell(ParameterSet& set, const std::string& prefix, std::size_t in, std::size_t hidden, Rng& rng)
    : W_(&weight(set, prefix + "/W", {4 * hidden, in}, rng)),
      U_(&weight(set, prefix + "/U", {4 * hidden, hidden}, rng)),
      b_(&bias(set, prefix + "/b", 4 * hidden)),
      in_(in),
      hidden_(hidden) {}

LstmCell::State LstmCell::initial_state(Tape& tape) const {
  return {tape.constant(ad::Tensor({hidden_})), tape.constant(ad::Tensor({hidden_}))};
}

LstmCell::State LstmCell::step(Tape& tape, const Var& x, const State& s) const {
  if (x.size() != in_ || s.h.size() != hidden_ || s.c.size() != hidden_)
    throw ShapeError("lstm_step: expected input " + std::to_string(in_) + " and state " + std::to_string(hidden_) +
                     ", got " + x.value().shape_str() + " and " + s.h.value().shape_str());
  const std::size_t H = hidden_;
  Var gates = ad::add(ad::add(ad::matmul(tape.param(*W_), x), ad::matmul(tape.param(*U_), s.h)), tape.param(*b_));
  Var i = ad::sigmoid(ad::slice(gates, 0, H));
  Var f = ad::sigmoid(ad::slice(gates, H, H));
  Var g = ad::tanh(ad::slice(gates, 2 * H, H));
  Var o = ad::sigmoid(ad::slice(gates, 3 * H, H));
  Var c = ad::add(ad::mul(f, s.c), ad::mul(i, g));
  return {ad::mul(o, ad::tanh(c)), c};
}

// --- Bidirectional encoder ----------------------------------------------

template <typename Cell>
BiEncoder<Cell>::BiEncoder(ParameterSet& set, const std::string& prefix, std::size_t in, std::size_t hidden,
                           std::size_t layers, Rng& rng)
    : hidden_(hidden) {
  if (layers == 0) throw Error("BiEncoder needs at least one layer");
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t layer_in = l == 0 ? in : 2 * hidden;
    const std::string p = prefix + "/l" + std::to_string(l);
    forward_.emplace_back(set, p + "/fwd", layer_in, hidden, rng);
    backward_.emplace_back(set, p + "/bwd", layer_in, hidden, rng);
  }
}

template <typename Cell>
Encoded BiEncoder<Cell>::encode(Tape& tape, const std::vector<Var>& inputs, double dropout, bool train,
                                Rng& rng) const {
  if (inputs.empty()) throw ShapeError("bi_encode: empty input sequence");
  const std::size_t L = inputs.size();
  std::vector<Var> layer_in = inputs;
  Encoded out;
  for (std::size_t l = 0; l < forward_.size(); ++l) {
    for (auto& x : layer_in) x = ad::dropout(x, dropout, train, rng);
    std::vector<Var> fwd(L), bwd(L);
    auto fs = forward_[l].initial_state(tape);
    for (std::size_t k = 0; k < L; ++k) {
      fs = forward_[l].step(tape, layer_in[k], fs);
      fwd[k] = Cell::output(fs);
    }
    auto bs = backward_[l].initial_state(tape);
    for (std::size_t k = L; k-- > 0;) {
      bs = backward_[l].step(tape, layer_in[k], bs);
      bwd[k] = Cell::output(bs);
    }
    std::vector<Var> slots(L);
    for (std::size_t k = 0; k < L; ++k) slots[k] = ad::concat({fwd[k], bwd[k]});
    out.final_forward = fwd[L - 1];
    out.final_backward = bwd[0];
    layer_in = slots;
    out.slots = std::move(slots);
  }
  return out;
}

template class BiEncoder<GruCell>;
template class BiEncoder<LstmCell>;

// --- Attention ----------------------------------------------------------

Attention bilinear_attend(const Var& slots, const Var& key, const Var& W) {
  const auto& S = slots.value();
  const auto& M = W.value();
  if (S.rank() != 2 || M.rank() != 2 || M.rows() != S.cols() || M.cols() != key.size())
    throw ShapeError("bilinear_attend: slots " + S.shape_str() + ", W " + M.shape_str() + ", key " +
                     key.value().shape_str());
  Var scores = ad::matmul(slots, ad::matmul(W, key));
  Var weights = ad::softmax(scores);
  return {ad::matvec_t(slots, weights), weights};
}

Attention additive_attend(const std::vector<Var>& bag, const Var& key, const Var& v, const Var& W) {
  if (bag.empty()) throw ShapeError("additive_attend: empty bag");
  std::vector<Var> scores;
  scores.reserve(bag.size());
  for (const auto& e : bag) scores.push_back(ad::dot(v, ad::tanh(ad::matmul(W, ad::concat({e, key})))));
  Var weights = ad::softmax(ad::concat(scores));
  return {ad::matvec_t(ad::stack(bag), weights), weights};
}

}  // namespace s2r::nn
