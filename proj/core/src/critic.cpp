#include "s2r/critic.hpp"

#include "s2r/error.hpp"
#include "s2r/textcore.hpp"

namespace s2r::train {

Critic::Critic(const CriticConfig& config, std::uint64_t seed, bool zero_init) : config_(config) {
  if (config.vocab < text::Vocab::kNumReserved) throw Error("critic: vocabulary too small");
  Rng rng(seed);
  embed_ = &nn::weight(params_, "critic/embed", {config.vocab, config.embedding}, rng);
  encoder_ = nn::BiLstm(params_, "critic/enc", config.embedding, config.hidden, 1, rng);
  M_ = &nn::weight(params_, "critic/M", {2 * config.hidden, 2 * config.hidden}, rng);
  if (zero_init) M_->value.fill(0.0);
}

Var Critic::represent(Tape& tape, const IdSeq& seq) const {
  if (seq.empty()) return tape.constant(ad::Tensor({2 * config_.hidden}));
  Var table = tape.param(*embed_);
  std::vector<Var> embs;
  embs.reserve(seq.size());
  for (int id : seq) embs.push_back(ad::embedding(table, id));
  Rng rng(0);
  auto enc = encoder_.encode(tape, embs, 0.0, false, rng);
  return ad::concat({enc.final_forward, enc.final_backward});
}

Var Critic::scores(Tape& tape, const IdSeq& q, const IdSeq& r_hat, const IdSeq& r_bar, const IdSeq& r) const {
  Var Mq = ad::matmul(tape.param(*M_), represent(tape, q));
  return ad::concat({ad::dot(represent(tape, r_hat), Mq), ad::dot(represent(tape, r_bar), Mq),
                     ad::dot(represent(tape, r), Mq)});
}

Var Critic::objective(Tape& tape, const IdSeq& q, const IdSeq& r_hat, const IdSeq& r_bar, const IdSeq& r) const {
  return ad::pick(ad::log_softmax(scores(tape, q, r_hat, r_bar, r)), kHuman);
}

double Critic::reward(const IdSeq& q, const IdSeq& r_hat, const IdSeq& r_bar, const IdSeq& r) const {
  Tape tape;
  return ad::log_softmax(scores(tape, q, r_hat, r_bar, r)).value()[kGenerated];
}

std::size_t Critic::pick(const IdSeq& q, const IdSeq& r_hat, const IdSeq& r_bar, const IdSeq& r) const {
  Tape tape;
  const auto& s = scores(tape, q, r_hat, r_bar, r).value();
  std::size_t best = 0;
  for (std::size_t i = 1; i < 3; ++i)
    if (s[i] > s[best]) best = i;
  return best;
}

}  // namespace s2r::train
