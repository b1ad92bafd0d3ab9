#include "s2r/skelgen.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "s2r/error.hpp"

namespace s2r::skel {

WordBags word_bags(std::span<const std::string> query, std::span<const std::string> retrieved_query) {
  const std::set<std::string> q(query.begin(), query.end());
  const std::set<std::string> rq(retrieved_query.begin(), retrieved_query.end());
  WordBags bags;
  std::set_difference(q.begin(), q.end(), rq.begin(), rq.end(), std::back_inserter(bags.insertion));
  std::set_difference(rq.begin(), rq.end(), q.begin(), q.end(), std::back_inserter(bags.deletion));
  return bags;
}

SkeletonInput make_input(const text::Vocab& vocab, std::span<const std::string> query,
                         std::span<const std::string> retrieved_query,
                         std::span<const std::string> retrieved_response) {
  const WordBags bags = word_bags(query, retrieved_query);
  return {vocab.encode(bags.insertion), vocab.encode(bags.deletion), vocab.encode(retrieved_response)};
}

SkeletonGenerator::SkeletonGenerator(const SkeletonConfig& config, std::uint64_t seed) : config_(config) {
  if (config.vocab < text::Vocab::kNumReserved) throw Error("skeleton generator: vocabulary too small");
  Rng rng(seed);
  const std::size_t E = config.embedding, H = config.hidden, A = config.attention;
  embed_ = &nn::weight(params_, "ske/embed", {config.vocab, E}, rng);
  encoder_ = nn::BiGru(params_, "ske/enc", E, H, config.layers, rng);
  ins_v_ = &nn::weight(params_, "ske/ins/v", {A}, rng);
  ins_W_ = &nn::weight(params_, "ske/ins/W", {A, E + 2 * H}, rng);
  del_v_ = &nn::weight(params_, "ske/del/v", {A}, rng);
  del_W_ = &nn::weight(params_, "ske/del/W", {A, E + 2 * H}, rng);
  mask_W_ = &nn::weight(params_, "ske/mask/W", {2 * H + 2 * E}, rng);
  mask_b_ = &nn::bias(params_, "ske/mask/b", 1);
}

EditVector SkeletonGenerator::edit_vector(Tape& tape, const IdSeq& insertion, const IdSeq& deletion, const Var& key,
                                          bool train, Rng& rng) const {
  Var table = tape.param(*embed_);
  auto bag_sum = [&](const IdSeq& ids, ad::Parameter* v, ad::Parameter* W, Var& weights) {
    if (ids.empty()) return tape.constant(ad::Tensor({config_.embedding}));
    std::vector<Var> bag;
    bag.reserve(ids.size());
    for (int id : ids) bag.push_back(ad::dropout(ad::embedding(table, id), config_.dropout, train, rng));
    auto att = nn::additive_attend(bag, key, tape.param(*v), tape.param(*W));
    weights = att.weights;
    return att.context;
  };
  EditVector ev;
  Var ins = bag_sum(insertion, ins_v_, ins_W_, ev.insertion_weights);
  Var del = bag_sum(deletion, del_v_, del_W_, ev.deletion_weights);
  ev.z = ad::concat({ins, del});
  return ev;
}

SkeletonForward SkeletonGenerator::forward(Tape& tape, const SkeletonInput& input, bool train, Rng& rng) const {
  SkeletonForward out;
  Var table = tape.param(*embed_);
  Var key;
  if (input.retrieved.empty()) {
    key = tape.constant(ad::Tensor({slot_dim()}));
  } else {
    std::vector<Var> embs;
    embs.reserve(input.retrieved.size());
    for (int id : input.retrieved) embs.push_back(ad::embedding(table, id));
    out.slots = encoder_.encode(tape, embs, config_.dropout, train, rng).slots;
    out.slot_matrix = ad::stack(out.slots);
    key = out.slots.back();
  }
  out.edit = edit_vector(tape, input.insertion, input.deletion, key, train, rng);
  if (out.slots.empty()) return out;

  Var w = tape.param(*mask_W_);
  Var b = tape.param(*mask_b_);
  std::vector<Var> logits;
  logits.reserve(out.slots.size());
  for (const auto& h : out.slots) logits.push_back(ad::dot(w, ad::concat({h, out.edit.z})));
  // b_m broadcast over positions
  out.logits = ad::add(ad::concat(logits), ad::scale_by(tape.constant(ad::Tensor({out.slots.size()}, 1.0)), b));

  const Var probs = ad::sigmoid(out.logits);
  out.probs = probs.value().values();
  return out;
}

std::vector<double> SkeletonGenerator::mask_probs(const SkeletonInput& input) const {
  Tape tape;
  Rng rng(0);
  return forward(tape, input, false, rng).probs;
}

MaskDecision decide_mask(std::span<const double> probs, ThresholdMode mode) {
  MaskDecision d;
  d.labels.reserve(probs.size());
  for (double p : probs) {
    const int m = p >= mode.tau ? 1 : 0;
    d.labels.push_back(m);
    d.log_prob += std::log(m ? p : 1.0 - p);
  }
  return d;
}

MaskDecision decide_mask(std::span<const double> probs, SampleMode mode) {
  MaskDecision d;
  d.labels.reserve(probs.size());
  for (double p : probs) {
    const int m = uniform01(*mode.rng) < p ? 1 : 0;
    d.labels.push_back(m);
    d.log_prob += std::log(m ? p : 1.0 - p);
  }
  return d;
}

TokenSeq apply_mask(std::span<const std::string> retrieved, std::span<const int> labels) {
  if (retrieved.size() != labels.size())
    throw Error("apply_mask: " + std::to_string(labels.size()) + " labels for " + std::to_string(retrieved.size()) +
                " tokens");
  TokenSeq out;
  out.reserve(retrieved.size());
  for (std::size_t i = 0; i < retrieved.size(); ++i) out.push_back(labels[i] ? retrieved[i] : std::string(kBlank));
  return out;
}

IdSeq apply_mask_ids(std::span<const int> retrieved, std::span<const int> labels) {
  if (retrieved.size() != labels.size())
    throw Error("apply_mask: " + std::to_string(labels.size()) + " labels for " + std::to_string(retrieved.size()) +
                " tokens");
  IdSeq out;
  out.reserve(retrieved.size());
  for (std::size_t i = 0; i < retrieved.size(); ++i) out.push_back(labels[i] ? retrieved[i] : text::Vocab::kBlankId);
  return out;
}

Var mask_log_prob(const Var& logits, std::span<const int> labels) {
  if (logits.size() != labels.size())
    throw Error("mask_log_prob: " + std::to_string(labels.size()) + " labels for " + std::to_string(logits.size()) +
                " logits");
  std::vector<double> signs;
  signs.reserve(labels.size());
  for (int m : labels) signs.push_back(m ? 1.0 : -1.0);
  Var signed_logits = ad::mul(logits, logits.tape()->constant(ad::Tensor::from(std::move(signs))));
  return ad::sum(ad::log_sigmoid(signed_logits));
}

}  // namespace s2r::skel
