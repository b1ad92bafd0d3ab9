#include "s2r/respgen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "s2r/error.hpp"

namespace s2r::resp {

ResponseGenerator::ResponseGenerator(const ResponseConfig& config, std::uint64_t seed, const std::string& prefix)
    : config_(config) {
  if (config.vocab < text::Vocab::kNumReserved) throw Error("response generator: vocabulary too small");
  if (config.layers == 0) throw Error("response generator: layers must be >= 1");
  Rng rng(seed);
  const std::size_t E = config.embedding, H = config.hidden, D = config.decoder_hidden;
  const std::size_t T = skeleton_dim();
  embed_ = &nn::weight(params_, prefix + "/embed", {config.vocab, E}, rng);
  query_encoder_ = nn::BiLstm(params_, prefix + "/qenc", E, H, config.layers, rng);
  if (!config.external_skeleton_dim) skeleton_encoder_.emplace(params_, prefix + "/tenc", E, H, config.layers, rng);
  for (std::size_t l = 0; l < config.layers; ++l) {
    const std::string p = prefix + "/dec/l" + std::to_string(l);
    decoder_.emplace_back(params_, p, l == 0 ? E : D, D, rng);
    bridge_.emplace_back(params_, prefix + "/bridge/l" + std::to_string(l), 2 * H, D, rng);
  }
  Wq_ = &nn::weight(params_, prefix + "/att/Wq", {2 * H, D}, rng);
  Wt_ = &nn::weight(params_, prefix + "/att/Wt", {T, D}, rng);
  Wc_ = &nn::weight(params_, prefix + "/fuse/Wc", {T, D + 2 * H}, rng);
  gate_w_ = &nn::weight(params_, prefix + "/gate/w", {D + 2 * H + T}, rng);
  gate_b_ = &nn::bias(params_, prefix + "/gate/b", 1);
  output_ = nn::Linear(params_, prefix + "/out", T, config.vocab, rng);
}

MemoryPools ResponseGenerator::encode_with_memory(Tape& tape, const IdSeq& query, const Var& skeleton_slots,
                                                  bool train, Rng& rng) const {
  if (query.empty()) throw Error("encode: empty query");
  // Copy what we need: recording more ops may reallocate tape storage.
  const ad::Tensor& S = skeleton_slots.value();
  if (S.rank() != 2 || S.cols() != skeleton_dim())
    throw ShapeError("encode: skeleton memory " + S.shape_str() + " does not match slot width " +
                     std::to_string(skeleton_dim()));
  const std::size_t memory_rows = S.rows();
  Var table = tape.param(*embed_);
  std::vector<Var> embs;
  embs.reserve(query.size());
  for (int id : query) embs.push_back(ad::embedding(table, id));
  auto enc = query_encoder_.encode(tape, embs, config_.dropout, train, rng);
  MemoryPools pools;
  pools.query_slots = ad::stack(enc.slots);
  pools.query_summary = ad::concat({enc.final_forward, enc.final_backward});
  pools.skeleton_slots = skeleton_slots;
  pools.skeleton_lengths = {memory_rows};
  return pools;
}

MemoryPools ResponseGenerator::encode(Tape& tape, const IdSeq& query, const std::vector<IdSeq>& skeletons, bool train,
                                      Rng& rng) const {
  if (!skeleton_encoder_) throw Error("encode: this model takes external skeleton memory");
  if (skeletons.empty()) throw Error("encode: at least one skeleton is required");
  Var table = tape.param(*embed_);
  std::vector<Var> slots;
  std::vector<std::size_t> lengths;
  for (const auto& skel : skeletons) {
    if (skel.empty()) {
      slots.push_back(tape.constant(ad::Tensor({skeleton_dim()})));
      lengths.push_back(1);
      continue;
    }
    std::vector<Var> embs;
    embs.reserve(skel.size());
    for (int id : skel) embs.push_back(ad::embedding(table, id));
    auto enc = skeleton_encoder_->encode(tape, embs, config_.dropout, train, rng);
    slots.insert(slots.end(), enc.slots.begin(), enc.slots.end());
    lengths.push_back(skel.size());
  }
  MemoryPools pools = encode_with_memory(tape, query, ad::stack(slots), train, rng);
  pools.skeleton_lengths = std::move(lengths);
  return pools;
}

DecoderState ResponseGenerator::initial_state(Tape& tape, const MemoryPools& pools) const {
  DecoderState s;
  for (std::size_t l = 0; l < decoder_.size(); ++l) {
    s.layers.push_back({bridge_[l](tape, pools.query_summary), tape.constant(ad::Tensor({config_.decoder_hidden}))});
  }
  return s;
}

StepResult ResponseGenerator::step(Tape& tape, const DecoderState& state, int prev_token, const MemoryPools& pools,
                                   const StepOptions& options, Rng& rng) const {
  if (state.layers.size() != decoder_.size()) throw ShapeError("decode_step: decoder state has wrong depth");
  StepResult out;
  Var x = ad::dropout(ad::embedding(tape.param(*embed_), prev_token), config_.dropout, options.train, rng);
  for (std::size_t l = 0; l < decoder_.size(); ++l) {
    if (l > 0) x = ad::dropout(x, config_.dropout, options.train, rng);
    auto next = decoder_[l].step(tape, x, state.layers[l]);
    out.state.layers.push_back(next);
    x = next.h;
  }
  const Var& s = x;
  out.query_context = nn::bilinear_attend(pools.query_slots, s, tape.param(*Wq_)).context;
  out.skeleton_context = nn::bilinear_attend(pools.skeleton_slots, s, tape.param(*Wt_)).context;

  Var fused = ad::matmul(tape.param(*Wc_), ad::concat({s, out.query_context}));
  if (options.gate_override) {
    out.gate = tape.constant(ad::Tensor::scalar(*options.gate_override));
  } else {
    Var score = ad::dot(tape.param(*gate_w_), ad::concat({s, out.query_context, out.skeleton_context}));
    out.gate = ad::sigmoid(ad::add(score, tape.param(*gate_b_)));
  }
  out.y = ad::add(ad::scale_by(fused, out.gate), ad::scale_by(out.skeleton_context, ad::affine(out.gate, -1.0, 1.0)));
  out.logits = output_(tape, out.y);
  out.log_probs = ad::log_softmax(out.logits);
  return out;
}

TeacherForced ResponseGenerator::teacher_force(Tape& tape, const MemoryPools& pools, const IdSeq& target, bool train,
                                               Rng& rng) const {
  if (target.empty()) throw Error("teacher_force: empty target");
  TeacherForced tf;
  DecoderState state = initial_state(tape, pools);
  StepOptions opts;
  opts.train = train;
  std::vector<Var> picked;
  picked.reserve(target.size() + 1);
  int prev = text::Vocab::kBosId;
  for (std::size_t t = 0; t <= target.size(); ++t) {
    const int gold = t < target.size() ? target[t] : text::Vocab::kEosId;
    auto res = step(tape, state, prev, pools, opts, rng);
    const auto& lp = res.log_probs.value().values();
    const auto argmax = static_cast<int>(std::max_element(lp.begin(), lp.end()) - lp.begin());
    tf.correct += argmax == gold ? 1 : 0;
    picked.push_back(ad::pick(res.log_probs, static_cast<std::size_t>(gold)));
    state = std::move(res.state);
    prev = gold;
  }
  tf.tokens = picked.size();
  tf.nll_sum = ad::scale(ad::add_all(picked), -1.0);
  return tf;
}

// --- Decoding -----------------------------------------------------------

Hypothesis greedy_decode(const ResponseGenerator& model, Tape& tape, const MemoryPools& pools, std::size_t max_len,
                         const StepOptions& options) {
  Hypothesis h;
  Rng rng(0);
  DecoderState state = model.initial_state(tape, pools);
  int prev = text::Vocab::kBosId;
  double gate_sum = 0.0;
  for (std::size_t t = 0; t < max_len; ++t) {
    auto res = model.step(tape, state, prev, pools, options, rng);
    const auto& lp = res.log_probs.value().values();
    const auto best = static_cast<int>(std::max_element(lp.begin(), lp.end()) - lp.begin());
    h.log_prob += lp[static_cast<std::size_t>(best)];
    gate_sum += res.gate.item();
    ++h.steps;
    if (best == text::Vocab::kEosId) {
      h.finished = true;
      break;
    }
    h.tokens.push_back(best);
    state = std::move(res.state);
    prev = best;
  }
  h.gate_mean = h.steps ? gate_sum / static_cast<double>(h.steps) : 0.0;
  return h;
}

std::vector<Hypothesis> beam_search(const ResponseGenerator& model, Tape& tape, const MemoryPools& pools,
                                    std::size_t width, std::size_t max_len, bool length_normalize) {
  if (width == 0) throw Error("beam_search: width must be >= 1");
  struct Open {
    Hypothesis hyp;
    DecoderState state;
    double gate_sum = 0.0;
  };
  struct Candidate {
    double log_prob;
    double step_lp;
    std::size_t parent;
    int token;
    double gate;
  };

  Rng rng(0);
  std::vector<Open> open;
  open.push_back({Hypothesis{}, model.initial_state(tape, pools), 0.0});
  std::vector<Hypothesis> done;

  for (std::size_t t = 0; t < max_len && !open.empty() && done.size() < width; ++t) {
    std::vector<Candidate> cands;
    std::vector<StepResult> steps;
    steps.reserve(open.size());
    for (std::size_t b = 0; b < open.size(); ++b) {
      const int prev = open[b].hyp.tokens.empty() ? text::Vocab::kBosId : open[b].hyp.tokens.back();
      steps.push_back(model.step(tape, open[b].state, prev, pools, {}, rng));
      const auto& lp = steps.back().log_probs.value().values();
      const double g = steps.back().gate.item();
      for (std::size_t v = 0; v < lp.size(); ++v)
        cands.push_back({open[b].hyp.log_prob + lp[v], lp[v], b, static_cast<int>(v), g});
    }
    const std::size_t keep = std::min(width - done.size(), cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                      [](const Candidate& a, const Candidate& b) {
                        if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
                        if (a.parent != b.parent) return a.parent < b.parent;
                        if (a.step_lp != b.step_lp) return a.step_lp > b.step_lp;
                        return a.token < b.token;
                      });
    std::vector<Open> next;
    for (std::size_t c = 0; c < keep; ++c) {
      const auto& cand = cands[c];
      const Open& parent = open[cand.parent];
      Hypothesis h = parent.hyp;
      h.log_prob = cand.log_prob;
      h.steps += 1;
      const double gate_sum = parent.gate_sum + cand.gate;
      if (cand.token == text::Vocab::kEosId) {
        h.finished = true;
        h.gate_mean = gate_sum / static_cast<double>(h.steps);
        done.push_back(std::move(h));
      } else {
        h.tokens.push_back(cand.token);
        next.push_back({std::move(h), steps[cand.parent].state, gate_sum});
      }
    }
    open = std::move(next);
  }
  if (done.size() < width) {
    for (auto& o : open) {
      o.hyp.gate_mean = o.hyp.steps ? o.gate_sum / static_cast<double>(o.hyp.steps) : 0.0;
      done.push_back(std::move(o.hyp));
    }
  }
  if (done.empty()) done.push_back(Hypothesis{});  // max_len == 0

  std::stable_sort(done.begin(), done.end(), [length_normalize](const Hypothesis& a, const Hypothesis& b) {
    const double sa = length_normalize ? a.score() : a.log_prob;
    const double sb = length_normalize ? b.score() : b.log_prob;
    if (sa != sb) return sa > sb;
    return a.log_prob > b.log_prob;
  });
  return done;
}

double sequence_log_prob(const ResponseGenerator& model, const IdSeq& query, const std::vector<IdSeq>& skeletons,
                         const IdSeq& target) {
  Tape tape;
  Rng rng(0);
  auto pools = model.encode(tape, query, skeletons, false, rng);
  const IdSeq& tgt = target;
  if (tgt.empty()) {
    // Only the <eos> step.
    auto state = model.initial_state(tape, pools);
    auto res = model.step(tape, state, text::Vocab::kBosId, pools, {}, rng);
    return res.log_probs.value()[text::Vocab::kEosId];
  }
  return -model.teacher_force(tape, pools, tgt, false, rng).nll_sum.item();
}

std::vector<Hypothesis> mmi_rerank(std::span<const Hypothesis> nbest, const ResponseGenerator& inverse,
                                   const IdSeq& query) {
  std::vector<std::pair<double, std::size_t>> scored;
  scored.reserve(nbest.size());
  for (std::size_t i = 0; i < nbest.size(); ++i) {
    const IdSeq& cand = nbest[i].tokens;
    const IdSeq source = cand.empty() ? IdSeq{text::Vocab::kEosId} : cand;
    scored.emplace_back(sequence_log_prob(inverse, source, {IdSeq{}}, query), i);
  }
  std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<Hypothesis> out;
  out.reserve(nbest.size());
  for (const auto& [_, i] : scored) out.push_back(nbest[i]);
  return out;
}

}  // namespace s2r::resp
