#include "s2r/pipeline.hpp"

#include "s2r/error.hpp"

namespace s2r::pipe {

Generator::Generator(const text::Vocab& vocab, const skel::SkeletonGenerator& ske, const resp::ResponseGenerator& res,
                     bool joint, const resp::ResponseGenerator* inverse)
    : vocab_(vocab), ske_(ske), res_(res), joint_(joint), inverse_(inverse) {
  if (joint && res.config().external_skeleton_dim != ske.slot_dim())
    throw ShapeError("joint model: response generator expects skeleton slots of width " +
                     std::to_string(res.skeleton_dim()) + " but the skeleton generator produces " +
                     std::to_string(ske.slot_dim()));
}

Generator::Prepared Generator::prepare(resp::Tape& tape, const TokenSeq& query, const Retrieved& r) const {
  Rng rng(0);
  const auto input = skel::make_input(vocab_, query, r.rq, r.rr);
  auto fwd = ske_.forward(tape, input, false, rng);
  const auto decision = skel::decide_mask(fwd.probs);
  Prepared p;
  p.skeleton = skel::apply_mask(r.rr, decision.labels);
  p.skeleton_ids = skel::apply_mask_ids(input.retrieved, decision.labels);
  if (joint_) p.slots = fwd.slots;
  return p;
}

resp::MemoryPools Generator::pools_for(resp::Tape& tape, const IdSeq& query, std::span<const Prepared> parts) const {
  Rng rng(0);
  if (!joint_) {
    std::vector<IdSeq> skeletons;
    for (const auto& p : parts) skeletons.push_back(p.skeleton_ids);
    return res_.encode(tape, query, skeletons, false, rng);
  }
  std::vector<ad::Var> slots;
  std::vector<std::size_t> lengths;
  for (const auto& p : parts) {
    if (p.slots.empty()) {
      slots.push_back(tape.constant(ad::Tensor({ske_.slot_dim()})));
      lengths.push_back(1);
    } else {
      slots.insert(slots.end(), p.slots.begin(), p.slots.end());
      lengths.push_back(p.slots.size());
    }
  }
  auto pools = res_.encode_with_memory(tape, query, ad::stack(slots), false, rng);
  pools.skeleton_lengths = std::move(lengths);
  return pools;
}

resp::Hypothesis Generator::decode(resp::Tape& tape, const resp::MemoryPools& pools, const IdSeq& query,
                                   const DecodeOptions& options) const {
  if (options.mmi) {
    if (!inverse_) throw Error("MMI reranking requested but no inverse model is loaded");
    auto nbest = resp::beam_search(res_, tape, pools, options.nbest, options.max_len);
    return resp::mmi_rerank(nbest, *inverse_, query).front();
  }
  if (options.strategy == Strategy::kBeam)
    return resp::beam_search(res_, tape, pools, options.width, options.max_len).front();
  return resp::greedy_decode(res_, tape, pools, options.max_len);
}

Generation Generator::generate(const TokenSeq& query, std::span<const Retrieved> retrieved,
                               const DecodeOptions& options) const {
  if (retrieved.empty()) throw Error("generate: no retrieved prototypes");
  if (query.empty()) throw Error("generate: empty query");
  const IdSeq qids = vocab_.encode(query);

  auto finish = [&](const resp::Hypothesis& h, TokenSeq skeleton, std::size_t chosen) {
    Generation g;
    g.response_ids = h.tokens;
    g.response = vocab_.decode(h.tokens);
    g.skeleton = std::move(skeleton);
    g.chosen = chosen;
    g.logprob = h.score();
    g.gate_mean = h.gate_mean;
    return g;
  };

  if (options.mode == RetrievalMode::kMultiple) {
    resp::Tape tape;
    std::vector<Prepared> parts;
    TokenSeq skeleton;
    for (const auto& r : retrieved) {
      parts.push_back(prepare(tape, query, r));
      skeleton.insert(skeleton.end(), parts.back().skeleton.begin(), parts.back().skeleton.end());
    }
    const auto pools = pools_for(tape, qids, parts);
    return finish(decode(tape, pools, qids, options), std::move(skeleton), 0);
  }

  Generation best;
  bool have = false;
  for (std::size_t i = 0; i < retrieved.size(); ++i) {
    resp::Tape tape;
    const Prepared p = prepare(tape, query, retrieved[i]);
    const auto pools = pools_for(tape, qids, std::span<const Prepared>(&p, 1));
    const auto h = decode(tape, pools, qids, options);
    // strict comparison keeps the better-ranked prototype on ties
    if (!have || h.score() > best.logprob) {
      best = finish(h, p.skeleton, i);
      have = true;
    }
  }
  return best;
}

}  // namespace s2r::pipe
