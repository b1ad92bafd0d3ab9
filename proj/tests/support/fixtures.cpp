#include "fixtures.hpp"

#include <string>

#include "s2r/synthetic.hpp"

namespace s2r::fixture {

text::Vocab word_vocab(std::size_t n) {
  std::vector<std::string> words;
  for (std::size_t i = 0; i < n; ++i) words.push_back("w" + std::to_string(i));
  return text::Vocab::from_tokens(words);
}

skel::SkeletonConfig small_skeleton(std::size_t vocab, std::size_t embedding, std::size_t hidden) {
  skel::SkeletonConfig c;
  c.vocab = vocab;
  c.embedding = embedding;
  c.hidden = hidden;
  c.attention = 4;
  c.layers = 1;
  return c;
}

resp::ResponseConfig small_response(std::size_t vocab, std::size_t embedding, std::size_t hidden,
                                    std::size_t external_skeleton_dim) {
  resp::ResponseConfig c;
  c.vocab = vocab;
  c.embedding = embedding;
  c.hidden = hidden;
  c.layers = 2;
  c.decoder_hidden = hidden;
  c.external_skeleton_dim = external_skeleton_dim;
  return c;
}

IdSeq random_ids(Rng& rng, std::size_t length, std::size_t vocab) {
  IdSeq out;
  const std::size_t span = vocab - text::Vocab::kNumReserved;
  for (std::size_t i = 0; i < length; ++i)
    out.push_back(static_cast<int>(text::Vocab::kNumReserved + uniform_index(rng, span)));
  return out;
}

train::Example random_example(Rng& rng, std::size_t vocab, std::size_t max_len) {
  auto len = [&] { return 1 + uniform_index(rng, max_len); };
  train::Example ex;
  ex.query = random_ids(rng, len(), vocab);
  ex.response = random_ids(rng, len(), vocab);
  ex.ske.insertion = random_ids(rng, uniform_index(rng, 3), vocab);
  ex.ske.deletion = random_ids(rng, uniform_index(rng, 3), vocab);
  ex.ske.retrieved = random_ids(rng, len(), vocab);
  for (std::size_t i = 0; i < ex.ske.retrieved.size(); ++i) ex.labels.push_back(uniform01(rng) < 0.5 ? 1 : 0);
  ex.skeleton = skel::apply_mask_ids(ex.ske.retrieved, ex.labels);
  return ex;
}

std::vector<data::LabeledQuad> edit_quads(std::size_t n, std::size_t vocab, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t words = vocab - text::Vocab::kNumReserved;
  auto word = [&] { return "w" + std::to_string(uniform_index(rng, words)); };
  const text::StopList none;
  std::vector<data::LabeledQuad> out;
  while (out.size() < n) {
    data::Quadruple quad;
    const std::size_t qlen = 3 + uniform_index(rng, 3);
    for (std::size_t i = 0; i < qlen; ++i) quad.q.push_back(word());
    const std::size_t at = uniform_index(rng, qlen);
    const std::string ins = quad.q[at];
    std::string del = word();
    if (del == ins) continue;
    quad.rq = quad.q;
    quad.rq[at] = del;
    const std::size_t rlen = 4 + uniform_index(rng, 4);
    for (std::size_t i = 0; i < rlen; ++i) quad.rr.push_back(word());
    const std::size_t slot = uniform_index(rng, rlen);
    quad.rr[slot] = del;
    quad.r = quad.rr;
    for (auto& t : quad.r)
      if (t == del) t = ins;
    quad.pair_id = static_cast<std::int64_t>(out.size());
    data::LabeledQuad lq{quad, data::make_proxy_skeleton(quad.r, quad.rr, none)};
    out.push_back(std::move(lq));
  }
  return out;
}

Corpus toy_examples(std::size_t pairs, std::size_t max_examples, std::uint64_t seed) {
  const auto corpus = synth::toy_corpus(pairs, seed);
  const auto index = data::InvertedIndex::build(corpus, data::IndexSide::kResponse);
  data::QuadOptions opts;
  opts.max_quads = max_examples;
  opts.seed = seed;
  const auto quads = data::build_quadruples(corpus, index, opts);
  const text::StopList stop({"a", "an", "the", "and", "i", "is", "to", "but", "it", "my", "you", "of"});
  Corpus out;
  out.vocab = text::build_vocab(corpus, 100000, 1);
  for (const auto& q : quads) {
    data::LabeledQuad lq{q, data::make_proxy_skeleton(q.r, q.rr, stop)};
    out.examples.push_back(train::make_example(out.vocab, lq));
  }
  return out;
}

}  // namespace s2r::fixture
