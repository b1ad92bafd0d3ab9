#include <doctest.h>

#include "fixtures.hpp"
#include "s2r/error.hpp"
#include "s2r/pipeline.hpp"

using namespace s2r;
using namespace s2r::pipe;

namespace {

struct Models {
  text::Vocab vocab = fixture::word_vocab(12);
  skel::SkeletonGenerator ske;
  resp::ResponseGenerator res;
  Models(bool joint, std::uint64_t seed)
      : ske(fixture::small_skeleton(17), seed),
        res(fixture::small_response(17, 6, 5, joint ? 10 : 0), seed + 1) {
    Rng rng(seed + 2);
    for (auto* p : ske.params().all()) ad::init_uniform(*p, rng, -0.8, 0.8);
    for (auto* p : res.params().all()) ad::init_uniform(*p, rng, -0.8, 0.8);
  }
};

Retrieved proto(const std::string& rq, const std::string& rr) {
  return {text::tokenize(rq), text::tokenize(rr), 1.0, 0};
}

const TokenSeq kQuery = text::tokenize("w1 w2 w3");

}  // namespace

TEST_CASE("generation needs a query and at least one prototype") {
  Models m(false, 1);
  const Generator gen(m.vocab, m.ske, m.res, false);
  const std::vector<Retrieved> one = {proto("w1 w4", "w5 w6 w7")};
  CHECK_THROWS_AS(gen.generate(kQuery, {}, {}), Error);
  CHECK_THROWS_AS(gen.generate({}, one, {}), Error);
  DecodeOptions mmi;
  mmi.mmi = true;
  CHECK_THROWS_AS(gen.generate(kQuery, one, mmi), Error);
}

TEST_CASE("joint wiring checks the slot width") {
  Models m(false, 1);
  CHECK_THROWS_AS(Generator(m.vocab, m.ske, m.res, true), ShapeError);
  Models j(true, 1);
  const Generator gen(j.vocab, j.ske, j.res, true);
  const std::vector<Retrieved> one = {proto("w1 w4", "w5 w6 w7")};
  DecodeOptions opts;
  opts.max_len = 6;
  const auto g = gen.generate(kQuery, one, opts);
  CHECK(g.skeleton.size() == 3);
  CHECK(g.response.size() <= 6);
}

TEST_CASE("single and multiple modes agree on one prototype") {
  for (bool joint : {false, true}) {
    Models m(joint, 3);
    const Generator gen(m.vocab, m.ske, m.res, joint);
    const std::vector<Retrieved> one = {proto("w1 w4", "w5 w6 w7 w8")};
    DecodeOptions single, multi;
    single.max_len = multi.max_len = 7;
    multi.mode = RetrievalMode::kMultiple;
    const auto a = gen.generate(kQuery, one, single);
    const auto b = gen.generate(kQuery, one, multi);
    CHECK(a.response_ids == b.response_ids);
    CHECK(a.skeleton == b.skeleton);
    CHECK(a.logprob == b.logprob);
    CHECK(a.chosen == 0);
  }
}

TEST_CASE("single mode keeps the best normalised prototype, earliest on ties") {
  Models m(false, 5);
  const Generator gen(m.vocab, m.ske, m.res, false);
  const std::vector<Retrieved> many = {proto("w1 w4", "w5 w6 w7"), proto("w2", "w8 w9"), proto("w3 w0", "w10 w11 w5 w6"),
                                       proto("w7", "w4")};
  DecodeOptions opts;
  opts.max_len = 6;
  const auto best = gen.generate(kQuery, many, opts);
  for (std::size_t i = 0; i < many.size(); ++i) {
    const auto alone = gen.generate(kQuery, std::span<const Retrieved>(&many[i], 1), opts);
    CHECK(best.logprob >= alone.logprob);
    if (i == best.chosen) CHECK(alone.response_ids == best.response_ids);
    if (i < best.chosen) CHECK(alone.logprob < best.logprob);
  }
  const std::vector<Retrieved> dup = {many[1], many[1]};
  CHECK(gen.generate(kQuery, dup, opts).chosen == 0);
}

TEST_CASE("multiple mode concatenates skeletons") {
  for (bool joint : {false, true}) {
    Models m(joint, 7);
    const Generator gen(m.vocab, m.ske, m.res, joint);
    const std::vector<Retrieved> many = {proto("w1", "w5 w6 w7"), proto("w2", "w8 w9 w10 w11")};
    DecodeOptions opts;
    opts.mode = RetrievalMode::kMultiple;
    opts.max_len = 5;
    const auto g = gen.generate(kQuery, many, opts);
    CHECK(g.skeleton.size() == 7);
  }
}

TEST_CASE("beam and MMI decoding run through the generator") {
  Models m(false, 9);
  resp::ResponseGenerator inv(fixture::small_response(17), 40, "inv");
  const Generator gen(m.vocab, m.ske, m.res, false, &inv);
  const std::vector<Retrieved> one = {proto("w1 w4", "w5 w6 w7")};
  DecodeOptions beam;
  beam.strategy = Strategy::kBeam;
  beam.width = 3;
  beam.max_len = 5;
  const auto b = gen.generate(kQuery, one, beam);
  CHECK(b.response.size() <= 5);
  DecodeOptions greedy = beam;
  greedy.strategy = Strategy::kGreedy;
  DecodeOptions width1 = beam;
  width1.width = 1;
  CHECK(gen.generate(kQuery, one, width1).response_ids == gen.generate(kQuery, one, greedy).response_ids);
  DecodeOptions mmi = beam;
  mmi.mmi = true;
  mmi.nbest = 6;
  const auto r = gen.generate(kQuery, one, mmi);
  CHECK(r.response.size() <= 5);
}
