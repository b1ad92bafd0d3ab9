#pragma once

// Small models and data sets shared by the unit and acceptance tests.

#include <cstdint>
#include <vector>

#include "s2r/dataset.hpp"
#include "s2r/respgen.hpp"
#include "s2r/skelgen.hpp"
#include "s2r/textcore.hpp"
#include "s2r/training.hpp"

namespace s2r::fixture {

/// Reserved tokens plus "w0".."w{n-1}".
text::Vocab word_vocab(std::size_t n);

skel::SkeletonConfig small_skeleton(std::size_t vocab, std::size_t embedding = 6, std::size_t hidden = 5);
resp::ResponseConfig small_response(std::size_t vocab, std::size_t embedding = 6, std::size_t hidden = 5,
                                    std::size_t external_skeleton_dim = 0);

/// Random ids in [kNumReserved, vocab).
IdSeq random_ids(Rng& rng, std::size_t length, std::size_t vocab);

/// Example with random query, response, prototype and labels; the skeleton
/// is the prototype with the labels applied.
train::Example random_example(Rng& rng, std::size_t vocab, std::size_t max_len = 5);

/// Quadruples with learnable structure over a vocabulary of exactly
/// `vocab` ids: the retrieved query differs from the query in one word d,
/// the retrieved response contains d, and the gold response swaps d for
/// the query's word. Proxy labels come from an empty stop list.
std::vector<data::LabeledQuad> edit_quads(std::size_t n, std::size_t vocab, std::uint64_t seed);

struct Corpus {
  text::Vocab vocab;
  std::vector<train::Example> examples;
};

/// Toy corpus -> index -> band-filtered quadruples -> proxy skeletons ->
/// examples, capped at `max_examples`.
Corpus toy_examples(std::size_t pairs, std::size_t max_examples, std::uint64_t seed);

}  // namespace s2r::fixture
