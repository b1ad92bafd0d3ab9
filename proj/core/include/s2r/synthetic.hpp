#pragma once

#include <cstdint>
#include <vector>

#include "s2r/types.hpp"

namespace s2r::synth {

/// Template-filled single-turn dialogues. Responses built from the same
/// template share most of their words, so response retrieval finds
/// prototypes inside the usual similarity band. Deterministic in `seed`.
std::vector<DialoguePair> toy_corpus(std::size_t n, std::uint64_t seed);

}  // namespace s2r::synth
