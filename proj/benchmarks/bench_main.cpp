#include <benchmark/benchmark.h>

#include "s2r/dataset.hpp"
#include "s2r/respgen.hpp"
#include "s2r/synthetic.hpp"
#include "s2r/textcore.hpp"

using namespace s2r;

namespace {

TokenSeq words(std::size_t n, std::size_t vocab, std::uint64_t seed) {
  Rng rng(seed);
  TokenSeq out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("w" + std::to_string(uniform_index(rng, vocab)));
  return out;
}

void BM_LcsAlignment(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = words(n, 20, 1), b = words(n, 20, 2);
  for (auto _ : state) benchmark::DoNotOptimize(text::lcs_alignment(a, b));
}
BENCHMARK(BM_LcsAlignment)->Arg(8)->Arg(32)->Arg(128);

void BM_Retrieve(benchmark::State& state) {
  const auto corpus = synth::toy_corpus(static_cast<std::size_t>(state.range(0)), 3);
  const auto idx = data::InvertedIndex::build(corpus, data::IndexSide::kResponse);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(idx.retrieve(corpus[i].response, 30, corpus[i].id));
    i = (i + 1) % corpus.size();
  }
}
BENCHMARK(BM_Retrieve)->Arg(1000)->Arg(10000);

void BM_LstmStep(benchmark::State& state) {
  const auto h = static_cast<std::size_t>(state.range(0));
  ad::ParameterSet set;
  Rng rng(1);
  const nn::LstmCell cell(set, "cell", h, h, rng);
  const bool with_backward = state.range(1) != 0;
  for (auto _ : state) {
    ad::Tape tape;
    auto s = cell.initial_state(tape);
    const auto x = tape.constant(ad::Tensor({h}, 0.1));
    s = cell.step(tape, x, s);
    if (with_backward) {
      set.zero_grad();
      tape.backward(ad::sum(s.h));
    }
    benchmark::DoNotOptimize(s.h.value().data());
  }
}
BENCHMARK(BM_LstmStep)->Args({64, 0})->Args({64, 1})->Args({256, 0})->Args({256, 1});

void BM_GreedyDecode(benchmark::State& state) {
  resp::ResponseConfig c;
  c.vocab = 2000;
  c.embedding = 32;
  c.hidden = 64;
  c.decoder_hidden = 64;
  const resp::ResponseGenerator model(c, 7);
  IdSeq query, skel;
  for (int i = 0; i < 8; ++i) query.push_back(5 + i);
  for (int i = 0; i < 10; ++i) skel.push_back(i % 3 ? 20 + i : 4);
  Rng rng(1);
  for (auto _ : state) {
    ad::Tape tape;
    const auto pools = model.encode(tape, query, {skel}, false, rng);
    benchmark::DoNotOptimize(resp::greedy_decode(model, tape, pools, 20));
  }
}
BENCHMARK(BM_GreedyDecode)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
