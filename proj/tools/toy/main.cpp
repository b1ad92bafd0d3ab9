// Writes a synthetic JSON-lines dialogue corpus for demos and smoke tests.
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "s2r/dataset.hpp"
#include "s2r/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Generate a synthetic query-response corpus"};
  std::size_t n = 2000;
  std::uint64_t seed = 7;
  std::string out = "toy.jsonl";
  app.add_option("-n,--pairs", n, "number of pairs")->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "random seed");
  app.add_option("-o,--output", out, "output file");
  CLI11_PARSE(app, argc, argv);

  try {
    const auto pairs = s2r::synth::toy_corpus(n, seed);
    s2r::data::save_pairs(out, pairs);
    std::cerr << "wrote " << pairs.size() << " pairs to " << out << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
