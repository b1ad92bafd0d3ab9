#pragma once

#include <iosfwd>
#include <optional>
#include <string>

#include "s2r/config.hpp"

namespace s2r::cli {

struct TrainOptions {
  std::optional<std::string> mode;
  bool inverse = false;
};

struct GenerateOptions {
  std::string model;  // "joint", "cascade", or empty to pick whichever exists
  std::string queries;  // file with one query per line; empty = corpus queries
  std::size_t limit = 100;
  std::string output;
};

struct EvalOptions {
  std::string model;
  std::string input;
};

int run_index(const config::RunConfig& cfg);
int run_quads(const config::RunConfig& cfg);
int run_skeletons(const config::RunConfig& cfg);
int run_train(const config::RunConfig& cfg, const TrainOptions& options);
int run_generate(const config::RunConfig& cfg, const GenerateOptions& options);
int run_chat(const config::RunConfig& cfg, const std::string& model, std::istream& in, std::ostream& out);
int run_eval(const config::RunConfig& cfg, const EvalOptions& options);

}  // namespace s2r::cli
