#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "s2r/pipeline.hpp"
#include "s2r/training.hpp"

namespace s2r::config {

enum class Profile { kDesk, kFull };

struct Paths {
  std::filesystem::path corpus;
  std::filesystem::path stoplist;
  std::filesystem::path workdir = "work";
};

struct VocabSettings {
  std::size_t max_size = 20000;
  std::size_t min_freq = 1;
  bool lowercase = true;
};

struct ModelSettings {
  std::size_t embedding = 32;
  std::size_t hidden = 64;
  std::size_t layers = 2;             // response encoders and decoder
  std::size_t skeleton_layers = 1;
  std::size_t decoder_hidden = 64;
  std::size_t attention = 32;         // bag-attention scorer width
  std::size_t critic_hidden = 64;
  double dropout = 0.0;
};

struct RetrievalSettings {
  std::size_t k = 30;
  double lo = 0.3;
  double hi = 0.7;
  std::size_t max_quads = 0;
  std::size_t test_k = 1;  // prototypes retrieved per query at generation time
};

struct RunConfig {
  Profile profile = Profile::kDesk;
  Paths paths;
  VocabSettings vocab;
  ModelSettings model;
  RetrievalSettings retrieval;
  train::TrainingConfig training;
  pipe::DecodeOptions decoding;
};

/// Model and training defaults for a profile. Desk: embedding 32, hidden
/// 64, no dropout. Full: embedding 300, hidden 500, dropout 0.3.
RunConfig defaults(Profile profile);

/// Parses TOML. A top-level `profile` key selects the defaults the rest of
/// the file overrides. Unknown tables or keys, wrong value types and
/// out-of-range values raise ConfigError. Relative paths resolve against
/// `base_dir`.
RunConfig parse(std::string_view toml_text, const std::filesystem::path& base_dir = {});
RunConfig load(const std::filesystem::path& path);

/// Deterministic JSON rendering of every setting (used for hashing).
std::string canonical_json(const RunConfig& config);

skel::SkeletonConfig skeleton_config(const RunConfig& config, std::size_t vocab_size);
resp::ResponseConfig response_config(const RunConfig& config, std::size_t vocab_size, bool joint);
train::CriticConfig critic_config(const RunConfig& config, std::size_t vocab_size);

}  // namespace s2r::config
