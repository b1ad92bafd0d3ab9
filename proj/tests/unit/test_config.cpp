#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "s2r/config.hpp"
#include "s2r/error.hpp"

using namespace s2r;
using namespace s2r::config;

TEST_CASE("profile defaults") {
  const auto desk = defaults(Profile::kDesk);
  CHECK(desk.model.embedding == 32);
  CHECK(desk.model.hidden == 64);
  CHECK(desk.model.dropout == 0.0);
  CHECK(desk.decoding.strategy == pipe::Strategy::kGreedy);

  const auto big = defaults(Profile::kFull);
  CHECK(big.model.embedding == 300);
  CHECK(big.model.hidden == 500);
  CHECK(big.model.decoder_hidden == 500);
  CHECK(big.model.dropout == doctest::Approx(0.3));
  CHECK(big.vocab.max_size == 50000);
  CHECK(big.decoding.strategy == pipe::Strategy::kBeam);
}

TEST_CASE("empty document gives desk defaults") {
  CHECK(canonical_json(parse("")) == canonical_json(defaults(Profile::kDesk)));
}

TEST_CASE("profile key selects defaults and later keys override") {
  const auto c = parse("profile = \"full\"\n[model]\nhidden = 128\n");
  CHECK(c.profile == Profile::kFull);
  CHECK(c.model.hidden == 128);
  CHECK(c.model.embedding == 300);
}

TEST_CASE("overrides in every table") {
  const auto c = parse(R"(
[vocab]
max_size = 100
min_freq = 2
lowercase = false
[model]
embedding = 8
layers = 1
dropout = 0.25
[retrieval]
k = 5
lo = 0.2
hi = 0.8
max_quads = 7
[training]
mode = "ske_mle"
eta = 0.5
lr = 0.01
epochs = 3
seed = 99
[decoding]
strategy = "beam"
mode = "multiple"
width = 4
nbest = 2
)");
  CHECK(c.vocab.max_size == 100);
  CHECK(c.vocab.min_freq == 2);
  CHECK_FALSE(c.vocab.lowercase);
  CHECK(c.model.embedding == 8);
  CHECK(c.model.layers == 1);
  CHECK(c.model.dropout == 0.25);
  CHECK(c.retrieval.k == 5);
  CHECK(c.retrieval.lo == 0.2);
  CHECK(c.retrieval.hi == 0.8);
  CHECK(c.retrieval.max_quads == 7);
  CHECK(c.training.mode == train::Mode::kSkeMle);
  CHECK(c.training.eta == 0.5);
  CHECK(c.training.lr == 0.01);
  CHECK(c.training.epochs == 3);
  CHECK(c.training.seed == 99);
  CHECK(c.decoding.strategy == pipe::Strategy::kBeam);
  CHECK(c.decoding.mode == pipe::RetrievalMode::kMultiple);
  CHECK(c.decoding.width == 4);
  CHECK(c.decoding.nbest == 2);
}

TEST_CASE("integer literal accepted where a float is expected") {
  CHECK(parse("[training]\neta = 2\n").training.eta == 2.0);
}

TEST_CASE("rejections") {
  CHECK_THROWS_AS(parse("bogus = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse("[bogus]\nx = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse("[model]\nhiden = 3\n"), ConfigError);
  CHECK_THROWS_AS(parse("model = 3\n"), ConfigError);
  CHECK_THROWS_AS(parse("profile = \"huge\"\n"), ConfigError);
  CHECK_THROWS_AS(parse("[model]\nhidden = \"big\"\n"), ConfigError);
  CHECK_THROWS_AS(parse("[model]\nhidden = 1.5\n"), ConfigError);
  CHECK_THROWS_AS(parse("[model]\nhidden = -1\n"), ConfigError);
  CHECK_THROWS_AS(parse("[model]\nhidden = 0\n"), ConfigError);
  CHECK_THROWS_AS(parse("[model]\ndropout = 1.0\n"), ConfigError);
  CHECK_THROWS_AS(parse("[vocab]\nlowercase = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse("[retrieval]\nlo = 0.8\nhi = 0.2\n"), ConfigError);
  CHECK_THROWS_AS(parse("[retrieval]\nhi = 1.5\n"), ConfigError);
  CHECK_THROWS_AS(parse("[training]\neta = -0.1\n"), ConfigError);
  CHECK_THROWS_AS(parse("[training]\nlr = 0\n"), ConfigError);
  CHECK_THROWS_AS(parse("[training]\nmode = \"sideways\"\n"), Error);
  CHECK_THROWS_AS(parse("[decoding]\nstrategy = \"sample\"\n"), ConfigError);
  CHECK_THROWS_AS(parse("[decoding]\nwidth = 0\n"), ConfigError);
  CHECK_THROWS_AS(parse("[model\n"), ConfigError);
}

TEST_CASE("error messages name the offending key") {
  try {
    parse("[model]\nhiden = 3\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("model.hiden") != std::string::npos);
  }
}

TEST_CASE("relative paths resolve against the config directory") {
  const auto c = parse("[paths]\ncorpus = \"pairs.tsv\"\nworkdir = \"/abs/w\"\n", "/base/dir");
  CHECK(c.paths.corpus == std::filesystem::path("/base/dir/pairs.tsv"));
  CHECK(c.paths.workdir == std::filesystem::path("/abs/w"));
}

TEST_CASE("load reads from disk and resolves against the file location") {
  const auto dir = std::filesystem::temp_directory_path() / "s2r_test_config";
  std::filesystem::create_directories(dir);
  const auto file = dir / "run.toml";
  std::ofstream(file) << "[paths]\nstoplist = \"stop.txt\"\n";
  const auto c = load(file);
  CHECK(c.paths.stoplist == dir / "stop.txt");
  CHECK_THROWS_AS(load(dir / "missing.toml"), ConfigError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("canonical json is deterministic and sensitive to settings") {
  const auto a = parse("[model]\nhidden = 10\n");
  const auto b = parse("[model]\nhidden = 10\n");
  const auto c = parse("[model]\nhidden = 11\n");
  CHECK(canonical_json(a) == canonical_json(b));
  CHECK(canonical_json(a) != canonical_json(c));
}

TEST_CASE("model configs derived from settings") {
  const auto c = parse("[model]\nembedding = 6\nhidden = 9\nskeleton_layers = 2\n");
  const auto s = skeleton_config(c, 40);
  CHECK(s.vocab == 40);
  CHECK(s.embedding == 6);
  CHECK(s.hidden == 9);
  CHECK(s.layers == 2);
  CHECK(response_config(c, 40, false).external_skeleton_dim == 0);
  CHECK(response_config(c, 40, true).external_skeleton_dim == 18);
  CHECK(critic_config(c, 40).hidden == c.model.critic_hidden);
}
