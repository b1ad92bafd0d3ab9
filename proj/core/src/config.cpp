#include "s2r/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>
#include <toml.hpp>

#include "s2r/error.hpp"

namespace s2r::config {

RunConfig defaults(Profile profile) {
  RunConfig c;
  c.profile = profile;
  if (profile == Profile::kFull) {
    c.model.embedding = 300;
    c.model.hidden = 500;
    c.model.decoder_hidden = 500;
    c.model.attention = 300;
    c.model.critic_hidden = 500;
    c.model.dropout = 0.3;
    c.vocab.max_size = 50000;
    c.decoding.strategy = pipe::Strategy::kBeam;
  }
  return c;
}

namespace {

std::string where(std::string_view table, std::string_view key) {
  return table.empty() ? std::string(key) : std::string(table) + "." + std::string(key);
}

/// Walks one table, rejecting keys nobody claimed.
class Reader {
 public:
  Reader(const toml::table* table, std::string name) : table_(table), name_(std::move(name)) {}

  template <typename T>
  void get(std::string_view key, T& out) {
    claimed_.insert(std::string(key));
    if (!table_) return;
    const toml::node* node = table_->get(key);
    if (!node) return;
    if constexpr (std::is_same_v<T, bool>) {
      auto v = node->value<bool>();
      if (!node->is_boolean() || !v) fail(key, "a boolean");
      out = *v;
    } else if constexpr (std::is_same_v<T, double>) {
      if (!node->is_number()) fail(key, "a number");
      out = *node->value<double>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!node->is_integer()) fail(key, "an integer");
      const auto v = *node->value<std::int64_t>();
      if (v < 0) throw ConfigError(where(name_, key) + " must be non-negative");
      out = static_cast<T>(v);
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!node->is_string()) fail(key, "a string");
      out = *node->value<std::string>();
    } else {
      static_assert(sizeof(T) == 0, "unsupported setting type");
    }
  }

  void claim(std::string_view key) { claimed_.insert(std::string(key)); }

  void path(std::string_view key, std::filesystem::path& out, const std::filesystem::path& base) {
    std::string s;
    bool present = table_ && table_->get(key);
    get(key, s);
    if (present) out = std::filesystem::path(s).is_absolute() || base.empty() ? std::filesystem::path(s) : base / s;
  }

  void finish() const {
    if (!table_) return;
    for (const auto& [k, _] : *table_)
      if (!claimed_.count(std::string(k.str())))
        throw ConfigError("unknown setting \"" + where(name_, k.str()) + "\"");
  }

 private:
  [[noreturn]] void fail(std::string_view key, const char* expected) const {
    throw ConfigError(where(name_, key) + " must be " + expected);
  }

  const toml::table* table_;
  std::string name_;
  std::set<std::string> claimed_;
};

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

void validate(const RunConfig& c) {
  require(c.model.embedding > 0 && c.model.hidden > 0 && c.model.decoder_hidden > 0 && c.model.attention > 0 &&
              c.model.critic_hidden > 0,
          "model sizes must be positive");
  require(c.model.layers >= 1 && c.model.skeleton_layers >= 1, "model layers must be >= 1");
  require(c.model.dropout >= 0.0 && c.model.dropout < 1.0, "model.dropout must lie in [0, 1)");
  require(c.vocab.max_size >= text::Vocab::kNumReserved, "vocab.max_size must be at least 5");
  require(c.retrieval.k >= 1, "retrieval.k must be >= 1");
  require(c.retrieval.test_k >= 1, "retrieval.test_k must be >= 1");
  require(0.0 <= c.retrieval.lo && c.retrieval.lo <= c.retrieval.hi && c.retrieval.hi <= 1.0,
          "retrieval band must satisfy 0 <= lo <= hi <= 1");
  require(c.training.eta >= 0.0, "training.eta must be non-negative");
  require(c.training.lr > 0.0, "training.lr must be positive");
  require(c.training.rl_lr > 0.0, "training.rl_lr must be positive");
  require(c.training.batch >= 1, "training.batch must be >= 1");
  require(c.training.baseline_decay >= 0.0 && c.training.baseline_decay < 1.0,
          "training.baseline_decay must lie in [0, 1)");
  require(c.training.clip >= 0.0, "training.clip must be non-negative");
  require(c.training.holdout >= 0.0 && c.training.holdout < 1.0, "training.holdout must lie in [0, 1)");
  require(c.decoding.width >= 1, "decoding.width must be >= 1");
  require(c.decoding.nbest >= 1, "decoding.nbest must be >= 1");
}

}  // namespace

RunConfig parse(std::string_view toml_text, const std::filesystem::path& base_dir) {
  toml::table root;
  try {
    root = toml::parse(toml_text);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "config parse error at line " << e.source().begin.line << ": " << e.description();
    throw ConfigError(msg.str());
  }

  Reader top(&root, "");
  std::string profile = "desk";
  top.get("profile", profile);
  if (profile != "desk" && profile != "full")
    throw ConfigError("profile must be \"desk\" or \"full\", got \"" + profile + "\"");
  RunConfig c = defaults(profile == "full" ? Profile::kFull : Profile::kDesk);

  auto sub = [&](const char* name) {
    top.claim(name);
    const toml::node* n = root.get(name);
    if (n && !n->is_table()) throw ConfigError(std::string(name) + " must be a table");
    return Reader(n ? n->as_table() : nullptr, name);
  };

  {
    auto r = sub("paths");
    r.path("corpus", c.paths.corpus, base_dir);
    r.path("stoplist", c.paths.stoplist, base_dir);
    r.path("workdir", c.paths.workdir, base_dir);
    r.finish();
  }
  {
    auto r = sub("vocab");
    r.get("max_size", c.vocab.max_size);
    r.get("min_freq", c.vocab.min_freq);
    r.get("lowercase", c.vocab.lowercase);
    r.finish();
  }
  {
    auto r = sub("model");
    r.get("embedding", c.model.embedding);
    r.get("hidden", c.model.hidden);
    r.get("layers", c.model.layers);
    r.get("skeleton_layers", c.model.skeleton_layers);
    r.get("decoder_hidden", c.model.decoder_hidden);
    r.get("attention", c.model.attention);
    r.get("critic_hidden", c.model.critic_hidden);
    r.get("dropout", c.model.dropout);
    r.finish();
  }
  {
    auto r = sub("retrieval");
    r.get("k", c.retrieval.k);
    r.get("lo", c.retrieval.lo);
    r.get("hi", c.retrieval.hi);
    r.get("max_quads", c.retrieval.max_quads);
    r.get("test_k", c.retrieval.test_k);
    r.finish();
  }
  {
    auto r = sub("training");
    std::string mode(train::mode_name(c.training.mode));
    r.get("mode", mode);
    c.training.mode = train::parse_mode(mode);
    r.get("eta", c.training.eta);
    r.get("lr", c.training.lr);
    r.get("rl_lr", c.training.rl_lr);
    r.get("batch", c.training.batch);
    r.get("epochs", c.training.epochs);
    r.get("seed", c.training.seed);
    r.get("baseline_decay", c.training.baseline_decay);
    r.get("clip", c.training.clip);
    r.get("critic_finetune", c.training.critic_finetune);
    r.get("max_len", c.training.max_len);
    r.get("holdout", c.training.holdout);
    r.finish();
  }
  {
    auto r = sub("decoding");
    std::string strategy = c.decoding.strategy == pipe::Strategy::kBeam ? "beam" : "greedy";
    r.get("strategy", strategy);
    if (strategy == "greedy") c.decoding.strategy = pipe::Strategy::kGreedy;
    else if (strategy == "beam") c.decoding.strategy = pipe::Strategy::kBeam;
    else throw ConfigError("decoding.strategy must be \"greedy\" or \"beam\", got \"" + strategy + "\"");
    std::string mode = c.decoding.mode == pipe::RetrievalMode::kMultiple ? "multiple" : "single";
    r.get("mode", mode);
    if (mode == "single") c.decoding.mode = pipe::RetrievalMode::kSingle;
    else if (mode == "multiple") c.decoding.mode = pipe::RetrievalMode::kMultiple;
    else throw ConfigError("decoding.mode must be \"single\" or \"multiple\", got \"" + mode + "\"");
    r.get("width", c.decoding.width);
    r.get("max_len", c.decoding.max_len);
    r.get("mmi", c.decoding.mmi);
    r.get("nbest", c.decoding.nbest);
    r.finish();
  }
  top.finish();
  validate(c);
  return c;
}

RunConfig load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse(text.str(), path.parent_path());
}

std::string canonical_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["profile"] = c.profile == Profile::kFull ? "full" : "desk";
  j["paths"] = {{"corpus", c.paths.corpus.generic_string()},
                {"stoplist", c.paths.stoplist.generic_string()},
                {"workdir", c.paths.workdir.generic_string()}};
  j["vocab"] = {{"max_size", c.vocab.max_size}, {"min_freq", c.vocab.min_freq}, {"lowercase", c.vocab.lowercase}};
  j["model"] = {{"embedding", c.model.embedding},     {"hidden", c.model.hidden},
                {"layers", c.model.layers},           {"skeleton_layers", c.model.skeleton_layers},
                {"decoder_hidden", c.model.decoder_hidden}, {"attention", c.model.attention},
                {"critic_hidden", c.model.critic_hidden},   {"dropout", c.model.dropout}};
  j["retrieval"] = {{"k", c.retrieval.k},
                    {"lo", c.retrieval.lo},
                    {"hi", c.retrieval.hi},
                    {"max_quads", c.retrieval.max_quads},
                    {"test_k", c.retrieval.test_k}};
  const auto& t = c.training;
  j["training"] = {{"mode", train::mode_name(t.mode)},
                   {"eta", t.eta},
                   {"lr", t.lr},
                   {"rl_lr", t.rl_lr},
                   {"batch", t.batch},
                   {"epochs", t.epochs},
                   {"seed", t.seed},
                   {"baseline_decay", t.baseline_decay},
                   {"clip", t.clip},
                   {"critic_finetune", t.critic_finetune},
                   {"max_len", t.max_len},
                   {"holdout", t.holdout}};
  const auto& d = c.decoding;
  j["decoding"] = {{"strategy", d.strategy == pipe::Strategy::kBeam ? "beam" : "greedy"},
                   {"mode", d.mode == pipe::RetrievalMode::kMultiple ? "multiple" : "single"},
                   {"width", d.width},
                   {"max_len", d.max_len},
                   {"mmi", d.mmi},
                   {"nbest", d.nbest}};
  return j.dump();
}

skel::SkeletonConfig skeleton_config(const RunConfig& c, std::size_t vocab_size) {
  skel::SkeletonConfig s;
  s.vocab = vocab_size;
  s.embedding = c.model.embedding;
  s.hidden = c.model.hidden;
  s.attention = c.model.attention;
  s.layers = c.model.skeleton_layers;
  s.dropout = c.model.dropout;
  return s;
}

resp::ResponseConfig response_config(const RunConfig& c, std::size_t vocab_size, bool joint) {
  resp::ResponseConfig r;
  r.vocab = vocab_size;
  r.embedding = c.model.embedding;
  r.hidden = c.model.hidden;
  r.layers = c.model.layers;
  r.decoder_hidden = c.model.decoder_hidden;
  r.dropout = c.model.dropout;
  r.external_skeleton_dim = joint ? 2 * c.model.hidden : 0;
  return r;
}

train::CriticConfig critic_config(const RunConfig& c, std::size_t vocab_size) {
  return {vocab_size, c.model.embedding, c.model.critic_hidden};
}

}  // namespace s2r::config
