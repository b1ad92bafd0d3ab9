#include "commands.hpp"

#include <unistd.h>

#include <fstream>
#include <iostream>

#include <nlohmann/json.hpp>

#include "s2r/dataset.hpp"
#include "s2r/error.hpp"
#include "s2r/evalkit.hpp"
#include "s2r/pipeline.hpp"
#include "s2r/training.hpp"
#include "workdir.hpp"

namespace s2r::cli {

namespace {

using nlohmann::ordered_json;

std::string config_hash(const config::RunConfig& cfg) { return sha256_hex(config::canonical_json(cfg)); }

std::vector<DialoguePair> read_pairs(const Workdir& wd) {
  Workdir::require(wd.pairs(), "index");
  return data::load_pairs(wd.pairs(), false).pairs;
}

text::Vocab read_vocab(const Workdir& wd) {
  Workdir::require(wd.vocab(), "index");
  return text::Vocab::load(wd.vocab());
}

text::StopList read_stoplist(const config::RunConfig& cfg) {
  if (cfg.paths.stoplist.empty()) {
    std::cerr << "warning: paths.stoplist is not set; proxy skeletons will keep stop words\n";
    return {};
  }
  if (!fs::exists(cfg.paths.stoplist))
    throw PreconditionError("stop list " + cfg.paths.stoplist.string() + " does not exist");
  return text::StopList::load(cfg.paths.stoplist);
}

std::vector<train::Example> labeled_examples(const Workdir& wd, const text::Vocab& vocab) {
  Workdir::require(wd.skeletons(), "skeletons");
  const auto quads = data::read_labeled(wd.skeletons());
  std::vector<train::Example> out;
  out.reserve(quads.size());
  for (const auto& q : quads) out.push_back(train::make_example(vocab, q));
  return out;
}

std::uint64_t component_seed(const config::RunConfig& cfg, std::uint64_t component) {
  return cfg.training.seed * 0x9E3779B97F4A7C15ULL + component;
}

train::ModelSet open_or_new(const fs::path& path, const text::Vocab& vocab) {
  if (!fs::exists(path)) {
    train::ModelSet m;
    m.vocab = vocab;
    return m;
  }
  auto m = train::load_checkpoint(path);
  if (m.vocab.fingerprint() != vocab.fingerprint())
    throw PreconditionError(path.string() + " was trained with a different vocabulary; remove it or rerun `s2r index`");
  return m;
}

train::Hooks make_hooks(std::ofstream& log) {
  train::Hooks hooks;
  hooks.on_step = [&log](const train::StepLog& s) { log << train::format_step_log(s) << '\n'; };
  hooks.on_epoch = [](const train::EpochStats& e) {
    std::cerr << "epoch " << e.epoch << ":";
    if (e.mean_loss != 0) std::cerr << " loss " << e.mean_loss;
    if (e.token_accuracy > 0) std::cerr << " token acc " << e.token_accuracy;
    if (e.skeleton_accuracy > 0) std::cerr << " skeleton acc " << e.skeleton_accuracy;
    if (e.mean_reward != 0) std::cerr << " reward " << e.mean_reward;
    std::cerr << '\n';
    return true;
  };
  return hooks;
}

/// Checkpoint name for inference: an explicit choice, else cascade when it
/// exists, else joint.
std::string pick_model(const Workdir& wd, const std::string& requested) {
  if (!requested.empty()) {
    if (requested != "joint" && requested != "cascade")
      throw ConfigError("--model must be \"joint\" or \"cascade\", got \"" + requested + "\"");
    return requested;
  }
  return fs::exists(wd.checkpoint("cascade")) ? "cascade" : "joint";
}

struct Inference {
  train::ModelSet models;
  std::optional<train::ModelSet> inverse;
  std::vector<DialoguePair> pairs;
  data::InvertedIndex index;
  std::unique_ptr<pipe::Generator> generator;
};

Inference open_inference(const config::RunConfig& cfg, const Workdir& wd, const std::string& requested) {
  const std::string name = pick_model(wd, requested);
  const auto ckpt = wd.checkpoint(name);
  Workdir::require(ckpt, "train --mode " + std::string(name == "joint" ? "joint" : "ske_mle") + "");
  Workdir::require(wd.query_index(), "index");
  Inference inf;
  inf.models = train::load_checkpoint(ckpt);
  inf.models.require_pretrained({"ske", "res"});
  inf.pairs = read_pairs(wd);
  inf.index = data::InvertedIndex::load(wd.query_index());
  const resp::ResponseGenerator* inverse = nullptr;
  if (cfg.decoding.mmi) {
    Workdir::require(wd.checkpoint("inverse"), "train --mode res_mle --inverse");
    inf.inverse = train::load_checkpoint(wd.checkpoint("inverse"));
    inf.inverse->require_pretrained({"inv"});
    if (inf.inverse->vocab.fingerprint() != inf.models.vocab.fingerprint())
      throw PreconditionError("the inverse model was trained with a different vocabulary");
    inverse = &*inf.inverse->inverse;
  }
  inf.generator = std::make_unique<pipe::Generator>(inf.models.vocab, *inf.models.ske, *inf.models.res,
                                                    inf.models.joint, inverse);
  return inf;
}

std::vector<pipe::Retrieved> retrieve(const Inference& inf, const TokenSeq& query, std::size_t k,
                                      std::int64_t exclude) {
  std::vector<pipe::Retrieved> out;
  for (const auto& hit : inf.index.retrieve(query, k, exclude)) {
    const auto& p = inf.pairs.at(static_cast<std::size_t>(hit.pair_id));
    out.push_back({p.query, p.response, hit.score, hit.pair_id});
  }
  return out;
}

}  // namespace

// --- index / quads / skeletons ------------------------------------------------

int run_index(const config::RunConfig& cfg) {
  if (cfg.paths.corpus.empty()) throw ConfigError("paths.corpus is not set");
  if (!fs::exists(cfg.paths.corpus)) throw PreconditionError("corpus " + cfg.paths.corpus.string() + " does not exist");
  Workdir wd(cfg.paths.workdir);
  const auto loaded = data::load_pairs(cfg.paths.corpus, cfg.vocab.lowercase);
  if (loaded.pairs.empty()) throw Error("corpus " + cfg.paths.corpus.string() + " has no usable pairs");
  if (loaded.skipped) std::cerr << "skipped " << loaded.skipped << " records with an empty query or response\n";
  data::save_pairs(wd.pairs(), loaded.pairs);
  text::build_vocab(loaded.pairs, cfg.vocab.max_size, cfg.vocab.min_freq).save(wd.vocab());
  data::InvertedIndex::build(loaded.pairs, data::IndexSide::kResponse).save(wd.response_index());
  data::InvertedIndex::build(loaded.pairs, data::IndexSide::kQuery).save(wd.query_index());
  wd.record("index", config_hash(cfg), {{"corpus", cfg.paths.corpus}},
            {{"pairs", wd.pairs()},
             {"vocab", wd.vocab()},
             {"response_index", wd.response_index()},
             {"query_index", wd.query_index()}});
  std::cerr << "indexed " << loaded.pairs.size() << " pairs into " << wd.root().string() << "\n";
  return 0;
}

int run_quads(const config::RunConfig& cfg) {
  Workdir wd(cfg.paths.workdir);
  const auto pairs = read_pairs(wd);
  Workdir::require(wd.response_index(), "index");
  const auto index = data::InvertedIndex::load(wd.response_index());
  data::QuadOptions opts;
  opts.k = cfg.retrieval.k;
  opts.lo = cfg.retrieval.lo;
  opts.hi = cfg.retrieval.hi;
  opts.max_quads = cfg.retrieval.max_quads;
  opts.seed = cfg.training.seed;
  const auto quads = data::build_quadruples(pairs, index, opts);
  data::write_quads(wd.quads(), quads);
  if (quads.empty())
    std::cerr << "warning: no retrieved response fell inside the similarity band; quads.jsonl is empty\n";
  wd.record("quads", config_hash(cfg), {{"pairs", wd.pairs()}, {"response_index", wd.response_index()}},
            {{"quads", wd.quads()}});
  std::cerr << "wrote " << quads.size() << " quadruples\n";
  return 0;
}

int run_skeletons(const config::RunConfig& cfg) {
  Workdir wd(cfg.paths.workdir);
  Workdir::require(wd.quads(), "quads");
  const auto stoplist = read_stoplist(cfg);
  const auto quads = data::read_quads(wd.quads());
  std::vector<data::LabeledQuad> labeled;
  labeled.reserve(quads.size());
  std::size_t kept = 0, total = 0;
  for (const auto& q : quads) {
    auto proxy = data::make_proxy_skeleton(q.r, q.rr, stoplist);
    for (int m : proxy.labels) kept += m;
    total += proxy.labels.size();
    labeled.push_back({q, std::move(proxy)});
  }
  data::write_labeled(wd.skeletons(), labeled);
  std::map<std::string, fs::path> inputs{{"quads", wd.quads()}};
  if (!cfg.paths.stoplist.empty()) inputs["stoplist"] = cfg.paths.stoplist;
  wd.record("skeletons", config_hash(cfg), inputs, {{"skeletons", wd.skeletons()}});
  std::cerr << "labeled " << labeled.size() << " quadruples; " << kept << " of " << total << " prototype tokens kept\n";
  return 0;
}

// --- train --------------------------------------------------------------------

int run_train(const config::RunConfig& base, const TrainOptions& options) {
  config::RunConfig cfg = base;
  if (options.mode) cfg.training.mode = train::parse_mode(*options.mode);
  const auto mode = cfg.training.mode;
  if (options.inverse && mode != train::Mode::kResMle)
    throw ConfigError("--inverse trains a response-to-query model and requires --mode res_mle");

  Workdir wd(cfg.paths.workdir);
  const auto vocab = read_vocab(wd);
  const std::size_t V = vocab.size();
  const std::string run_name = std::string(train::mode_name(mode)) + (options.inverse ? ".inverse" : "");
  std::map<std::string, fs::path> inputs{{"vocab", wd.vocab()}};

  fs::path ckpt;
  train::ModelSet models;
  std::vector<train::Example> examples;

  // Check every prerequisite before the log file is touched.
  if (options.inverse) {
    ckpt = wd.checkpoint("inverse");
    inputs["pairs"] = wd.pairs();
    for (const auto& p : read_pairs(wd)) examples.push_back(train::make_pair_example(vocab, p.response, p.query));
    models.vocab = vocab;
  } else if (mode == train::Mode::kJoint) {
    ckpt = wd.checkpoint("joint");
    inputs["skeletons"] = wd.skeletons();
    examples = labeled_examples(wd, vocab);
    models.vocab = vocab;
  } else {
    ckpt = wd.checkpoint("cascade");
    if (mode == train::Mode::kResMle && !fs::exists(wd.skeletons())) {
      std::cerr << "no skeletons.jsonl; training the response generator on plain pairs\n";
      inputs["pairs"] = wd.pairs();
      for (const auto& p : read_pairs(wd)) examples.push_back(train::make_pair_example(vocab, p.query, p.response));
    } else {
      inputs["skeletons"] = wd.skeletons();
      examples = labeled_examples(wd, vocab);
    }
    if (mode == train::Mode::kCritic || mode == train::Mode::kCascade) {
      Workdir::require(ckpt, "train --mode ske_mle");
      inputs["checkpoint"] = ckpt;
    }
    models = open_or_new(ckpt, vocab);
    if (mode == train::Mode::kCritic) models.require_pretrained({"ske", "res"});
    if (mode == train::Mode::kCascade) models.require_pretrained({"ske", "res", "critic"});
  }
  if (examples.empty()) throw PreconditionError("no training examples; check the quads and skeletons stages");

  std::ofstream log(wd.train_log(run_name), std::ios::trunc);
  auto hooks = make_hooks(log);
  const auto& tc = cfg.training;

  if (options.inverse) {
    models.inverse.emplace(config::response_config(cfg, V, false), component_seed(cfg, 4), "inv");
    train::train_response(*models.inverse, examples, tc, hooks);
    models.trained.insert("inv");
  } else {
    switch (mode) {
      case train::Mode::kJoint:
        models.ske.emplace(config::skeleton_config(cfg, V), component_seed(cfg, 1));
        models.res.emplace(config::response_config(cfg, V, true), component_seed(cfg, 2));
        models.joint = true;
        train::train_joint(*models.ske, *models.res, examples, tc, hooks);
        models.trained.insert({"ske", "res"});
        std::cerr << "skeleton accuracy " << train::skeleton_accuracy(*models.ske, examples)
                  << ", response token accuracy " << train::response_accuracy(*models.res, examples, &*models.ske)
                  << "\n";
        break;
      case train::Mode::kSkeMle:
        models.ske.emplace(config::skeleton_config(cfg, V), component_seed(cfg, 1));
        train::train_skeleton(*models.ske, examples, tc, hooks);
        models.trained.insert("ske");
        std::cerr << "skeleton accuracy " << train::skeleton_accuracy(*models.ske, examples) << "\n";
        break;
      case train::Mode::kResMle:
        models.res.emplace(config::response_config(cfg, V, false), component_seed(cfg, 2));
        train::train_response(*models.res, examples, tc, hooks);
        models.trained.insert("res");
        std::cerr << "response token accuracy " << train::response_accuracy(*models.res, examples) << "\n";
        break;
      case train::Mode::kCritic: {
        const auto candidates = train::generate_candidates(*models.ske, *models.res, examples, tc.max_len);
        models.critic.emplace(config::critic_config(cfg, V), component_seed(cfg, 3));
        const auto result = train::train_critic(*models.critic, examples, candidates, tc, hooks);
        models.trained.insert("critic");
        std::cerr << "critic pick accuracy " << result.heldout_accuracy << " on " << result.heldout << " examples\n";
        break;
      }
      case train::Mode::kCascade: {
        const auto result = train::train_cascade(models, examples, tc, hooks);
        models.trained.insert("cascade");
        std::cerr << "cascade: " << result.rewards.size() << " sampled rollouts\n";
        break;
      }
    }
  }
  log.close();
  train::save_checkpoint(models, ckpt);
  wd.record("train." + run_name, config_hash(cfg), inputs, {{"checkpoint", ckpt}, {"log", wd.train_log(run_name)}});
  std::cerr << "saved " << ckpt.string() << "\n";
  return 0;
}

// --- generate / chat ------------------------------------------------------------

int run_generate(const config::RunConfig& cfg, const GenerateOptions& options) {
  Workdir wd(cfg.paths.workdir);
  auto inf = open_inference(cfg, wd, options.model);

  struct Probe {
    TokenSeq query;
    std::int64_t exclude = -1;
  };
  std::vector<Probe> probes;
  std::map<std::string, fs::path> inputs{{"checkpoint", wd.checkpoint(pick_model(wd, options.model))},
                                         {"query_index", wd.query_index()},
                                         {"pairs", wd.pairs()}};
  if (!options.queries.empty()) {
    std::ifstream in(options.queries);
    if (!in) throw PreconditionError("cannot read queries file " + options.queries);
    std::string line;
    while (std::getline(in, line)) {
      auto q = text::tokenize(line, cfg.vocab.lowercase);
      if (!q.empty()) probes.push_back({std::move(q), -1});
    }
    inputs["queries"] = options.queries;
  } else {
    // Corpus queries, never retrieving their own pair.
    for (std::size_t i = 0; i < inf.pairs.size() && probes.size() < options.limit; ++i)
      probes.push_back({inf.pairs[i].query, inf.pairs[i].id});
  }

  const fs::path out_path = options.output.empty() ? wd.generations() : fs::path(options.output);
  std::ofstream out(out_path, std::ios::trunc);
  if (!out) throw Error("cannot write " + out_path.string());
  std::size_t written = 0, skipped = 0;
  for (const auto& probe : probes) {
    const auto retrieved = retrieve(inf, probe.query, cfg.retrieval.test_k, probe.exclude);
    if (retrieved.empty()) {
      ++skipped;
      continue;
    }
    const auto g = inf.generator->generate(probe.query, retrieved, cfg.decoding);
    const auto& proto = retrieved[g.chosen];
    ordered_json j;
    j["q"] = text::join(probe.query);
    j["rq"] = text::join(proto.rq);
    j["rr"] = text::join(proto.rr);
    j["skeleton"] = text::join(g.skeleton);
    j["response"] = text::join(g.response);
    j["logprob"] = g.logprob;
    j["gate_mean"] = g.gate_mean;
    out << j.dump() << '\n';
    ++written;
  }
  out.close();
  if (skipped) std::cerr << "warning: " << skipped << " queries shared no words with the index and were skipped\n";
  std::map<std::string, fs::path> outputs{{"generations", out_path}};
  wd.record("generate", config_hash(cfg), inputs, outputs);
  std::cerr << "wrote " << written << " generations to " << out_path.string() << "\n";
  return 0;
}

int run_chat(const config::RunConfig& cfg, const std::string& model, std::istream& in, std::ostream& out) {
  Workdir wd(cfg.paths.workdir);
  auto inf = open_inference(cfg, wd, model);
  const bool interactive = isatty(STDIN_FILENO) && &in == &std::cin;
  std::string line;
  while (true) {
    if (interactive) out << "> " << std::flush;
    if (!std::getline(in, line)) break;
    const auto q = text::tokenize(line, cfg.vocab.lowercase);
    if (q.empty()) continue;
    if (q.size() == 1 && (q[0] == ":q" || q[0] == ":quit")) break;
    const auto retrieved = retrieve(inf, q, cfg.retrieval.test_k, -1);
    if (retrieved.empty()) {
      out << "(nothing similar in the index)\n";
      continue;
    }
    const auto g = inf.generator->generate(q, retrieved, cfg.decoding);
    out << "retrieved: " << text::join(retrieved[g.chosen].rr) << "\n"
        << "skeleton:  " << text::join(g.skeleton) << "\n"
        << "response:  " << text::join(g.response) << "\n";
  }
  return 0;
}

// --- eval -------------------------------------------------------------------------

int run_eval(const config::RunConfig& cfg, const EvalOptions& options) {
  Workdir wd(cfg.paths.workdir);
  const fs::path input = options.input.empty() ? wd.generations() : fs::path(options.input);
  Workdir::require(input, "generate");

  std::vector<TokenSeq> responses, queries, retrieved;
  std::vector<double> similarity;
  std::ifstream in(input);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      queries.push_back(text::tokenize(j.at("q").get<std::string>(), false));
      const auto rq = text::tokenize(j.at("rq").get<std::string>(), false);
      retrieved.push_back(text::tokenize(j.at("rr").get<std::string>(), false));
      responses.push_back(text::tokenize(j.at("response").get<std::string>(), false));
      similarity.push_back(text::jaccard(queries.back(), rq));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(input.string() + " line " + std::to_string(lineno) + ": " + e.what());
    }
  }

  eval::Report report;
  report.count = responses.size();
  report.dist1 = eval::dist_n(responses, 1);
  report.dist2 = eval::dist_n(responses, 2);
  try {
    report.dist1_no_query = eval::dist_n_excluding_query(responses, queries, 1);
    report.dist2_no_query = eval::dist_n_excluding_query(responses, queries, 2);
  } catch (const Error&) {
    // every response token also occurs in its query
  }
  report.copy_buckets = eval::copy_rate_report(responses, retrieved, similarity);

  std::map<std::string, fs::path> inputs{{"generations", input}};
  const std::string name = pick_model(wd, options.model);
  if (fs::exists(wd.skeletons()) && fs::exists(wd.checkpoint(name))) {
    const auto models = train::load_checkpoint(wd.checkpoint(name));
    if (models.ske && models.trained.count("ske")) {
      const auto examples = labeled_examples(wd, models.vocab);
      std::vector<std::vector<int>> predicted, gold;
      for (const auto& ex : examples) {
        predicted.push_back(skel::decide_mask(models.ske->mask_probs(ex.ske)).labels);
        gold.push_back(ex.labels);
      }
      report.skeleton = eval::skeleton_metrics(predicted, gold);
      report.has_skeleton = true;
      inputs["skeletons"] = wd.skeletons();
      inputs["checkpoint"] = wd.checkpoint(name);
    }
  }

  {
    std::ofstream out(wd.report_json(), std::ios::trunc);
    out << eval::report_json(report);
    std::ofstream csv(wd.report_csv(), std::ios::trunc);
    csv << eval::buckets_csv(report.copy_buckets);
  }
  wd.record("eval", config_hash(cfg), inputs, {{"report_json", wd.report_json()}, {"report_csv", wd.report_csv()}});
  std::cout << eval::report_table(report);
  return 0;
}

}  // namespace s2r::cli
