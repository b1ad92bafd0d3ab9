#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"
#include "s2r/error.hpp"

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitMissingInput = 2;

}  // namespace

int main(int argc, char** argv) {
  using namespace s2r;

  CLI::App app{"Skeleton-to-response dialogue generation"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("-c,--config", config_path, "TOML run configuration")->required();

  app.add_subcommand("index", "load the corpus, build the vocabulary and both retrieval indexes");
  app.add_subcommand("quads", "retrieve prototypes by response similarity and write training quadruples");
  app.add_subcommand("skeletons", "label each quadruple with its proxy skeleton");

  cli::TrainOptions train_opts;
  auto* train = app.add_subcommand("train", "train one stage (ske_mle, res_mle, joint, critic, cascade)");
  train->add_option("--mode", train_opts.mode, "overrides training.mode");
  train->add_flag("--inverse", train_opts.inverse, "train the response-to-query model used for MMI reranking");

  cli::GenerateOptions gen_opts;
  auto* generate = app.add_subcommand("generate", "generate responses for a set of queries");
  generate->add_option("--model", gen_opts.model, "joint or cascade (default: cascade if trained)");
  generate->add_option("--queries", gen_opts.queries, "file with one query per line (default: corpus queries)");
  generate->add_option("--limit", gen_opts.limit, "number of corpus queries when --queries is not given");
  generate->add_option("-o,--output", gen_opts.output, "output file (default: <workdir>/generations.jsonl)");

  std::string chat_model;
  auto* chat = app.add_subcommand("chat", "interactive query -> skeleton -> response loop");
  chat->add_option("--model", chat_model, "joint or cascade");

  cli::EvalOptions eval_opts;
  auto* eval = app.add_subcommand("eval", "diversity, skeleton and copy-rate report");
  eval->add_option("--model", eval_opts.model, "checkpoint used for skeleton metrics");
  eval->add_option("--input", eval_opts.input, "generations file (default: <workdir>/generations.jsonl)");

  CLI11_PARSE(app, argc, argv);

  try {
    const auto cfg = config::load(config_path);
    const auto* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    if (name == "index") return cli::run_index(cfg);
    if (name == "quads") return cli::run_quads(cfg);
    if (name == "skeletons") return cli::run_skeletons(cfg);
    if (name == "train") return cli::run_train(cfg, train_opts);
    if (name == "generate") return cli::run_generate(cfg, gen_opts);
    if (name == "chat") return cli::run_chat(cfg, chat_model, std::cin, std::cout);
    if (name == "eval") return cli::run_eval(cfg, eval_opts);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const PreconditionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitMissingInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
