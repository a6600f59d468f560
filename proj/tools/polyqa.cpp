// polyqa command-line driver.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "polyqa/polyqa.hpp"

namespace {

using polyqa::PipelineConfig;
using polyqa::UsageError;

struct CommonFlags {
  std::string config;
  std::optional<uint64_t> seed;
  std::optional<std::size_t> k;
  std::optional<std::size_t> iterations;
  std::optional<std::string> encoder;
  std::optional<std::string> generator;
  std::optional<std::string> endpoint;
  std::string out;
  std::string input;
};

void add_common(CLI::App* sub, CommonFlags& f, const char* input_help) {
  sub->add_option("--config", f.config, "Configuration file (dotted key = value lines)");
  sub->add_option("--seed", f.seed, "Seed for every seeded component");
  sub->add_option("--k", f.k, "Retrieval depth");
  sub->add_option("--iterations", f.iterations, "Mining iterations T");
  sub->add_option("--encoder", f.encoder, "Encoder kind")
      ->check(CLI::IsMember({"toy-hash", "toy-trainable", "remote"}));
  sub->add_option("--generator", f.generator, "Generator kind")->check(CLI::IsMember({"toy-extractive", "remote"}));
  sub->add_option("--endpoint", f.endpoint, "Model sidecar base URL");
  sub->add_option("--out", f.out, "Primary output path");
  if (input_help) sub->add_option("input", f.input, input_help);
  sub->allow_extras();
}

// Applies `--section.key value` and `--section.key=value` pass-through flags.
void apply_dotted(PipelineConfig& config, const std::vector<std::string>& extras) {
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& arg = extras[i];
    if (arg.rfind("--", 0) != 0) throw UsageError("unexpected argument '" + arg + "'");
    std::string key = arg.substr(2), value;
    if (auto eq = key.find('='); eq != std::string::npos) {
      value = key.substr(eq + 1);
      key.resize(eq);
    } else {
      if (i + 1 >= extras.size()) throw UsageError("flag --" + key + " needs a value");
      value = extras[++i];
    }
    config.set(key, value);
  }
}

PipelineConfig build_config(const std::string& command, const CommonFlags& f, const std::vector<std::string>& extras) {
  PipelineConfig config = f.config.empty() ? PipelineConfig{} : polyqa::load_config(f.config);
  apply_dotted(config, extras);
  if (f.seed) config.set("seed", std::to_string(*f.seed));
  if (f.k) {
    config.retrieve_k = *f.k;
    config.eval_k = *f.k;
    if (command == "answer") config.answer_k = *f.k;
    if (command == "mine") config.mining.retrieve_k = *f.k;
  }
  if (f.iterations) config.mining.max_iterations = *f.iterations;
  if (f.encoder) config.encoder.kind = *f.encoder;
  if (f.generator) config.generator.kind = *f.generator;
  if (f.endpoint) {
    config.encoder.endpoint = *f.endpoint;
    config.generator.endpoint = *f.endpoint;
  }
  auto& p = config.paths;
  if (!f.input.empty()) {
    if (command == "ingest") p.corpus = f.input;
    if (command == "retrieve" || command == "answer") p.questions = f.input;
    if (command == "mine") p.instances = f.input;
  }
  if (!f.out.empty()) {
    if (command == "ingest") p.passages = f.out;
    if (command == "embed") p.index = f.out;
    if (command == "retrieve") p.retrievals = f.out;
    if (command == "answer") p.predictions = f.out;
    if (command == "mine") p.training_set = f.out;
    if (command == "eval") p.report = f.out;
  }
  config.validate();
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-lingual retrieve-then-generate question answering engine"};
  app.require_subcommand(1);

  struct Sub {
    const char* name;
    const char* help;
    const char* input;
  };
  const std::vector<Sub> subs = {
      {"ingest", "Segment and filter a JSON-lines article dump into passages", "Article dump (paths.corpus)"},
      {"embed", "Encode passages and save the dense index", nullptr},
      {"retrieve", "Retrieve the top-k passages for each question", "Questions file (paths.questions)"},
      {"answer", "Retrieve, prompt and generate an answer per question", "Questions file (paths.questions)"},
      {"mine", "Run iterative training-data mining and encoder updates", "QA instances file (paths.instances)"},
      {"eval", "Score predictions and retrievals against gold answers", nullptr},
  };
  std::vector<CommonFlags> flags(subs.size());
  std::vector<CLI::App*> commands;
  for (std::size_t i = 0; i < subs.size(); ++i) {
    auto* sub = app.add_subcommand(subs[i].name, subs[i].help);
    add_common(sub, flags[i], subs[i].input);
    commands.push_back(sub);
  }

  polyqa::pipeline::E2eOptions e2e;
  std::string e2e_out;
  auto* toy = app.add_subcommand("e2e-toy", "Run the seeded toy benchmark and print the recall trajectory");
  toy->add_option("--seed", e2e.seed, "Seed");
  toy->add_option("--iterations", e2e.updates, "Encoder updates (initial fit plus mining rounds)");
  toy->add_option("--k", e2e.k, "Recall depth");
  toy->add_option("--entities", e2e.world.entities, "Entities in the synthetic world");
  toy->add_option("--cross-lingual-fraction", e2e.world.cross_lingual_fraction,
                  "Share of questions whose evidence is only in another language");
  toy->add_option("--dim", e2e.dim, "Embedding dimension");
  toy->add_option("--init-scale", e2e.init_scale, "Uniform init half-width");
  toy->add_option("--epochs", e2e.train.epochs, "Epochs per update");
  toy->add_option("--lr", e2e.train.learning_rate, "Learning rate");
  toy->add_option("--out", e2e_out, "Write the JSON report here");

  if (argc > 1 && argv[1][0] != '-' && !app.get_subcommand_no_throw(argv[1])) {
    std::cerr << polyqa::error_prefix(polyqa::ErrorKind::kUsage) << " unknown subcommand '" << argv[1] << "'\n"
              << app.help();
    return 1;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << polyqa::error_prefix(polyqa::ErrorKind::kUsage) << " " << e.what() << "\n" << app.help();
    return 1;
  }

  try {
    if (toy->parsed()) {
      if (e2e.updates == 0 || e2e.k == 0 || e2e.dim == 0) throw UsageError("--iterations, --k and --dim must be >= 1");
      return polyqa::pipeline::cmd_e2e_toy(e2e, e2e_out, std::cout);
    }
    for (std::size_t i = 0; i < subs.size(); ++i) {
      if (!commands[i]->parsed()) continue;
      const std::string name = subs[i].name;
      const PipelineConfig config = build_config(name, flags[i], commands[i]->remaining());
      namespace pl = polyqa::pipeline;
      if (name == "ingest") return pl::cmd_ingest(config, std::cout);
      if (name == "embed") return pl::cmd_embed(config, std::cout);
      if (name == "retrieve") return pl::cmd_retrieve(config, std::cout);
      if (name == "answer") return pl::cmd_answer(config, std::cout);
      if (name == "mine") return pl::cmd_mine(config, std::cout);
      if (name == "eval") return pl::cmd_eval(config, std::cout);
    }
  } catch (const polyqa::Error& e) {
    std::cerr << polyqa::error_prefix(e.kind()) << " " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << polyqa::error_prefix(polyqa::ErrorKind::kData) << " " << e.what() << "\n";
    return 2;
  }
  return 1;
}
