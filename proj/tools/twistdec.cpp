// twistdec: train n-gram scorers, decode, and run experiments.
//
// Exit status: 0 success, 1 configuration error, 2 runtime failure.

#include <cstdio>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "twist/harness.hpp"
#include "twist/persist.hpp"

using namespace twist;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool need_config = true) {
  auto* opt = cmd->add_option("--config", c.config, "experiment config (JSON)");
  if (need_config) opt->required();
  cmd->add_option("--seed", c.seed, "subsampling seed (overrides the config)");
  cmd->add_option("--workers", c.workers, "decode worker threads (overrides the config)");
  cmd->add_option("--out", c.out, "output directory (overrides the config)");
}

ExperimentConfig load(const Common& c) {
  auto config = load_config(c.config);
  if (c.seed) config.seed = *c.seed;
  if (c.workers) {
    if (*c.workers < 1) throw ConfigError("--workers must be at least 1");
    config.workers = *c.workers;
  }
  if (!c.out.empty()) config.output_dir = c.out;
  return config;
}

struct TrainArgs {
  std::string model = "f";
  std::string corpus;
  std::string output;
  std::size_t order = 3;
  double k_add = 0.1;
  double copy_bonus = 0.0;
  std::string scheme = "whitespace";
  std::size_t merges = 0;
  std::string marker = "@@";
  std::string direction = "l2r";
  bool split_contractions = false;
};

int run_train(const Common& c, const TrainArgs& a) {
  ModelDecl decl;
  if (!c.config.empty()) {
    const auto config = load_config(c.config);
    if (a.model != "f" && a.model != "g") throw ConfigError("--model must be f or g");
    decl = a.model == "f" ? config.f : config.g;
    if (decl.kind != ModelDecl::Kind::NGram) throw ConfigError("model " + a.model + " is not an n-gram model");
  } else {
    if (a.corpus.empty()) throw ConfigError("train needs --corpus or --config");
    decl.corpus = a.corpus;
    decl.ngram = {a.order, a.k_add, a.copy_bonus};
    if (a.order < 1 || !(a.k_add > 0)) throw ConfigError("order must be >= 1 and k-add positive");
    decl.spec.scheme = a.scheme;
    decl.spec.bpe_merges = a.merges;
    decl.spec.marker = a.marker;
    decl.spec.split_contractions = a.split_contractions;
    try {
      decl.spec.order = parse_generation_order(a.direction);
    } catch (const TextError& e) {
      throw ConfigError(e.what());
    }
  }
  const std::string output = a.output.empty() ? c.out : a.output;
  if (output.empty()) throw ConfigError("train needs --out FILE");
  auto scorer = build_scorer(decl);
  save_ngram(dynamic_cast<const NGramModel&>(*scorer), output);
  std::cerr << "wrote " << output << " (" << scorer->spec().vocabulary().size() << " types)\n";
  return 0;
}

struct DecodeArgs {
  std::string method = "twist-fg";
  std::optional<double> lambda_f, lambda_g;
  std::optional<std::size_t> iterations;
  bool nbest = false;
};

int run_decode(const Common& c, const DecodeArgs& a) {
  auto config = load(c);
  const Method method = parse_method(a.method);
  if (a.lambda_f) config.guidance.lambda_f = *a.lambda_f;
  if (a.lambda_g) config.guidance.lambda_g = *a.lambda_g;
  if (a.iterations) config.guidance.iterations = *a.iterations;
  if (config.guidance.lambda_f < 0 || config.guidance.lambda_g < 0 || config.guidance.iterations < 1)
    throw ConfigError("guidance needs non-negative lambdas and iterations >= 1");
  const LoadedModels models = model_factory(config)();
  if (method == Method::Fusion && models.f.scorer->spec().id() != models.g.scorer->spec().id())
    throw ConfigError("fusion requires shared vocabulary: models f and g have different text specs");

  std::size_t failures = 0, line_no = 0;
  for (std::string line; std::getline(std::cin, line);) {
    ++line_no;
    const auto r = decode_line(method, models, {{"source", line}}, config.beam, config.guidance);
    if (r.error) {
      ++failures;
      std::cerr << "line " << line_no << ": " << *r.error << '\n';
    }
    if (a.nbest) std::cout << r.nbest << '\n';
    else std::cout << r.hypothesis << '\n';
    std::cout.flush();
  }
  return failures ? 2 : 0;
}

int run_experiment_cmd(const Common& c) {
  const auto config = load(c);
  const auto report = run_experiment(config);
  write_report(report, config.output_dir);
  std::cout << metrics_tsv(report);
  return 0;
}

int run_tune(const Common& c) {
  const auto config = load(c);
  const auto result = tune_lambda(config);
  const std::string metric = config.dev_metric == "bleu" ? "bleu" : "rouge-l-f1";
  const std::string grid = grid_tsv(result, metric);
  write_file(config.output_dir / "grid.tsv", grid);
  std::cout << grid;
  std::printf("selected\tlambda_f=%g\tlambda_g=%g\n", result.lambda_f, result.lambda_g);
  return 0;
}

int run_bench(const Common& c) {
  const auto config = load(c);
  const std::string table = bench_tsv(bench(config));
  write_file(config.output_dir / "bench.tsv", table);
  std::cout << table;
  return 0;
}

int run_sweep(const Common& c) {
  const auto config = load(c);
  const auto report = subsample_sweep(config);
  write_report(report, config.output_dir);
  const std::string table = sweep_tsv(report);
  write_file(config.output_dir / "sweep.tsv", table);
  std::cout << table;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Twist decoding of two next-token scorers"};
  app.require_subcommand(1);

  Common common;
  TrainArgs train;
  DecodeArgs decode;

  auto* train_cmd = app.add_subcommand("train", "train an n-gram scorer and save it");
  add_common(train_cmd, common, false);
  train_cmd->add_option("--model", train.model, "which model of --config to train (f or g)");
  train_cmd->add_option("--corpus", train.corpus, "training corpus, one sentence per line");
  train_cmd->add_option("--output,-o", train.output, "model file to write (or --out)");
  train_cmd->add_option("--order", train.order, "n-gram order");
  train_cmd->add_option("--k-add", train.k_add, "add-k smoothing constant");
  train_cmd->add_option("--copy-bonus", train.copy_bonus, "log-score bonus for tokens present in the source");
  train_cmd->add_option("--scheme", train.scheme, "whitespace | character | bpe")
      ->check(CLI::IsMember({"whitespace", "character", "bpe"}));
  train_cmd->add_option("--merges", train.merges, "number of BPE merges to learn");
  train_cmd->add_option("--marker", train.marker, "BPE continuation marker");
  train_cmd->add_option("--direction", train.direction, "l2r | r2l")->check(CLI::IsMember({"l2r", "r2l"}));
  train_cmd->add_flag("--split-contractions", train.split_contractions, "split English clitics (n't, 's, ...)");

  auto* decode_cmd = app.add_subcommand("decode", "decode stdin lines with one method");
  add_common(decode_cmd, common);
  decode_cmd->add_option("--method", decode.method, "decoding method");
  decode_cmd->add_option("--lambda-f", decode.lambda_f);
  decode_cmd->add_option("--lambda-g", decode.lambda_g);
  decode_cmd->add_option("--iterations", decode.iterations);
  decode_cmd->add_flag("--nbest", decode.nbest, "print the final n-best list instead of the best output");

  auto* experiment_cmd = app.add_subcommand("experiment", "run every method on every eval dataset");
  add_common(experiment_cmd, common);
  auto* tune_cmd = app.add_subcommand("tune", "grid-search lambda_f and lambda_g on the dev dataset");
  add_common(tune_cmd, common);
  auto* bench_cmd = app.add_subcommand("bench", "single-worker timing relative to isolation-f");
  add_common(bench_cmd, common);
  auto* sweep_cmd = app.add_subcommand("sweep", "retrain on seeded subsamples and rerun");
  add_common(sweep_cmd, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (train_cmd->parsed()) return run_train(common, train);
    if (decode_cmd->parsed()) return run_decode(common, decode);
    if (experiment_cmd->parsed()) return run_experiment_cmd(common);
    if (tune_cmd->parsed()) return run_tune(common);
    if (bench_cmd->parsed()) return run_bench(common);
    if (sweep_cmd->parsed()) return run_sweep(common);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
