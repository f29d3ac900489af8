#pragma once

// Experiment orchestration: loads models and datasets, decodes every line
// under every requested method, scores the outputs and writes reports.
//
// Files written under the output directory:
//   metrics.tsv    method, dataset, metric, value
//   curves.tsv     method, dataset, iteration, metric, value (twist methods)
//   grid.tsv       lambda_f, lambda_g, metric, value (tune)
//   sweep.tsv      size, method, dataset, metric, value (sweep)
//   bench.tsv      method, seconds, relative_time, step_evaluations, relative_steps
//   failures.tsv   method, dataset, line, message
//   trace.tsv      method, dataset, line, iteration, pass, nbest, step_evaluations, micros
//   hyp/<dataset>.<method>.txt, nbest/<dataset>/<method>/<line>.nbest
// All but bench.tsv and trace.tsv (wall-clock values) are byte-identical for
// identical config and seed, whatever the worker count.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "twist/config.hpp"

namespace twist {

struct Dataset {
  std::string name;
  std::vector<SourceRecord> records;
  std::vector<std::vector<std::string>> references;  // per line, >= 1 each
};

Dataset load_dataset(const std::string& name, const DatasetDecl& decl);

/// Builds a scorer for a declaration. `corpus_override` replaces an n-gram
/// model's training corpus (used by subsampling sweeps).
ScorerPtr build_scorer(const ModelDecl& decl, const std::vector<std::string>* corpus_override = nullptr);

struct LoadedModels {
  ModelHandle f;
  ModelHandle g;
};

struct LineResult {
  std::string hypothesis;
  /// Final n-best list, rendered with format_nbest.
  std::string nbest;
  /// f's best surface output after each iteration (twist methods; t = 0 first).
  std::vector<std::string> iteration_outputs;
  std::string trace;  // format_trace lines (twist) or a single pass line
  std::size_t step_evaluations = 0;
  std::int64_t micros = 0;
  std::optional<std::string> error;
};

struct MethodResult {
  Method method = Method::IsolationF;
  std::string dataset;
  GuidanceConfig guidance;
  std::optional<std::size_t> subsample;
  std::vector<LineResult> lines;
  /// bleu, rouge-l-f1, rouge-l-r, rouge-l-p over non-failed lines, plus
  /// failures and step_evaluations.
  std::map<std::string, double> metrics;
  /// Per iteration t = 0..T: bleu and rouge-l-f1 of f's output (twist only).
  std::vector<std::map<std::string, double>> iteration_metrics;
  std::size_t step_evaluations = 0;
  std::size_t failures = 0;
  std::int64_t micros = 0;
};

struct RunReport {
  std::vector<MethodResult> results;
};

/// Decode one record under `method`. Decode failures are captured in the
/// returned LineResult.
LineResult decode_line(Method method, const LoadedModels& models, const SourceRecord& record, const BeamConfig& beam,
                       const GuidanceConfig& guidance);

/// Runs one method over one dataset with `workers` threads. `factory` is
/// called once per worker so that stateful scorers are not shared.
MethodResult run_method(Method method, const Dataset& dataset, const std::function<LoadedModels()>& factory,
                        const BeamConfig& beam, const GuidanceConfig& guidance, std::size_t workers);

void score_result(MethodResult& result, const Dataset& dataset);

/// Builds models and returns a per-worker factory. Models without per-use
/// state are built once and shared.
std::function<LoadedModels()> model_factory(const ExperimentConfig& config,
                                            const std::vector<std::string>* f_corpus = nullptr,
                                            const std::vector<std::string>* g_corpus = nullptr);

RunReport run_experiment(const ExperimentConfig& config);

struct GridCell {
  double lambda_f = 0;
  double lambda_g = 0;
  double value = 0;
};

struct TuneResult {
  double lambda_f = 0;
  double lambda_g = 0;
  std::vector<GridCell> cells;
};

/// Evaluates tune_method on the dev dataset for every (lambda_f, lambda_g)
/// pair of the grid and picks the best by dev_metric; cells within 1e-9 of
/// the best go to the smallest (lambda_f, lambda_g).
TuneResult tune_lambda(const ExperimentConfig& config);

struct BenchRow {
  Method method = Method::IsolationF;
  double seconds = 0;
  double relative_time = 0;
  std::size_t step_evaluations = 0;
  double relative_steps = 0;
};

/// Single-worker timing of every method on the first eval dataset, relative
/// to isolation-f.
std::vector<BenchRow> bench(const ExperimentConfig& config);

/// Deterministic subsample of `size` line indices out of `total`, ascending.
std::vector<std::size_t> subsample_indices(std::size_t total, std::size_t size, std::uint64_t seed);

/// Retrains the designated model on seeded subsamples and reruns all methods.
RunReport subsample_sweep(const ExperimentConfig& config);

// Report writers.
void write_report(const RunReport& report, const std::filesystem::path& dir);
std::string metrics_tsv(const RunReport& report);
std::string curves_tsv(const RunReport& report);
std::string grid_tsv(const TuneResult& result, const std::string& metric);
std::string sweep_tsv(const RunReport& report);
std::string bench_tsv(const std::vector<BenchRow>& rows);

std::vector<std::string> read_lines(const std::filesystem::path& path);

}  // namespace twist
