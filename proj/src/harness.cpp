#include "twist/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "twist/metrics.hpp"
#include "twist/persist.hpp"
#include "twist/remote_scorer.hpp"

namespace twist {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

std::string fixed(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string lambda_text(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

bool is_twist(Method m) { return m == Method::TwistFG || m == Method::TwistGF; }

const char* const kMetricOrder[] = {"bleu", "rouge-l-f1", "rouge-l-p", "rouge-l-r", "failures", "step_evaluations"};

std::string format_metric(const std::string& name, double v) {
  if (name == "failures" || name == "step_evaluations") return std::to_string(static_cast<std::uint64_t>(v));
  return fixed(v);
}

SpecPtr recipe_spec(const SpecRecipe& recipe, const std::vector<std::string>& corpus) {
  if (recipe.explicit_spec) return spec_from_json(*recipe.explicit_spec, recipe.base_dir);
  TokenizationScheme scheme;
  if (recipe.scheme == "bpe") scheme = learn_bpe(corpus, recipe.bpe_merges, recipe.marker);
  else if (recipe.scheme == "character") scheme = CharacterScheme{};
  else scheme = WhitespaceScheme{recipe.split_contractions};
  return make_spec(build_vocabulary(corpus, scheme), std::move(scheme), recipe.order);
}

std::map<std::string, double> surface_metrics(const std::vector<std::string>& hyps,
                                              const std::vector<std::vector<std::string>>& refs) {
  std::vector<EvalPair> pairs;
  for (std::size_t i = 0; i < hyps.size(); ++i) pairs.push_back({hyps[i], refs[i]});
  std::map<std::string, double> m{{"bleu", 0.0}, {"rouge-l-f1", 0.0}, {"rouge-l-p", 0.0}, {"rouge-l-r", 0.0}};
  if (pairs.empty()) return m;
  m["bleu"] = corpus_bleu(pairs);
  const auto r = rouge_l(pairs);
  m["rouge-l-f1"] = r.f1;
  m["rouge-l-p"] = r.precision;
  m["rouge-l-r"] = r.recall;
  return m;
}

}  // namespace

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

Dataset load_dataset(const std::string& name, const DatasetDecl& decl) {
  Dataset d;
  d.name = name;
  if (!decl.records.empty()) {
    std::size_t line_no = 0;
    for (const auto& line : read_lines(decl.records)) {
      ++line_no;
      if (normalize_whitespace(line).empty()) continue;
      json j;
      try {
        j = json::parse(line);
      } catch (const json::exception& e) {
        throw ConfigError(decl.records.string() + ":" + std::to_string(line_no) + ": " + e.what());
      }
      if (!j.is_object()) throw ConfigError(decl.records.string() + ":" + std::to_string(line_no) + ": not an object");
      SourceRecord record;
      for (const auto& [key, value] : j.items())
        if (value.is_string()) record[key] = value.get<std::string>();
      std::vector<std::string> refs;
      for (const auto& field : decl.reference_fields) {
        auto it = j.find(field);
        if (it == j.end()) throw ConfigError(decl.records.string() + ":" + std::to_string(line_no) + ": missing " + field);
        if (it->is_array()) {
          for (const auto& r : *it) refs.push_back(r.get<std::string>());
        } else {
          refs.push_back(it->get<std::string>());
        }
      }
      if (refs.empty()) throw ConfigError(decl.records.string() + ":" + std::to_string(line_no) + ": no reference");
      d.records.push_back(std::move(record));
      d.references.push_back(std::move(refs));
    }
    return d;
  }
  const auto sources = read_lines(decl.source);
  d.references.resize(sources.size());
  for (const auto& ref_path : decl.references) {
    const auto refs = read_lines(ref_path);
    if (refs.size() != sources.size())
      throw ConfigError("dataset '" + name + "': " + ref_path.string() + " is not line-aligned with its source");
    for (std::size_t i = 0; i < refs.size(); ++i) d.references[i].push_back(refs[i]);
  }
  for (const auto& s : sources) d.records.push_back({{"source", s}});
  return d;
}

ScorerPtr build_scorer(const ModelDecl& decl, const std::vector<std::string>* corpus_override) {
  switch (decl.kind) {
    case ModelDecl::Kind::NGram: {
      const auto corpus = corpus_override ? *corpus_override : read_lines(decl.corpus);
      if (corpus.empty()) throw ConfigError("training corpus " + decl.corpus.string() + " is empty");
      auto spec = recipe_spec(decl.spec, corpus);
      return std::make_shared<NGramModel>(train_ngram(corpus, std::move(spec), decl.ngram));
    }
    case ModelDecl::Kind::Table:
      return std::make_shared<TableScorer>(load_table_scorer(decl.path));
    case ModelDecl::Kind::ModelFile:
      return std::make_shared<NGramModel>(load_ngram(decl.path));
    case ModelDecl::Kind::Remote: {
      RemoteOptions options;
      options.top_n = decl.top_n;
      if (!decl.address.empty()) return RemoteScorer::connect(decl.address, options);
      return RemoteScorer::spawn(decl.command, options);
    }
  }
  throw ConfigError("unknown model kind");
}

std::function<LoadedModels()> model_factory(const ExperimentConfig& config, const std::vector<std::string>* f_corpus,
                                            const std::vector<std::string>* g_corpus) {
  auto shared = [](const ModelDecl& d, const std::vector<std::string>* corpus) -> ScorerPtr {
    return d.kind == ModelDecl::Kind::Remote ? nullptr : build_scorer(d, corpus);
  };
  ScorerPtr f = shared(config.f, f_corpus);
  ScorerPtr g = shared(config.g, g_corpus);
  return [f, g, f_decl = config.f, g_decl = config.g]() {
    return LoadedModels{{f ? f : build_scorer(f_decl), f_decl.view}, {g ? g : build_scorer(g_decl), g_decl.view}};
  };
}

LineResult decode_line(Method method, const LoadedModels& models, const SourceRecord& record, const BeamConfig& beam,
                       const GuidanceConfig& guidance) {
  LineResult line;
  const auto start = Clock::now();
  const bool f_first = method == Method::IsolationF || method == Method::RerankFG || method == Method::TwistFG ||
                       method == Method::Fusion;
  const ModelHandle& first = f_first ? models.f : models.g;
  const ModelHandle& second = f_first ? models.g : models.f;
  const ModelTextSpec& spec = first.scorer->spec();
  try {
    switch (method) {
      case Method::IsolationF:
      case Method::IsolationG: {
        auto set = isolation_decode(*first.scorer, first.view.apply(record), beam);
        line.hypothesis = decode_text(set.best().seq, spec);
        line.nbest = format_nbest(set, spec);
        line.step_evaluations = set.step_evaluations;
        break;
      }
      case Method::RerankFG:
      case Method::RerankGF: {
        auto r = rerank_decode({first, second, record, beam, guidance});
        line.hypothesis = decode_text(r.output, spec);
        line.nbest = format_nbest(r.initial, spec);
        line.step_evaluations = r.step_evaluations;
        break;
      }
      case Method::TwistFG:
      case Method::TwistGF: {
        auto r = twist_decode({first, second, record, beam, guidance});
        line.hypothesis = decode_text(r.output, spec);
        line.nbest = format_nbest(r.trace.passes.back().candidates, spec);
        line.step_evaluations = r.trace.step_evaluations();
        for (std::size_t t = 0; t < guidance.iterations; ++t)
          line.iteration_outputs.push_back(decode_text(r.trace.f_candidates(t).best().seq, spec));
        line.iteration_outputs.push_back(line.hypothesis);
        line.trace = format_trace(r.trace, to_string(method), "");
        break;
      }
      case Method::Fusion: {
        auto set = shallow_fusion_decode(first, second, record, beam);
        line.hypothesis = decode_text(set.best().seq, spec);
        line.nbest = format_nbest(set, spec);
        line.step_evaluations = set.step_evaluations;
        break;
      }
    }
  } catch (const DecodeFailure& e) {
    line.error = e.what();
  } catch (const TextError& e) {
    line.error = e.what();
  } catch (const ScoringError& e) {
    line.error = e.what();
  }
  line.micros = std::chrono::duration_cast<std::chrono::microseconds>(Clock::now() - start).count();
  return line;
}

MethodResult run_method(Method method, const Dataset& dataset, const std::function<LoadedModels()>& factory,
                        const BeamConfig& beam, const GuidanceConfig& guidance, std::size_t workers) {
  MethodResult result;
  result.method = method;
  result.dataset = dataset.name;
  result.guidance = guidance;
  result.lines.resize(dataset.records.size());

  const auto start = Clock::now();
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  auto work = [&] {
    try {
      const LoadedModels models = factory();
      for (std::size_t i = next++; i < dataset.records.size(); i = next++)
        result.lines[i] = decode_line(method, models, dataset.records[i], beam, guidance);
    } catch (...) {
      std::lock_guard lock(error_mutex);
      if (!error) error = std::current_exception();
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(workers, dataset.records.size()));
  if (threads == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  if (error) std::rethrow_exception(error);
  result.micros = std::chrono::duration_cast<std::chrono::microseconds>(Clock::now() - start).count();
  score_result(result, dataset);
  return result;
}

void score_result(MethodResult& result, const Dataset& dataset) {
  std::vector<std::string> hyps;
  std::vector<std::vector<std::string>> refs;
  result.failures = 0;
  result.step_evaluations = 0;
  for (std::size_t i = 0; i < result.lines.size(); ++i) {
    const auto& line = result.lines[i];
    result.step_evaluations += line.step_evaluations;
    if (line.error) {
      ++result.failures;
      continue;
    }
    hyps.push_back(line.hypothesis);
    refs.push_back(dataset.references[i]);
  }
  result.metrics = surface_metrics(hyps, refs);
  result.metrics["failures"] = static_cast<double>(result.failures);
  result.metrics["step_evaluations"] = static_cast<double>(result.step_evaluations);

  result.iteration_metrics.clear();
  if (!is_twist(result.method)) return;
  for (std::size_t t = 0; t <= result.guidance.iterations; ++t) {
    std::vector<std::string> h;
    std::vector<std::vector<std::string>> r;
    for (std::size_t i = 0; i < result.lines.size(); ++i) {
      const auto& line = result.lines[i];
      if (line.error || line.iteration_outputs.size() <= t) continue;
      h.push_back(line.iteration_outputs[t]);
      r.push_back(dataset.references[i]);
    }
    result.iteration_metrics.push_back(surface_metrics(h, r));
  }
}

namespace {

void check_fusion(const ExperimentConfig& config, const LoadedModels& models) {
  if (std::find(config.methods.begin(), config.methods.end(), Method::Fusion) == config.methods.end()) return;
  if (models.f.scorer->spec().id() != models.g.scorer->spec().id())
    throw ConfigError("fusion requires shared vocabulary: models f and g have different text specs");
}

std::vector<Dataset> eval_datasets(const ExperimentConfig& config) {
  std::vector<Dataset> out;
  for (const auto& name : config.eval_datasets) out.push_back(load_dataset(name, config.datasets.at(name)));
  return out;
}

}  // namespace

RunReport run_experiment(const ExperimentConfig& config) {
  const auto factory = model_factory(config);
  check_fusion(config, factory());
  RunReport report;
  for (const auto& dataset : eval_datasets(config))
    for (Method m : config.methods)
      report.results.push_back(run_method(m, dataset, factory, config.beam, config.guidance, config.workers));
  return report;
}

TuneResult tune_lambda(const ExperimentConfig& config) {
  const std::string dev = config.dev_dataset.empty() ? config.eval_datasets.front() : config.dev_dataset;
  const Dataset dataset = load_dataset(dev, config.datasets.at(dev));
  const auto factory = model_factory(config);
  const std::string metric = config.dev_metric == "bleu" ? "bleu" : "rouge-l-f1";

  TuneResult result;
  std::optional<std::size_t> best;
  for (double lf : config.lambda_grid) {
    for (double lg : config.lambda_grid) {
      GuidanceConfig guidance = config.guidance;
      guidance.lambda_f = lf;
      guidance.lambda_g = lg;
      auto r = run_method(config.tune_method, dataset, factory, config.beam, guidance, config.workers);
      result.cells.push_back({lf, lg, r.metrics.at(metric)});
      if (!best || result.cells.back().value > result.cells[*best].value + 1e-9) best = result.cells.size() - 1;
    }
  }
  result.lambda_f = result.cells[*best].lambda_f;
  result.lambda_g = result.cells[*best].lambda_g;
  return result;
}

std::vector<BenchRow> bench(const ExperimentConfig& config) {
  const std::string name = config.eval_datasets.front();
  const Dataset dataset = load_dataset(name, config.datasets.at(name));
  const auto factory = model_factory(config);
  check_fusion(config, factory());

  std::vector<Method> methods{Method::IsolationF};
  for (Method m : config.methods)
    if (std::find(methods.begin(), methods.end(), m) == methods.end()) methods.push_back(m);

  std::vector<BenchRow> rows;
  for (Method m : methods) {
    const auto start = Clock::now();
    auto r = run_method(m, dataset, factory, config.beam, config.guidance, 1);
    const double seconds = std::chrono::duration<double>(Clock::now() - start).count();
    rows.push_back({m, seconds, 0.0, r.step_evaluations, 0.0});
  }
  const auto& base = rows.front();
  for (auto& row : rows) {
    row.relative_time = base.seconds > 0 ? row.seconds / base.seconds : 0.0;
    row.relative_steps =
        base.step_evaluations ? static_cast<double>(row.step_evaluations) / static_cast<double>(base.step_evaluations) : 0.0;
  }
  rows.front().relative_time = 1.0;
  return rows;
}

std::vector<std::size_t> subsample_indices(std::size_t total, std::size_t size, std::uint64_t seed) {
  if (size > total) throw ConfigError("subsample size " + std::to_string(size) + " exceeds corpus size " + std::to_string(total));
  std::vector<std::size_t> idx(total);
  for (std::size_t i = 0; i < total; ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < size; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng() % (total - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(size);
  std::sort(idx.begin(), idx.end());
  return idx;
}

RunReport subsample_sweep(const ExperimentConfig& config) {
  const ModelDecl& decl = config.subsample_model == "f" ? config.f : config.g;
  if (decl.kind != ModelDecl::Kind::NGram) throw ConfigError("subsampling needs an n-gram model trained from a corpus");
  if (config.subsample_sizes.empty()) throw ConfigError("subsample sizes are empty");
  const auto corpus = read_lines(decl.corpus);
  for (auto size : config.subsample_sizes)
    if (size == 0 || size > corpus.size())
      throw ConfigError("subsample size " + std::to_string(size) + " must be in [1, " + std::to_string(corpus.size()) + "]");
  const auto datasets = eval_datasets(config);

  RunReport report;
  for (auto size : config.subsample_sizes) {
    std::vector<std::string> sample;
    for (auto i : subsample_indices(corpus.size(), size, config.seed)) sample.push_back(corpus[i]);
    const bool is_f = config.subsample_model == "f";
    const auto factory = model_factory(config, is_f ? &sample : nullptr, is_f ? nullptr : &sample);
    check_fusion(config, factory());
    for (const auto& dataset : datasets) {
      for (Method m : config.methods) {
        auto r = run_method(m, dataset, factory, config.beam, config.guidance, config.workers);
        r.subsample = size;
        report.results.push_back(std::move(r));
      }
    }
  }
  return report;
}

// ---------------------------------------------------------------- Writers

std::string metrics_tsv(const RunReport& report) {
  std::ostringstream out;
  out << "method\tdataset\tmetric\tvalue\n";
  for (const auto& r : report.results)
    for (const char* name : kMetricOrder)
      out << to_string(r.method) << '\t' << r.dataset << '\t' << name << '\t' << format_metric(name, r.metrics.at(name))
          << '\n';
  return out.str();
}

std::string curves_tsv(const RunReport& report) {
  std::ostringstream out;
  out << "method\tdataset\titeration\tmetric\tvalue\n";
  for (const auto& r : report.results)
    for (std::size_t t = 0; t < r.iteration_metrics.size(); ++t)
      for (const char* name : {"bleu", "rouge-l-f1"})
        out << to_string(r.method) << '\t' << r.dataset << '\t' << t << '\t' << name << '\t'
            << fixed(r.iteration_metrics[t].at(name)) << '\n';
  return out.str();
}

std::string grid_tsv(const TuneResult& result, const std::string& metric) {
  std::ostringstream out;
  out << "lambda_f\tlambda_g\tmetric\tvalue\tselected\n";
  for (const auto& c : result.cells)
    out << lambda_text(c.lambda_f) << '\t' << lambda_text(c.lambda_g) << '\t' << metric << '\t' << fixed(c.value) << '\t'
        << (c.lambda_f == result.lambda_f && c.lambda_g == result.lambda_g ? 1 : 0) << '\n';
  return out.str();
}

std::string sweep_tsv(const RunReport& report) {
  std::ostringstream out;
  out << "size\tmethod\tdataset\tmetric\tvalue\n";
  for (const auto& r : report.results)
    for (const char* name : kMetricOrder)
      out << r.subsample.value_or(0) << '\t' << to_string(r.method) << '\t' << r.dataset << '\t' << name << '\t'
          << format_metric(name, r.metrics.at(name)) << '\n';
  return out.str();
}

std::string bench_tsv(const std::vector<BenchRow>& rows) {
  std::ostringstream out;
  out << "method\tseconds\trelative_time\tstep_evaluations\trelative_steps\n";
  for (const auto& r : rows)
    out << to_string(r.method) << '\t' << fixed(r.seconds) << '\t' << fixed(r.relative_time) << '\t' << r.step_evaluations
        << '\t' << fixed(r.relative_steps) << '\n';
  return out.str();
}

void write_report(const RunReport& report, const fs::path& dir) {
  fs::create_directories(dir);
  write_file(dir / "metrics.tsv", metrics_tsv(report));
  write_file(dir / "curves.tsv", curves_tsv(report));

  std::ostringstream failures, trace;
  failures << "method\tdataset\tline\tmessage\n";
  trace << "method\tdataset\tline\titeration\tpass\tnbest\tstep_evaluations\tmicros\n";
  for (const auto& r : report.results) {
    const std::string method(to_string(r.method));
    const std::string prefix = r.subsample ? "size" + std::to_string(*r.subsample) + "/" : "";
    std::ostringstream hyps;
    for (std::size_t i = 0; i < r.lines.size(); ++i) {
      const auto& line = r.lines[i];
      hyps << line.hypothesis << '\n';
      const std::string nbest_ref = prefix + "nbest/" + r.dataset + "/" + method + "/" + std::to_string(i) + ".nbest";
      write_file(dir / nbest_ref, line.nbest);
      if (line.error) failures << method << '\t' << r.dataset << '\t' << i << '\t' << *line.error << '\n';
      if (!line.trace.empty()) {
        // format_trace fields: method, iteration, pass, ref, steps, micros.
        std::istringstream lines(line.trace);
        for (std::string t; std::getline(lines, t);) {
          std::vector<std::string> f;
          std::istringstream fields(t);
          for (std::string x; std::getline(fields, x, '\t');) f.push_back(x);
          trace << method << '\t' << r.dataset << '\t' << i << '\t' << f.at(1) << '\t' << f.at(2) << '\t' << nbest_ref
                << f.at(3) << '\t' << f.at(4) << '\t' << f.at(5) << '\n';
        }
      } else {
        trace << method << '\t' << r.dataset << '\t' << i << "\t0\t" << (line.error ? "failed" : "single") << '\t'
              << nbest_ref << '\t' << line.step_evaluations << '\t' << line.micros << '\n';
      }
    }
    write_file(dir / (prefix + "hyp/" + r.dataset + "." + method + ".txt"), hyps.str());
  }
  write_file(dir / "failures.tsv", failures.str());
  write_file(dir / "trace.tsv", trace.str());
}

}  // namespace twist
