#include "twist/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace twist {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

SpecRecipe parse_recipe(const json& j, const fs::path& base) {
  SpecRecipe r;
  r.base_dir = base;
  if (j.contains("vocabulary") || j.contains("vocabulary_file")) {
    r.explicit_spec = j;
    return r;
  }
  check_keys(j, {"scheme", "split_contractions", "merges", "marker", "order"}, "model spec");
  r.scheme = j.value("scheme", r.scheme);
  if (r.scheme != "whitespace" && r.scheme != "character" && r.scheme != "bpe")
    throw ConfigError("unknown tokenization scheme '" + r.scheme + "'");
  r.split_contractions = j.value("split_contractions", false);
  r.bpe_merges = j.value("merges", std::size_t{0});
  r.marker = j.value("marker", r.marker);
  r.order = parse_generation_order(j.value("order", std::string("l2r")));
  return r;
}

ModelDecl parse_model(const json& j, const fs::path& base, const std::string& name) {
  const std::string where = "model '" + name + "'";
  ModelDecl m;
  const auto type = j.value("type", std::string("ngram"));
  if (j.contains("source_view")) {
    const auto& v = j.at("source_view");
    m.view.fields = v.is_string() ? std::vector<std::string>{v.get<std::string>()} : v.get<std::vector<std::string>>();
    if (m.view.fields.empty()) throw ConfigError(where + " has an empty source_view");
  }
  if (type == "ngram") {
    check_keys(j, {"type", "corpus", "order", "k_add", "copy_bonus", "spec", "source_view"}, where);
    m.kind = ModelDecl::Kind::NGram;
    if (!j.contains("corpus")) throw ConfigError(where + " needs a training corpus");
    m.corpus = resolve(base, j.at("corpus").get<std::string>());
    m.ngram.order = j.value("order", m.ngram.order);
    m.ngram.k_add = j.value("k_add", m.ngram.k_add);
    m.ngram.copy_bonus = j.value("copy_bonus", m.ngram.copy_bonus);
    if (m.ngram.order < 1) throw ConfigError(where + ": order must be at least 1");
    if (!(m.ngram.k_add > 0)) throw ConfigError(where + ": k_add must be positive");
    if (j.contains("spec")) m.spec = parse_recipe(j.at("spec"), base);
  } else if (type == "table" || type == "model") {
    check_keys(j, {"type", "path", "source_view"}, where);
    m.kind = type == "table" ? ModelDecl::Kind::Table : ModelDecl::Kind::ModelFile;
    if (!j.contains("path")) throw ConfigError(where + " needs a path");
    m.path = resolve(base, j.at("path").get<std::string>());
  } else if (type == "remote") {
    check_keys(j, {"type", "address", "command", "top_n", "source_view"}, where);
    m.kind = ModelDecl::Kind::Remote;
    m.address = j.value("address", std::string());
    if (j.contains("command")) m.command = j.at("command").get<std::vector<std::string>>();
    if (m.address.empty() == m.command.empty()) throw ConfigError(where + " needs exactly one of address or command");
    m.top_n = j.value("top_n", std::size_t{0});
  } else {
    throw ConfigError(where + " has unknown type '" + type + "'");
  }
  return m;
}

DatasetDecl parse_dataset(const json& j, const fs::path& base, const std::string& name) {
  const std::string where = "dataset '" + name + "'";
  check_keys(j, {"source", "references", "records", "reference_fields"}, where);
  DatasetDecl d;
  if (j.contains("records")) {
    d.records = resolve(base, j.at("records").get<std::string>());
    d.reference_fields = j.value("reference_fields", std::vector<std::string>{"reference"});
    if (d.reference_fields.empty()) throw ConfigError(where + " needs at least one reference field");
  } else {
    if (!j.contains("source") || !j.contains("references"))
      throw ConfigError(where + " needs source and references files, or records");
    d.source = resolve(base, j.at("source").get<std::string>());
    const auto& refs = j.at("references");
    for (const auto& r : refs.is_string() ? json::array({refs}) : refs) d.references.push_back(resolve(base, r.get<std::string>()));
    if (d.references.empty()) throw ConfigError(where + " needs at least one reference file");
  }
  return d;
}

}  // namespace

std::string_view to_string(Method method) {
  switch (method) {
    case Method::IsolationF: return "isolation-f";
    case Method::IsolationG: return "isolation-g";
    case Method::RerankFG: return "rerank-fg";
    case Method::RerankGF: return "rerank-gf";
    case Method::TwistFG: return "twist-fg";
    case Method::TwistGF: return "twist-gf";
    case Method::Fusion: return "fusion";
  }
  return "?";
}

Method parse_method(std::string_view text) {
  for (auto m : {Method::IsolationF, Method::IsolationG, Method::RerankFG, Method::RerankGF, Method::TwistFG,
                 Method::TwistGF, Method::Fusion})
    if (to_string(m) == text) return m;
  throw ConfigError("unknown method '" + std::string(text) + "'");
}

ExperimentConfig parse_config(const json& j, const fs::path& base_dir) {
  try {
    check_keys(j,
               {"models", "datasets", "eval_datasets", "dev_dataset", "methods", "beam", "guidance", "lambda_grid",
                "tune_method", "dev_metric", "subsample", "seed", "workers", "output_dir"},
               "config");
    ExperimentConfig c;
    c.base_dir = base_dir;

    const auto& models = j.at("models");
    check_keys(models, {"f", "g"}, "models");
    if (!models.contains("f") || !models.contains("g")) throw ConfigError("config must declare models f and g");
    c.f = parse_model(models.at("f"), base_dir, "f");
    c.g = parse_model(models.at("g"), base_dir, "g");

    for (const auto& [name, d] : j.at("datasets").items()) c.datasets[name] = parse_dataset(d, base_dir, name);
    if (c.datasets.empty()) throw ConfigError("config declares no datasets");
    c.dev_dataset = j.value("dev_dataset", std::string());
    if (!c.dev_dataset.empty() && !c.datasets.count(c.dev_dataset))
      throw ConfigError("dev_dataset '" + c.dev_dataset + "' is not declared");
    if (j.contains("eval_datasets")) {
      c.eval_datasets = j.at("eval_datasets").get<std::vector<std::string>>();
    } else {
      for (const auto& [name, _] : c.datasets)
        if (name != c.dev_dataset) c.eval_datasets.push_back(name);
      if (c.eval_datasets.empty()) c.eval_datasets.push_back(c.dev_dataset);
    }
    for (const auto& name : c.eval_datasets)
      if (!c.datasets.count(name)) throw ConfigError("eval dataset '" + name + "' is not declared");

    for (const auto& m : j.at("methods")) c.methods.push_back(parse_method(m.get<std::string>()));
    if (c.methods.empty()) throw ConfigError("method list is empty");

    if (j.contains("beam")) {
      const auto& b = j.at("beam");
      check_keys(b, {"beam_size", "max_length", "length_penalty", "stop"}, "beam");
      c.beam.beam_size = b.value("beam_size", c.beam.beam_size);
      c.beam.max_length = b.value("max_length", c.beam.max_length);
      c.beam.length_penalty = b.value("length_penalty", c.beam.length_penalty);
      try {
        c.beam.stop = parse_stop_rule(b.value("stop", std::string("first-come")));
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
      if (c.beam.beam_size < 1 || c.beam.max_length < 1 || c.beam.length_penalty < 0)
        throw ConfigError("beam needs beam_size >= 1, max_length >= 1, length_penalty >= 0");
    }
    if (j.contains("guidance")) {
      const auto& g = j.at("guidance");
      check_keys(g, {"lambda_f", "lambda_g", "iterations", "distance", "selection"}, "guidance");
      c.guidance.lambda_f = g.value("lambda_f", c.guidance.lambda_f);
      c.guidance.lambda_g = g.value("lambda_g", c.guidance.lambda_g);
      c.guidance.iterations = g.value("iterations", c.guidance.iterations);
      if (g.contains("distance")) {
        try {
          c.guidance.distance = parse_distance_fn(g.at("distance").get<std::string>());
        } catch (const std::invalid_argument& e) {
          throw ConfigError(e.what());
        }
      }
      const auto selection = g.value("selection", std::string("normalized"));
      if (selection == "normalized") c.guidance.selection = FinalSelection::NormalizedWithPenalty;
      else if (selection == "raw") c.guidance.selection = FinalSelection::RawModelScore;
      else throw ConfigError("guidance selection must be 'normalized' or 'raw'");
      if (c.guidance.lambda_f < 0 || c.guidance.lambda_g < 0 || c.guidance.iterations < 1)
        throw ConfigError("guidance needs non-negative lambdas and iterations >= 1");
    }
    if (j.contains("lambda_grid")) {
      c.lambda_grid = j.at("lambda_grid").get<std::vector<double>>();
      if (c.lambda_grid.empty()) throw ConfigError("lambda_grid is empty");
      std::sort(c.lambda_grid.begin(), c.lambda_grid.end());
    }
    if (j.contains("tune_method")) c.tune_method = parse_method(j.at("tune_method").get<std::string>());
    c.dev_metric = j.value("dev_metric", c.dev_metric);
    if (c.dev_metric != "bleu" && c.dev_metric != "rouge-l") throw ConfigError("dev_metric must be 'bleu' or 'rouge-l'");
    if (j.contains("subsample")) {
      const auto& s = j.at("subsample");
      check_keys(s, {"model", "sizes"}, "subsample");
      c.subsample_model = s.value("model", c.subsample_model);
      if (c.subsample_model != "f" && c.subsample_model != "g") throw ConfigError("subsample model must be f or g");
      c.subsample_sizes = s.at("sizes").get<std::vector<std::size_t>>();
    }
    c.seed = j.value("seed", c.seed);
    c.workers = j.value("workers", c.workers);
    if (c.workers < 1) throw ConfigError("workers must be at least 1");
    c.output_dir = resolve(base_dir, j.value("output_dir", std::string("out")));
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  } catch (const TextError& e) {
    throw ConfigError(e.what());
  }
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_config(j, fs::absolute(path).parent_path());
}

}  // namespace twist
