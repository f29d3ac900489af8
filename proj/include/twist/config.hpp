#pragma once

// Experiment configuration: one JSON file describes the two models, the
// datasets, the methods to compare and every search knob. The schema is
// documented in docs/config.md.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "twist/ngram.hpp"
#include "twist/twist.hpp"

namespace twist {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Method { IsolationF, IsolationG, RerankFG, RerankGF, TwistFG, TwistGF, Fusion };

std::string_view to_string(Method method);
Method parse_method(std::string_view text);

/// How a trained model's text spec is derived from its corpus, unless an
/// explicit spec is given.
struct SpecRecipe {
  std::optional<nlohmann::json> explicit_spec;
  std::filesystem::path base_dir;  // resolves files named by explicit_spec
  std::string scheme = "whitespace";  // whitespace | character | bpe
  bool split_contractions = false;
  std::size_t bpe_merges = 0;
  std::string marker = "@@";
  GenerationOrder order = GenerationOrder::LeftToRight;
};

struct ModelDecl {
  enum class Kind { NGram, Table, ModelFile, Remote };
  Kind kind = Kind::NGram;

  // NGram: trained from `corpus` (one target-side line per line).
  std::filesystem::path corpus;
  NGramOptions ngram;
  SpecRecipe spec;

  // Table / ModelFile.
  std::filesystem::path path;

  // Remote: either a "host:port" address or a command to spawn.
  std::string address;
  std::vector<std::string> command;
  std::size_t top_n = 0;

  SourceView view;
};

struct DatasetDecl {
  // Line-aligned text files ...
  std::filesystem::path source;
  std::vector<std::filesystem::path> references;
  // ... or JSON-lines records with named fields.
  std::filesystem::path records;
  std::vector<std::string> reference_fields;
};

struct ExperimentConfig {
  std::filesystem::path base_dir;
  ModelDecl f;
  ModelDecl g;
  std::map<std::string, DatasetDecl> datasets;
  std::vector<std::string> eval_datasets;
  std::string dev_dataset;
  std::vector<Method> methods;
  BeamConfig beam;
  GuidanceConfig guidance;
  std::vector<double> lambda_grid = kLambdaGrid;
  Method tune_method = Method::TwistFG;
  std::string dev_metric = "bleu";  // bleu | rouge-l
  std::vector<std::size_t> subsample_sizes;
  std::string subsample_model = "f";
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::filesystem::path output_dir = "out";
};

ExperimentConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
ExperimentConfig load_config(const std::filesystem::path& path);

}  // namespace twist
