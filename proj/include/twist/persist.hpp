#pragma once

// On-disk formats: text specs as JSON, n-gram models as a versioned,
// checksummed line format, table scorers as JSON.

#include <filesystem>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "twist/ngram.hpp"
#include "twist/table_scorer.hpp"

namespace twist {

class PersistError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kNGramFormatVersion = 1;

nlohmann::json scheme_to_json(const TokenizationScheme& scheme);
TokenizationScheme scheme_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});

/// {"order": "l2r"|"r2l", "scheme": {...}, "vocabulary": [...]}. On input,
/// "vocabulary_file" and a scheme's "merges_file" may replace the inline
/// lists; relative paths resolve against `base_dir`.
nlohmann::json spec_to_json(const ModelTextSpec& spec);
SpecPtr spec_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});

/// Byte-stable: identical models produce identical files.
std::string serialize_ngram(const NGramModel& model);
NGramModel parse_ngram(const std::string& bytes);
void save_ngram(const NGramModel& model, const std::filesystem::path& path);
NGramModel load_ngram(const std::filesystem::path& path);

/// Table scorer file: {"spec": {...}, "default": row, "rows": [{"source",
/// "prefix": [tokens], "scores": row}], "positions": [{"source", "position",
/// "scores": row}], "embeddings": {token: [..]}}. A row maps token strings to
/// numbers or "-inf"; the key "*" sets every token not listed (default -inf).
TableScorer table_scorer_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
nlohmann::json table_scorer_to_json(const TableScorer& scorer);
TableScorer load_table_scorer(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

}  // namespace twist
