#pragma once

// The scorer abstraction shared by every decoding method.

#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "twist/text.hpp"

namespace twist {

/// Additive log-domain scores indexed by token id; one entry per vocabulary
/// entry. Not necessarily normalized.
using StepScores = std::vector<double>;

inline constexpr double kForbidden = -std::numeric_limits<double>::infinity();

class ScoringError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown when a caller asks a scorer for something it cannot provide
/// (embeddings from an n-gram model, for example).
class CapabilityError : public ScoringError {
 public:
  using ScoringError::ScoringError;
};

/// Next-token scoring model. Implementations are immutable once built and
/// must return bit-identical scores for identical (source, prefix).
class Scorer {
 public:
  virtual ~Scorer() = default;

  virtual const SpecPtr& spec_ptr() const = 0;
  const ModelTextSpec& spec() const { return *spec_ptr(); }

  /// `prefix` is in generation order and holds neither BOS nor EOS.
  virtual StepScores score_step(std::string_view source, std::span<const TokenId> prefix) const = 0;

  /// Token embedding, or nullopt when the scorer has none.
  virtual std::optional<std::vector<double>> embedding(TokenId /*id*/) const { return std::nullopt; }
  virtual bool has_embeddings() const { return false; }
};

using ScorerPtr = std::shared_ptr<const Scorer>;

/// Checked entry point: validates spec binding, rejects EOS in the prefix and
/// forces BOS to kForbidden.
StepScores score_step(const Scorer& scorer, std::string_view source, const TokenSequence& prefix);

/// Sum of step scores along `seq`, which must end with EOS.
double score_sequence(const Scorer& scorer, std::string_view source, const TokenSequence& seq);

/// Throws CapabilityError when the scorer has no embeddings.
std::vector<double> embeddings(const Scorer& scorer, TokenId id);

/// A structured source input: field name -> text.
using SourceRecord = std::map<std::string, std::string>;

/// The text a scorer conditions on: the named fields joined by single spaces.
struct SourceView {
  std::vector<std::string> fields{"source"};

  std::string apply(const SourceRecord& record) const;
  bool operator==(const SourceView&) const = default;
};

}  // namespace twist
