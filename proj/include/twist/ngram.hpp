#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "twist/scoring.hpp"

namespace twist {

struct NGramOptions {
  std::size_t order = 3;
  double k_add = 0.1;
  /// Added to the log-probability of tokens that also occur in the tokenized
  /// source; the sum is capped at 0 so step scores stay non-positive.
  double copy_bonus = 0.0;
};

using NGramContext = std::vector<TokenId>;

struct ContextCounts {
  std::uint64_t total = 0;
  std::map<TokenId, std::uint64_t> next;
  bool operator==(const ContextCounts&) const = default;
};

/// tables[m] maps contexts of length m to their continuation counts.
using NGramTables = std::vector<std::map<NGramContext, ContextCounts>>;

/// Add-k smoothed n-gram model with count-weighted interpolation toward lower
/// orders:
///   p_1(w)   = (c(w) + k) / (N + k|V|)
///   p_m(w|h) = a_h (c(h,w) + k) / (c(h) + k|V|) + (1 - a_h) p_{m-1}(w|h'),
///   a_h      = c(h) / (c(h) + k|V|),
/// with |V| the number of emittable tokens (vocabulary minus BOS).
class NGramModel final : public Scorer {
 public:
  NGramModel(SpecPtr spec, NGramOptions options, NGramTables tables);

  const SpecPtr& spec_ptr() const override { return spec_; }
  StepScores score_step(std::string_view source, std::span<const TokenId> prefix) const override;

  const NGramOptions& options() const { return options_; }
  const NGramTables& tables() const { return tables_; }

  /// Raw count of `token` after `context` (context length < order).
  std::uint64_t count(const NGramContext& context, TokenId token) const;
  /// Interpolated probability of `token` after `prefix`.
  double probability(std::span<const TokenId> prefix, TokenId token) const;

 private:
  std::vector<double> distribution(std::span<const TokenId> prefix) const;

  SpecPtr spec_;
  NGramOptions options_;
  NGramTables tables_;
};

/// Counts over BOS-padded, EOS-terminated streams of every corpus line
/// encoded under `spec` (so right-to-left specs train on reversed lines).
NGramModel train_ngram(const std::vector<std::string>& corpus, SpecPtr spec, NGramOptions options);

}  // namespace twist
