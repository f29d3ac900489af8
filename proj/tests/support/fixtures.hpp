#pragma once

// Shared builders for tests: small letter vocabularies and random
// prefix-tree table scorers.

#include <cmath>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "twist/table_scorer.hpp"

namespace twist::testing {

/// Whitespace spec over tokens "a", "b", ... (`content` of them).
inline SpecPtr letters_spec(std::size_t content, GenerationOrder order = GenerationOrder::LeftToRight) {
  std::vector<std::string> tokens;
  for (std::size_t i = 0; i < content; ++i) tokens.push_back(std::string(1, static_cast<char>('a' + i)));
  return make_spec(Vocabulary::from_tokens(tokens), WhitespaceScheme{}, order);
}

/// Every content token and EOS draws a score from [lo, hi], rounded to a
/// multiple of `grain` when grain > 0; BOS and UNK are forbidden.
inline StepScores random_row(const ModelTextSpec& spec, std::mt19937_64& rng, double lo, double hi,
                             double grain = 0.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  StepScores row(spec.vocabulary().size(), kForbidden);
  for (std::size_t w = 0; w < row.size(); ++w) {
    if (w == static_cast<std::size_t>(kBos) || w == static_cast<std::size_t>(kUnk)) continue;
    double s = dist(rng);
    if (grain > 0) s = std::round(s / grain) * grain;
    row[w] = s;
  }
  return row;
}

/// Table scorer with an explicit row for every prefix of up to `max_length`
/// content tokens (rows are source-independent).
inline std::shared_ptr<TableScorer> random_tree_scorer(const SpecPtr& spec, std::mt19937_64& rng,
                                                       std::size_t max_length, double lo = -5.0, double hi = 0.0,
                                                       double grain = 0.0) {
  auto scorer = std::make_shared<TableScorer>(spec, random_row(*spec, rng, lo, hi, grain));
  const std::size_t vocab = spec->vocabulary().size();
  std::vector<std::vector<TokenId>> layer{{}};
  for (std::size_t len = 0; len <= max_length; ++len) {
    std::vector<std::vector<TokenId>> next;
    for (const auto& prefix : layer) {
      scorer->set_row(std::string(TableScorer::kAnySource), prefix, random_row(*spec, rng, lo, hi, grain));
      if (len == max_length) continue;
      for (std::size_t w = 3; w < vocab; ++w) {
        auto p = prefix;
        p.push_back(static_cast<TokenId>(w));
        next.push_back(std::move(p));
      }
    }
    layer = std::move(next);
  }
  return scorer;
}

inline TokenSequence seq_of(const SpecPtr& spec, std::vector<TokenId> ids) { return {std::move(ids), spec->id()}; }

inline TokenSequence words(const SpecPtr& spec, const std::string& text, bool eos = false) {
  TokenSequence s = encode_text(text, *spec);
  if (eos) s.ids.push_back(kEos);
  return s;
}

}  // namespace twist::testing
