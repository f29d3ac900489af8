#include "twist/scoring.hpp"

namespace twist {

StepScores score_step(const Scorer& scorer, std::string_view source, const TokenSequence& prefix) {
  validate(prefix, scorer.spec());
  if (prefix.ends_with_eos()) throw ContractError("score_step prefix must not contain EOS");
  StepScores scores = scorer.score_step(source, prefix.ids);
  if (scores.size() != scorer.spec().vocabulary().size())
    throw ScoringError("scorer returned " + std::to_string(scores.size()) + " scores for a vocabulary of " +
                       std::to_string(scorer.spec().vocabulary().size()));
  scores[kBos] = kForbidden;
  return scores;
}

double score_sequence(const Scorer& scorer, std::string_view source, const TokenSequence& seq) {
  validate(seq, scorer.spec());
  if (!seq.ends_with_eos()) throw ContractError("score_sequence requires a sequence ending with EOS");
  double total = 0.0;
  TokenSequence prefix{{}, seq.spec};
  prefix.ids.reserve(seq.ids.size());
  for (TokenId id : seq.ids) {
    total += score_step(scorer, source, prefix)[static_cast<std::size_t>(id)];
    prefix.ids.push_back(id);
  }
  return total;
}

std::vector<double> embeddings(const Scorer& scorer, TokenId id) {
  auto e = scorer.embedding(id);
  if (!e) throw CapabilityError("scorer does not provide token embeddings");
  return *std::move(e);
}

std::string SourceView::apply(const SourceRecord& record) const {
  std::string text;
  for (const auto& field : fields) {
    auto it = record.find(field);
    if (it == record.end()) throw ScoringError("source record lacks field '" + field + "'");
    if (it->second.empty()) continue;
    if (!text.empty()) text += ' ';
    text += it->second;
  }
  return text;
}

}  // namespace twist
