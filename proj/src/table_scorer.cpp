#include "twist/table_scorer.hpp"

#include <cmath>

namespace twist {

TableScorer::TableScorer(SpecPtr spec, StepScores default_scores)
    : spec_(std::move(spec)), default_(std::move(default_scores)) {
  if (!spec_) throw ContractError("table scorer needs a text spec");
  check_row(default_);
}

void TableScorer::check_row(const StepScores& scores) const {
  if (scores.size() != spec_->vocabulary().size())
    throw ScoringError("table row has " + std::to_string(scores.size()) + " scores, vocabulary has " +
                       std::to_string(spec_->vocabulary().size()));
  for (double s : scores)
    if (std::isnan(s) || s == std::numeric_limits<double>::infinity())
      throw ScoringError("table rows must hold finite scores or -inf");
}

void TableScorer::set_row(std::string source, std::vector<TokenId> prefix, StepScores scores) {
  check_row(scores);
  rows_[{std::move(source), std::move(prefix)}] = std::move(scores);
}

void TableScorer::set_position_row(std::string source, std::size_t position, StepScores scores) {
  check_row(scores);
  positions_[{std::move(source), position}] = std::move(scores);
}

void TableScorer::set_embeddings(std::vector<std::vector<double>> table) {
  if (table.size() != spec_->vocabulary().size()) throw ScoringError("embedding table needs one row per token");
  for (const auto& row : table)
    if (row.size() != table.front().size() || row.empty()) throw ScoringError("embedding rows must share a dimension");
  embeddings_ = std::move(table);
}

StepScores TableScorer::score_step(std::string_view source, std::span<const TokenId> prefix) const {
  std::vector<TokenId> key(prefix.begin(), prefix.end());
  const std::string sources[] = {std::string(source), std::string(kAnySource)};
  for (const auto& s : sources)
    if (auto it = rows_.find({s, key}); it != rows_.end()) return it->second;
  for (const auto& s : sources)
    if (auto it = positions_.find({s, prefix.size()}); it != positions_.end()) return it->second;
  return default_;
}

std::optional<std::vector<double>> TableScorer::embedding(TokenId id) const {
  if (embeddings_.empty() || !spec_->vocabulary().contains(id)) return std::nullopt;
  return embeddings_[static_cast<std::size_t>(id)];
}

StepScores ConstantScorer::score_step(std::string_view, std::span<const TokenId>) const {
  StepScores scores(spec_->vocabulary().size(), value_);
  scores[kBos] = kForbidden;
  return scores;
}

}  // namespace twist
