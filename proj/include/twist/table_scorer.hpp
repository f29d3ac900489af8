#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "twist/scoring.hpp"

namespace twist {

/// Explicit lookup-table scorer for tests and synthetic experiments.
///
/// Rows are found in this order: exact (source, prefix); (*, prefix);
/// (source, prefix length); (*, prefix length); the default row. The source
/// key "*" matches any source.
class TableScorer final : public Scorer {
 public:
  static constexpr std::string_view kAnySource = "*";

  TableScorer(SpecPtr spec, StepScores default_scores);

  const SpecPtr& spec_ptr() const override { return spec_; }
  StepScores score_step(std::string_view source, std::span<const TokenId> prefix) const override;
  std::optional<std::vector<double>> embedding(TokenId id) const override;
  bool has_embeddings() const override { return !embeddings_.empty(); }

  void set_row(std::string source, std::vector<TokenId> prefix, StepScores scores);
  void set_position_row(std::string source, std::size_t position, StepScores scores);
  /// One row per vocabulary entry, all of the same dimension.
  void set_embeddings(std::vector<std::vector<double>> table);

  const StepScores& default_scores() const { return default_; }
  const std::map<std::pair<std::string, std::vector<TokenId>>, StepScores>& rows() const { return rows_; }
  const std::map<std::pair<std::string, std::size_t>, StepScores>& position_rows() const { return positions_; }
  const std::vector<std::vector<double>>& embedding_table() const { return embeddings_; }

 private:
  void check_row(const StepScores& scores) const;

  SpecPtr spec_;
  StepScores default_;
  std::map<std::pair<std::string, std::vector<TokenId>>, StepScores> rows_;
  std::map<std::pair<std::string, std::size_t>, StepScores> positions_;
  std::vector<std::vector<double>> embeddings_;
};

/// Scorer that always returns `value` for every token but BOS.
class ConstantScorer final : public Scorer {
 public:
  ConstantScorer(SpecPtr spec, double value) : spec_(std::move(spec)), value_(value) {}
  const SpecPtr& spec_ptr() const override { return spec_; }
  StepScores score_step(std::string_view, std::span<const TokenId>) const override;

 private:
  SpecPtr spec_;
  double value_;
};

}  // namespace twist
