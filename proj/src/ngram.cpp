#include "twist/ngram.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace twist {

NGramModel::NGramModel(SpecPtr spec, NGramOptions options, NGramTables tables)
    : spec_(std::move(spec)), options_(options), tables_(std::move(tables)) {
  if (!spec_) throw ContractError("n-gram model needs a text spec");
  if (options_.order < 1) throw ScoringError("n-gram order must be at least 1");
  if (!(options_.k_add > 0.0)) throw ScoringError("n-gram k_add must be positive");
  if (tables_.size() != options_.order) throw ScoringError("n-gram model needs one count table per order");
  for (const auto& table : tables_)
    for (const auto& [ctx, counts] : table)
      for (const auto& [token, _] : counts.next)
        if (!spec_->vocabulary().contains(token) || token == kBos)
          throw ScoringError("n-gram count table holds an invalid token id");
}

std::uint64_t NGramModel::count(const NGramContext& context, TokenId token) const {
  if (context.size() >= tables_.size()) return 0;
  const auto& table = tables_[context.size()];
  auto it = table.find(context);
  if (it == table.end()) return 0;
  auto jt = it->second.next.find(token);
  return jt == it->second.next.end() ? 0 : jt->second;
}

std::vector<double> NGramModel::distribution(std::span<const TokenId> prefix) const {
  const std::size_t vocab = spec_->vocabulary().size();
  const double k = options_.k_add;
  const double emittable = static_cast<double>(vocab - 1);

  std::vector<double> probs(vocab, 0.0);
  NGramContext context;
  for (std::size_t m = 0; m < tables_.size(); ++m) {
    // Context of length m: the last m prefix tokens, BOS-padded on the left.
    context.assign(m, kBos);
    for (std::size_t j = 0; j < m && j < prefix.size(); ++j) context[m - 1 - j] = prefix[prefix.size() - 1 - j];

    auto it = tables_[m].find(context);
    const ContextCounts* counts = it == tables_[m].end() ? nullptr : &it->second;
    const double total = counts ? static_cast<double>(counts->total) : 0.0;
    if (m > 0 && total == 0.0) continue;
    const double denom = total + k * emittable;
    const double weight = m == 0 ? 1.0 : total / denom;
    for (std::size_t w = 1; w < vocab; ++w) {
      double c = 0.0;
      if (counts) {
        auto jt = counts->next.find(static_cast<TokenId>(w));
        if (jt != counts->next.end()) c = static_cast<double>(jt->second);
      }
      probs[w] = weight * (c + k) / denom + (1.0 - weight) * probs[w];
    }
  }
  return probs;
}

double NGramModel::probability(std::span<const TokenId> prefix, TokenId token) const {
  if (token == kBos) return 0.0;
  return distribution(prefix).at(static_cast<std::size_t>(token));
}

StepScores NGramModel::score_step(std::string_view source, std::span<const TokenId> prefix) const {
  auto probs = distribution(prefix);
  StepScores scores(probs.size());
  scores[kBos] = kForbidden;
  for (std::size_t w = 1; w < probs.size(); ++w) scores[w] = std::log(probs[w]);

  if (options_.copy_bonus != 0.0 && !source.empty()) {
    std::unordered_set<TokenId> seen;
    for (const auto& token : tokenize(normalize_whitespace(source), spec_->scheme())) {
      auto id = spec_->vocabulary().find(token);
      if (id && *id > kUnk && seen.insert(*id).second) {
        auto& s = scores[static_cast<std::size_t>(*id)];
        s = std::min(0.0, s + options_.copy_bonus);
      }
    }
  }
  return scores;
}

NGramModel train_ngram(const std::vector<std::string>& corpus, SpecPtr spec, NGramOptions options) {
  if (corpus.empty()) throw ScoringError("cannot train an n-gram model on an empty corpus");
  if (options.order < 1) throw ScoringError("n-gram order must be at least 1");
  if (!spec) throw ContractError("n-gram model needs a text spec");

  NGramTables tables(options.order);
  NGramContext context;
  for (const auto& line : corpus) {
    auto seq = encode_text(line, *spec);
    seq.ids.push_back(kEos);
    for (std::size_t i = 0; i < seq.ids.size(); ++i) {
      for (std::size_t m = 0; m < options.order; ++m) {
        context.assign(m, kBos);
        for (std::size_t j = 0; j < m && j < i; ++j) context[m - 1 - j] = seq.ids[i - 1 - j];
        auto& counts = tables[m][context];
        ++counts.total;
        ++counts.next[seq.ids[i]];
      }
    }
  }
  return NGramModel(std::move(spec), options, std::move(tables));
}

}  // namespace twist
