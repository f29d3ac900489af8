#include "twist/distance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace twist {

std::string_view to_string(DistanceFn fn) {
  switch (fn) {
    case DistanceFn::HammingMin: return "hamming-min";
    case DistanceFn::HammingOneBest: return "hamming-one-best";
    case DistanceFn::EmbeddingMin: return "embedding-min";
  }
  return "?";
}

DistanceFn parse_distance_fn(std::string_view text) {
  if (text == "hamming-min") return DistanceFn::HammingMin;
  if (text == "hamming-one-best") return DistanceFn::HammingOneBest;
  if (text == "embedding-min") return DistanceFn::EmbeddingMin;
  throw std::invalid_argument("unknown distance function '" + std::string(text) + "'");
}

std::size_t hamming_prefix_distance(const TokenSequence& prefix, const TokenSequence& candidate) {
  if (prefix.spec != candidate.spec) throw ContractError("distance between sequences of different specs");
  std::size_t d = 0;
  for (std::size_t i = 0; i < prefix.ids.size(); ++i) {
    TokenId other = i < candidate.ids.size() ? candidate.ids[i] : kEos;
    d += prefix.ids[i] != other;
  }
  return d;
}

DistanceTracker::DistanceTracker(std::span<const TokenSequence> candidates, DistanceFn fn, const Scorer& scorer)
    : fn_(fn) {
  if (candidates.empty()) throw ContractError("guidance needs at least one candidate");
  const std::size_t keep = fn == DistanceFn::HammingOneBest ? 1 : candidates.size();
  for (std::size_t c = 0; c < keep; ++c) {
    validate(candidates[c], scorer.spec());
    auto ids = candidates[c].ids;
    if (!ids.empty() && ids.back() == kEos) ids.pop_back();
    candidates_.push_back(std::move(ids));
  }
  if (fn == DistanceFn::EmbeddingMin) {
    if (!scorer.has_embeddings()) throw CapabilityError("embedding distance needs a scorer with token embeddings");
    const auto vocab = scorer.spec().vocabulary().size();
    embeddings_.reserve(vocab);
    for (std::size_t w = 0; w < vocab; ++w) embeddings_.push_back(embeddings(scorer, static_cast<TokenId>(w)));
  }
}

TokenId DistanceTracker::at(std::size_t c, std::size_t position) const {
  const auto& ids = candidates_[c];
  return position < ids.size() ? ids[position] : kEos;
}

double DistanceTracker::cost(std::size_t c, std::size_t position, TokenId token) const {
  TokenId other = at(c, position);
  if (fn_ != DistanceFn::EmbeddingMin) return token != other ? 1.0 : 0.0;
  const auto& a = embeddings_[static_cast<std::size_t>(token)];
  const auto& b = embeddings_[static_cast<std::size_t>(other)];
  double sq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sq += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(sq);
}

void DistanceTracker::extend(std::span<const double> distances, std::size_t position, TokenId token,
                             std::span<double> out) const {
  for (std::size_t c = 0; c < width(); ++c) out[c] = distances[c] + cost(c, position, token);
}

void DistanceTracker::extend_min_all(std::span<const double> distances, std::size_t position,
                                     std::span<double> out) const {
  if (fn_ == DistanceFn::EmbeddingMin) {
    for (std::size_t w = 0; w < out.size(); ++w) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < width(); ++c)
        best = std::min(best, distances[c] + cost(c, position, static_cast<TokenId>(w)));
      out[w] = best;
    }
    return;
  }
  // Hamming: every token mismatches every candidate except where it equals
  // that candidate's token at this position.
  const double base = *std::min_element(distances.begin(), distances.end()) + 1.0;
  std::fill(out.begin(), out.end(), base);
  for (std::size_t c = 0; c < width(); ++c) {
    auto& slot = out[static_cast<std::size_t>(at(c, position))];
    slot = std::min(slot, distances[c]);
  }
}

double min_distance(const TokenSequence& prefix, std::span<const TokenSequence> candidates, DistanceFn fn,
                    const Scorer& scorer) {
  for (const auto& c : candidates)
    if (c.spec != prefix.spec) throw ContractError("distance between sequences of different specs");
  DistanceTracker tracker(candidates, fn, scorer);
  std::vector<double> current(tracker.width(), 0.0), next(tracker.width());
  for (std::size_t i = 0; i < prefix.ids.size(); ++i) {
    tracker.extend(current, i, prefix.ids[i], next);
    std::swap(current, next);
  }
  return *std::min_element(current.begin(), current.end());
}

}  // namespace twist
