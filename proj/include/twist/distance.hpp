#pragma once

// Prefix distances between a partial hypothesis and the other model's
// candidate outputs. Candidates are treated as padded with EOS beyond their
// length, so a candidate's own trailing EOS is an ordinary position.

#include <span>
#include <string_view>
#include <vector>

#include "twist/scoring.hpp"

namespace twist {

enum class DistanceFn {
  HammingMin,      // min over candidates of the position-wise mismatch count
  HammingOneBest,  // mismatch count against the rank-1 candidate only
  EmbeddingMin,    // min over candidates of summed L2 embedding distances
};

std::string_view to_string(DistanceFn fn);
DistanceFn parse_distance_fn(std::string_view text);

/// Number of positions i < prefix length where prefix[i] differs from the
/// EOS-padded candidate.
std::size_t hamming_prefix_distance(const TokenSequence& prefix, const TokenSequence& candidate);

/// `candidates` must be non-empty, ordered best-first, bound to the prefix's
/// spec. EmbeddingMin reads embeddings from `scorer` and throws
/// CapabilityError when it has none.
double min_distance(const TokenSequence& prefix, std::span<const TokenSequence> candidates, DistanceFn fn,
                    const Scorer& scorer);

/// Incremental form used inside beam search. A hypothesis carries one running
/// distance per tracked candidate; appending a token adds that position's
/// per-candidate cost.
class DistanceTracker {
 public:
  DistanceTracker(std::span<const TokenSequence> candidates, DistanceFn fn, const Scorer& scorer);

  std::size_t width() const { return candidates_.size(); }

  /// Cost of placing `token` at `position` against candidate `c`.
  double cost(std::size_t c, std::size_t position, TokenId token) const;

  /// Running distances after appending `token` at `position`.
  void extend(std::span<const double> distances, std::size_t position, TokenId token, std::span<double> out) const;

  /// For every token w: min over candidates of distances[c] + cost(c, position, w).
  void extend_min_all(std::span<const double> distances, std::size_t position, std::span<double> out) const;

 private:
  TokenId at(std::size_t c, std::size_t position) const;

  std::vector<std::vector<TokenId>> candidates_;  // trailing EOS stripped
  DistanceFn fn_;
  std::vector<std::vector<double>> embeddings_;   // EmbeddingMin only
};

}  // namespace twist
