#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "twist/distance.hpp"
#include "twist/scoring.hpp"

namespace twist {

enum class StopRule {
  /// Stop as soon as beam_size hypotheses have finished.
  FirstCome,
  /// Additionally require that no live hypothesis scores above the
  /// beam_size-th finished one. Exact for non-positive step scores, where a
  /// live hypothesis can only lose score (before length normalization).
  Bounded,
};

std::string_view to_string(StopRule rule);
StopRule parse_stop_rule(std::string_view text);

struct BeamConfig {
  std::size_t beam_size = 5;
  /// Maximum number of generated tokens before EOS is forced.
  std::size_t max_length = 200;
  /// Final ranking divides the search score by length^length_penalty.
  double length_penalty = 1.0;
  StopRule stop = StopRule::FirstCome;
};

/// Distance guidance toward another model's outputs, already mapped into the
/// searching model's spec and ordered best-first.
struct Guidance {
  std::vector<TokenSequence> candidates;
  double lambda = 0.0;
  DistanceFn distance = DistanceFn::HammingMin;
};

struct Candidate {
  TokenSequence seq;  // ends with EOS
  double model_score = 0.0;
  /// lambda times the min distance of the whole sequence; 0 when unguided.
  double penalty = 0.0;
  double normalized = 0.0;

  double search_score() const { return model_score - penalty; }
};

/// Finished sequences of one search pass, best-first by normalized score.
struct CandidateSet {
  std::vector<Candidate> items;
  SpecId spec = 0;
  /// Number of score_step calls the pass made.
  std::size_t step_evaluations = 0;

  bool empty() const { return items.empty(); }
  std::size_t size() const { return items.size(); }
  const Candidate& best() const;
  std::vector<TokenSequence> sequences() const;
};

class DecodeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

double normalized_score(double search_score, std::size_t length, double length_penalty);

/// Breadth-first beam search with first-come-first-served finishing.
///
/// Every step expands each beam hypothesis by every token with a finite
/// score. Expansions are ranked by model score minus lambda * min distance
/// (ties: lexicographically smaller token ids first) and taken in order:
/// EOS-ended ones join the finished set, the rest refill the beam until it
/// holds beam_size hypotheses. Search stops once beam_size hypotheses have
/// finished or max_length is reached, at which point the surviving beam is
/// closed with EOS.
CandidateSet beam_search(const Scorer& scorer, std::string_view source, const BeamConfig& config,
                         const std::optional<Guidance>& guidance = std::nullopt);

/// Exhaustive counterpart: scores every sequence of at most max_length
/// tokens plus EOS and returns the top k by normalized score. Refuses
/// (DecodeFailure) when more than `limit` sequences would be enumerated.
CandidateSet exact_topk(const Scorer& scorer, std::string_view source, const BeamConfig& config,
                        const std::optional<Guidance>& guidance = std::nullopt, std::size_t limit = 1'000'000);

/// One line per candidate: index, normalized score, model score, penalty,
/// space-joined tokens.
std::string format_nbest(const CandidateSet& set, const ModelTextSpec& spec);

}  // namespace twist
