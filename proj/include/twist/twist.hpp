#pragma once

// Twist decoding and the baselines it is compared against.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "twist/beam.hpp"

namespace twist {

enum class FinalSelection {
  NormalizedWithPenalty,  // normalized search score, penalty included
  RawModelScore,          // unnormalized model score, penalty ignored
};

struct GuidanceConfig {
  /// Weight of f's candidates while g searches.
  double lambda_f = 0.3;
  /// Weight of g's candidates while f searches.
  double lambda_g = 1.0;
  std::size_t iterations = 1;
  DistanceFn distance = DistanceFn::HammingMin;
  FinalSelection selection = FinalSelection::NormalizedWithPenalty;
};

/// The tuning grid for both lambdas.
inline const std::vector<double> kLambdaGrid{0.1, 0.3, 1.0, 3.0};

struct ModelHandle {
  ScorerPtr scorer;
  SourceView view;
};

struct DecodeSession {
  ModelHandle f;
  ModelHandle g;
  SourceRecord source;
  BeamConfig beam;
  GuidanceConfig guidance;
};

enum class PassLabel { FInit, GGuided, FGuided };
std::string_view to_string(PassLabel label);

struct PassRecord {
  std::size_t iteration = 0;
  PassLabel label = PassLabel::FInit;
  CandidateSet candidates;
  std::int64_t micros = 0;
};

/// Y(0), Z(1), Y(1), ..., Z(T), Y(T).
struct DecodeTrace {
  std::vector<PassRecord> passes;

  std::size_t step_evaluations() const;
  /// Best sequence of f's pass at iteration t (t = 0 is the initial decode).
  const CandidateSet& f_candidates(std::size_t iteration) const;
};

struct TwistResult {
  TokenSequence output;  // in f's spec, ends with EOS
  DecodeTrace trace;
};

/// Decode failure that keeps the passes completed before it.
class TwistFailure : public DecodeFailure {
 public:
  TwistFailure(const std::string& what, DecodeTrace trace) : DecodeFailure(what), trace_(std::move(trace)) {}
  const DecodeTrace& trace() const { return trace_; }

 private:
  DecodeTrace trace_;
};

/// Map every candidate into `to` and append EOS; drops duplicates, keeps
/// best-first order.
std::vector<TokenSequence> map_candidates(const CandidateSet& set, const ModelTextSpec& from, const ModelTextSpec& to);

TwistResult twist_decode(const DecodeSession& session);

struct RerankResult {
  TokenSequence output;  // the chosen member of the initial set, f's spec
  CandidateSet initial;
  /// g's length-normalized score per initial candidate; nullopt when mapping failed.
  std::vector<std::optional<double>> rescored;
  std::size_t selected = 0;
  std::size_t step_evaluations = 0;
  std::int64_t micros = 0;
};

/// f's k-best list rescored by g alone (length-normalized); ties keep f's order.
RerankResult rerank_decode(const DecodeSession& session);

/// Beam search over the element-wise sum of f's and g's step scores. Both
/// models must share one text spec.
CandidateSet shallow_fusion_decode(const ModelHandle& f, const ModelHandle& g, const SourceRecord& source,
                                   const BeamConfig& config);

CandidateSet isolation_decode(const Scorer& scorer, std::string_view source, const BeamConfig& config);

/// Trace serialization: one line per pass with method, iteration, pass label,
/// n-best reference, step evaluations and wall-clock microseconds.
std::string format_trace(const DecodeTrace& trace, std::string_view method, std::string_view nbest_ref);

}  // namespace twist
