#include "twist/twist.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <sstream>

namespace twist {

namespace {

using Clock = std::chrono::steady_clock;

std::int64_t micros_since(Clock::time_point start) {
  return std::chrono::duration_cast<std::chrono::microseconds>(Clock::now() - start).count();
}

/// Step scores of f plus step scores of g; g conditions on its own source text.
class FusedScorer final : public Scorer {
 public:
  FusedScorer(const Scorer& f, const Scorer& g, std::string g_source)
      : f_(f), g_(g), g_source_(std::move(g_source)) {}

  const SpecPtr& spec_ptr() const override { return f_.spec_ptr(); }
  StepScores score_step(std::string_view source, std::span<const TokenId> prefix) const override {
    StepScores scores = f_.score_step(source, prefix);
    const StepScores other = g_.score_step(g_source_, prefix);
    for (std::size_t w = 0; w < scores.size(); ++w) scores[w] += other[w];
    return scores;
  }

 private:
  const Scorer& f_;
  const Scorer& g_;
  std::string g_source_;
};

}  // namespace

std::string_view to_string(PassLabel label) {
  switch (label) {
    case PassLabel::FInit: return "f-init";
    case PassLabel::GGuided: return "g-guided";
    case PassLabel::FGuided: return "f-guided";
  }
  return "?";
}

std::size_t DecodeTrace::step_evaluations() const {
  std::size_t total = 0;
  for (const auto& p : passes) total += p.candidates.step_evaluations;
  return total;
}

const CandidateSet& DecodeTrace::f_candidates(std::size_t iteration) const {
  const std::size_t index = 2 * iteration;
  if (index >= passes.size()) throw std::out_of_range("trace has no f pass for that iteration");
  return passes[index].candidates;
}

std::vector<TokenSequence> map_candidates(const CandidateSet& set, const ModelTextSpec& from, const ModelTextSpec& to) {
  std::vector<TokenSequence> mapped;
  for (const auto& c : set.items) {
    TokenSequence seq;
    try {
      seq = map_output(c.seq, from, to);
    } catch (const TextError&) {
      continue;
    }
    seq.ids.push_back(kEos);
    if (std::find(mapped.begin(), mapped.end(), seq) == mapped.end()) mapped.push_back(std::move(seq));
  }
  return mapped;
}

TwistResult twist_decode(const DecodeSession& session) {
  const Scorer& f = *session.f.scorer;
  const Scorer& g = *session.g.scorer;
  const auto& cfg = session.guidance;
  if (cfg.iterations < 1) throw std::invalid_argument("twist decoding needs at least one iteration");
  if (!(cfg.lambda_f >= 0.0) || !(cfg.lambda_g >= 0.0)) throw std::invalid_argument("lambdas must be non-negative");

  const std::string f_source = session.f.view.apply(session.source);
  const std::string g_source = session.g.view.apply(session.source);

  DecodeTrace trace;
  auto run = [&](std::size_t iteration, PassLabel label, const Scorer& scorer, const std::string& source,
                 const std::optional<Guidance>& guidance) -> const CandidateSet& {
    const auto start = Clock::now();
    CandidateSet set = beam_search(scorer, source, session.beam, guidance);
    trace.passes.push_back({iteration, label, std::move(set), micros_since(start)});
    return trace.passes.back().candidates;
  };
  auto guidance_from = [&](const CandidateSet& set, const Scorer& from, const Scorer& to, double lambda) {
    Guidance guidance{map_candidates(set, from.spec(), to.spec()), lambda, cfg.distance};
    if (guidance.candidates.empty()) throw DecodeFailure("no candidate survived output mapping");
    return guidance;
  };

  try {
    run(0, PassLabel::FInit, f, f_source, std::nullopt);
    for (std::size_t t = 1; t <= cfg.iterations; ++t) {
      auto to_g = guidance_from(trace.passes.back().candidates, f, g, cfg.lambda_f);
      run(t, PassLabel::GGuided, g, g_source, to_g);
      auto to_f = guidance_from(trace.passes.back().candidates, g, f, cfg.lambda_g);
      run(t, PassLabel::FGuided, f, f_source, to_f);
    }
  } catch (const DecodeFailure& e) {
    throw TwistFailure(e.what(), std::move(trace));
  } catch (const TextError& e) {
    throw TwistFailure(e.what(), std::move(trace));
  }

  const CandidateSet& last = trace.passes.back().candidates;
  const Candidate* chosen = &last.best();
  if (cfg.selection == FinalSelection::RawModelScore)
    for (const auto& c : last.items)
      if (c.model_score > chosen->model_score) chosen = &c;
  TokenSequence output = chosen->seq;
  return {std::move(output), std::move(trace)};
}

RerankResult rerank_decode(const DecodeSession& session) {
  const Scorer& f = *session.f.scorer;
  const Scorer& g = *session.g.scorer;
  const std::string f_source = session.f.view.apply(session.source);
  const std::string g_source = session.g.view.apply(session.source);

  const auto start = Clock::now();
  RerankResult result;
  result.initial = beam_search(f, f_source, session.beam);
  result.step_evaluations = result.initial.step_evaluations;

  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < result.initial.items.size(); ++i) {
    std::optional<double> score;
    try {
      TokenSequence mapped = map_output(result.initial.items[i].seq, f.spec(), g.spec());
      mapped.ids.push_back(kEos);
      score = normalized_score(score_sequence(g, g_source, mapped), mapped.ids.size(), session.beam.length_penalty);
      result.step_evaluations += mapped.ids.size();
    } catch (const TextError&) {
    }
    result.rescored.push_back(score);
    if (score && (!best || *score > *result.rescored[*best])) best = i;
  }
  if (!best) throw DecodeFailure("no candidate could be mapped for reranking");
  result.selected = *best;
  result.output = result.initial.items[*best].seq;
  result.micros = micros_since(start);
  return result;
}

CandidateSet shallow_fusion_decode(const ModelHandle& f, const ModelHandle& g, const SourceRecord& source,
                                   const BeamConfig& config) {
  if (f.scorer->spec().id() != g.scorer->spec().id())
    throw ContractError("fusion requires shared vocabulary, tokenization and generation order");
  FusedScorer fused(*f.scorer, *g.scorer, g.view.apply(source));
  return beam_search(fused, f.view.apply(source), config);
}

CandidateSet isolation_decode(const Scorer& scorer, std::string_view source, const BeamConfig& config) {
  return beam_search(scorer, source, config);
}

std::string format_trace(const DecodeTrace& trace, std::string_view method, std::string_view nbest_ref) {
  std::ostringstream out;
  for (const auto& p : trace.passes) {
    out << method << '\t' << p.iteration << '\t' << to_string(p.label) << '\t' << nbest_ref << '#' << p.iteration
        << '-' << to_string(p.label) << '\t' << p.candidates.step_evaluations << '\t' << p.micros << '\n';
  }
  return out.str();
}

}  // namespace twist
