#include "twist/beam.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>

namespace twist {

namespace {

struct Hypothesis {
  std::vector<TokenId> tokens;
  double model = 0.0;
  std::vector<double> distances;  // one per tracked guidance candidate
};

struct Expansion {
  std::uint32_t parent;
  TokenId token;
  double model;
  double penalty;
  double search;
};

void check_config(const BeamConfig& config) {
  if (config.beam_size < 1) throw std::invalid_argument("beam size must be at least 1");
  if (config.max_length < 1) throw std::invalid_argument("max length must be at least 1");
  if (!(config.length_penalty >= 0.0)) throw std::invalid_argument("length penalty must be non-negative");
}

std::optional<DistanceTracker> make_tracker(const Scorer& scorer, const std::optional<Guidance>& guidance) {
  if (!guidance) return std::nullopt;
  if (!(guidance->lambda >= 0.0)) throw std::invalid_argument("guidance lambda must be non-negative");
  if (guidance->candidates.empty()) throw ContractError("guidance needs at least one candidate");
  return DistanceTracker(guidance->candidates, guidance->distance, scorer);
}

StepScores checked_scores(const Scorer& scorer, std::string_view source, std::span<const TokenId> prefix) {
  StepScores scores = scorer.score_step(source, prefix);
  if (scores.size() != scorer.spec().vocabulary().size())
    throw ScoringError("scorer returned a score vector of the wrong size");
  scores[kBos] = kForbidden;
  return scores;
}

double min_of(const std::vector<double>& v) { return v.empty() ? 0.0 : *std::min_element(v.begin(), v.end()); }

// Best-first: higher normalized score, then lexicographically smaller ids.
void rank_finished(std::vector<Candidate>& finished, const BeamConfig& config) {
  for (auto& c : finished) c.normalized = normalized_score(c.search_score(), c.seq.ids.size(), config.length_penalty);
  std::sort(finished.begin(), finished.end(), [](const Candidate& a, const Candidate& b) {
    if (a.normalized != b.normalized) return a.normalized > b.normalized;
    return a.seq.ids < b.seq.ids;
  });
  if (finished.size() > config.beam_size) finished.resize(config.beam_size);
}

// Bounded stopping: the beam_size-th best finished search score is at least
// every live hypothesis's current search score.
bool bounded_done(const std::vector<Candidate>& finished, const std::vector<Hypothesis>& beam, double lambda,
                  std::size_t k) {
  std::vector<double> scores;
  for (const auto& c : finished) scores.push_back(c.search_score());
  std::nth_element(scores.begin(), scores.begin() + static_cast<std::ptrdiff_t>(k - 1), scores.end(),
                   std::greater<>());
  const double kth = scores[k - 1];
  for (const auto& h : beam)
    if (h.model - lambda * min_of(h.distances) > kth) return false;
  return true;
}

}  // namespace

std::string_view to_string(StopRule rule) { return rule == StopRule::FirstCome ? "first-come" : "bounded"; }

StopRule parse_stop_rule(std::string_view text) {
  if (text == "first-come") return StopRule::FirstCome;
  if (text == "bounded") return StopRule::Bounded;
  throw std::invalid_argument("unknown stop rule '" + std::string(text) + "'");
}

const Candidate& CandidateSet::best() const {
  if (items.empty()) throw DecodeFailure("empty candidate set");
  return items.front();
}

std::vector<TokenSequence> CandidateSet::sequences() const {
  std::vector<TokenSequence> out;
  out.reserve(items.size());
  for (const auto& c : items) out.push_back(c.seq);
  return out;
}

double normalized_score(double search_score, std::size_t length, double length_penalty) {
  if (length_penalty == 0.0) return search_score;
  return search_score / std::pow(static_cast<double>(length), length_penalty);
}

CandidateSet beam_search(const Scorer& scorer, std::string_view source, const BeamConfig& config,
                         const std::optional<Guidance>& guidance) {
  check_config(config);
  const auto tracker = make_tracker(scorer, guidance);
  const double lambda = guidance ? guidance->lambda : 0.0;
  const std::size_t vocab = scorer.spec().vocabulary().size();
  const std::size_t k = config.beam_size;

  CandidateSet result;
  result.spec = scorer.spec().id();

  std::vector<Hypothesis> beam(1);
  if (tracker) beam[0].distances.assign(tracker->width(), 0.0);

  std::vector<Candidate> finished;
  std::vector<Expansion> expansions;
  std::vector<double> min_dist(vocab, 0.0);

  auto close = [&](const Hypothesis& parent, double model, double penalty) {
    Candidate c;
    c.seq.spec = result.spec;
    c.seq.ids = parent.tokens;
    c.seq.ids.push_back(kEos);
    c.model_score = model;
    c.penalty = penalty;
    finished.push_back(std::move(c));
  };

  for (std::size_t step = 1; step <= config.max_length && !beam.empty(); ++step) {
    const std::size_t position = step - 1;
    expansions.clear();
    for (std::size_t p = 0; p < beam.size(); ++p) {
      const auto& hyp = beam[p];
      const StepScores scores = checked_scores(scorer, source, hyp.tokens);
      ++result.step_evaluations;
      if (tracker) tracker->extend_min_all(hyp.distances, position, min_dist);
      for (std::size_t w = 1; w < vocab; ++w) {
        if (scores[w] == kForbidden) continue;
        const double model = hyp.model + scores[w];
        const double penalty = tracker ? lambda * min_dist[w] : 0.0;
        expansions.push_back({static_cast<std::uint32_t>(p), static_cast<TokenId>(w), model, penalty, model - penalty});
      }
    }
    if (expansions.empty()) {
      beam.clear();
      break;
    }

    // Each parent has one EOS expansion, so the first 2k ranked entries hold
    // at least k continuations whenever that many exist.
    const auto keep = std::min(expansions.size(), 2 * k);
    std::partial_sort(expansions.begin(), expansions.begin() + static_cast<std::ptrdiff_t>(keep), expansions.end(),
                      [&](const Expansion& a, const Expansion& b) {
                        if (a.search != b.search) return a.search > b.search;
                        if (a.parent != b.parent) return beam[a.parent].tokens < beam[b.parent].tokens;
                        return a.token < b.token;
                      });

    std::vector<Hypothesis> next;
    next.reserve(k);
    for (std::size_t i = 0; i < keep && next.size() < k; ++i) {
      const auto& e = expansions[i];
      const auto& parent = beam[e.parent];
      if (e.token == kEos) {
        close(parent, e.model, e.penalty);
        continue;
      }
      Hypothesis h;
      h.tokens = parent.tokens;
      h.tokens.push_back(e.token);
      h.model = e.model;
      if (tracker) {
        h.distances.resize(tracker->width());
        tracker->extend(parent.distances, position, e.token, h.distances);
      }
      next.push_back(std::move(h));
    }
    beam = std::move(next);
    if (finished.size() >= k &&
        (config.stop == StopRule::FirstCome || bounded_done(finished, beam, lambda, k)))
      break;

    if (step == config.max_length) {
      // Force-finish: charge the EOS step score and distance at position M.
      for (const auto& hyp : beam) {
        const StepScores scores = checked_scores(scorer, source, hyp.tokens);
        ++result.step_evaluations;
        if (scores[kEos] == kForbidden) continue;
        double penalty = 0.0;
        if (tracker) {
          std::vector<double> d(tracker->width());
          tracker->extend(hyp.distances, config.max_length, kEos, d);
          penalty = lambda * min_of(d);
        }
        close(hyp, hyp.model + scores[kEos], penalty);
      }
    }
  }

  if (finished.empty()) throw DecodeFailure("beam search found no finished hypothesis");
  rank_finished(finished, config);
  result.items = std::move(finished);
  return result;
}

CandidateSet exact_topk(const Scorer& scorer, std::string_view source, const BeamConfig& config,
                        const std::optional<Guidance>& guidance, std::size_t limit) {
  check_config(config);
  const auto tracker = make_tracker(scorer, guidance);
  const double lambda = guidance ? guidance->lambda : 0.0;
  const std::size_t vocab = scorer.spec().vocabulary().size();

  // Sequences with j content tokens: (vocab - 2)^j, j = 0..M.
  const std::size_t content = vocab >= 2 ? vocab - 2 : 0;
  std::size_t total = 0, layer = 1;
  for (std::size_t j = 0; j <= config.max_length; ++j) {
    total += layer;
    if (total > limit) throw DecodeFailure("exhaustive search exceeds the enumeration limit");
    if (content && layer > limit / content + 1) layer = limit + 1;
    else layer *= content;
  }

  CandidateSet result;
  result.spec = scorer.spec().id();
  std::vector<Candidate> finished;
  std::vector<TokenId> prefix;

  auto visit = [&](auto&& self, double model, const std::vector<double>& distances) -> void {
    const StepScores scores = checked_scores(scorer, source, prefix);
    ++result.step_evaluations;
    const std::size_t position = prefix.size();
    std::vector<double> next(distances.size());
    for (std::size_t w = 1; w < vocab; ++w) {
      const auto token = static_cast<TokenId>(w);
      if (scores[w] == kForbidden) continue;
      if (token != kEos && prefix.size() >= config.max_length) continue;
      if (tracker) tracker->extend(distances, position, token, next);
      const double m = model + scores[w];
      if (token == kEos) {
        Candidate c;
        c.seq = {prefix, result.spec};
        c.seq.ids.push_back(kEos);
        c.model_score = m;
        c.penalty = tracker ? lambda * min_of(next) : 0.0;
        finished.push_back(std::move(c));
      } else {
        prefix.push_back(token);
        self(self, m, next);
        prefix.pop_back();
      }
    }
  };
  visit(visit, 0.0, std::vector<double>(tracker ? tracker->width() : 0, 0.0));

  if (finished.empty()) throw DecodeFailure("no sequence has a finite score");
  rank_finished(finished, config);
  result.items = std::move(finished);
  return result;
}

std::string format_nbest(const CandidateSet& set, const ModelTextSpec& spec) {
  std::ostringstream out;
  char buf[96];
  for (std::size_t i = 0; i < set.items.size(); ++i) {
    const auto& c = set.items[i];
    std::snprintf(buf, sizeof buf, "%zu\t%.9g\t%.9g\t%.9g\t", i, c.normalized, c.model_score, c.penalty);
    out << buf;
    for (std::size_t j = 0; j < c.seq.ids.size(); ++j) {
      if (j) out << ' ';
      out << spec.vocabulary().token(c.seq.ids[j]);
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace twist
