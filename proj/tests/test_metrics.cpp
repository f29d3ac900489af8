#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "twist/metrics.hpp"

using namespace twist;

namespace {

std::string random_text(std::mt19937_64& rng, std::size_t max_words) {
  static const char* words[] = {"the", "cat", "sat", "on", "mat", "a", "dog", "ran", ".", ","};
  std::string out;
  for (std::size_t i = 0, n = 1 + rng() % max_words; i < n; ++i) {
    if (i) out += ' ';
    out += words[rng() % 10];
  }
  return out;
}

std::vector<EvalPair> random_corpus(std::mt19937_64& rng, std::size_t n) {
  std::vector<EvalPair> pairs;
  for (std::size_t i = 0; i < n; ++i) {
    EvalPair p{random_text(rng, 8), {}};
    for (std::size_t r = 0, m = 1 + rng() % 3; r < m; ++r) p.references.push_back(random_text(rng, 8));
    pairs.push_back(std::move(p));
  }
  return pairs;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("bleu hand check") {
    const double expect = 100.0 * std::exp(1.0 - 4.0 / 3.0);
    CHECK(corpus_bleu({{"the cat sat", {"the cat sat down"}}}) == doctest::Approx(expect).epsilon(1e-12));
    CHECK(std::round(corpus_bleu({{"the cat sat", {"the cat sat down"}}}) * 1e4) / 1e4 == 71.6531);
  }

  TEST_CASE("bleu extremes") {
    std::vector<EvalPair> same{{"the cat sat on the mat .", {"the cat sat on the mat ."}},
                               {"a dog ran", {"a dog ran"}}};
    CHECK(corpus_bleu(same) == doctest::Approx(100.0));
    CHECK(corpus_bleu({{"x y z w", {"a b c d"}}}) == 0.0);
    CHECK(corpus_bleu({}) == 0.0);
  }

  TEST_CASE("bleu statistics") {
    auto s = bleu_stats({{"the the the", {"the cat", "the the dog"}}});
    CHECK(s.matches[0] == 2);  // clipped by the second reference
    CHECK(s.totals[0] == 3);
    CHECK(s.totals[3] == 0);
    CHECK(s.hyp_length == 3);
    CHECK(s.ref_length == 3);
    CHECK(bleu_stats({{"a b", {"a b c", "a"}}}).ref_length == 1);  // tie goes to the shorter
  }

  TEST_CASE("bleu tokenizer") {
    CHECK(bleu_tokenize("Hello, world.") == std::vector<std::string>{"Hello", ",", "world", "."});
    CHECK(bleu_tokenize("pi is 3.14, or 1,000!") ==
          std::vector<std::string>{"pi", "is", "3.14", ",", "or", "1,000", "!"});
    CHECK(bleu_tokenize("  ").empty());
  }

  TEST_CASE("smoothing") {
    // No 4-gram match: unsmoothed BLEU is 0, smoothed is positive.
    std::vector<EvalPair> pairs{{"a b c d", {"a b c e"}}};
    CHECK(corpus_bleu(pairs) == 0.0);
    const double smoothed = corpus_bleu(pairs, 4, true);
    const double expect = 100.0 * std::exp((std::log(3.0 / 4) + std::log(2.0 / 3) + std::log(1.0 / 2) +
                                            std::log(1.0 / 2)) / 4);
    CHECK(smoothed == doctest::Approx(expect));
  }

  TEST_CASE("rouge-l hand check") {
    auto r = rouge_l({{"a b c d", {"a c d"}}});
    CHECK(r.recall == 1.0);
    CHECK(r.precision == 0.75);
    CHECK(r.f1 == doctest::Approx(6.0 / 7.0));
    CHECK(std::round(r.f1 * 1e4) / 1e4 == 0.8571);
    CHECK(lcs_length({"a", "b", "c", "d"}, {"a", "c", "d"}) == 3);
  }

  TEST_CASE("rouge-l extremes") {
    CHECK(rouge_l({{"a b", {"a b"}}}).f1 == 1.0);
    auto zero = rouge_l({{"a b", {"c d"}}});
    CHECK(zero.f1 == 0.0);
    CHECK(zero.recall == 0.0);
    CHECK(rouge_l({{"", {"a"}}}).f1 == 0.0);
  }

  TEST_CASE("order invariance") {
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 100; ++trial) {
      auto pairs = random_corpus(rng, 1 + rng() % 6);
      const double bleu = corpus_bleu(pairs), sbleu = corpus_bleu(pairs, 4, true);
      const auto rouge = rouge_l(pairs);
      auto shuffled = pairs;
      std::shuffle(shuffled.begin(), shuffled.end(), rng);
      for (auto& p : shuffled) std::shuffle(p.references.begin(), p.references.end(), rng);
      CHECK(corpus_bleu(shuffled) == doctest::Approx(bleu).epsilon(1e-12));
      CHECK(corpus_bleu(shuffled, 4, true) == doctest::Approx(sbleu).epsilon(1e-12));
      CHECK(rouge_l(shuffled).f1 == doctest::Approx(rouge.f1).epsilon(1e-12));
    }
  }

  TEST_CASE("bounds and monotone references") {
    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 200; ++trial) {
      auto pairs = random_corpus(rng, 1 + rng() % 5);
      const double bleu = corpus_bleu(pairs, 4, trial % 2);
      CHECK(bleu >= 0.0);
      CHECK(bleu <= 100.0 + 1e-9);
      const auto r = rouge_l(pairs);
      for (double v : {r.recall, r.precision, r.f1}) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
      auto more = pairs;
      more[rng() % more.size()].references.push_back(random_text(rng, 8));
      CHECK(rouge_l(more).f1 >= r.f1 - 1e-12);
    }
  }
}
