#include <cmath>
#include <random>

#include "doctest.h"
#include "fixtures.hpp"
#include "twist/ngram.hpp"

using namespace twist;
using namespace twist::testing;

namespace {

SpecPtr spec_for(const std::vector<std::string>& corpus, GenerationOrder order = GenerationOrder::LeftToRight) {
  return make_spec(build_vocabulary(corpus, WhitespaceScheme{}), WhitespaceScheme{}, order);
}

}  // namespace

TEST_SUITE("ngram") {
  TEST_CASE("bigram counts") {
    const std::vector<std::string> corpus{"a b", "a b"};
    auto spec = spec_for(corpus);
    auto m = train_ngram(corpus, spec, {2, 0.1, 0});
    const TokenId a = *spec->vocabulary().find("a"), b = *spec->vocabulary().find("b");
    CHECK(m.count({a}, b) == 2);
    CHECK(m.count({kBos}, a) == 2);
    CHECK(m.count({b}, kEos) == 2);
    CHECK(m.count({}, a) == 2);
    CHECK(m.count({a}, a) == 0);
    CHECK(m.count({a, b}, kEos) == 0);  // beyond the model order
  }

  TEST_CASE("interpolated probability by hand") {
    const std::vector<std::string> corpus{"a b", "a b"};
    auto spec = spec_for(corpus);
    auto m = train_ngram(corpus, spec, {2, 0.1, 0});
    const TokenId a = *spec->vocabulary().find("a"), b = *spec->vocabulary().find("b");
    // |V| = 4 emittable tokens (</s>, <unk>, a, b); 6 unigram events.
    const double p1_b = (2 + 0.1) / (6 + 0.4);
    const double w = 2.0 / (2 + 0.4);
    const double p2_b = w * (2 + 0.1) / (2 + 0.4) + (1 - w) * p1_b;
    const std::vector<TokenId> prefix{a};
    CHECK(m.probability(prefix, b) == doctest::Approx(p2_b).epsilon(1e-12));
    CHECK(score_step(m, "", seq_of(spec, {a}))[static_cast<std::size_t>(b)] ==
          doctest::Approx(std::log(p2_b)).epsilon(1e-12));
  }

  TEST_CASE("observed continuation beats unobserved tokens") {
    const std::vector<std::string> corpus{"a b", "a b"};
    auto spec = spec_for(corpus);
    auto m = train_ngram(corpus, spec, {2, 0.1, 0});
    const TokenId a = *spec->vocabulary().find("a"), b = *spec->vocabulary().find("b");
    auto s = score_step(m, "", seq_of(spec, {a}));
    CHECK(s[static_cast<std::size_t>(b)] > s[static_cast<std::size_t>(a)]);
    CHECK(s[static_cast<std::size_t>(b)] > s[kUnk]);
    CHECK(s[static_cast<std::size_t>(b)] > s[kEos]);
  }

  TEST_CASE("degenerate unigram prefers the only token") {
    const std::vector<std::string> corpus{"t t t", "t"};
    auto spec = spec_for(corpus);
    auto m = train_ngram(corpus, spec, {1, 0.5, 0});
    const auto t = static_cast<std::size_t>(*spec->vocabulary().find("t"));
    for (const auto& prefix : std::vector<std::vector<TokenId>>{{}, {3}, {3, 3, 3}, {kUnk}}) {
      auto s = score_step(m, "", seq_of(spec, prefix));
      CHECK(std::max_element(s.begin(), s.end()) - s.begin() == static_cast<std::ptrdiff_t>(t));
    }
  }

  TEST_CASE("distributions are normalized and finite") {
    std::mt19937_64 rng(8);
    const std::vector<std::string> corpus{"the cat sat", "the dog sat down", "a cat ran", "the the cat"};
    auto spec = spec_for(corpus);
    for (std::size_t order = 1; order <= 4; ++order) {
      auto m = train_ngram(corpus, spec, {order, 0.05, 0});
      for (int i = 0; i < 200; ++i) {
        std::vector<TokenId> prefix;
        for (std::size_t j = 0, n = rng() % 6; j < n; ++j)
          prefix.push_back(static_cast<TokenId>(2 + rng() % (spec->vocabulary().size() - 2)));
        auto s = score_step(m, "", seq_of(spec, prefix));
        double total = 0.0;
        for (std::size_t w = 1; w < s.size(); ++w) {
          CHECK(std::isfinite(s[w]));
          CHECK(s[w] <= 0.0);
          total += std::exp(s[w]);
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
      }
    }
  }

  TEST_CASE("unknown-only sequences score finitely") {
    const std::vector<std::string> corpus{"x y"};
    auto spec = spec_for(corpus);
    auto m = train_ngram(corpus, spec, {3, 0.1, 0});
    auto unk = encode_text("p q r s", *spec);
    unk.ids.push_back(kEos);
    CHECK(unk.ids == std::vector<TokenId>{kUnk, kUnk, kUnk, kUnk, kEos});
    CHECK(std::isfinite(score_sequence(m, "", unk)));
  }

  TEST_CASE("copy bonus rewards source tokens and stays non-positive") {
    const std::vector<std::string> corpus{"a b c", "c b a"};
    auto spec = spec_for(corpus);
    auto plain = train_ngram(corpus, spec, {2, 0.1, 0});
    auto copy = train_ngram(corpus, spec, {2, 0.1, 1.5});
    const auto c = static_cast<std::size_t>(*spec->vocabulary().find("c"));
    const auto a = static_cast<std::size_t>(*spec->vocabulary().find("a"));
    auto p = score_step(plain, "c zz", seq_of(spec, {}));
    auto q = score_step(copy, "c zz", seq_of(spec, {}));
    CHECK(q[c] == doctest::Approx(std::min(0.0, p[c] + 1.5)));
    CHECK(q[a] == p[a]);
    CHECK(q[kUnk] == p[kUnk]);
    for (std::size_t w = 1; w < q.size(); ++w) CHECK(q[w] <= 0.0);
    CHECK(score_step(copy, "", seq_of(spec, {})) == p);
  }

  TEST_CASE("right-to-left models train on reversed lines") {
    const std::vector<std::string> corpus{"a b c"};
    auto spec = spec_for(corpus, GenerationOrder::RightToLeft);
    auto m = train_ngram(corpus, spec, {2, 0.1, 0});
    const TokenId a = *spec->vocabulary().find("a"), c = *spec->vocabulary().find("c");
    CHECK(m.count({kBos}, c) == 1);
    CHECK(m.count({a}, kEos) == 1);
  }

  TEST_CASE("training preconditions") {
    auto spec = spec_for({"a"});
    CHECK_THROWS_AS(train_ngram({}, spec, {}), ScoringError);
    CHECK_THROWS_AS(train_ngram({"a"}, spec, {0, 0.1, 0}), ScoringError);
    CHECK_THROWS_AS(NGramModel(spec, {2, 0.0, 0}, NGramTables(2)), ScoringError);
  }
}
