#include <filesystem>
#include <random>

#include "doctest.h"
#include "fixtures.hpp"
#include "twist/persist.hpp"

using namespace twist;
using namespace twist::testing;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / "twist_persist_test";
  fs::create_directories(dir);
  return dir / name;
}

NGramModel small_model(GenerationOrder order = GenerationOrder::LeftToRight) {
  const std::vector<std::string> corpus{"the cat sat", "the dog sat down", "a cat"};
  auto scheme = learn_bpe(corpus, 4);
  auto spec = make_spec(build_vocabulary(corpus, scheme), scheme, order);
  return train_ngram(corpus, spec, {3, 0.2, 0.5});
}

}  // namespace

TEST_SUITE("persist") {
  TEST_CASE("n-gram round trip scores identically") {
    for (auto order : {GenerationOrder::LeftToRight, GenerationOrder::RightToLeft}) {
      auto model = small_model(order);
      const auto path = scratch("model.twng");
      save_ngram(model, path);
      auto loaded = load_ngram(path);
      CHECK(loaded.spec().id() == model.spec().id());
      CHECK(loaded.tables() == model.tables());
      CHECK(loaded.options().k_add == model.options().k_add);
      std::mt19937_64 rng(3);
      for (int i = 0; i < 50; ++i) {
        TokenSequence prefix{{}, model.spec().id()};
        for (std::size_t j = 0, n = rng() % 5; j < n; ++j)
          prefix.ids.push_back(static_cast<TokenId>(2 + rng() % (model.spec().vocabulary().size() - 2)));
        CHECK(score_step(loaded, "the cat", prefix) == score_step(model, "the cat", prefix));
      }
      // Byte-stable.
      CHECK(serialize_ngram(loaded) == serialize_ngram(model));
    }
  }

  TEST_CASE("corrupted files are rejected") {
    const auto bytes = serialize_ngram(small_model());
    auto flipped = bytes;
    flipped[bytes.find("order\t") + 6] = '4';
    CHECK_THROWS_WITH_AS(parse_ngram(flipped), "n-gram model checksum mismatch", PersistError);

    auto version = bytes;
    version.replace(bytes.find('\t') + 1, 1, "9");
    CHECK_THROWS_WITH_AS(parse_ngram(version), "unsupported n-gram model version 9", PersistError);

    CHECK_THROWS_AS(parse_ngram("hello"), PersistError);
    CHECK_THROWS_AS(parse_ngram(bytes.substr(0, bytes.size() / 2)), PersistError);
    CHECK_THROWS_AS(load_ngram(scratch("missing.twng")), PersistError);
  }

  TEST_CASE("spec json round trip") {
    for (TokenizationScheme scheme :
         {TokenizationScheme{WhitespaceScheme{true}}, TokenizationScheme{CharacterScheme{}},
          TokenizationScheme{BpeScheme{{{"a", "b"}, {"ab", "c"}}, "@"}}}) {
      auto spec = make_spec(Vocabulary::from_tokens({"a", "b", "ab"}), scheme, GenerationOrder::RightToLeft);
      auto back = spec_from_json(spec_to_json(*spec));
      CHECK(back->id() == spec->id());
    }
    CHECK_THROWS_AS(spec_from_json(nlohmann::json{{"scheme", {{"kind", "morse"}}}, {"vocabulary", {}}}),
                    PersistError);
  }

  TEST_CASE("spec json with side files") {
    auto vocab_path = scratch("vocab.txt");
    auto merges_path = scratch("merges.txt");
    auto spec = make_spec(Vocabulary::from_tokens({"x", "y", "xy@@"}), BpeScheme{{{"x", "y"}}, "@@"});
    save_vocabulary(spec->vocabulary(), vocab_path.string());
    save_merges(std::get<BpeScheme>(spec->scheme()).merges, merges_path.string());
    nlohmann::json j{{"vocabulary_file", "vocab.txt"},
                     {"scheme", {{"kind", "bpe"}, {"marker", "@@"}, {"merges_file", "merges.txt"}}}};
    CHECK(spec_from_json(j, vocab_path.parent_path())->id() == spec->id());
  }

  TEST_CASE("table scorer json round trip") {
    std::mt19937_64 rng(4);
    auto spec = letters_spec(3);
    auto t = random_tree_scorer(spec, rng, 2, -5, 0, 0.25);
    t->set_position_row("src", 1, random_row(*spec, rng, -3, 0, 0.5));
    t->set_embeddings({{0, 0}, {1, 0}, {0, 1}, {1, 1}, {2, 2}, {0.5, 3}});
    auto back = table_scorer_from_json(nlohmann::json::parse(table_scorer_to_json(*t).dump()));
    CHECK(back.spec().id() == spec->id());
    CHECK(back.default_scores() == t->default_scores());
    CHECK(back.rows() == t->rows());
    CHECK(back.position_rows() == t->position_rows());
    CHECK(back.embedding_table() == t->embedding_table());
  }

  TEST_CASE("table scorer rows by token name") {
    nlohmann::json j = nlohmann::json::parse(R"({
      "spec": {"order": "l2r", "scheme": {"kind": "whitespace"}, "vocabulary": ["<s>", "</s>", "<unk>", "a", "b"]},
      "default": {"*": -2, "</s>": -1},
      "rows": [{"prefix": ["a"], "scores": {"b": -0.5, "</s>": "-inf"}}]
    })");
    auto t = table_scorer_from_json(j);
    auto s = score_step(t, "", seq_of(t.spec_ptr(), {}));
    CHECK(s == StepScores{kForbidden, -1, -2, -2, -2});
    auto after_a = score_step(t, "", seq_of(t.spec_ptr(), {3}));
    CHECK(after_a == StepScores{kForbidden, kForbidden, kForbidden, kForbidden, -0.5});

    j["rows"][0]["scores"]["zzz"] = 0;
    CHECK_THROWS_AS(table_scorer_from_json(j), PersistError);
    j["rows"][0]["scores"].erase("zzz");
    j["rows"][0]["scores"]["b"] = "inf";
    CHECK_THROWS_AS(table_scorer_from_json(j), PersistError);
  }
}
