#include <filesystem>
#include <random>

#include "bridge_server.hpp"
#include "doctest.h"
#include "fixtures.hpp"
#include "twist/persist.hpp"
#include "twist/remote_scorer.hpp"
#include "twist/twist.hpp"

using namespace twist;
using namespace twist::testing;
namespace fs = std::filesystem;

namespace {

std::vector<TokenSequence> random_prefixes(const ModelTextSpec& spec, std::mt19937_64& rng, std::size_t n) {
  std::vector<TokenSequence> out;
  for (std::size_t i = 0; i < n; ++i) {
    TokenSequence p{{}, spec.id()};
    for (std::size_t j = 0, len = rng() % 4; j < len; ++j)
      p.ids.push_back(static_cast<TokenId>(3 + rng() % (spec.vocabulary().size() - 3)));
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace

TEST_SUITE("remote") {
  TEST_CASE("handshake and full scoring") {
    std::mt19937_64 rng(51);
    auto spec = letters_spec(4);
    auto local = random_tree_scorer(spec, rng, 3);
    PairedBridge bridge(*local);
    RemoteScorer remote(bridge.take_channel(), {});
    CHECK(remote.spec().id() == spec->id());
    CHECK_FALSE(remote.has_embeddings());
    CHECK(remote.requests() == 1);
    for (const auto& p : random_prefixes(*spec, rng, 40)) CHECK(score_step(remote, "s", p) == score_step(*local, "s", p));
    CHECK(remote.requests() == 41);
  }

  TEST_CASE("truncated responses use the floor") {
    std::mt19937_64 rng(52);
    auto spec = letters_spec(5);
    auto local = random_tree_scorer(spec, rng, 2);
    BridgeServeOptions serve;
    serve.floor_margin = 0.5;
    PairedBridge bridge(*local, serve);
    RemoteOptions opts;
    opts.top_n = 2;
    RemoteScorer remote(bridge.take_channel(), opts);
    for (const auto& p : random_prefixes(*spec, rng, 30)) {
      const auto full = score_step(*local, "", p);
      const auto cut = score_step(remote, "", p);
      std::vector<double> sorted(full.begin(), full.end());
      std::sort(sorted.rbegin(), sorted.rend());
      const double floor = sorted[1] - 0.5;
      std::size_t exact = 0;
      for (std::size_t w = 1; w < full.size(); ++w) {
        if (cut[w] == full[w]) ++exact;
        else CHECK(cut[w] == floor);
        if (full[w] >= sorted[1]) CHECK(cut[w] == full[w]);
      }
      CHECK(exact >= 2);
    }
  }

  TEST_CASE("preloaded vocabulary") {
    auto spec = letters_spec(3);
    ConstantScorer local(spec, -1.0);
    {
      PairedBridge bridge(local);
      RemoteOptions opts;
      opts.preloaded_vocabulary = spec->vocabulary();
      RemoteScorer remote(bridge.take_channel(), opts);
      CHECK(remote.spec().id() == spec->id());
    }
    {
      PairedBridge bridge(local);
      RemoteOptions opts;
      opts.preloaded_vocabulary = letters_spec(4)->vocabulary();
      CHECK_THROWS_AS(RemoteScorer(bridge.take_channel(), opts), SpecMismatchError);
    }
    {
      BridgeServeOptions lying;
      lying.hash_override = "0000000000000000";
      PairedBridge bridge(local, lying);
      CHECK_THROWS_AS(RemoteScorer(bridge.take_channel(), {}), SpecMismatchError);
    }
  }

  TEST_CASE("advertised order") {
    auto spec = letters_spec(2);
    ConstantScorer local(spec, -1.0);
    BridgeServeOptions opts;
    opts.order_override = GenerationOrder::RightToLeft;
    PairedBridge bridge(local, opts);
    RemoteScorer remote(bridge.take_channel(), {});
    CHECK(remote.spec().order() == GenerationOrder::RightToLeft);
    CHECK(remote.spec().id() == letters_spec(2, GenerationOrder::RightToLeft)->id());
  }

  TEST_CASE("server errors keep the connection usable") {
    auto spec = letters_spec(2);
    ConstantScorer local(spec, -1.0);
    PairedBridge bridge(local);
    RemoteScorer remote(bridge.take_channel(), {});
    const std::vector<TokenId> bad{42};
    CHECK_THROWS_WITH_AS(remote.score_step("", bad), doctest::Contains("bridge error"), RemoteError);
    CHECK(score_step(remote, "", seq_of(spec, {3})) == score_step(local, "", seq_of(spec, {3})));
  }

  TEST_CASE("invalid JSON from the server") {
    auto spec = letters_spec(2);
    ConstantScorer local(spec, -1.0);
    BridgeServeOptions opts;
    opts.corrupt_first_score = true;
    PairedBridge bridge(local, opts);
    RemoteScorer remote(bridge.take_channel(), {});
    CHECK_THROWS_WITH_AS(score_step(remote, "", seq_of(spec, {})), doctest::Contains("invalid JSON"), RemoteError);
    CHECK(score_step(remote, "", seq_of(spec, {})) == score_step(local, "", seq_of(spec, {})));
  }

  TEST_CASE("embeddings capability") {
    auto spec = letters_spec(2);
    TableScorer with(spec, {0, -1, -1, -1, -1});
    with.set_embeddings({{0, 0}, {1, 2}, {0, 0}, {3, 4}, {5, 6}});
    {
      PairedBridge bridge(with);
      RemoteScorer remote(bridge.take_channel(), {});
      REQUIRE(remote.has_embeddings());
      CHECK(embeddings(remote, 4) == std::vector<double>{5, 6});
      std::vector<TokenSequence> cands{seq_of(spec, {3, kEos})};
      CHECK(min_distance(seq_of(spec, {4}), cands, DistanceFn::EmbeddingMin, remote) ==
            min_distance(seq_of(spec, {4}), cands, DistanceFn::EmbeddingMin, with));
    }
    {
      ConstantScorer without(spec, -1.0);
      PairedBridge bridge(without);
      RemoteScorer remote(bridge.take_channel(), {});
      CHECK_FALSE(remote.has_embeddings());
      CHECK_THROWS_AS(embeddings(remote, 3), CapabilityError);
      std::vector<TokenSequence> cands{seq_of(spec, {3, kEos})};
      CHECK_THROWS_AS(min_distance(seq_of(spec, {4}), cands, DistanceFn::EmbeddingMin, remote), CapabilityError);
    }
  }

  TEST_CASE("spawned bridge over stdio") {
    std::mt19937_64 rng(53);
    auto spec = letters_spec(3);
    auto table = random_tree_scorer(spec, rng, 2);
    const auto dir = fs::temp_directory_path() / "twist_remote_test";
    fs::create_directories(dir);
    write_file(dir / "table.json", table_scorer_to_json(*table).dump());
    auto remote = RemoteScorer::spawn({TWIST_MOCK_BRIDGE, (dir / "table.json").string()});
    for (const auto& p : random_prefixes(*spec, rng, 20)) CHECK(score_step(*remote, "", p) == score_step(*table, "", p));

    const std::vector<std::string> corpus{"a b a", "c a b", "b b c"};
    auto model = train_ngram(corpus, spec, {2, 0.1, 0.3});
    save_ngram(model, dir / "model.twng");
    auto served = RemoteScorer::spawn({TWIST_MOCK_BRIDGE, (dir / "model.twng").string()});
    CHECK(served->spec().id() == spec->id());
    for (const auto& p : random_prefixes(*spec, rng, 20))
      CHECK(score_step(*served, "a c", p) == score_step(model, "a c", p));

    CHECK_THROWS_AS(RemoteScorer::spawn({"/nonexistent/bridge"}), RemoteError);
  }

  TEST_CASE("tcp bridge") {
    std::mt19937_64 rng(54);
    auto spec = letters_spec(3);
    auto table = random_tree_scorer(spec, rng, 2);
    TcpBridge bridge(*table);
    {
      auto a = RemoteScorer::connect(bridge.address());
      auto b = RemoteScorer::connect(bridge.address());
      for (const auto& p : random_prefixes(*spec, rng, 10)) {
        CHECK(score_step(*a, "", p) == score_step(*table, "", p));
        CHECK(score_step(*b, "", p) == score_step(*table, "", p));
      }
    }
    CHECK(bridge.connections() == 2);
    CHECK_THROWS_AS(RemoteScorer::connect("no-port"), RemoteError);
  }

  TEST_CASE("remote decoding matches in-process decoding") {
    std::mt19937_64 rng(55);
    auto fs_ = letters_spec(3);
    auto gs = letters_spec(3, GenerationOrder::RightToLeft);
    auto f = random_tree_scorer(fs_, rng, 4);
    auto g = random_tree_scorer(gs, rng, 4);
    PairedBridge fb(*f), gb(*g);
    auto rf = std::make_shared<RemoteScorer>(fb.take_channel(), RemoteOptions{});
    auto rg = std::make_shared<RemoteScorer>(gb.take_channel(), RemoteOptions{});
    for (int line = 0; line < 20; ++line) {
      const std::string src = "line " + std::to_string(line);
      DecodeSession local{{f, SourceView{{"text"}}}, {g, SourceView{{"text"}}}, SourceRecord{{"text", src}},
                          {3, 4, 1.0}, {}};
      DecodeSession wire = local;
      wire.f.scorer = rf;
      wire.g.scorer = rg;
      local.guidance.iterations = wire.guidance.iterations = 2;

      CHECK(format_nbest(isolation_decode(*rf, src, local.beam), *fs_) ==
            format_nbest(isolation_decode(*f, src, local.beam), *fs_));
      auto a = twist_decode(local), b = twist_decode(wire);
      REQUIRE(a.trace.passes.size() == b.trace.passes.size());
      for (std::size_t i = 0; i < a.trace.passes.size(); ++i) {
        const auto& spec = i % 2 ? *gs : *fs_;
        CHECK(format_nbest(a.trace.passes[i].candidates, spec) == format_nbest(b.trace.passes[i].candidates, spec));
      }
      auto ra = rerank_decode(local), rb = rerank_decode(wire);
      CHECK(ra.output == rb.output);
      CHECK(ra.rescored == rb.rescored);
    }
  }
}
