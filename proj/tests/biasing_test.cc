// tests/biasing_test.cc

// Copyright 2026 The ctxboost Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "ctxboost/biasing.h"
#include "ctxboost/oracle.h"
#include "test_util.h"

using namespace ctxboost;
using namespace ctxboost::testing;

namespace {

using Pairs = std::vector<ReachedArc>;

EntityList Entities(std::vector<std::vector<std::string>> entries) {
  EntityList list;
  list.entries = std::move(entries);
  return list;
}

}  // namespace

TEST_CASE("states_that_output_token on F1") {
  CsrFst csr = BuildCsr(MakeF1());
  CHECK(StatesThatOutputToken(csr, kAlpha) == Pairs{{1, 0}});
  CHECK(StatesThatOutputToken(csr, kBravo) == Pairs{{2, 2}, {2, 4}});
  CHECK(StatesThatOutputToken(csr, 99).empty());
}

TEST_CASE("states_that_output_token includes arcs unreachable from the start") {
  // State 2 is unreachable; its alpha arc still counts.
  Fst f;
  for (int i = 0; i < 3; ++i) f.AddState();
  f.start = 0;
  f.AddArc(0, {1, 2, 1, 0.0});
  f.AddArc(2, {1, 1, 1, 0.0});
  f.SetFinal(1, 0.0);
  CHECK(StatesThatOutputToken(BuildCsr(f), 1) == Pairs{{1, 1}});
}

TEST_CASE("dfs_special on F1") {
  CsrFst csr = BuildCsr(MakeF1());
  CHECK(DfsSpecial(csr, 1, kBravo, 10) == Pairs{{2, 2}, {2, 4}});
  CHECK(DfsSpecial(csr, 3, kAlpha, 10).empty());
  CHECK(DfsSpecial(csr, 0, kCharlie, 10) == Pairs{{3, 1}});
  // Depth 0 sees only the arcs of the state itself.
  CHECK(DfsSpecial(csr, 1, kBravo, 0) == Pairs{{2, 2}});
}

TEST_CASE("find_boost_arcs on F1") {
  CsrFst csr = BuildCsr(MakeF1());
  CHECK(FindBoostArcs(csr, {kAlpha}) == std::vector<ArcIndex>{0});
  CHECK(FindBoostArcs(csr, {kAlpha, kBravo}) == std::vector<ArcIndex>{0, 2, 4});
  CHECK(FindBoostArcs(csr, {kCharlie, kAlpha}).empty());
  CHECK(FindBoostArcs(csr, {kBravo}) == std::vector<ArcIndex>{2, 4});
  CHECK(FindBoostArcs(csr, {kCharlie, kBravo}) == std::vector<ArcIndex>{1, 4});
  CHECK(FindBoostArcs(csr, {kAlpha, kBravo, kBravo}) == std::vector<ArcIndex>{0});
  CHECK_THROWS_AS(FindBoostArcs(csr, {}), BiasingError);
  CHECK_THROWS_AS(FindBoostArcs(csr, {kAlpha, kEpsilon}), BiasingError);
}

TEST_CASE("find_boost_arcs depth bound cuts the epsilon bridge") {
  CsrFst csr = BuildCsr(MakeF1());
  BoostCompileConfig cfg;
  cfg.max_epsilon_depth = 0;
  // Without the epsilon arc 1->3, only arc 2 follows alpha.
  CHECK(FindBoostArcs(csr, {kAlpha, kBravo}, cfg) == std::vector<ArcIndex>{0, 2});
}

TEST_CASE("one-step lookahead semantics") {
  // Chain a b c: 0 -a-> 1 -b-> 2 -c-> 3 and a dead-end 0 -a-> 4 -b-> 5.
  Fst f;
  for (int i = 0; i < 6; ++i) f.AddState();
  f.start = 0;
  f.AddArc(0, {1, 1, 1, 0});  // 0
  f.AddArc(0, {1, 1, 4, 0});  // 1
  f.AddArc(1, {2, 2, 2, 0});  // 2
  f.AddArc(2, {3, 3, 3, 0});  // 3
  f.AddArc(4, {2, 2, 5, 0});  // 4
  f.SetFinal(3, 0);
  CsrFst csr = BuildCsr(f);
  // Arc 4 is the b-arc of the dead end: b is at position 2 < k and c does
  // not follow it, so it is not boosted. Arc 1 still is (b follows it).
  CHECK(FindBoostArcs(csr, {1, 2, 3}) == std::vector<ArcIndex>{0, 1, 2, 3});
  CHECK(oracle::BruteForceBoostArcs(f, {1, 2, 3}) == std::vector<ArcIndex>{0, 1, 2, 3});
}

TEST_CASE("find_boost_arcs matches the chain oracle on random graphs") {
  std::mt19937_64 rng(2024);
  RandomGraphOptions opt;
  int nonempty = 0;
  for (int trial = 0; trial < 300; ++trial) {
    Fst f = RandomGraph(rng, opt);
    CsrFst csr = BuildCsr(f);
    std::vector<Label> words(1 + rng() % 4);
    for (Label &w : words) w = 1 + static_cast<Label>(rng() % opt.vocab);
    auto got = FindBoostArcs(csr, words);
    auto want = oracle::BruteForceBoostArcs(f, words);
    CHECK(got == want);
    nonempty += !want.empty();
  }
  CHECK(nonempty > 50);
}

TEST_CASE("single-word sequences boost every arc with that output") {
  std::mt19937_64 rng(5);
  RandomGraphOptions opt;
  for (int trial = 0; trial < 100; ++trial) {
    CsrFst csr = BuildCsr(RandomGraph(rng, opt));
    Label w = 1 + static_cast<Label>(rng() % opt.vocab);
    std::vector<ArcIndex> want;
    for (ArcIndex g = 0; g < csr.NumArcs(); ++g)
      if (csr.Olabel(g) == w) want.push_back(g);
    CHECK(FindBoostArcs(csr, {w}) == want);
  }
}

TEST_CASE("compile_context examples") {
  CsrFst csr = BuildCsr(MakeF1());
  SymbolTable syms = MakeF1Symbols();
  BoostCompileConfig cfg;

  BiasingContext a = CompileContext(csr, syms, Entities({{"alpha", "bravo"}}), cfg, "c1");
  CHECK(a.id == "c1");
  CHECK(a.arc_indices == std::vector<ArcIndex>{0, 2, 4});
  CHECK(a.discount == -2.0);
  CHECK(a.stats.compiled == 1);

  BiasingContext oov = CompileContext(csr, syms, Entities({{"alpha", "zulu"}}), cfg, "c2");
  CHECK(oov.arc_indices.empty());
  CHECK(oov.stats.skipped_oov == 1);
  CHECK(oov.stats.empty);

  BiasingContext both =
      CompileContext(csr, syms, Entities({{"alpha", "bravo"}, {"charlie"}}), cfg, "c3");
  CHECK(both.arc_indices == std::vector<ArcIndex>{0, 1, 2, 4});

  BiasingContext unmatched = CompileContext(csr, syms, Entities({{"charlie", "alpha"}}), cfg, "c4");
  CHECK(unmatched.stats.unmatched == 1);
  CHECK(unmatched.stats.empty);

  BiasingContext dup =
      CompileContext(csr, syms, Entities({{"charlie"}, {"charlie"}}), cfg, "c5");
  CHECK(dup.stats.duplicates == 1);
  CHECK(dup.arc_indices == std::vector<ArcIndex>{1});
}

TEST_CASE("compile_context errors") {
  CsrFst csr = BuildCsr(MakeF1());
  SymbolTable syms = MakeF1Symbols();
  BoostCompileConfig strict;
  strict.skip_oov = false;
  CHECK_THROWS_WITH_AS(CompileContext(csr, syms, Entities({{"alpha", "zulu"}}), strict, "x"),
                       doctest::Contains("zulu"), BiasingError);
  BoostCompileConfig positive;
  positive.discount = 1.0;
  CHECK_THROWS_AS(CompileContext(csr, syms, Entities({{"alpha"}}), positive, "x"), BiasingError);
  positive.allow_positive_discount = true;
  CHECK(CompileContext(csr, syms, Entities({{"alpha"}}), positive, "x").discount == 1.0);
}

TEST_CASE("compile_context is order independent and distributes over union") {
  std::mt19937_64 rng(99);
  RandomGraphOptions opt;
  SymbolTable syms;
  syms.AddSymbol("<eps>", 0);
  for (int w = 1; w <= opt.vocab; ++w) syms.AddSymbol("w" + std::to_string(w), w);
  BoostCompileConfig cfg;
  for (int trial = 0; trial < 100; ++trial) {
    CsrFst csr = BuildCsr(RandomGraph(rng, opt));
    std::vector<std::vector<std::string>> all;
    for (int e = 0; e < 6; ++e) {
      std::vector<std::string> ent(1 + rng() % 3);
      for (auto &w : ent) w = "w" + std::to_string(1 + rng() % opt.vocab);
      all.push_back(ent);
    }
    auto ab = CompileContext(csr, syms, Entities(all), cfg, "ab").arc_indices;

    auto shuffled = all;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    CHECK(CompileContext(csr, syms, Entities(shuffled), cfg, "s").arc_indices == ab);

    std::vector<std::vector<std::string>> a(all.begin(), all.begin() + 3), b(all.begin() + 3, all.end());
    auto ia = CompileContext(csr, syms, Entities(a), cfg, "a").arc_indices;
    auto ib = CompileContext(csr, syms, Entities(b), cfg, "b").arc_indices;
    std::vector<ArcIndex> uni;
    std::set_union(ia.begin(), ia.end(), ib.begin(), ib.end(), std::back_inserter(uni));
    CHECK(uni == ab);
    CHECK(std::adjacent_find(ab.begin(), ab.end(), std::greater_equal<>()) == ab.end());
  }
}

TEST_CASE("entity list parsing skips comments and blanks") {
  std::istringstream is("# header\n\nalpha bravo\r\n  charlie\n#alpha\n");
  EntityList list = ParseEntityList(is, "mem");
  REQUIRE(list.entries.size() == 2);
  CHECK(list.entries[0] == std::vector<std::string>{"alpha", "bravo"});
  CHECK(list.entries[1] == std::vector<std::string>{"charlie"});
}

TEST_CASE("biasing_fst_to_entities") {
  SymbolTable syms = MakeF1Symbols();
  SUBCASE("linear acceptor") {
    std::istringstream is("0 1 1 1\n1 2 2 2\n2\n");
    EntityList list = BiasingFstToEntities(ParseTextFst(is), syms);
    CHECK(list.entries == std::vector<std::vector<std::string>>{{"alpha", "bravo"}});
  }
  SUBCASE("two-way branch") {
    std::istringstream is("0 1 1 1\n0 1 3 3\n1 2 2 2\n2\n");
    EntityList list = BiasingFstToEntities(ParseTextFst(is), syms);
    CHECK(list.entries.size() == 2);
  }
  SUBCASE("epsilon arcs emit nothing") {
    std::istringstream is("0 1 0 0\n1 2 3 3\n2\n");
    CHECK(BiasingFstToEntities(ParseTextFst(is), syms).entries ==
          std::vector<std::vector<std::string>>{{"charlie"}});
  }
  SUBCASE("cycle") {
    std::istringstream is("0 1 1 1\n1 0 2 2\n1\n");
    CHECK_THROWS_WITH_AS(BiasingFstToEntities(ParseTextFst(is), syms),
                         doctest::Contains("cycle"), BiasingError);
  }
  SUBCASE("too many paths") {
    // Three binary branches in series: 8 paths.
    std::istringstream is("0 1 1 1\n0 1 2 2\n1 2 1 1\n1 2 2 2\n2 3 1 1\n2 3 2 2\n3\n");
    CHECK_THROWS_WITH_AS(BiasingFstToEntities(ParseTextFst(is), syms, 5),
                         doctest::Contains("more than 5"), BiasingError);
    std::istringstream again("0 1 1 1\n0 1 2 2\n1 2 1 1\n1 2 2 2\n2 3 1 1\n2 3 2 2\n3\n");
    CHECK(BiasingFstToEntities(ParseTextFst(again), syms, 8).entries.size() == 8);
  }
}

TEST_CASE("registry loading") {
  auto dir = MakeTempDir("registry");
  CsrFst csr = BuildCsr(MakeF1());
  SymbolTable syms = MakeF1Symbols();
  WriteFile(dir / "a.txt", "alpha bravo\n");
  WriteFile(dir / "b.txt", "charlie\n");
  WriteFile(dir / "c.txt", "bravo\n");
  WriteFile(dir / "m.tsv", "radar-t0\ta.txt\nradar-t1\tb.txt\nradar-t2\tc.txt\n");
  ContextRegistry reg =
      LoadRegistry(csr, syms, ReadContextManifest((dir / "m.tsv").string()), {});
  CHECK(reg.Size() == 3);
  CHECK(reg.Get("radar-t0")->arc_indices == std::vector<ArcIndex>{0, 2, 4});
  CHECK(reg.Get("radar-t1")->arc_indices == std::vector<ArcIndex>{1});
  CHECK(reg.Get("radar-t2")->arc_indices == std::vector<ArcIndex>{2, 4});
  CHECK(reg.GraphFingerprint() == csr.Fingerprint());
  CHECK_THROWS_AS(reg.Get("missing"), BiasingError);

  WriteFile(dir / "dup.tsv", "radar-t0\ta.txt\nradar-t0\tb.txt\n");
  CHECK_THROWS_WITH_AS(
      LoadRegistry(csr, syms, ReadContextManifest((dir / "dup.tsv").string()), {}),
      doctest::Contains("radar-t0"), BiasingError);

  WriteFile(dir / "bad.tsv", "x\tnope.txt\n");
  CHECK_THROWS_WITH_AS(
      LoadRegistry(csr, syms, ReadContextManifest((dir / "bad.tsv").string()), {}),
      doctest::Contains("nope.txt"), BiasingError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("a 1013-entity list compiles into one context") {
  // Unigram loop over 1013 words.
  Fst f;
  f.AddState();
  f.start = 0;
  f.SetFinal(0, 0.0);
  SymbolTable syms;
  syms.AddSymbol("<eps>", 0);
  std::string entities;
  for (Label w = 1; w <= 1013; ++w) {
    syms.AddSymbol("word" + std::to_string(w), w);
    f.AddArc(0, {w, w, 0, 1.0});
    entities += "word" + std::to_string(w) + "\n";
  }
  auto dir = MakeTempDir("big");
  WriteFile(dir / "ents.txt", entities);
  WriteFile(dir / "m.tsv", "earnings\tents.txt\n");
  CsrFst csr = BuildCsr(f);
  ContextRegistry reg = LoadRegistry(csr, syms, ReadContextManifest((dir / "m.tsv").string()), {});
  REQUIRE(reg.Size() == 1);
  CHECK(reg.Get("earnings")->arc_indices.size() == 1013);
  CHECK(reg.Get("earnings")->stats.compiled == 1013);
  std::filesystem::remove_all(dir);
}

TEST_CASE("is_boosted examples") {
  BiasingContext ctx = MakeContext("c", {3, 17, 42});
  CHECK(IsBoosted(ctx, 17));
  CHECK_FALSE(IsBoosted(ctx, 5));
  CHECK_FALSE(IsBoosted(MakeContext("e", {}), 3));
}

TEST_CASE("is_boosted agrees with a linear scan and stays logarithmic") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 10000; ++trial) {
    std::size_t k = rng() % 200;
    std::vector<ArcIndex> v(k);
    for (auto &x : v) x = static_cast<ArcIndex>(rng() % 500);
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    BiasingContext ctx = MakeContext("r", v);
    ArcIndex g = static_cast<ArcIndex>(rng() % 520);
    std::size_t comparisons = 0;
    bool got = IsBoosted(ctx, g, &comparisons);
    CHECK(got == (std::find(v.begin(), v.end(), g) != v.end()));
    std::size_t bound = v.empty() ? 0 : static_cast<std::size_t>(std::ceil(std::log2(v.size()))) + 1;
    CHECK(comparisons <= bound);
  }
}

TEST_CASE("effective_weight") {
  BiasingContext ctx = MakeContext("c", {3, 17, 42}, -2.0);
  CHECK(EffectiveWeight(&ctx, 17, 0.5) == -1.5);
  CHECK(EffectiveWeight(&ctx, 5, 0.5) == 0.5);
  CHECK(EffectiveWeight(nullptr, 17, 0.5) == 0.5);
  BiasingContext zero = MakeContext("z", {3, 17, 42}, 0.0);
  for (ArcIndex g = 0; g < 50; ++g)
    for (Cost w : {0.0, 0.5, -1.25, 7.0}) CHECK(EffectiveWeight(&zero, g, w) == w);
}

TEST_CASE("context json dump") {
  BiasingContext ctx = MakeContext("c1", {0, 2, 4});
  ctx.stats.compiled = 1;
  std::string json = ContextToJson(ctx);
  CHECK(json.find("\"id\": \"c1\"") != std::string::npos);
  CHECK(json.find("\"discount\": -2.0") != std::string::npos);
  CHECK(json.find("\"compiled\": 1") != std::string::npos);
}
