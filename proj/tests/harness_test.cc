// tests/harness_test.cc

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

#include <cstdlib>
#include <sstream>
#include <sys/wait.h>

#include <json.hpp>

#include "ctxboost/harness.h"
#include "test_util.h"

using namespace ctxboost;
using namespace ctxboost::testing;
using nlohmann::json;

namespace {

const std::string kFixtures = CTXBOOST_FIXTURES;

std::string Fixture(const std::string &name) { return kFixtures + "/" + name; }

DecodeOptions FixtureOptions() {
  DecodeOptions opts;
  opts.graph = Fixture("f1.fst");
  opts.symtab = Fixture("f1.syms");
  opts.utts = Fixture("utts.tsv");
  return opts;
}

std::map<std::string, json> FinalsByUtt(const std::string &stream) {
  std::map<std::string, json> out;
  std::istringstream is(stream);
  for (std::string line; std::getline(is, line);) {
    json j = json::parse(line);
    if (j["kind"] == "final") out[j["utterance"]] = j;
  }
  return out;
}

struct CliResult {
  int status;
  std::string out;
  std::string err;
};

CliResult RunCli(const std::string &args) {
  auto dir = MakeTempDir("cli");
  std::string cmd = std::string(CTXBOOST_CLI) + " " + args + " >" + (dir / "out").string() +
                    " 2>" + (dir / "err").string();
  int raw = std::system(cmd.c_str());
  CliResult r{WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, ReadFile(dir / "out"), ReadFile(dir / "err")};
  std::filesystem::remove_all(dir);
  return r;
}

}  // namespace

TEST_CASE("utterance spec parsing") {
  auto specs = ReadUtteranceSpecs(Fixture("utts.tsv"));
  REQUIRE(specs.size() == 3);
  CHECK(specs[0].utt_id == "clean");
  CHECK(specs[0].channel_id == "ch1");
  CHECK(specs[0].context_id == "c1");
  CHECK(specs[0].score_path == Fixture("f1_clean.scores"));
  CHECK(specs[0].reference == WordSeq{"alpha", "bravo"});
  CHECK(specs[2].entities == std::vector<WordSeq>{{"charlie"}});

  auto dir = MakeTempDir("specs");
  WriteFile(dir / "dup.tsv", "a\tc\tx.scores\t-\na\tc\ty.scores\t-\n");
  CHECK_THROWS_WITH(ReadUtteranceSpecs((dir / "dup.tsv").string()), doctest::Contains("'a'"));
  WriteFile(dir / "short.tsv", "a\tc\n");
  CHECK_THROWS(ReadUtteranceSpecs((dir / "short.tsv").string()));
  std::filesystem::remove_all(dir);

  std::ostringstream os;
  WriteUtteranceSpecs(specs, os);
  CHECK(os.str().find("margin\tch2\t") != std::string::npos);
}

TEST_CASE("baseline decode reports no biasing") {
  std::ostringstream hyps;
  RunReport r = RunDecode(FixtureOptions(), hyps);
  CHECK_FALSE(r.biased);
  auto finals = FinalsByUtt(hyps.str());
  REQUIRE(finals.size() == 3);
  CHECK(finals["clean"]["words"] == json::array({"alpha", "bravo"}));
  CHECK(finals["margin"]["words"] == json::array({"charlie", "bravo"}));
  CHECK(finals["charlie"]["words"] == json::array({"charlie", "bravo"}));
  for (const auto &u : r.utterances) CHECK_FALSE(u.context_id.has_value());
  REQUIRE(r.wer.has_value());
  CHECK(r.wer->Percent() == doctest::Approx(100.0 / 6.0));
  REQUIRE(r.ent_wer.has_value());
  CHECK(r.ent_wer->Percent() == doctest::Approx(20.0));
  CHECK(r.audio_seconds == doctest::Approx(0.18));
  CHECK(r.rtfx.has_value());

  auto dir = MakeTempDir("report");
  DecodeOptions opts = FixtureOptions();
  opts.report = (dir / "r.json").string();
  std::ostringstream ignored;
  RunDecode(opts, ignored);
  json report = json::parse(ReadFile(dir / "r.json"));
  CHECK(report["biasing"] == "none");
  CHECK(report["num_utterances"] == 3);
  std::filesystem::remove_all(dir);
}

TEST_CASE("biased decode flips the margin utterance") {
  DecodeOptions opts = FixtureOptions();
  opts.contexts = Fixture("contexts.tsv");
  opts.discount = -2.0;
  std::ostringstream hyps;
  RunReport r = RunDecode(opts, hyps);
  CHECK(r.biased);
  CHECK(r.boosted_arcs.at("c1") == 3);
  CHECK(r.boosted_arcs.at("c2") == 1);
  auto finals = FinalsByUtt(hyps.str());
  CHECK(finals["margin"]["words"] == json::array({"alpha", "bravo"}));
  CHECK(finals["margin"]["cost"].get<double>() == doctest::Approx(-2.2));
  CHECK(finals["clean"]["cost"].get<double>() == doctest::Approx(-3.2));
  CHECK(finals["charlie"]["words"] == json::array({"charlie", "bravo"}));
  CHECK(r.wer->Percent() == 0.0);
  CHECK(r.ent_wer->Percent() == 0.0);
}

TEST_CASE("unknown utterance context is fatal when biasing") {
  auto dir = MakeTempDir("badctx");
  WriteFile(dir / "utts.tsv", "u\tc\t" + Fixture("f1_clean.scores") + "\tnope\n");
  DecodeOptions opts = FixtureOptions();
  opts.utts = (dir / "utts.tsv").string();
  opts.contexts = Fixture("contexts.tsv");
  std::ostringstream hyps;
  CHECK_THROWS_WITH(RunDecode(opts, hyps), doctest::Contains("nope"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("per-utterance failures are recorded and the run continues") {
  auto dir = MakeTempDir("fail");
  WriteFile(dir / "narrow.scores", "1 2 0.03\n0 0\n");
  WriteFile(dir / "utts.tsv", "bad\tc\tnarrow.scores\t-\nok\tc\t" + Fixture("f1_clean.scores") +
                                  "\t-\talpha bravo\n");
  DecodeOptions opts = FixtureOptions();
  opts.utts = (dir / "utts.tsv").string();
  std::ostringstream hyps;
  RunReport r = RunDecode(opts, hyps);
  REQUIRE(r.utterances.size() == 2);
  CHECK(r.utterances[0].error.has_value());
  CHECK_FALSE(r.utterances[1].error.has_value());
  CHECK(r.utterances[1].FinalWords() == std::vector<Label>{kAlpha, kBravo});
  std::filesystem::remove_all(dir);
}

TEST_CASE("hypothesis json line") {
  Hypothesis h;
  h.words = {kAlpha, kBravo};
  h.cost = 0.8;
  h.frame = 2;
  h.kind = HypothesisKind::kFinal;
  json j = json::parse(HypothesisToJsonLine("ch1", "u1", h, MakeF1Symbols()));
  CHECK(j["channel"] == "ch1");
  CHECK(j["utterance"] == "u1");
  CHECK(j["kind"] == "final");
  CHECK(j["frame"] == 2);
  CHECK(j["cost"] == 0.8);
  CHECK(j["words"] == json::array({"alpha", "bravo"}));
}

TEST_CASE("synthetic scores") {
  CsrFst csr = BuildCsr(MakeF1());
  SymbolTable syms = MakeF1Symbols();
  ScoreGenConfig cfg;
  std::mt19937_64 rng(1);
  ScoreMatrix s = GenerateScores(csr, syms, {"alpha", "bravo"}, cfg, rng);
  REQUIRE(s.NumFrames() == 2);
  CHECK(s.At(0, kAlpha) == 0.0);
  CHECK(s.At(1, kBravo) == 0.0);
  CHECK(s.At(0, kBravo) >= 5.0);
  CHECK(s.At(0, kBravo) <= 5.1);

  ContextRegistry reg;
  DecoderConfig dcfg;
  Channel ch = InitChannel("g", reg, std::nullopt, dcfg);
  CHECK(DecodeStream(ch, s, csr, dcfg).back().words == std::vector<Label>{kAlpha, kBravo});

  CHECK_THROWS_WITH(GenerateScores(csr, syms, {"alpha", "zulu"}, cfg, rng),
                    doctest::Contains("zulu"));
  // charlie then alpha: alpha is in the vocabulary but not reachable.
  CHECK_THROWS_WITH(GenerateScores(csr, syms, {"charlie", "alpha"}, cfg, rng),
                    doctest::Contains("'alpha'"));

  // Margins are written exactly.
  cfg.margins = {ParseMarginSpec("alpha:charlie:1:0")};
  ScoreMatrix m = GenerateScores(csr, syms, {"alpha", "bravo"}, cfg, rng);
  CHECK(m.At(0, kAlpha) == 1.0);
  CHECK(m.At(0, kCharlie) == 0.0);
  CHECK_THROWS(ParseMarginSpec("alpha:charlie:1"));
  CHECK_THROWS(ParseMarginSpec("alpha:charlie:x:0"));
}

TEST_CASE("transcripts through epsilon arcs are realized") {
  // alpha then bravo via the epsilon arc 1->3 is also valid; either way two
  // emitting arcs.
  CsrFst csr = BuildCsr(MakeF1());
  auto path = RealizeTranscript(csr, MakeF1Symbols(), {"charlie", "bravo"});
  CHECK(path == std::vector<ArcIndex>{1, 4});
}

TEST_CASE("gen-scores is reproducible from the seed") {
  auto a = MakeTempDir("gen_a"), b = MakeTempDir("gen_b");
  GenScoresOptions opts;
  opts.graph = Fixture("f1.fst");
  opts.symtab = Fixture("f1.syms");
  opts.transcript = Fixture("transcript.txt");
  opts.seed = 17;
  opts.out_dir = a.string();
  auto specs = RunGenScores(opts);
  opts.out_dir = b.string();
  RunGenScores(opts);
  REQUIRE(specs.size() == 2);
  for (const auto &s : specs) CHECK(ReadFile(a / s.score_path) == ReadFile(b / s.score_path));
  CHECK(ReadFile(a / "utts.tsv") == ReadFile(b / "utts.tsv"));

  // Round trip: unbiased decoding recovers every transcript.
  DecodeOptions d = FixtureOptions();
  d.utts = (a / "utts.tsv").string();
  std::ostringstream hyps;
  RunReport r = RunDecode(d, hyps);
  REQUIRE(r.wer.has_value());
  CHECK(r.wer->Percent() == 0.0);
  std::filesystem::remove_all(a);
  std::filesystem::remove_all(b);
}

TEST_CASE("score hypotheses from a stream") {
  auto dir = MakeTempDir("score");
  std::ostringstream hyps;
  RunDecode(FixtureOptions(), hyps);
  WriteFile(dir / "hyps.jsonl", hyps.str());
  auto finals = ReadFinalHypotheses((dir / "hyps.jsonl").string());
  CHECK(finals.at("margin") == WordSeq{"charlie", "bravo"});
  ScoreSummary s = ScoreHypotheses(finals, ReadUtteranceSpecs(Fixture("utts.tsv")));
  CHECK(s.scored == 3);
  CHECK(s.wer->Percent() == doctest::Approx(100.0 / 6.0));
  std::filesystem::remove_all(dir);
}

TEST_CASE("cli decode") {
  std::string base = "decode --graph " + Fixture("f1.fst") + " --symtab " + Fixture("f1.syms") +
                     " --utts " + Fixture("utts.tsv");
  CliResult plain = RunCli(base);
  CHECK(plain.status == 0);
  CHECK(FinalsByUtt(plain.out)["margin"]["words"] == json::array({"charlie", "bravo"}));

  CliResult biased = RunCli(base + " --contexts " + Fixture("contexts.tsv") + " --discount -2.0");
  CHECK(biased.status == 0);
  CHECK(FinalsByUtt(biased.out)["margin"]["words"] == json::array({"alpha", "bravo"}));

  CliResult missing = RunCli("decode --graph /nonexistent/g.fst --symtab " + Fixture("f1.syms") +
                             " --utts " + Fixture("utts.tsv"));
  CHECK(missing.status != 0);
  CHECK(missing.err.find("/nonexistent/g.fst") != std::string::npos);

  CliResult unknown = RunCli(base + " --bogus 1");
  CHECK(unknown.status != 0);
}

TEST_CASE("cli compile-context and score") {
  CliResult c = RunCli("compile-context --graph " + Fixture("f1.fst") + " --symtab " +
                       Fixture("f1.syms") + " --entities " + Fixture("c1.entities") + " --id c1");
  REQUIRE(c.status == 0);
  json j = json::parse(c.out);
  CHECK(j["id"] == "c1");
  CHECK(j["arc_indices"] == json::array({0, 2, 4}));

  auto dir = MakeTempDir("cli_score");
  WriteFile(dir / "b.fst", "0 1 1 1\n1 2 2 2\n2\n");
  CliResult viafst = RunCli("compile-context --graph " + Fixture("f1.fst") + " --symtab " +
                            Fixture("f1.syms") + " --biasing-fst " + (dir / "b.fst").string());
  REQUIRE(viafst.status == 0);
  CHECK(json::parse(viafst.out)["arc_indices"] == json::array({0, 2, 4}));

  CliResult dec = RunCli("decode --graph " + Fixture("f1.fst") + " --symtab " +
                         Fixture("f1.syms") + " --utts " + Fixture("utts.tsv"));
  WriteFile(dir / "h.jsonl", dec.out);
  CliResult s = RunCli("score --hyps " + (dir / "h.jsonl").string() + " --utts " +
                       Fixture("utts.tsv"));
  REQUIRE(s.status == 0);
  json sj = json::parse(s.out);
  CHECK(sj["scored"] == 3);
  CHECK(sj["wer"].get<double>() == doctest::Approx(100.0 / 6.0));

  CliResult gen = RunCli("gen-scores --graph " + Fixture("f1.fst") + " --symtab " +
                         Fixture("f1.syms") + " --transcript " + Fixture("transcript.txt") +
                         " --margin alpha:charlie:1:0 --out " + (dir / "gen").string());
  CHECK(gen.status == 0);
  CHECK(std::filesystem::exists(dir / "gen" / "u1.scores"));
  std::filesystem::remove_all(dir);
}
