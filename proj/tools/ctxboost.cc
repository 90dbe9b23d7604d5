// tools/ctxboost.cc

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

#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ctxboost/biasing.h"
#include "ctxboost/harness.h"

using namespace ctxboost;

int main(int argc, char **argv) {
  CLI::App app{"Streaming WFST decoding with per-channel contextual biasing"};
  app.require_subcommand(1);

  DecodeOptions dopts;
  std::string contexts;
  std::string report;
  auto *decode = app.add_subcommand("decode", "Decode utterances, write hypotheses and a report");
  decode->add_option("--graph", dopts.graph, "Decoding graph (FST text format)")->required();
  decode->add_option("--symtab", dopts.symtab, "Word symbol table")->required();
  decode->add_option("--contexts", contexts, "Context manifest (id<TAB>entity-file)");
  decode->add_option("--utts", dopts.utts, "Utterance TSV")->required();
  decode->add_option("--beam", dopts.decoder.beam, "Pruning beam")->capture_default_str();
  decode->add_option("--max-active", dopts.decoder.max_active, "Max active tokens")
      ->capture_default_str();
  decode->add_option("--discount", dopts.discount, "Discount added to boosted arcs")
      ->capture_default_str();
  decode->add_option("--partial-every", dopts.decoder.partial_every,
                     "Emit a partial hypothesis every N frames")
      ->capture_default_str();
  decode->add_option("--report", report, "JSON report path");

  GenScoresOptions gopts;
  std::vector<std::string> margins;
  auto *gen = app.add_subcommand("gen-scores", "Write synthetic score matrices for transcripts");
  gen->add_option("--graph", gopts.graph, "Decoding graph")->required();
  gen->add_option("--symtab", gopts.symtab, "Word symbol table")->required();
  gen->add_option("--transcript", gopts.transcript, "Lines 'utt_id word word ...'")->required();
  gen->add_option("--noise", gopts.gen.noise, "Cost of non-target labels")->capture_default_str();
  gen->add_option("--margin", margins, "word:confusion:true_cost:confusion_cost (repeatable)");
  gen->add_option("--seed", gopts.seed, "Jitter seed")->capture_default_str();
  gen->add_option("--out", gopts.out_dir, "Output directory")->required();

  std::string cgraph, csymtab, entities, bfst, cid = "ctx", cout_path;
  BoostCompileConfig ccfg;
  auto *compile = app.add_subcommand("compile-context", "Compile entities to boosted arc indices");
  compile->add_option("--graph", cgraph, "Decoding graph")->required();
  compile->add_option("--symtab", csymtab, "Word symbol table")->required();
  auto *ent_opt = compile->add_option("--entities", entities, "Entity list, one per line");
  auto *bfst_opt = compile->add_option("--biasing-fst", bfst, "Acyclic biasing acceptor");
  ent_opt->excludes(bfst_opt);
  compile->add_option("--id", cid, "Context id")->capture_default_str();
  compile->add_option("--discount", ccfg.discount, "Discount")->capture_default_str();
  compile->add_option("--max-eps-depth", ccfg.max_epsilon_depth, "Epsilon-output search depth")
      ->capture_default_str();
  compile->add_option("--out", cout_path, "Write JSON here instead of stdout");

  std::string shyps, sutts, sreport;
  auto *score = app.add_subcommand("score", "Score a hypothesis stream against references");
  score->add_option("--hyps", shyps, "JSON-lines hypothesis stream")->required();
  score->add_option("--utts", sutts, "Utterance TSV with references")->required();
  score->add_option("--report", sreport, "Write JSON here instead of stdout");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*decode) {
      if (!contexts.empty()) dopts.contexts = contexts;
      if (!report.empty()) dopts.report = report;
      RunReport r = RunDecode(dopts, std::cout);
      std::size_t failed = 0;
      for (const auto &u : r.utterances)
        if (u.error) {
          ++failed;
          std::cerr << "utterance " << u.utt_id << ": " << *u.error << '\n';
        }
      std::cerr << "decoded " << r.utterances.size() - failed << "/" << r.utterances.size()
                << " utterances";
      if (r.wer) std::cerr << ", WER " << r.wer->Percent();
      if (r.ent_wer) std::cerr << ", EntWER " << r.ent_wer->Percent();
      if (r.rtfx) std::cerr << ", RTFX " << *r.rtfx;
      std::cerr << '\n';
    } else if (*gen) {
      for (const auto &m : margins) gopts.gen.margins.push_back(ParseMarginSpec(m));
      auto specs = RunGenScores(gopts);
      std::cerr << "wrote " << specs.size() << " score matrices to " << gopts.out_dir << '\n';
    } else if (*compile) {
      if (entities.empty() && bfst.empty())
        throw std::runtime_error("one of --entities or --biasing-fst is required");
      CsrFst csr = BuildCsr(ReadTextFstFile(cgraph));
      SymbolTable symtab = ReadSymbolTableFile(csymtab);
      EntityList list = !entities.empty()
                            ? ReadEntityListFile(entities)
                            : BiasingFstToEntities(ReadTextFstFile(bfst), symtab);
      std::string json = ContextToJson(CompileContext(csr, symtab, list, ccfg, cid));
      if (cout_path.empty()) {
        std::cout << json << '\n';
      } else {
        std::ofstream os(cout_path);
        if (!os) throw std::runtime_error("cannot write " + cout_path);
        os << json << '\n';
      }
    } else if (*score) {
      ScoreSummary s = ScoreHypotheses(ReadFinalHypotheses(shyps), ReadUtteranceSpecs(sutts));
      nlohmann::ordered_json j;
      j["scored"] = s.scored;
      j["wer"] = s.wer ? nlohmann::ordered_json(s.wer->Percent()) : nullptr;
      j["ent_wer"] = s.ent_wer ? nlohmann::ordered_json(s.ent_wer->Percent()) : nullptr;
      if (sreport.empty()) {
        std::cout << j.dump(2) << '\n';
      } else {
        std::ofstream os(sreport);
        if (!os) throw std::runtime_error("cannot write " + sreport);
        os << j.dump(2) << '\n';
      }
    }
  } catch (const std::exception &e) {
    std::cerr << "ctxboost: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
