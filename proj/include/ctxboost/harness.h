// ctxboost/harness.h

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

// Batch experiment driver behind the ctxboost command-line tool: loading,
// multi-channel decoding with per-utterance contexts, synthetic score
// generation, and WER / EntWER / RTFX reporting.

#ifndef CTXBOOST_HARNESS_H_
#define CTXBOOST_HARNESS_H_

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "ctxboost/biasing.h"
#include "ctxboost/decoder.h"
#include "ctxboost/fst.h"
#include "ctxboost/metrics.h"

namespace ctxboost {

/// One row of the utterance TSV:
///   utt_id  channel_id  score_path  context_id|-  [reference]  [entity|entity...]
struct UtteranceSpec {
  std::string utt_id;
  std::string channel_id;
  std::string score_path;
  std::optional<std::string> context_id;
  std::optional<WordSeq> reference;
  std::vector<WordSeq> entities;
};

/// Relative score paths resolve against the TSV's directory.
std::vector<UtteranceSpec> ReadUtteranceSpecs(const std::string &path);
void WriteUtteranceSpecs(const std::vector<UtteranceSpec> &specs, std::ostream &os);

struct DecodeOptions {
  std::string graph;
  std::string symtab;
  std::optional<std::string> contexts;  // context manifest
  std::string utts;
  DecoderConfig decoder;
  Cost discount = kDefaultDiscount;
  std::optional<std::string> report;  // JSON report path
};

struct UtteranceResult {
  std::string utt_id;
  std::string channel_id;
  std::optional<std::string> context_id;  // context actually applied
  std::vector<Hypothesis> hypotheses;
  std::optional<std::string> error;
  double audio_seconds = 0.0;

  /// Words of all final hypotheses, in order.
  std::vector<Label> FinalWords() const;
};

struct RunReport {
  bool biased = false;
  Cost discount = 0.0;
  std::map<std::string, std::size_t> boosted_arcs;  // per context id
  std::vector<UtteranceResult> utterances;
  std::optional<ErrorCounts> wer;
  std::optional<ErrorCounts> ent_wer;
  double audio_seconds = 0.0;
  double load_seconds = 0.0;
  double compile_seconds = 0.0;
  double decode_seconds = 0.0;
  double score_seconds = 0.0;
  std::optional<double> rtfx;
};

/// Decodes every utterance: channels run in parallel, each channel's
/// utterances in file order with a context switch between them. Without a
/// manifest all utterances are decoded unbiased. Hypotheses go to
/// `hyp_stream` as JSON lines; the report is also written to opts.report.
RunReport RunDecode(const DecodeOptions &opts, std::ostream &hyp_stream);

std::string ReportToJson(const RunReport &report, const SymbolTable &symtab);
std::string HypothesisToJsonLine(const std::string &channel, const std::string &utt,
                                 const Hypothesis &hyp, const SymbolTable &symtab);

/// Forces `confusion` to compete with `word`: on every frame whose true arc
/// emits `word`, the true input label costs true_cost and the confusion's
/// input label costs confusion_cost.
struct MarginSpec {
  std::string word;
  std::string confusion;
  Cost true_cost = 0.0;
  Cost confusion_cost = 0.0;
};

/// "word:confusion:true_cost:confusion_cost"
MarginSpec ParseMarginSpec(const std::string &text);

/// Emitting-or-epsilon arc path from the start to a final state whose
/// outputs spell `words`, using the fewest emitting arcs. Throws with the
/// first word that cannot be matched.
std::vector<ArcIndex> RealizeTranscript(const CsrFst &csr, const SymbolTable &symtab,
                                        const WordSeq &words);

struct ScoreGenConfig {
  Cost noise = 5.0;
  std::vector<MarginSpec> margins;
  double frame_duration = 0.03;
};

/// One frame per emitting arc of the realized path: the true input label
/// costs 0, every other label noise plus jitter in [0, 0.1] drawn from rng.
ScoreMatrix GenerateScores(const CsrFst &csr, const SymbolTable &symtab,
                           const WordSeq &words, const ScoreGenConfig &cfg,
                           std::mt19937_64 &rng);

struct GenScoresOptions {
  std::string graph;
  std::string symtab;
  std::string transcript;  // lines "utt_id word word ..."
  ScoreGenConfig gen;
  uint64_t seed = 0;
  std::string out_dir;
};

/// Writes <out_dir>/<utt_id>.scores per transcript line plus a matching
/// utts.tsv. Returns the specs written.
std::vector<UtteranceSpec> RunGenScores(const GenScoresOptions &opts);

/// Final words per utterance from a JSON-lines hypothesis stream.
std::map<std::string, WordSeq> ReadFinalHypotheses(const std::string &path);

struct ScoreSummary {
  std::optional<ErrorCounts> wer;
  std::optional<ErrorCounts> ent_wer;
  std::size_t scored = 0;
};

ScoreSummary ScoreHypotheses(const std::map<std::string, WordSeq> &hyps,
                             const std::vector<UtteranceSpec> &specs);

}  // namespace ctxboost

#endif  // CTXBOOST_HARNESS_H_
