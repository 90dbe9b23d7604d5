// src/harness.cc

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

#include "ctxboost/harness.h"

#include <chrono>
#include <deque>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ctxboost/text_util.h"

namespace ctxboost {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

double SecondsSince(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

WordSeq SplitWords(std::string_view text) {
  WordSeq words;
  for (auto f : SplitFields(text)) words.emplace_back(f);
  return words;
}

std::string JoinWords(const WordSeq &words) {
  std::string out;
  for (const auto &w : words) out += (out.empty() ? "" : " ") + w;
  return out;
}

std::string WordOf(const SymbolTable &symtab, Label id) {
  auto w = symtab.Find(id);
  return w ? *w : "#" + std::to_string(id);
}

WordSeq ToWords(const std::vector<Label> &labels, const SymbolTable &symtab) {
  WordSeq out;
  out.reserve(labels.size());
  for (Label l : labels) out.push_back(WordOf(symtab, l));
  return out;
}

Json CountsToJson(const ErrorCounts &c) {
  Json j;
  j["percent"] = c.Percent();
  j["substitutions"] = c.substitutions;
  j["deletions"] = c.deletions;
  j["insertions"] = c.insertions;
  j["ref_words"] = c.ref_words;
  return j;
}

Json HypothesisJson(const Hypothesis &hyp, const SymbolTable &symtab) {
  Json j;
  j["kind"] = hyp.kind == HypothesisKind::kFinal ? "final" : "partial";
  j["frame"] = hyp.frame;
  j["cost"] = hyp.cost;
  j["words"] = ToWords(hyp.words, symtab);
  if (hyp.kind == HypothesisKind::kFinal) j["fallback"] = hyp.fallback;
  return j;
}

}  // namespace

std::vector<UtteranceSpec> ReadUtteranceSpecs(const std::string &path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open utterance list: " + path);
  const fs::path base = fs::path(path).parent_path();
  std::vector<UtteranceSpec> specs;
  std::set<std::string> ids;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (SplitFields(line).empty() || SplitFields(line).front().front() == '#') continue;
    auto cols = SplitTabs(line);
    if (cols.size() < 4 || cols.size() > 6)
      throw ParseError(path + ": expected 4 to 6 tab-separated columns", line_no);
    UtteranceSpec spec;
    spec.utt_id = std::string(cols[0]);
    spec.channel_id = std::string(cols[1]);
    fs::path score{std::string(cols[2])};
    if (score.is_relative()) score = base / score;
    spec.score_path = score.string();
    if (!cols[3].empty() && cols[3] != "-") spec.context_id = std::string(cols[3]);
    if (cols.size() >= 5 && cols[4] != "-") spec.reference = SplitWords(cols[4]);
    if (cols.size() == 6 && !cols[5].empty() && cols[5] != "-") {
      std::string_view rest = cols[5];
      while (true) {
        auto bar = rest.find('|');
        WordSeq ent = SplitWords(rest.substr(0, bar));
        if (!ent.empty()) spec.entities.push_back(std::move(ent));
        if (bar == std::string_view::npos) break;
        rest.remove_prefix(bar + 1);
      }
    }
    if (spec.utt_id.empty() || spec.channel_id.empty())
      throw ParseError(path + ": empty utterance or channel id", line_no);
    if (!ids.insert(spec.utt_id).second)
      throw ParseError(path + ": duplicate utterance id '" + spec.utt_id + "'", line_no);
    specs.push_back(std::move(spec));
  }
  return specs;
}

void WriteUtteranceSpecs(const std::vector<UtteranceSpec> &specs, std::ostream &os) {
  for (const auto &s : specs) {
    os << s.utt_id << '\t' << s.channel_id << '\t' << s.score_path << '\t'
       << (s.context_id ? *s.context_id : "-") << '\t'
       << (s.reference ? JoinWords(*s.reference) : "-");
    if (!s.entities.empty()) {
      os << '\t';
      for (std::size_t i = 0; i < s.entities.size(); ++i)
        os << (i ? "|" : "") << JoinWords(s.entities[i]);
    }
    os << '\n';
  }
}

std::vector<Label> UtteranceResult::FinalWords() const {
  std::vector<Label> words;
  for (const auto &h : hypotheses)
    if (h.kind == HypothesisKind::kFinal) words.insert(words.end(), h.words.begin(), h.words.end());
  return words;
}

std::string HypothesisToJsonLine(const std::string &channel, const std::string &utt,
                                 const Hypothesis &hyp, const SymbolTable &symtab) {
  Json j;
  j["channel"] = channel;
  j["utterance"] = utt;
  j.update(HypothesisJson(hyp, symtab));
  return j.dump();
}

RunReport RunDecode(const DecodeOptions &opts, std::ostream &hyp_stream) {
  RunReport report;
  auto t0 = std::chrono::steady_clock::now();
  const CsrFst csr = BuildCsr(ReadTextFstFile(opts.graph));
  const SymbolTable symtab = ReadSymbolTableFile(opts.symtab);
  const std::vector<UtteranceSpec> specs = ReadUtteranceSpecs(opts.utts);
  std::vector<ScoreMatrix> scores;
  scores.reserve(specs.size());
  for (const auto &spec : specs) {
    if (!fs::exists(spec.score_path))
      throw std::runtime_error("utterance '" + spec.utt_id +
                               "': score file not found: " + spec.score_path);
    scores.push_back(ReadScoreMatrixFile(spec.score_path));
  }
  report.load_seconds = SecondsSince(t0);

  t0 = std::chrono::steady_clock::now();
  ContextRegistry registry(csr.Fingerprint());
  if (opts.contexts) {
    BoostCompileConfig bcfg;
    bcfg.discount = opts.discount;
    registry = LoadRegistry(csr, symtab, ReadContextManifest(*opts.contexts), bcfg);
    report.biased = true;
    report.discount = opts.discount;
    for (const auto &id : registry.Ids())
      report.boosted_arcs[id] = registry.Get(id)->arc_indices.size();
    for (const auto &spec : specs)
      if (spec.context_id && !registry.Contains(*spec.context_id))
        throw std::runtime_error("utterance '" + spec.utt_id + "': unknown context id '" +
                                 *spec.context_id + "'");
  }
  report.compile_seconds = SecondsSince(t0);
  opts.decoder.Check();

  // Utterances grouped by channel, in order of first appearance.
  std::vector<std::string> channel_order;
  std::map<std::string, std::vector<std::size_t>> by_channel;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    auto [it, inserted] = by_channel.try_emplace(specs[i].channel_id);
    if (inserted) channel_order.push_back(specs[i].channel_id);
    it->second.push_back(i);
  }

  report.utterances.resize(specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) {
    UtteranceResult &r = report.utterances[i];
    r.utt_id = specs[i].utt_id;
    r.channel_id = specs[i].channel_id;
    if (report.biased) r.context_id = specs[i].context_id;
    r.audio_seconds = scores[i].DurationSeconds();
    report.audio_seconds += r.audio_seconds;
  }

  t0 = std::chrono::steady_clock::now();
  const int64_t num_channels = static_cast<int64_t>(channel_order.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (int64_t c = 0; c < num_channels; ++c) {
    const std::string &channel_id = channel_order[c];
    Channel ch = InitChannel(channel_id, registry, std::nullopt, opts.decoder);
    for (std::size_t i : by_channel.at(channel_id)) {
      UtteranceResult &r = report.utterances[i];
      try {
        SwitchContext(ch, registry, r.context_id);
        r.hypotheses = DecodeStream(ch, scores[i], csr, opts.decoder);
      } catch (const std::exception &e) {
        r.error = e.what();
        ch = InitChannel(channel_id, registry, std::nullopt, opts.decoder);
      }
    }
  }
  report.decode_seconds = SecondsSince(t0);
  if (report.decode_seconds > 0.0 && report.audio_seconds > 0.0)
    report.rtfx = ComputeRtfx(report.audio_seconds, report.decode_seconds);

  for (const auto &r : report.utterances)
    for (const auto &h : r.hypotheses)
      hyp_stream << HypothesisToJsonLine(r.channel_id, r.utt_id, h, symtab) << '\n';

  t0 = std::chrono::steady_clock::now();
  std::map<std::string, WordSeq> finals;
  for (const auto &r : report.utterances)
    if (!r.error) finals[r.utt_id] = ToWords(r.FinalWords(), symtab);
  ScoreSummary summary = ScoreHypotheses(finals, specs);
  report.wer = summary.wer;
  report.ent_wer = summary.ent_wer;
  report.score_seconds = SecondsSince(t0);

  if (opts.report) {
    std::ofstream os(*opts.report);
    if (!os) throw std::runtime_error("cannot write report: " + *opts.report);
    os << ReportToJson(report, symtab) << '\n';
  }
  return report;
}

std::string ReportToJson(const RunReport &report, const SymbolTable &symtab) {
  Json j;
  if (report.biased) {
    Json b;
    b["discount"] = report.discount;
    b["contexts"] = report.boosted_arcs.size();
    b["boosted_arcs"] = report.boosted_arcs;
    j["biasing"] = b;
  } else {
    j["biasing"] = "none";
  }
  j["num_utterances"] = report.utterances.size();
  j["wer"] = report.wer ? CountsToJson(*report.wer) : Json(nullptr);
  j["ent_wer"] = report.ent_wer ? CountsToJson(*report.ent_wer) : Json(nullptr);
  j["ent_wer_rule"] =
      "entity spans placed at leftmost non-overlapping match; errors counted on "
      "entity reference words and on insertions inside a span";
  j["audio_seconds"] = report.audio_seconds;
  j["rtfx"] = report.rtfx ? Json(*report.rtfx) : Json(nullptr);
  j["timing"] = {{"load_s", report.load_seconds},
                 {"compile_s", report.compile_seconds},
                 {"decode_s", report.decode_seconds},
                 {"score_s", report.score_seconds}};
  Json utts = Json::array();
  for (const auto &r : report.utterances) {
    Json u;
    u["utterance"] = r.utt_id;
    u["channel"] = r.channel_id;
    u["context"] = r.context_id ? Json(*r.context_id) : Json(nullptr);
    u["audio_seconds"] = r.audio_seconds;
    Json partials = Json::array(), finals = Json::array();
    for (const auto &h : r.hypotheses)
      (h.kind == HypothesisKind::kFinal ? finals : partials).push_back(HypothesisJson(h, symtab));
    u["partials"] = partials;
    u["finals"] = finals;
    u["error"] = r.error ? Json(*r.error) : Json(nullptr);
    utts.push_back(u);
  }
  j["utterances"] = utts;
  return j.dump(2);
}

MarginSpec ParseMarginSpec(const std::string &text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
  if (parts.size() != 4)
    throw std::invalid_argument("margin must be word:confusion:true_cost:confusion_cost, got '" +
                                text + "'");
  auto t = ParseDouble(parts[2]), c = ParseDouble(parts[3]);
  if (!t || !c) throw std::invalid_argument("bad margin cost in '" + text + "'");
  return {parts[0], parts[1], *t, *c};
}

std::vector<ArcIndex> RealizeTranscript(const CsrFst &csr, const SymbolTable &symtab,
                                        const WordSeq &words) {
  std::vector<Label> labels;
  for (const auto &w : words) {
    auto id = symtab.Find(w);
    if (!id || *id == kEpsilon)
      throw std::runtime_error("transcript word '" + w + "' is not in the symbol table");
    labels.push_back(*id);
  }
  if (csr.NumStates() == 0) throw std::runtime_error("empty graph");
  const std::size_t k = labels.size();
  const std::size_t width = k + 1;
  auto node = [&](StateId s, std::size_t pos) { return static_cast<std::size_t>(s) * width + pos; };
  const std::size_t num_nodes = static_cast<std::size_t>(csr.NumStates()) * width;

  // 0-1 BFS: epsilon-input arcs are free, emitting arcs cost one frame.
  constexpr int kUnseen = std::numeric_limits<int>::max();
  std::vector<int> frames(num_nodes, kUnseen);
  std::vector<ArcIndex> via(num_nodes, kNoArc);
  std::vector<std::size_t> parent(num_nodes, 0);
  std::vector<char> done(num_nodes, 0);
  std::deque<std::size_t> dq;
  const std::size_t start = node(csr.Start(), 0);
  frames[start] = 0;
  dq.push_back(start);
  std::size_t furthest = 0;
  std::optional<std::size_t> goal;
  while (!dq.empty()) {
    std::size_t cur = dq.front();
    dq.pop_front();
    if (done[cur]) continue;
    done[cur] = 1;
    const StateId s = static_cast<StateId>(cur / width);
    const std::size_t pos = cur % width;
    furthest = std::max(furthest, pos);
    if (pos == k && csr.IsFinal(s)) {
      goal = cur;
      break;
    }
    for (ArcIndex g = csr.ArcBegin(s); g < csr.ArcEnd(s); ++g) {
      std::size_t next_pos = pos;
      if (csr.Olabel(g) != kEpsilon) {
        if (pos == k || csr.Olabel(g) != labels[pos]) continue;
        next_pos = pos + 1;
      }
      const bool emitting = csr.Ilabel(g) != kEpsilon;
      const int cost = frames[cur] + (emitting ? 1 : 0);
      const std::size_t nxt = node(csr.NextState(g), next_pos);
      if (done[nxt] || cost >= frames[nxt]) continue;
      frames[nxt] = cost;
      via[nxt] = g;
      parent[nxt] = cur;
      if (emitting)
        dq.push_back(nxt);
      else
        dq.push_front(nxt);
    }
  }
  if (!goal) {
    if (furthest < k)
      throw std::runtime_error("transcript not realizable: cannot match word '" +
                               words[furthest] + "' (position " +
                               std::to_string(furthest + 1) + ")");
    throw std::runtime_error("transcript not realizable: no final state after the last word");
  }
  std::vector<ArcIndex> path;
  for (std::size_t cur = *goal; cur != start; cur = parent[cur]) path.push_back(via[cur]);
  std::reverse(path.begin(), path.end());
  return path;
}

ScoreMatrix GenerateScores(const CsrFst &csr, const SymbolTable &symtab,
                           const WordSeq &words, const ScoreGenConfig &cfg,
                           std::mt19937_64 &rng) {
  struct ResolvedMargin {
    Label word;
    Label confusion_ilabel;
    Cost true_cost;
    Cost confusion_cost;
  };
  std::vector<ResolvedMargin> margins;
  for (const auto &m : cfg.margins) {
    Label word = symtab.Id(m.word), confusion = symtab.Id(m.confusion);
    Label confusion_ilabel = kEpsilon;
    for (ArcIndex g = 0; g < csr.NumArcs() && confusion_ilabel == kEpsilon; ++g)
      if (csr.Olabel(g) == confusion && csr.Ilabel(g) != kEpsilon) confusion_ilabel = csr.Ilabel(g);
    if (confusion_ilabel == kEpsilon)
      throw std::runtime_error("margin confusion '" + m.confusion +
                               "' has no emitting arc in the graph");
    margins.push_back({word, confusion_ilabel, m.true_cost, m.confusion_cost});
  }

  std::vector<ArcIndex> emitting;
  for (ArcIndex g : RealizeTranscript(csr, symtab, words))
    if (csr.Ilabel(g) != kEpsilon) emitting.push_back(g);

  ScoreMatrix scores(static_cast<int32_t>(emitting.size()), csr.NumIlabels(), cfg.frame_duration);
  for (int32_t t = 0; t < scores.NumFrames(); ++t) {
    for (Label i = 1; i <= scores.NumIlabels(); ++i) {
      const double jitter = static_cast<double>(rng() >> 11) * 0x1.0p-53 * 0.1;
      scores.At(t, i) = cfg.noise + jitter;
    }
    const ArcIndex g = emitting[t];
    scores.At(t, csr.Ilabel(g)) = 0.0;
    for (const auto &m : margins) {
      if (csr.Olabel(g) != m.word) continue;
      scores.At(t, m.confusion_ilabel) = m.confusion_cost;
      scores.At(t, csr.Ilabel(g)) = m.true_cost;
    }
  }
  return scores;
}

std::vector<UtteranceSpec> RunGenScores(const GenScoresOptions &opts) {
  const CsrFst csr = BuildCsr(ReadTextFstFile(opts.graph));
  const SymbolTable symtab = ReadSymbolTableFile(opts.symtab);
  std::ifstream is(opts.transcript);
  if (!is) throw std::runtime_error("cannot open transcript: " + opts.transcript);
  fs::create_directories(opts.out_dir);

  std::mt19937_64 rng(opts.seed);
  std::vector<UtteranceSpec> specs;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    auto fields = SplitFields(line);
    if (fields.empty() || fields.front().front() == '#') continue;
    UtteranceSpec spec;
    spec.utt_id = std::string(fields[0]);
    spec.channel_id = spec.utt_id;
    WordSeq words;
    for (std::size_t i = 1; i < fields.size(); ++i) words.emplace_back(fields[i]);
    ScoreMatrix scores;
    try {
      scores = GenerateScores(csr, symtab, words, opts.gen, rng);
    } catch (const std::exception &e) {
      throw std::runtime_error(opts.transcript + ":" + std::to_string(line_no) + ": " + e.what());
    }
    const std::string file = spec.utt_id + ".scores";
    std::ofstream os(fs::path(opts.out_dir) / file);
    if (!os) throw std::runtime_error("cannot write " + file + " in " + opts.out_dir);
    WriteScoreMatrix(scores, os);
    spec.score_path = file;
    spec.reference = words;
    specs.push_back(std::move(spec));
  }
  std::ofstream os(fs::path(opts.out_dir) / "utts.tsv");
  WriteUtteranceSpecs(specs, os);
  return specs;
}

std::map<std::string, WordSeq> ReadFinalHypotheses(const std::string &path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open hypothesis stream: " + path);
  std::map<std::string, WordSeq> out;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (SplitFields(line).empty()) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const std::exception &e) {
      throw ParseError(path + ": " + e.what(), line_no);
    }
    const std::string utt = j.at("utterance").get<std::string>();
    WordSeq &words = out[utt];
    if (j.at("kind") != "final") continue;
    for (const auto &w : j.at("words")) words.push_back(w.get<std::string>());
  }
  return out;
}

ScoreSummary ScoreHypotheses(const std::map<std::string, WordSeq> &hyps,
                             const std::vector<UtteranceSpec> &specs) {
  ScoreSummary summary;
  ErrorCounts wer, ent;
  for (const auto &spec : specs) {
    if (!spec.reference) continue;
    auto it = hyps.find(spec.utt_id);
    const WordSeq empty;
    const WordSeq &hyp = it == hyps.end() ? empty : it->second;
    wer += CountErrors(*spec.reference, hyp);
    if (!spec.entities.empty()) ent += CountEntityErrors(*spec.reference, hyp, spec.entities);
    ++summary.scored;
  }
  if (wer.ref_words > 0) summary.wer = wer;
  if (ent.ref_words > 0) summary.ent_wer = ent;
  return summary;
}

}  // namespace ctxboost
