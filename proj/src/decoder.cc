// src/decoder.cc

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

#include "ctxboost/decoder.h"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "ctxboost/text_util.h"

namespace ctxboost {

void DecoderConfig::Check() const {
  if (!(beam > 0.0)) throw DecodeError("beam must be > 0");
  if (max_active < 1) throw DecodeError("max_active must be >= 1");
  if (max_epsilon_expansion < 0) throw DecodeError("max_epsilon_expansion must be >= 0");
  if (partial_every < 1) throw DecodeError("partial_every must be >= 1");
  if (endpoint_silence_frames < 1) throw DecodeError("endpoint_silence_frames must be >= 1");
  if (silence_ilabel < 0) throw DecodeError("silence_ilabel must be >= 0");
}

ScoreMatrix::ScoreMatrix(int32_t num_frames, int32_t num_ilabels, double frame_duration)
    : num_frames_(num_frames),
      num_ilabels_(num_ilabels),
      frame_duration_(frame_duration),
      costs_(static_cast<std::size_t>(num_frames) * num_ilabels, 0.0) {
  if (num_frames < 0 || num_ilabels < 0)
    throw std::invalid_argument("ScoreMatrix: negative dimension");
  if (!(frame_duration > 0.0))
    throw std::invalid_argument("ScoreMatrix: frame duration must be > 0");
}

ScoreMatrix ParseScoreMatrix(std::istream &is) {
  std::string line;
  int line_no = 0;
  auto next_line = [&]() -> std::vector<std::string_view> {
    while (std::getline(is, line)) {
      ++line_no;
      auto fields = SplitFields(line);
      if (!fields.empty()) return fields;
    }
    return {};
  };
  auto header = next_line();
  if (header.size() != 3)
    throw ParseError("expected header 'num_frames num_ilabels frame_duration'", line_no);
  auto frames = ParseInt(header[0]);
  auto width = ParseInt(header[1]);
  auto duration = ParseDouble(header[2]);
  if (!frames || !width || !duration || *frames < 0 || *width < 0 || !(*duration > 0.0))
    throw ParseError("bad score matrix header", line_no);
  ScoreMatrix scores(static_cast<int32_t>(*frames), static_cast<int32_t>(*width), *duration);
  for (int32_t t = 0; t < scores.NumFrames(); ++t) {
    auto row = next_line();
    if (row.size() != static_cast<std::size_t>(scores.NumIlabels()))
      throw ParseError("frame " + std::to_string(t) + " has " +
                           std::to_string(row.size()) + " costs, expected " +
                           std::to_string(scores.NumIlabels()),
                       line_no);
    for (int32_t i = 0; i < scores.NumIlabels(); ++i) {
      auto v = ParseDouble(row[i]);
      if (!v || !std::isfinite(*v))
        throw ParseError("bad cost '" + std::string(row[i]) + "'", line_no);
      scores.At(t, i + 1) = *v;
    }
  }
  if (!next_line().empty()) throw ParseError("trailing data after last frame", line_no);
  return scores;
}

ScoreMatrix ReadScoreMatrixFile(const std::string &path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open score file: " + path);
  try {
    return ParseScoreMatrix(is);
  } catch (const ParseError &e) {
    throw ParseError(path + ": " + e.what(), 0);
  }
}

void WriteScoreMatrix(const ScoreMatrix &scores, std::ostream &os) {
  os << scores.NumFrames() << ' ' << scores.NumIlabels() << ' '
     << FormatDouble(scores.FrameDuration()) << '\n';
  for (int32_t t = 0; t < scores.NumFrames(); ++t) {
    auto row = scores.Row(t);
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) os << ' ';
      os << FormatDouble(row[i]);
    }
    os << '\n';
  }
}

const char *ToString(ChannelStatus status) {
  switch (status) {
    case ChannelStatus::kIdle: return "idle";
    case ChannelStatus::kDecoding: return "decoding";
    case ChannelStatus::kEndpointed: return "endpointed";
    case ChannelStatus::kFinished: return "finished";
  }
  return "?";
}

namespace {

void ResetUtterance(Channel &ch, StateId start) {
  ch.epsilon_boosts_for = nullptr;
  ch.tokens.assign(1, Token{start, 0.0, -1, kNoArc, kEpsilon});
  ch.arena.clear();
  ch.frame_index = 0;
  ch.trailing_silence = 0;
  ch.status = ChannelStatus::kIdle;
}

std::shared_ptr<const BiasingContext> Resolve(const ContextRegistry &registry,
                                              const std::optional<std::string> &id) {
  if (!id) return nullptr;
  if (!registry.Contains(*id)) throw DecodeError("unknown context id '" + *id + "'");
  return registry.Get(*id);
}

// Lower cost wins; equal costs keep the token from the smaller arc index.
inline bool Better(Cost cost, ArcIndex arc, const Token &existing) {
  return cost < existing.cost || (cost == existing.cost && arc < existing.arc);
}

inline bool TokenLess(const Token &a, const Token &b) {
  return a.cost < b.cost || (a.cost == b.cost && a.state < b.state);
}

// Working set of tokens for one frame, indexed by state through
// ch.slot_of_state.
class FrameExpander {
 public:
  FrameExpander(Channel &ch, const CsrFst &csr, const BiasingContext *ctx, int32_t frame)
      : ch_(ch), csr_(csr), ctx_(ctx), frame_(frame) {
    if (ch_.slot_of_state.size() != static_cast<std::size_t>(csr.NumStates()))
      ch_.slot_of_state.assign(csr.NumStates(), -1);
    ch_.scratch.clear();
  }

  // Returns the slot when the candidate improved (or created) the token.
  int32_t Relax(StateId state, Cost cost, ArcIndex arc, const Token &from,
                Label ilabel) {
    int32_t &slot = ch_.slot_of_state[state];
    if (slot >= 0 && !Better(cost, arc, ch_.scratch[slot])) return -1;
    Token tok;
    tok.state = state;
    tok.cost = cost;
    tok.arc = arc;
    tok.backpointer = from.backpointer;
    tok.last_ilabel = ilabel == kEpsilon ? from.last_ilabel : ilabel;
    Label olabel = csr_.Olabel(arc);
    if (olabel != kEpsilon) {
      ch_.arena.push_back({olabel, frame_, from.backpointer});
      tok.backpointer = static_cast<int32_t>(ch_.arena.size()) - 1;
    }
    if (slot < 0) {
      slot = static_cast<int32_t>(ch_.scratch.size());
      ch_.scratch.push_back(tok);
    } else {
      ch_.scratch[slot] = tok;
    }
    return slot;
  }

  void Seed(const Token &tok) {
    int32_t &slot = ch_.slot_of_state[tok.state];
    slot = static_cast<int32_t>(ch_.scratch.size());
    ch_.scratch.push_back(tok);
  }

  template <bool kBiased>
  void ExpandEmitting(const std::vector<Token> &tokens, std::span<const Cost> frame) {
    const ArcIndex *boost_end = nullptr;
    Cost discount = 0.0;
    if constexpr (kBiased) {
      boost_end = ctx_->arc_indices.data() + ctx_->arc_indices.size();
      discount = ctx_->discount;
    }
    const Label *ilabels = csr_.Ilabels().data();
    const Cost *weights = csr_.Weights().data();
    auto expand = [&](const Token &tok, ArcIndex g, Cost weight) {
      const Label ilabel = ilabels[g];
      if (ilabel == kEpsilon) return;
      Relax(csr_.NextState(g), tok.cost + weight + frame[ilabel - 1], g, tok, ilabel);
    };
    // Tokens are ordered by state, so their arc ranges ascend and a single
    // cursor into the boosted list serves the whole frame.
    const ArcIndex *boost = nullptr;
    ArcIndex prev_begin = 0;
    if constexpr (kBiased) boost = ctx_->arc_indices.data();
    for (const Token &tok : tokens) {
      const ArcIndex begin = csr_.ArcBegin(tok.state), end = csr_.ArcEnd(tok.state);
      if constexpr (!kBiased) {
        for (ArcIndex g = begin; g < end; ++g) expand(tok, g, weights[g]);
      } else {
        if (begin < prev_begin) boost = ctx_->arc_indices.data();  // defensive
        prev_begin = begin;
        // Short gaps are stepped over; long ones are searched.
        int steps = 0;
        while (boost != boost_end && *boost < begin && ++steps < 8) ++boost;
        if (boost != boost_end && *boost < begin)
          boost = LowerBoundIndex({boost, static_cast<std::size_t>(boost_end - boost)}, begin);
        // The runs between boosted arcs expand exactly as when unbiased.
        ArcIndex g = begin;
        for (;;) {
          const ArcIndex stop = boost != boost_end && *boost < end ? *boost : end;
          for (; g < stop; ++g) expand(tok, g, weights[g]);
          if (stop == end) break;
          expand(tok, g, weights[g] + discount);
          ++g;
          ++boost;
        }
      }
    }
  }

  // Bounded Bellman-Ford style relaxation over epsilon-input arcs, starting
  // from every token in the working set.
  template <bool kBiased>
  void ExpandEpsilon(int32_t max_rounds) {
    auto &queue = ch_.queue;
    auto &next = ch_.next_queue;
    queue.clear();
    for (int32_t i = 0; i < static_cast<int32_t>(ch_.scratch.size()); ++i)
      queue.push_back(i);
    const Label *ilabels = csr_.Ilabels().data();
    const Cost *weights = csr_.Weights().data();
    std::span<const ArcIndex> eps_boosts;
    if constexpr (kBiased) {
      if (ch_.epsilon_boosts_for != ctx_) {
        ch_.epsilon_boosts.clear();
        ch_.epsilon_boost_filter.assign(kFilterWords, 0);
        for (ArcIndex g : ctx_->arc_indices) {
          if (g >= csr_.NumArcs() || csr_.Ilabel(g) != kEpsilon) continue;
          ch_.epsilon_boosts.push_back(g);
          ch_.epsilon_boost_filter[(g >> 6) & (kFilterWords - 1)] |= uint64_t{1} << (g & 63);
        }
        ch_.epsilon_boosts_for = ctx_;
      }
      eps_boosts = ch_.epsilon_boosts;
    }
    const uint64_t *filter = ch_.epsilon_boost_filter.data();
    std::vector<char> queued;
    for (int32_t round = 0; round < max_rounds && !queue.empty(); ++round) {
      next.clear();
      queued.assign(ch_.scratch.size(), 0);
      for (int32_t idx : queue) {
        const Token tok = ch_.scratch[idx];
        const ArcIndex end = csr_.ArcEnd(tok.state);
        for (ArcIndex g = csr_.ArcBegin(tok.state); g < end; ++g) {
          if (ilabels[g] != kEpsilon) continue;
          Cost weight = weights[g];
          if constexpr (kBiased) {
            if ((filter[(g >> 6) & (kFilterWords - 1)] >> (g & 63)) & 1) {
              const ArcIndex *p = LowerBoundIndex(eps_boosts, g);
              if (p != eps_boosts.data() + eps_boosts.size() && *p == g) weight += ctx_->discount;
            }
          }
          int32_t slot = Relax(csr_.NextState(g), tok.cost + weight, g, tok, kEpsilon);
          if (slot < 0) continue;
          if (static_cast<std::size_t>(slot) >= queued.size()) queued.resize(slot + 1, 0);
          if (!queued[slot]) {
            queued[slot] = 1;
            next.push_back(slot);
          }
        }
      }
      queue.swap(next);
    }
    if (!queue.empty() && HasEpsilonWork(queue)) ++ch_.epsilon_truncations;
  }

  // Beam and max_active pruning; the survivors become the channel's tokens,
  // ordered by state.
  void Prune(const DecoderConfig &cfg) {
    auto &work = ch_.scratch;
    for (const Token &tok : work) ch_.slot_of_state[tok.state] = -1;
    if (work.empty()) {
      ch_.tokens.clear();
      return;
    }
    Cost best = kInfinity;
    for (const Token &tok : work) best = std::min(best, tok.cost);
    const Cost cutoff = best + cfg.beam;
    std::vector<Token> kept;
    kept.reserve(work.size());
    for (const Token &tok : work)
      if (tok.cost <= cutoff) kept.push_back(tok);
    if (kept.size() > static_cast<std::size_t>(cfg.max_active)) {
      std::nth_element(kept.begin(), kept.begin() + cfg.max_active, kept.end(), TokenLess);
      kept.resize(cfg.max_active);
    }
    std::sort(kept.begin(), kept.end(),
              [](const Token &a, const Token &b) { return a.state < b.state; });
    ch_.tokens.swap(kept);
  }

 private:
  static constexpr std::size_t kFilterWords = 64;

  bool HasEpsilonWork(const std::vector<int32_t> &queue) const {
    for (int32_t idx : queue) {
      StateId s = ch_.scratch[idx].state;
      for (ArcIndex g = csr_.ArcBegin(s); g < csr_.ArcEnd(s); ++g)
        if (csr_.Ilabel(g) == kEpsilon) return true;
    }
    return false;
  }

  Channel &ch_;
  const CsrFst &csr_;
  const BiasingContext *ctx_;
  int32_t frame_;
};

const Token &BestToken(const std::vector<Token> &tokens) {
  return *std::min_element(tokens.begin(), tokens.end(), TokenLess);
}

std::vector<Label> Backtrace(const Channel &ch, int32_t backpointer) {
  std::vector<Label> words;
  for (int32_t i = backpointer; i >= 0; i = ch.arena[i].predecessor)
    words.push_back(ch.arena[i].olabel);
  std::reverse(words.begin(), words.end());
  return words;
}

template <bool kBiased>
void AdvanceFrameImpl(Channel &ch, std::span<const Cost> frame, const CsrFst &csr,
                      const BiasingContext *ctx, const DecoderConfig &cfg) {
  if (ch.frame_index == 0) {
    // Epsilon closure of the start token before the first frame.
    FrameExpander init(ch, csr, ctx, 0);
    for (const Token &tok : ch.tokens) init.Seed(tok);
    init.ExpandEpsilon<kBiased>(cfg.max_epsilon_expansion);
    init.Prune(cfg);
  }
  FrameExpander expander(ch, csr, ctx, ch.frame_index + 1);
  expander.ExpandEmitting<kBiased>(ch.tokens, frame);
  expander.ExpandEpsilon<kBiased>(cfg.max_epsilon_expansion);
  expander.Prune(cfg);
}

}  // namespace

Channel InitChannel(std::string id, const ContextRegistry &registry,
                    std::optional<std::string> context_id, const DecoderConfig &cfg) {
  cfg.Check();
  Channel ch;
  ch.id = std::move(id);
  ch.context = Resolve(registry, context_id);
  ch.context_id = std::move(context_id);
  // The start state is filled in on the first frame, when the graph is known.
  ResetUtterance(ch, kNoStateId);
  return ch;
}

void SwitchContext(Channel &ch, const ContextRegistry &registry,
                   std::optional<std::string> context_id) {
  if (ch.status != ChannelStatus::kIdle)
    throw DecodeError("channel '" + ch.id + "': context switch while " +
                      ToString(ch.status));
  ch.context = Resolve(registry, context_id);
  ch.context_id = std::move(context_id);
}

void AdvanceFrame(Channel &ch, std::span<const Cost> frame, const CsrFst &csr,
                  const BiasingContext *ctx, const DecoderConfig &cfg) {
  if (ch.status != ChannelStatus::kIdle && ch.status != ChannelStatus::kDecoding)
    throw DecodeError("channel '" + ch.id + "': cannot advance while " +
                      ToString(ch.status));
  if (frame.size() != static_cast<std::size_t>(csr.NumIlabels()))
    throw DecodeError("frame has " + std::to_string(frame.size()) +
                      " costs but the graph has " + std::to_string(csr.NumIlabels()) +
                      " emitting labels");
  if (csr.NumStates() == 0) throw DecodeError("empty decoding graph");
  if (ch.tokens.empty())
    throw DecodeError("channel '" + ch.id + "': no active tokens");
  if (ch.frame_index == 0)
    for (Token &tok : ch.tokens)
      if (tok.state == kNoStateId) tok.state = csr.Start();

  if (ctx != nullptr)
    AdvanceFrameImpl<true>(ch, frame, csr, ctx, cfg);
  else
    AdvanceFrameImpl<false>(ch, frame, csr, nullptr, cfg);

  ++ch.frame_index;
  ch.status = ChannelStatus::kDecoding;
  if (ch.tokens.empty()) {
    ch.trailing_silence = 0;
    return;
  }
  const Token &best = BestToken(ch.tokens);
  if (cfg.silence_ilabel != kEpsilon && best.last_ilabel == cfg.silence_ilabel)
    ++ch.trailing_silence;
  else
    ch.trailing_silence = 0;
}

Hypothesis PartialHypothesis(const Channel &ch) {
  if (ch.tokens.empty())
    throw DecodeError("channel '" + ch.id + "': decode failure, no active tokens");
  const Token &best = BestToken(ch.tokens);
  Hypothesis hyp;
  hyp.words = Backtrace(ch, best.backpointer);
  hyp.cost = best.cost;
  hyp.frame = ch.frame_index;
  hyp.kind = HypothesisKind::kPartial;
  return hyp;
}

Hypothesis Finalize(Channel &ch, const CsrFst &csr) {
  if (ch.status != ChannelStatus::kDecoding && ch.status != ChannelStatus::kEndpointed)
    throw DecodeError("channel '" + ch.id + "': finalize while " + ToString(ch.status));
  if (ch.tokens.empty())
    throw DecodeError("channel '" + ch.id + "': decode failure, no active tokens");
  const Token *best = nullptr;
  Cost best_cost = kInfinity;
  for (const Token &tok : ch.tokens) {
    if (!csr.IsFinal(tok.state)) continue;
    Cost c = tok.cost + csr.FinalCost(tok.state);
    if (best == nullptr || c < best_cost || (c == best_cost && tok.state < best->state)) {
      best = &tok;
      best_cost = c;
    }
  }
  Hypothesis hyp;
  hyp.kind = HypothesisKind::kFinal;
  hyp.frame = ch.frame_index;
  if (best == nullptr) {
    best = &BestToken(ch.tokens);
    best_cost = best->cost;
    hyp.fallback = true;
  }
  hyp.words = Backtrace(ch, best->backpointer);
  hyp.cost = best_cost;
  ResetUtterance(ch, csr.Start());
  return hyp;
}

bool DetectEndpoint(const Channel &ch, const DecoderConfig &cfg) {
  return ch.trailing_silence >= cfg.endpoint_silence_frames;
}

std::vector<Hypothesis> DecodeStream(Channel &ch, const ScoreMatrix &scores,
                                     const CsrFst &csr, const DecoderConfig &cfg) {
  cfg.Check();
  if (scores.NumIlabels() != csr.NumIlabels())
    throw DecodeError("score matrix has " + std::to_string(scores.NumIlabels()) +
                      " labels but the graph has " + std::to_string(csr.NumIlabels()));
  std::vector<Hypothesis> hyps;
  for (int32_t t = 0; t < scores.NumFrames(); ++t) {
    AdvanceFrame(ch, scores.Row(t), csr, cfg);
    if ((t + 1) % cfg.partial_every == 0) hyps.push_back(PartialHypothesis(ch));
    if (DetectEndpoint(ch, cfg)) {
      ch.status = ChannelStatus::kEndpointed;
      hyps.push_back(Finalize(ch, csr));
    }
  }
  if (ch.status == ChannelStatus::kDecoding) hyps.push_back(Finalize(ch, csr));
  return hyps;
}

namespace {

ChannelResult DecodeItem(BatchItem &item, const CsrFst &csr,
                         const ContextRegistry &registry, const DecoderConfig &cfg) {
  ChannelResult result;
  result.channel_id = item.channel.id;
  try {
    if (item.channel.context_id && !registry.Contains(*item.channel.context_id))
      throw DecodeError("unknown context id '" + *item.channel.context_id + "'");
    result.hypotheses = DecodeStream(item.channel, item.scores, csr, cfg);
    item.channel.status = ChannelStatus::kFinished;
  } catch (const std::exception &e) {
    result.error = e.what();
  }
  return result;
}

void CheckFingerprint(const CsrFst &csr, const ContextRegistry &registry) {
  if (registry.Size() > 0 && registry.GraphFingerprint() != csr.Fingerprint())
    throw DecodeError("contexts were compiled against a different graph");
}

}  // namespace

std::vector<ChannelResult> DecodeBatch(std::vector<BatchItem> &items, const CsrFst &csr,
                                       const ContextRegistry &registry,
                                       const DecoderConfig &cfg) {
  CheckFingerprint(csr, registry);
  std::vector<ChannelResult> results(items.size());
  const int64_t n = static_cast<int64_t>(items.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (int64_t i = 0; i < n; ++i) results[i] = DecodeItem(items[i], csr, registry, cfg);
  return results;
}

std::vector<ChannelResult> DecodeBatchSerial(std::vector<BatchItem> &items,
                                             const CsrFst &csr,
                                             const ContextRegistry &registry,
                                             const DecoderConfig &cfg) {
  CheckFingerprint(csr, registry);
  std::vector<ChannelResult> results;
  results.reserve(items.size());
  for (BatchItem &item : items) results.push_back(DecodeItem(item, csr, registry, cfg));
  return results;
}

}  // namespace ctxboost
