// ctxboost/decoder.h

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

// Frame-synchronous token-passing decoder over a CsrFst. No lattice is
// built: each token points into an append-only arena of word emissions and
// hypotheses are read back from there. Every channel carries its own
// (optional) biasing context, applied while arcs are expanded.

#ifndef CTXBOOST_DECODER_H_
#define CTXBOOST_DECODER_H_

#include <cstdint>
#include <istream>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "ctxboost/biasing.h"
#include "ctxboost/fst.h"

namespace ctxboost {

class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DecoderConfig {
  Cost beam = 16.0;
  int32_t max_active = 7000;
  /// Rounds of epsilon-input relaxation per frame.
  int32_t max_epsilon_expansion = 20;
  int32_t partial_every = 10;
  int32_t endpoint_silence_frames = 20;
  /// Input label counted as silence for endpointing; 0 disables endpoints.
  Label silence_ilabel = kEpsilon;

  void Check() const;
};

/// Per-frame costs for each emitting input label 1..num_ilabels.
class ScoreMatrix {
 public:
  ScoreMatrix() = default;
  ScoreMatrix(int32_t num_frames, int32_t num_ilabels, double frame_duration = 0.03);

  int32_t NumFrames() const { return num_frames_; }
  int32_t NumIlabels() const { return num_ilabels_; }
  double FrameDuration() const { return frame_duration_; }
  double DurationSeconds() const { return num_frames_ * frame_duration_; }

  /// Entry i of the row is the cost of input label i+1.
  std::span<const Cost> Row(int32_t t) const {
    return {costs_.data() + static_cast<std::size_t>(t) * num_ilabels_,
            static_cast<std::size_t>(num_ilabels_)};
  }
  Cost &At(int32_t t, Label ilabel) {
    return costs_[static_cast<std::size_t>(t) * num_ilabels_ + (ilabel - 1)];
  }
  Cost At(int32_t t, Label ilabel) const {
    return costs_[static_cast<std::size_t>(t) * num_ilabels_ + (ilabel - 1)];
  }

  friend bool operator==(const ScoreMatrix &, const ScoreMatrix &) = default;

 private:
  int32_t num_frames_ = 0;
  int32_t num_ilabels_ = 0;
  double frame_duration_ = 0.03;
  std::vector<Cost> costs_;
};

/// "num_frames num_ilabels frame_duration" then one row per frame.
ScoreMatrix ParseScoreMatrix(std::istream &is);
ScoreMatrix ReadScoreMatrixFile(const std::string &path);
void WriteScoreMatrix(const ScoreMatrix &scores, std::ostream &os);

struct EmissionRecord {
  Label olabel = kEpsilon;
  int32_t frame = 0;
  int32_t predecessor = -1;  // -1 is the utterance-start sentinel
};

struct Token {
  StateId state = kNoStateId;
  Cost cost = 0.0;
  int32_t backpointer = -1;  // into the channel's emission arena
  ArcIndex arc = kNoArc;     // arc that produced this token
  Label last_ilabel = kEpsilon;
};

enum class ChannelStatus { kIdle, kDecoding, kEndpointed, kFinished };

const char *ToString(ChannelStatus status);

struct Channel {
  std::string id;
  std::optional<std::string> context_id;
  std::shared_ptr<const BiasingContext> context;
  int32_t frame_index = 0;
  std::vector<Token> tokens;
  std::vector<EmissionRecord> arena;
  int32_t trailing_silence = 0;
  ChannelStatus status = ChannelStatus::kIdle;
  /// Frames whose epsilon relaxation hit max_epsilon_expansion.
  uint64_t epsilon_truncations = 0;

  // Scratch reused across frames.
  std::vector<int32_t> slot_of_state;
  std::vector<Token> scratch;
  std::vector<int32_t> queue;
  std::vector<int32_t> next_queue;
  // Boosted arcs with epsilon input, filtered from the context once per
  // utterance, plus a 4096-bit membership filter over them; the epsilon
  // rounds only search this short list when the filter bit is set.
  std::vector<ArcIndex> epsilon_boosts;
  std::vector<uint64_t> epsilon_boost_filter;
  const BiasingContext *epsilon_boosts_for = nullptr;
};

enum class HypothesisKind { kPartial, kFinal };

struct Hypothesis {
  std::vector<Label> words;
  Cost cost = 0.0;
  int32_t frame = 0;
  HypothesisKind kind = HypothesisKind::kPartial;
  /// Final hypothesis taken from a non-final state.
  bool fallback = false;

  friend bool operator==(const Hypothesis &, const Hypothesis &) = default;
};

Channel InitChannel(std::string id, const ContextRegistry &registry,
                    std::optional<std::string> context_id, const DecoderConfig &cfg);

/// Only legal between utterances (status idle).
void SwitchContext(Channel &ch, const ContextRegistry &registry,
                   std::optional<std::string> context_id);

/// Consumes one frame of scores. `ctx` may be null (no biasing).
void AdvanceFrame(Channel &ch, std::span<const Cost> frame, const CsrFst &csr,
                  const BiasingContext *ctx, const DecoderConfig &cfg);

/// Uses the channel's own context.
inline void AdvanceFrame(Channel &ch, std::span<const Cost> frame, const CsrFst &csr,
                         const DecoderConfig &cfg) {
  AdvanceFrame(ch, frame, csr, ch.context.get(), cfg);
}

Hypothesis PartialHypothesis(const Channel &ch);

/// Best token in a final state (final cost included), or the best token
/// overall flagged as fallback. Resets the channel to idle.
Hypothesis Finalize(Channel &ch, const CsrFst &csr);

bool DetectEndpoint(const Channel &ch, const DecoderConfig &cfg);

/// Decodes one score stream on one channel: partials every partial_every
/// frames, a final at each endpoint and at the end of the stream.
std::vector<Hypothesis> DecodeStream(Channel &ch, const ScoreMatrix &scores,
                                     const CsrFst &csr, const DecoderConfig &cfg);

struct BatchItem {
  Channel channel;
  ScoreMatrix scores;
};

struct ChannelResult {
  std::string channel_id;
  std::vector<Hypothesis> hypotheses;
  std::optional<std::string> error;

  friend bool operator==(const ChannelResult &, const ChannelResult &) = default;
};

/// Decodes every channel, fanning out over OpenMP threads. Results are in
/// input order and identical to DecodeBatchSerial.
std::vector<ChannelResult> DecodeBatch(std::vector<BatchItem> &items, const CsrFst &csr,
                                       const ContextRegistry &registry,
                                       const DecoderConfig &cfg);

/// Single-threaded reference for DecodeBatch.
std::vector<ChannelResult> DecodeBatchSerial(std::vector<BatchItem> &items,
                                             const CsrFst &csr,
                                             const ContextRegistry &registry,
                                             const DecoderConfig &cfg);

}  // namespace ctxboost

#endif  // CTXBOOST_DECODER_H_
