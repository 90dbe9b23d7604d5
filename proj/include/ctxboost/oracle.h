// ctxboost/oracle.h

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

// Slow reference implementations for tests. Nothing here calls into the
// biasing or decoder code; only the graph and context types are shared.

#ifndef CTXBOOST_ORACLE_H_
#define CTXBOOST_ORACLE_H_

#include <optional>
#include <vector>

#include "ctxboost/biasing.h"
#include "ctxboost/decoder.h"
#include "ctxboost/fst.h"

namespace ctxboost::oracle {

struct ChainBound {
  /// Epsilon-output arcs allowed between two consecutive word arcs.
  int max_chain_eps = kDefaultEpsilonDepth;
};

/// Enumerates every chain of word arcs a1..at (olabels w1..wt, each next
/// arc leaving a state within max_chain_eps epsilon-output arcs of the
/// previous destination). Returns the arcs at position t-1 of chains of
/// length t >= 2, plus the arcs at position k of full chains.
std::vector<ArcIndex> BruteForceBoostArcs(const Fst &fst, const std::vector<Label> &words,
                                          const ChainBound &bound = {});

/// Copy of the graph with the discount folded into every listed arc.
CsrFst PreboostGraph(const CsrFst &csr, const BiasingContext &ctx);

struct BestPath {
  bool found = false;
  std::vector<Label> words;
  Cost cost = kInfinity;
};

/// Pruning-free Viterbi over all frames, ending in a final state.
/// Limited to 1000 states and 100 frames.
BestPath ExhaustiveBestPath(const CsrFst &csr, const ScoreMatrix &scores,
                            const BiasingContext *ctx = nullptr);

}  // namespace ctxboost::oracle

#endif  // CTXBOOST_ORACLE_H_
