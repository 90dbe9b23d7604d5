// src/oracle.cc

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

#include "ctxboost/oracle.h"

#include <algorithm>
#include <functional>
#include <limits>
#include <set>

namespace ctxboost::oracle {

std::vector<ArcIndex> BruteForceBoostArcs(const Fst &fst, const std::vector<Label> &words,
                                          const ChainBound &bound) {
  if (words.empty()) throw std::invalid_argument("BruteForceBoostArcs: empty sequence");
  const int n = fst.NumStates();

  struct FlatArc {
    ArcIndex index;
    StateId src;
    Arc arc;
  };
  std::vector<FlatArc> flat;
  for (StateId s = 0; s < n; ++s)
    for (const Arc &arc : fst.arcs[s])
      flat.push_back({static_cast<ArcIndex>(flat.size()), s, arc});

  // All-pairs minimum count of epsilon-output arcs (Floyd-Warshall).
  const int kFar = std::numeric_limits<int>::max() / 4;
  std::vector<int> dist(static_cast<std::size_t>(n) * n, kFar);
  auto d = [&](int u, int v) -> int & { return dist[static_cast<std::size_t>(u) * n + v]; };
  for (int u = 0; u < n; ++u) d(u, u) = 0;
  for (const FlatArc &fa : flat)
    if (fa.arc.olabel == kEpsilon) d(fa.src, fa.arc.next_state) = std::min(d(fa.src, fa.arc.next_state), 1);
  for (int k = 0; k < n; ++k)
    for (int u = 0; u < n; ++u)
      for (int v = 0; v < n; ++v)
        if (d(u, k) + d(k, v) < d(u, v)) d(u, v) = d(u, k) + d(k, v);
  auto linked = [&](const FlatArc &prev, const FlatArc &next) {
    return d(prev.arc.next_state, next.src) <= bound.max_chain_eps;
  };

  const std::size_t k = words.size();
  std::set<ArcIndex> result;
  // expanded[pos] holds arcs already explored at chain position pos; what a
  // chain adds beyond an arc depends only on the arc and its position.
  std::vector<std::set<ArcIndex>> expanded(k);
  std::function<void(const FlatArc &, std::size_t)> extend = [&](const FlatArc &a,
                                                                 std::size_t pos) {
    if (pos + 1 == k) {
      result.insert(a.index);
      return;
    }
    if (!expanded[pos].insert(a.index).second) return;
    for (const FlatArc &b : flat) {
      if (b.arc.olabel != words[pos + 1] || !linked(a, b)) continue;
      result.insert(a.index);  // chain of length pos + 2 exists
      extend(b, pos + 1);
    }
  };
  for (const FlatArc &a : flat)
    if (a.arc.olabel == words[0]) extend(a, 0);
  return {result.begin(), result.end()};
}

CsrFst PreboostGraph(const CsrFst &csr, const BiasingContext &ctx) {
  std::vector<Cost> weights(csr.Weights().begin(), csr.Weights().end());
  for (ArcIndex g : ctx.arc_indices) {
    if (g < 0 || g >= csr.NumArcs())
      throw std::out_of_range("context arc index " + std::to_string(g) +
                              " out of range for this graph");
    weights[g] += ctx.discount;
  }
  return csr.WithWeights(std::move(weights));
}

namespace {

struct Back {
  StateId prev = kNoStateId;
  ArcIndex arc = kNoArc;
  bool same_layer = false;
};

}  // namespace

BestPath ExhaustiveBestPath(const CsrFst &csr, const ScoreMatrix &scores,
                            const BiasingContext *ctx) {
  const int n = csr.NumStates();
  const int frames = scores.NumFrames();
  if (n > 1000 || frames > 100)
    throw std::invalid_argument("ExhaustiveBestPath: instance too large");
  if (n == 0) return {};
  if (scores.NumIlabels() != csr.NumIlabels())
    throw std::invalid_argument("ExhaustiveBestPath: score width mismatch");

  std::vector<char> boosted(csr.NumArcs(), 0);
  if (ctx)
    for (ArcIndex g : ctx->arc_indices) boosted.at(g) = 1;
  auto weight = [&](ArcIndex g) {
    return boosted[g] ? csr.Weight(g) + ctx->discount : csr.Weight(g);
  };

  std::vector<std::vector<Cost>> cost(frames + 1, std::vector<Cost>(n, kInfinity));
  std::vector<std::vector<Back>> back(frames + 1, std::vector<Back>(n));
  auto improve = [](Cost cand, ArcIndex g, Cost &cur, Back &b) {
    return cand < cur || (cand == cur && b.arc != kNoArc && g < b.arc);
  };

  auto epsilon_closure = [&](int t) {
    for (int pass = 0;; ++pass) {
      bool changed = false;
      for (StateId s = 0; s < n; ++s) {
        if (cost[t][s] == kInfinity) continue;
        for (ArcIndex g = csr.ArcBegin(s); g < csr.ArcEnd(s); ++g) {
          if (csr.Ilabel(g) != kEpsilon) continue;
          StateId dst = csr.NextState(g);
          Cost cand = cost[t][s] + weight(g);
          if (improve(cand, g, cost[t][dst], back[t][dst])) {
            cost[t][dst] = cand;
            back[t][dst] = {s, g, true};
            changed = true;
          }
        }
      }
      if (!changed) return;
      if (pass > n + 1) throw std::runtime_error("negative epsilon cycle");
    }
  };

  cost[0][csr.Start()] = 0.0;
  epsilon_closure(0);
  for (int t = 1; t <= frames; ++t) {
    auto row = scores.Row(t - 1);
    for (StateId s = 0; s < n; ++s) {
      if (cost[t - 1][s] == kInfinity) continue;
      for (ArcIndex g = csr.ArcBegin(s); g < csr.ArcEnd(s); ++g) {
        Label il = csr.Ilabel(g);
        if (il == kEpsilon) continue;
        StateId dst = csr.NextState(g);
        Cost cand = cost[t - 1][s] + weight(g) + row[il - 1];
        if (cand < cost[t][dst] || (cand == cost[t][dst] && g < back[t][dst].arc)) {
          cost[t][dst] = cand;
          back[t][dst] = {s, g, false};
        }
      }
    }
    epsilon_closure(t);
  }

  BestPath best;
  StateId best_state = kNoStateId;
  for (StateId s = 0; s < n; ++s) {
    if (!csr.IsFinal(s) || cost[frames][s] == kInfinity) continue;
    Cost c = cost[frames][s] + csr.FinalCost(s);
    if (best_state == kNoStateId || c < best.cost) {
      best.cost = c;
      best_state = s;
    }
  }
  if (best_state == kNoStateId) return best;
  best.found = true;
  int t = frames;
  StateId s = best_state;
  std::size_t steps = 0;
  while (back[t][s].arc != kNoArc) {
    const Back b = back[t][s];
    if (csr.Olabel(b.arc) != kEpsilon) best.words.push_back(csr.Olabel(b.arc));
    if (!b.same_layer) --t;
    s = b.prev;
    if (++steps > static_cast<std::size_t>(n) * (frames + 1) + 1)
      throw std::runtime_error("cyclic back-pointers");
  }
  std::reverse(best.words.begin(), best.words.end());
  return best;
}

}  // namespace ctxboost::oracle
