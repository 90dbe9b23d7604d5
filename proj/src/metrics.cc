// src/metrics.cc

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

#include "ctxboost/metrics.h"

#include <algorithm>

namespace ctxboost {

std::vector<AlignmentOp> Align(const WordSeq &ref, const WordSeq &hyp) {
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<std::size_t> dp((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t & { return dp[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j)
      at(i, j) = std::min({at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1),
                           at(i - 1, j) + 1, at(i, j - 1) + 1});

  std::vector<AlignmentOp> ops;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    const std::size_t cur = at(i, j);
    if (i > 0 && j > 0 && ref[i - 1] == hyp[j - 1] && cur == at(i - 1, j - 1)) {
      ops.push_back({EditKind::kMatch, i - 1, j - 1});
      --i, --j;
    } else if (i > 0 && j > 0 && cur == at(i - 1, j - 1) + 1) {
      ops.push_back({EditKind::kSubstitution, i - 1, j - 1});
      --i, --j;
    } else if (i > 0 && cur == at(i - 1, j) + 1) {
      ops.push_back({EditKind::kDeletion, i - 1, std::nullopt});
      --i;
    } else {
      ops.push_back({EditKind::kInsertion, std::nullopt, j - 1});
      --j;
    }
  }
  std::reverse(ops.begin(), ops.end());
  return ops;
}

double ErrorCounts::Percent() const {
  if (ref_words == 0) throw MetricError("no reference words to score");
  return 100.0 * static_cast<double>(Errors()) / static_cast<double>(ref_words);
}

ErrorCounts &ErrorCounts::operator+=(const ErrorCounts &o) {
  substitutions += o.substitutions;
  deletions += o.deletions;
  insertions += o.insertions;
  ref_words += o.ref_words;
  return *this;
}

namespace {

void Tally(EditKind kind, ErrorCounts *counts) {
  switch (kind) {
    case EditKind::kSubstitution: ++counts->substitutions; break;
    case EditKind::kDeletion: ++counts->deletions; break;
    case EditKind::kInsertion: ++counts->insertions; break;
    case EditKind::kMatch: break;
  }
}

// span_of[i] is the index of the entity span covering ref word i, or -1.
std::vector<int> LocateSpans(const WordSeq &ref, const std::vector<WordSeq> &entities) {
  std::vector<int> span_of(ref.size(), -1);
  for (std::size_t e = 0; e < entities.size(); ++e) {
    const WordSeq &ent = entities[e];
    if (ent.empty()) throw MetricError("empty entity span");
    bool placed = false;
    for (std::size_t start = 0; !placed && start + ent.size() <= ref.size(); ++start) {
      bool ok = true;
      for (std::size_t k = 0; ok && k < ent.size(); ++k)
        ok = span_of[start + k] < 0 && ref[start + k] == ent[k];
      if (!ok) continue;
      for (std::size_t k = 0; k < ent.size(); ++k) span_of[start + k] = static_cast<int>(e);
      placed = true;
    }
    if (!placed) {
      std::string text;
      for (const auto &w : ent) text += (text.empty() ? "" : " ") + w;
      throw MetricError("entity '" + text + "' not found in reference");
    }
  }
  return span_of;
}

}  // namespace

ErrorCounts CountErrors(const WordSeq &ref, const WordSeq &hyp) {
  ErrorCounts counts;
  counts.ref_words = ref.size();
  for (const AlignmentOp &op : Align(ref, hyp)) Tally(op.kind, &counts);
  return counts;
}

ErrorCounts CountEntityErrors(const WordSeq &ref, const WordSeq &hyp,
                              const std::vector<WordSeq> &entities) {
  ErrorCounts counts;
  const std::vector<int> span_of = LocateSpans(ref, entities);
  for (int s : span_of)
    if (s >= 0) ++counts.ref_words;
  const std::vector<AlignmentOp> ops = Align(ref, hyp);
  for (std::size_t k = 0; k < ops.size(); ++k) {
    const AlignmentOp &op = ops[k];
    if (op.ref_pos) {
      if (span_of[*op.ref_pos] >= 0) Tally(op.kind, &counts);
      continue;
    }
    // Insertion: look at the nearest reference words on either side.
    std::optional<std::size_t> before, after;
    for (std::size_t p = k; p-- > 0 && !before;) before = ops[p].ref_pos;
    for (std::size_t p = k + 1; p < ops.size() && !after; ++p) after = ops[p].ref_pos;
    if (before && after && span_of[*before] >= 0 && span_of[*before] == span_of[*after])
      Tally(op.kind, &counts);
  }
  return counts;
}

double ComputeWer(const std::vector<ScoredPair> &pairs) {
  ErrorCounts total;
  for (const auto &p : pairs) total += CountErrors(p.ref, p.hyp);
  return total.Percent();
}

double ComputeEntWer(const std::vector<ScoredPair> &pairs) {
  ErrorCounts total;
  for (const auto &p : pairs) total += CountEntityErrors(p.ref, p.hyp, p.entities);
  if (total.ref_words == 0) throw MetricError("no entity words in any reference");
  return total.Percent();
}

double ComputeRtfx(double audio_seconds, double wall_seconds) {
  if (!(wall_seconds > 0.0)) throw MetricError("wall time must be > 0");
  return audio_seconds / wall_seconds;
}

}  // namespace ctxboost
