// ctxboost/metrics.h

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

#ifndef CTXBOOST_METRICS_H_
#define CTXBOOST_METRICS_H_

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ctxboost {

using WordSeq = std::vector<std::string>;

class MetricError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class EditKind { kMatch, kSubstitution, kDeletion, kInsertion };

struct AlignmentOp {
  EditKind kind = EditKind::kMatch;
  std::optional<std::size_t> ref_pos;
  std::optional<std::size_t> hyp_pos;

  friend bool operator==(const AlignmentOp &, const AlignmentOp &) = default;
};

/// Minimum edit distance alignment with unit costs. Backtrace prefers
/// match, then substitution, then deletion, then insertion.
std::vector<AlignmentOp> Align(const WordSeq &ref, const WordSeq &hyp);

struct ErrorCounts {
  std::size_t substitutions = 0;
  std::size_t deletions = 0;
  std::size_t insertions = 0;
  std::size_t ref_words = 0;

  std::size_t Errors() const { return substitutions + deletions + insertions; }
  /// 100 * errors / ref_words; throws MetricError when ref_words is 0.
  double Percent() const;
  ErrorCounts &operator+=(const ErrorCounts &o);
};

struct ScoredPair {
  WordSeq ref;
  WordSeq hyp;
  /// Entity word sequences occurring in ref; used by EntWER only.
  std::vector<WordSeq> entities;
};

ErrorCounts CountErrors(const WordSeq &ref, const WordSeq &hyp);

/// Errors restricted to entity spans of `ref`. Spans are placed at the
/// leftmost occurrence not overlapping an earlier span; an insertion counts
/// when the reference words on both sides of it lie in the same span.
ErrorCounts CountEntityErrors(const WordSeq &ref, const WordSeq &hyp,
                              const std::vector<WordSeq> &entities);

double ComputeWer(const std::vector<ScoredPair> &pairs);
double ComputeEntWer(const std::vector<ScoredPair> &pairs);

/// Seconds of audio decoded per second of wall time.
double ComputeRtfx(double audio_seconds, double wall_seconds);

}  // namespace ctxboost

#endif  // CTXBOOST_METRICS_H_
