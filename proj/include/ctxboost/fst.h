// ctxboost/fst.h

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

#ifndef CTXBOOST_FST_H_
#define CTXBOOST_FST_H_

#include <cstdint>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace ctxboost {

/// Tropical-semiring cost (negative log score); lower is better.
using Cost = double;
using Label = int32_t;
using StateId = int32_t;
/// Position of an arc in state-major CSR order.
using ArcIndex = int32_t;

inline constexpr Label kEpsilon = 0;
inline constexpr StateId kNoStateId = -1;
inline constexpr ArcIndex kNoArc = -1;
inline constexpr Cost kInfinity = std::numeric_limits<Cost>::infinity();

/// Default bound on consecutive epsilon-output arcs followed when searching
/// for the next word of an entity.
inline constexpr int kDefaultEpsilonDepth = 10;

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string &what, int line)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what
                                    : what),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

class StructureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Arc {
  Label ilabel = kEpsilon;
  Label olabel = kEpsilon;
  StateId next_state = kNoStateId;
  Cost weight = 0.0;

  friend bool operator==(const Arc &, const Arc &) = default;
};

/// Mutable adjacency-list graph. Arc order within a state is significant:
/// it fixes the global arc indices of the CSR form.
struct Fst {
  StateId start = kNoStateId;
  std::vector<std::vector<Arc>> arcs;  // indexed by source state
  std::map<StateId, Cost> finals;

  StateId NumStates() const { return static_cast<StateId>(arcs.size()); }
  std::size_t NumArcs() const;
  StateId AddState();
  void AddArc(StateId src, const Arc &arc);
  void SetFinal(StateId s, Cost weight) { finals[s] = weight; }

  /// Throws StructureError if start, finals or any destination is out of
  /// range, or an arc weight is not finite.
  void Validate() const;

  friend bool operator==(const Fst &, const Fst &) = default;
};

/// Immutable compressed-sparse-row form of an Fst.
class CsrFst {
 public:
  CsrFst() : row_offsets_{0} {}

  StateId Start() const { return start_; }
  StateId NumStates() const { return static_cast<StateId>(row_offsets_.size()) - 1; }
  ArcIndex NumArcs() const { return static_cast<ArcIndex>(ilabels_.size()); }
  /// Largest input label on any arc; score rows carry this many entries.
  Label NumIlabels() const { return num_ilabels_; }

  ArcIndex ArcBegin(StateId s) const { return row_offsets_[s]; }
  ArcIndex ArcEnd(StateId s) const { return row_offsets_[s + 1]; }
  StateId SourceState(ArcIndex g) const;

  Label Ilabel(ArcIndex g) const { return ilabels_[g]; }
  Label Olabel(ArcIndex g) const { return olabels_[g]; }
  StateId NextState(ArcIndex g) const { return next_states_[g]; }
  Cost Weight(ArcIndex g) const { return weights_[g]; }
  Arc GetArc(ArcIndex g) const {
    return Arc{ilabels_[g], olabels_[g], next_states_[g], weights_[g]};
  }

  bool IsFinal(StateId s) const { return final_costs_[s] != kInfinity; }
  /// kInfinity for non-final states.
  Cost FinalCost(StateId s) const { return final_costs_[s]; }

  std::span<const ArcIndex> RowOffsets() const { return row_offsets_; }
  std::span<const Label> Ilabels() const { return ilabels_; }
  std::span<const Label> Olabels() const { return olabels_; }
  std::span<const StateId> NextStates() const { return next_states_; }
  std::span<const Cost> Weights() const { return weights_; }

  /// Same graph with every weight replaced; used to build statically
  /// re-weighted copies. Size must equal NumArcs().
  CsrFst WithWeights(std::vector<Cost> weights) const;

  /// Rebuilds the adjacency-list form.
  Fst ToFst() const;

  /// FNV-1a over structure and weights; identifies the graph a biasing
  /// context was compiled against. Computed once when the graph is built.
  uint64_t Fingerprint() const { return fingerprint_; }

 private:
  friend CsrFst BuildCsr(const Fst &fst);

  uint64_t ComputeFingerprint() const;

  StateId start_ = kNoStateId;
  Label num_ilabels_ = 0;
  std::vector<ArcIndex> row_offsets_;
  std::vector<Label> ilabels_;
  std::vector<Label> olabels_;
  std::vector<Cost> weights_;
  std::vector<StateId> next_states_;
  std::vector<Cost> final_costs_;
  uint64_t fingerprint_ = 0;
};

CsrFst BuildCsr(const Fst &fst);

/// Reads the conventional FST text format: arc lines
/// "src dst ilabel olabel [weight]" and final lines "state [weight]".
/// The first line's source state is the start state. When
/// num_states_hint is given, any state id at or above it is a
/// StructureError; otherwise the count is inferred from the largest id.
Fst ParseTextFst(std::istream &is,
                 std::optional<StateId> num_states_hint = std::nullopt);
Fst ReadTextFstFile(const std::string &path);

/// Writes the start state's lines first so the output re-parses to the
/// same start. Throws StructureError if the start state has neither arcs
/// nor a final weight (such a graph has no text representation).
void WriteTextFst(const Fst &fst, std::ostream &os);

/// States reachable from `state` by following at most `max_depth` arcs
/// whose output label is epsilon, including `state` itself. Sorted.
std::vector<StateId> EpsilonOutputClosure(const CsrFst &fst, StateId state,
                                          int max_depth = kDefaultEpsilonDepth);

class SymbolTable {
 public:
  /// Throws std::invalid_argument on a duplicate word or id.
  void AddSymbol(const std::string &word, Label id);

  std::optional<Label> Find(const std::string &word) const;
  std::optional<std::string> Find(Label id) const;
  /// Throwing variants.
  Label Id(const std::string &word) const;
  const std::string &Word(Label id) const;

  std::size_t Size() const { return by_word_.size(); }

 private:
  std::unordered_map<std::string, Label> by_word_;
  std::unordered_map<Label, std::string> by_id_;
};

/// Lines "word id". Requires an entry with id 0 (epsilon).
SymbolTable ParseSymbolTable(std::istream &is);
SymbolTable ReadSymbolTableFile(const std::string &path);

}  // namespace ctxboost

#endif  // CTXBOOST_FST_H_
