// src/fst.cc

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

#include "ctxboost/fst.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <deque>
#include <fstream>
#include <unordered_set>

#include "ctxboost/text_util.h"

namespace ctxboost {

std::size_t Fst::NumArcs() const {
  std::size_t n = 0;
  for (const auto &row : arcs) n += row.size();
  return n;
}

StateId Fst::AddState() {
  arcs.emplace_back();
  return NumStates() - 1;
}

void Fst::AddArc(StateId src, const Arc &arc) {
  if (src < 0 || src >= NumStates())
    throw StructureError("AddArc: source state " + std::to_string(src) +
                         " out of range");
  arcs[src].push_back(arc);
}

void Fst::Validate() const {
  const StateId n = NumStates();
  if (n == 0) {
    if (start != kNoStateId || !finals.empty())
      throw StructureError("empty graph with a start or final state");
    return;
  }
  if (start < 0 || start >= n)
    throw StructureError("start state " + std::to_string(start) + " out of range");
  for (StateId s = 0; s < n; ++s) {
    for (const Arc &arc : arcs[s]) {
      if (arc.next_state < 0 || arc.next_state >= n)
        throw StructureError("arc from state " + std::to_string(s) +
                             " to out-of-range state " +
                             std::to_string(arc.next_state));
      if (arc.ilabel < 0 || arc.olabel < 0)
        throw StructureError("negative label on arc from state " +
                             std::to_string(s));
      if (!std::isfinite(arc.weight))
        throw StructureError("non-finite weight on arc from state " +
                             std::to_string(s));
    }
  }
  for (const auto &[s, w] : finals) {
    if (s < 0 || s >= n)
      throw StructureError("final state " + std::to_string(s) + " out of range");
    if (std::isnan(w))
      throw StructureError("NaN final weight on state " + std::to_string(s));
  }
}

CsrFst BuildCsr(const Fst &fst) {
  fst.Validate();
  CsrFst csr;
  const StateId n = fst.NumStates();
  const std::size_t m = fst.NumArcs();
  if (m > static_cast<std::size_t>(std::numeric_limits<ArcIndex>::max()))
    throw StructureError("too many arcs for 32-bit arc indices");
  csr.start_ = fst.start;
  csr.row_offsets_.assign(n + 1, 0);
  csr.ilabels_.reserve(m);
  csr.olabels_.reserve(m);
  csr.weights_.reserve(m);
  csr.next_states_.reserve(m);
  for (StateId s = 0; s < n; ++s) {
    for (const Arc &arc : fst.arcs[s]) {
      csr.ilabels_.push_back(arc.ilabel);
      csr.olabels_.push_back(arc.olabel);
      csr.weights_.push_back(arc.weight);
      csr.next_states_.push_back(arc.next_state);
      csr.num_ilabels_ = std::max(csr.num_ilabels_, arc.ilabel);
    }
    csr.row_offsets_[s + 1] = static_cast<ArcIndex>(csr.ilabels_.size());
  }
  csr.final_costs_.assign(n, kInfinity);
  for (const auto &[s, w] : fst.finals) csr.final_costs_[s] = w;
  csr.fingerprint_ = csr.ComputeFingerprint();
  return csr;
}

StateId CsrFst::SourceState(ArcIndex g) const {
  auto it = std::upper_bound(row_offsets_.begin(), row_offsets_.end(), g);
  return static_cast<StateId>(it - row_offsets_.begin()) - 1;
}

CsrFst CsrFst::WithWeights(std::vector<Cost> weights) const {
  if (weights.size() != weights_.size())
    throw std::invalid_argument("WithWeights: size mismatch");
  CsrFst out = *this;
  out.weights_ = std::move(weights);
  out.fingerprint_ = out.ComputeFingerprint();
  return out;
}

Fst CsrFst::ToFst() const {
  Fst fst;
  fst.start = start_;
  fst.arcs.resize(NumStates());
  for (StateId s = 0; s < NumStates(); ++s) {
    for (ArcIndex g = ArcBegin(s); g < ArcEnd(s); ++g) fst.arcs[s].push_back(GetArc(g));
    if (IsFinal(s)) fst.finals[s] = final_costs_[s];
  }
  return fst;
}

namespace {

class Fnv1a {
 public:
  template <typename T>
  void Add(std::span<const T> values) {
    const auto *bytes = reinterpret_cast<const unsigned char *>(values.data());
    for (std::size_t i = 0; i < values.size_bytes(); ++i) {
      hash_ ^= bytes[i];
      hash_ *= 1099511628211ull;
    }
  }
  template <typename T>
  void Add(const T &value) {
    Add(std::span<const T>(&value, 1));
  }
  uint64_t Value() const { return hash_; }

 private:
  uint64_t hash_ = 14695981039346656037ull;
};

}  // namespace

uint64_t CsrFst::ComputeFingerprint() const {
  Fnv1a h;
  h.Add(start_);
  h.Add(RowOffsets());
  h.Add(Ilabels());
  h.Add(Olabels());
  h.Add(NextStates());
  h.Add(Weights());
  h.Add(std::span<const Cost>(final_costs_));
  return h.Value();
}

Fst ParseTextFst(std::istream &is, std::optional<StateId> num_states_hint) {
  struct PendingArc {
    StateId src;
    Arc arc;
    int line;
  };
  std::vector<PendingArc> pending;
  std::vector<std::pair<StateId, Cost>> finals;
  std::vector<int> final_lines;
  StateId start = kNoStateId;
  StateId max_state = -1;

  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    std::vector<std::string_view> fields = SplitFields(line);
    if (fields.empty()) continue;
    auto state_field = [&](std::string_view f) {
      auto v = ParseInt(f);
      if (!v || *v < 0) throw ParseError("bad state id '" + std::string(f) + "'", line_no);
      return static_cast<StateId>(*v);
    };
    auto label_field = [&](std::string_view f) {
      auto v = ParseInt(f);
      if (!v || *v < 0) throw ParseError("bad label '" + std::string(f) + "'", line_no);
      return static_cast<Label>(*v);
    };
    auto weight_field = [&](std::string_view f) {
      auto v = ParseDouble(f);
      if (!v) throw ParseError("bad weight '" + std::string(f) + "'", line_no);
      return *v;
    };
    if (fields.size() == 4 || fields.size() == 5) {
      PendingArc p;
      p.src = state_field(fields[0]);
      p.arc.next_state = state_field(fields[1]);
      p.arc.ilabel = label_field(fields[2]);
      p.arc.olabel = label_field(fields[3]);
      p.arc.weight = fields.size() == 5 ? weight_field(fields[4]) : 0.0;
      if (!std::isfinite(p.arc.weight))
        throw ParseError("arc weight must be finite", line_no);
      p.line = line_no;
      if (start == kNoStateId) start = p.src;
      max_state = std::max({max_state, p.src, p.arc.next_state});
      pending.push_back(p);
    } else if (fields.size() == 1 || fields.size() == 2) {
      StateId s = state_field(fields[0]);
      Cost w = fields.size() == 2 ? weight_field(fields[1]) : 0.0;
      if (std::isnan(w)) throw ParseError("final weight is NaN", line_no);
      if (start == kNoStateId) start = s;
      max_state = std::max(max_state, s);
      finals.emplace_back(s, w);
      final_lines.push_back(line_no);
    } else {
      throw ParseError("expected 1, 2, 4 or 5 fields, got " +
                           std::to_string(fields.size()),
                       line_no);
    }
  }
  if (start == kNoStateId) throw ParseError("no start state", 0);

  StateId num_states = max_state + 1;
  if (num_states_hint) {
    if (max_state >= *num_states_hint) {
      int bad_line = 0;
      for (const auto &p : pending)
        if (p.src >= *num_states_hint || p.arc.next_state >= *num_states_hint) {
          bad_line = p.line;
          break;
        }
      for (std::size_t i = 0; bad_line == 0 && i < finals.size(); ++i)
        if (finals[i].first >= *num_states_hint) bad_line = final_lines[i];
      throw StructureError("line " + std::to_string(bad_line) + ": state id " +
                           std::to_string(max_state) + " >= state count " +
                           std::to_string(*num_states_hint));
    }
    num_states = *num_states_hint;
  }

  Fst fst;
  fst.start = start;
  fst.arcs.resize(num_states);
  for (const auto &p : pending) fst.arcs[p.src].push_back(p.arc);
  for (const auto &[s, w] : finals)
    if (w != kInfinity) fst.finals[s] = w;
  return fst;
}

Fst ReadTextFstFile(const std::string &path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open graph file: " + path);
  try {
    return ParseTextFst(is);
  } catch (const ParseError &e) {
    throw ParseError(path + ": " + e.what(), 0);
  }
}

void WriteTextFst(const Fst &fst, std::ostream &os) {
  if (fst.NumStates() == 0) return;
  auto write_arcs = [&](StateId s) {
    for (const Arc &arc : fst.arcs[s]) {
      os << s << '\t' << arc.next_state << '\t' << arc.ilabel << '\t' << arc.olabel;
      if (arc.weight != 0.0) os << '\t' << FormatDouble(arc.weight);
      os << '\n';
    }
  };
  auto write_final = [&](StateId s, Cost w) {
    os << s;
    if (w != 0.0) os << '\t' << FormatDouble(w);
    os << '\n';
  };
  const StateId start = fst.start;
  if (fst.arcs[start].empty()) {
    auto it = fst.finals.find(start);
    if (it == fst.finals.end())
      throw StructureError("start state has no arcs and is not final");
    write_final(start, it->second);
  } else {
    write_arcs(start);
  }
  for (StateId s = 0; s < fst.NumStates(); ++s)
    if (s != start) write_arcs(s);
  for (const auto &[s, w] : fst.finals)
    if (!(s == start && fst.arcs[start].empty())) write_final(s, w);
}

std::vector<StateId> EpsilonOutputClosure(const CsrFst &fst, StateId state,
                                          int max_depth) {
  // Breadth-first, so each state is first seen at its minimum depth.
  std::vector<StateId> visited{state};
  std::unordered_set<StateId> seen{state};
  std::deque<std::pair<StateId, int>> queue{{state, 0}};
  while (!queue.empty()) {
    auto [s, depth] = queue.front();
    queue.pop_front();
    if (depth >= max_depth) continue;
    for (ArcIndex g = fst.ArcBegin(s); g < fst.ArcEnd(s); ++g) {
      if (fst.Olabel(g) != kEpsilon) continue;
      StateId next = fst.NextState(g);
      if (!seen.insert(next).second) continue;
      visited.push_back(next);
      queue.emplace_back(next, depth + 1);
    }
  }
  std::sort(visited.begin(), visited.end());
  return visited;
}

void SymbolTable::AddSymbol(const std::string &word, Label id) {
  if (id < 0) throw std::invalid_argument("negative symbol id " + std::to_string(id));
  if (by_word_.count(word)) throw std::invalid_argument("duplicate word '" + word + "'");
  if (by_id_.count(id))
    throw std::invalid_argument("duplicate id " + std::to_string(id));
  by_word_.emplace(word, id);
  by_id_.emplace(id, word);
}

std::optional<Label> SymbolTable::Find(const std::string &word) const {
  auto it = by_word_.find(word);
  if (it == by_word_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::string> SymbolTable::Find(Label id) const {
  auto it = by_id_.find(id);
  if (it == by_id_.end()) return std::nullopt;
  return it->second;
}

Label SymbolTable::Id(const std::string &word) const {
  auto id = Find(word);
  if (!id) throw std::out_of_range("word not in symbol table: " + word);
  return *id;
}

const std::string &SymbolTable::Word(Label id) const {
  auto it = by_id_.find(id);
  if (it == by_id_.end())
    throw std::out_of_range("label not in symbol table: " + std::to_string(id));
  return it->second;
}

SymbolTable ParseSymbolTable(std::istream &is) {
  SymbolTable table;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    auto fields = SplitFields(line);
    if (fields.empty()) continue;
    if (fields.size() != 2)
      throw ParseError("expected 'word id', got " + std::to_string(fields.size()) +
                           " fields",
                       line_no);
    auto id = ParseInt(fields[1]);
    if (!id || *id < 0)
      throw ParseError("bad symbol id '" + std::string(fields[1]) + "'", line_no);
    try {
      table.AddSymbol(std::string(fields[0]), static_cast<Label>(*id));
    } catch (const std::invalid_argument &e) {
      throw ParseError(e.what(), line_no);
    }
  }
  if (!table.Find(kEpsilon)) throw ParseError("missing epsilon entry with id 0", 0);
  return table;
}

SymbolTable ReadSymbolTableFile(const std::string &path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open symbol table: " + path);
  try {
    return ParseSymbolTable(is);
  } catch (const ParseError &e) {
    throw ParseError(path + ": " + e.what(), 0);
  }
}

}  // namespace ctxboost
