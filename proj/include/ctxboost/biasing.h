// ctxboost/biasing.h

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

// Contextual biasing by arc index.
//
// An entity (a word sequence) is compiled against the decoding graph into
// the set of global arc indices that emit its words along some in-graph
// chain. A context is the sorted union of these indices for a list of
// entities plus one discount. The decoder never modifies the graph: when it
// expands arc g it asks whether g is in the active context and, if so, adds
// the discount to the arc weight.
//
// Chains are followed through arcs whose output is epsilon (typically
// language-model backoff arcs), up to a bounded depth, and may start at any
// arc in the graph, not only near the start state.

#ifndef CTXBOOST_BIASING_H_
#define CTXBOOST_BIASING_H_

#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ctxboost/fst.h"

namespace ctxboost {

inline constexpr Cost kDefaultDiscount = -2.0;

class BiasingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EntityList {
  std::vector<std::vector<std::string>> entries;
  std::string source;
};

/// One entity per line, words separated by whitespace; blank lines and
/// lines starting with '#' are skipped.
EntityList ParseEntityList(std::istream &is, std::string source = "");
EntityList ReadEntityListFile(const std::string &path);

struct BoostCompileConfig {
  Cost discount = kDefaultDiscount;
  /// Order of the n-gram LM behind the graph. Recorded only; the epsilon
  /// depth below bounds the backoff traversal instead.
  int lm_order = 3;
  int max_epsilon_depth = kDefaultEpsilonDepth;
  bool skip_oov = true;
  /// A positive discount penalizes entities; rejected unless set.
  bool allow_positive_discount = false;

  void Check() const;
};

struct ContextStats {
  std::size_t compiled = 0;      // entities that contributed at least one arc
  std::size_t skipped_oov = 0;   // entities with an out-of-vocabulary word
  std::size_t unmatched = 0;     // in-vocabulary entities with no in-graph chain
  std::size_t duplicates = 0;    // repeated entries dropped before compiling
  bool empty = false;            // nothing to boost
};

struct BiasingContext {
  std::string id;
  /// Strictly increasing global arc indices.
  std::vector<ArcIndex> arc_indices;
  Cost discount = kDefaultDiscount;
  ContextStats stats;
};

/// An arc reached while matching a word, with the state it leads to.
struct ReachedArc {
  StateId state = kNoStateId;
  ArcIndex arc = kNoArc;

  friend auto operator<=>(const ReachedArc &, const ReachedArc &) = default;
};

/// Every arc in the graph whose output is `word`, reachable from the start
/// state or not. Sorted by arc index.
std::vector<ReachedArc> StatesThatOutputToken(const CsrFst &fst, Label word);

/// Arcs emitting `word` out of any state in the epsilon-output closure of
/// `state`. Sorted by arc index.
std::vector<ReachedArc> DfsSpecial(const CsrFst &fst, StateId state, Label word,
                                   int max_depth = kDefaultEpsilonDepth);

/// Arc indices to boost for one word sequence. An arc matched at position
/// t < k is kept only if word t+1 is emittable after it; arcs matched at
/// position k are kept when the whole sequence chains up to them.
std::vector<ArcIndex> FindBoostArcs(const CsrFst &fst, const std::vector<Label> &words,
                                    const BoostCompileConfig &cfg = {});

BiasingContext CompileContext(const CsrFst &fst, const SymbolTable &symtab,
                              const EntityList &entities,
                              const BoostCompileConfig &cfg, std::string id);

/// Output strings of every complete path of an acyclic biasing acceptor.
EntityList BiasingFstToEntities(const Fst &bfst, const SymbolTable &symtab,
                                std::size_t max_paths = 100000);

/// Pre-compiled contexts, read-only once built.
class ContextRegistry {
 public:
  ContextRegistry() = default;
  explicit ContextRegistry(uint64_t graph_fingerprint)
      : fingerprint_(graph_fingerprint) {}

  /// Throws BiasingError on a duplicate id.
  void Add(BiasingContext ctx);

  /// Throws BiasingError for unknown ids.
  std::shared_ptr<const BiasingContext> Get(const std::string &id) const;
  bool Contains(const std::string &id) const { return contexts_.count(id) > 0; }
  std::size_t Size() const { return contexts_.size(); }
  std::vector<std::string> Ids() const;
  uint64_t GraphFingerprint() const { return fingerprint_; }

 private:
  uint64_t fingerprint_ = 0;
  std::map<std::string, std::shared_ptr<const BiasingContext>> contexts_;
};

struct ManifestEntry {
  std::string id;
  std::string path;
};

/// TSV "id<TAB>entity-file". Relative paths resolve against the manifest's
/// directory.
std::vector<ManifestEntry> ReadContextManifest(const std::string &path);

ContextRegistry LoadRegistry(const CsrFst &fst, const SymbolTable &symtab,
                             const std::vector<ManifestEntry> &manifest,
                             const BoostCompileConfig &cfg);

/// Binary search over the sorted indices. If `comparisons` is given it is
/// incremented once per probed element.
inline bool IsBoosted(const BiasingContext &ctx, ArcIndex g,
                      std::size_t *comparisons = nullptr) {
  const ArcIndex *data = ctx.arc_indices.data();
  std::ptrdiff_t lo = 0, hi = static_cast<std::ptrdiff_t>(ctx.arc_indices.size()) - 1;
  while (lo <= hi) {
    std::ptrdiff_t mid = lo + (hi - lo) / 2;
    if (comparisons) ++*comparisons;
    ArcIndex v = data[mid];
    if (v == g) return true;
    if (v < g)
      lo = mid + 1;
    else
      hi = mid - 1;
  }
  return false;
}

inline Cost EffectiveWeight(const BiasingContext *ctx, ArcIndex g, Cost w) {
  if (ctx != nullptr && IsBoosted(*ctx, g)) return w + ctx->discount;
  return w;
}

/// First element >= g of a sorted index list (or one past the end).
/// Branch-free halving: the decoder calls this once per expanded state,
/// where mispredicted branches would cost more than the probes themselves.
inline const ArcIndex *LowerBoundIndex(std::span<const ArcIndex> sorted, ArcIndex g) {
  const ArcIndex *base = sorted.data();
  std::size_t n = sorted.size();
  if (n == 0) return base;
  while (n > 1) {
    const std::size_t half = n / 2;
    base = base[half - 1] < g ? base + half : base;
    n -= half;
  }
  return base + (*base < g);
}

inline const ArcIndex *FirstBoostedAtOrAfter(const BiasingContext &ctx, ArcIndex g) {
  return LowerBoundIndex(ctx.arc_indices, g);
}

/// {"id", "discount", "arc_indices", "stats"} as a JSON document.
std::string ContextToJson(const BiasingContext &ctx);

}  // namespace ctxboost

#endif  // CTXBOOST_BIASING_H_
