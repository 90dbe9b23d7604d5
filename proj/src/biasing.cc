// src/biasing.cc

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

#include "ctxboost/biasing.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <unordered_map>

#include <json.hpp>

#include "ctxboost/text_util.h"

namespace ctxboost {

namespace {

// Arcs grouped by output label, built once per compile.
class OutputIndex {
 public:
  explicit OutputIndex(const CsrFst &fst) {
    for (ArcIndex g = 0; g < fst.NumArcs(); ++g) {
      Label o = fst.Olabel(g);
      if (o != kEpsilon) by_label_[o].push_back({fst.NextState(g), g});
    }
  }
  std::vector<ReachedArc> Get(Label word) const {
    auto it = by_label_.find(word);
    return it == by_label_.end() ? std::vector<ReachedArc>{} : it->second;
  }

 private:
  std::unordered_map<Label, std::vector<ReachedArc>> by_label_;
};

void SortUnique(std::vector<ArcIndex> *v) {
  std::sort(v->begin(), v->end());
  v->erase(std::unique(v->begin(), v->end()), v->end());
}

std::vector<ArcIndex> FindBoostArcsFrom(const CsrFst &fst,
                                        const std::vector<Label> &words,
                                        std::vector<ReachedArc> frontier,
                                        int max_depth) {
  std::vector<ArcIndex> result;
  for (std::size_t t = 1; t < words.size() && !frontier.empty(); ++t) {
    std::set<ReachedArc> next;
    for (const ReachedArc &prev : frontier) {
      std::vector<ReachedArc> found = DfsSpecial(fst, prev.state, words[t], max_depth);
      if (found.empty()) continue;
      // The word after prev.arc can be emitted, so prev.arc is on a chain.
      result.push_back(prev.arc);
      next.insert(found.begin(), found.end());
    }
    frontier.assign(next.begin(), next.end());
  }
  for (const ReachedArc &r : frontier) result.push_back(r.arc);
  SortUnique(&result);
  return result;
}

}  // namespace

EntityList ParseEntityList(std::istream &is, std::string source) {
  EntityList list;
  list.source = std::move(source);
  std::string line;
  while (std::getline(is, line)) {
    auto fields = SplitFields(line);
    if (fields.empty() || fields.front().front() == '#') continue;
    std::vector<std::string> entity;
    for (auto f : fields) entity.emplace_back(f);
    list.entries.push_back(std::move(entity));
  }
  return list;
}

EntityList ReadEntityListFile(const std::string &path) {
  std::ifstream is(path);
  if (!is) throw BiasingError("cannot open entity file: " + path);
  return ParseEntityList(is, path);
}

void BoostCompileConfig::Check() const {
  if (discount > 0.0 && !allow_positive_discount)
    throw BiasingError("positive discount " + FormatDouble(discount) +
                       " would penalize entities");
  if (max_epsilon_depth < 0) throw BiasingError("max_epsilon_depth must be >= 0");
}

std::vector<ReachedArc> StatesThatOutputToken(const CsrFst &fst, Label word) {
  std::vector<ReachedArc> out;
  for (ArcIndex g = 0; g < fst.NumArcs(); ++g)
    if (fst.Olabel(g) == word) out.push_back({fst.NextState(g), g});
  return out;
}

std::vector<ReachedArc> DfsSpecial(const CsrFst &fst, StateId state, Label word,
                                   int max_depth) {
  std::vector<ReachedArc> out;
  for (StateId s : EpsilonOutputClosure(fst, state, max_depth))
    for (ArcIndex g = fst.ArcBegin(s); g < fst.ArcEnd(s); ++g)
      if (fst.Olabel(g) == word) out.push_back({fst.NextState(g), g});
  std::sort(out.begin(), out.end(),
            [](const ReachedArc &a, const ReachedArc &b) { return a.arc < b.arc; });
  return out;
}

std::vector<ArcIndex> FindBoostArcs(const CsrFst &fst, const std::vector<Label> &words,
                                    const BoostCompileConfig &cfg) {
  if (words.empty()) throw BiasingError("FindBoostArcs: empty word sequence");
  for (Label w : words)
    if (w == kEpsilon) throw BiasingError("FindBoostArcs: epsilon in word sequence");
  return FindBoostArcsFrom(fst, words, StatesThatOutputToken(fst, words.front()),
                           cfg.max_epsilon_depth);
}

BiasingContext CompileContext(const CsrFst &fst, const SymbolTable &symtab,
                              const EntityList &entities,
                              const BoostCompileConfig &cfg, std::string id) {
  cfg.Check();
  BiasingContext ctx;
  ctx.id = std::move(id);
  ctx.discount = cfg.discount;

  std::set<std::vector<std::string>> seen;
  OutputIndex index(fst);
  for (const auto &entity : entities.entries) {
    if (entity.empty()) continue;
    if (!seen.insert(entity).second) {
      ++ctx.stats.duplicates;
      continue;
    }
    std::vector<Label> labels;
    labels.reserve(entity.size());
    bool oov = false;
    for (const auto &word : entity) {
      auto id = symtab.Find(word);
      if (!id || *id == kEpsilon) {
        if (!cfg.skip_oov)
          throw BiasingError("out-of-vocabulary word '" + word + "' in " +
                             (entities.source.empty() ? "entity list" : entities.source));
        oov = true;
        break;
      }
      labels.push_back(*id);
    }
    if (oov) {
      ++ctx.stats.skipped_oov;
      continue;
    }
    std::vector<ArcIndex> arcs =
        FindBoostArcsFrom(fst, labels, index.Get(labels.front()), cfg.max_epsilon_depth);
    if (arcs.empty()) {
      ++ctx.stats.unmatched;
      continue;
    }
    ++ctx.stats.compiled;
    ctx.arc_indices.insert(ctx.arc_indices.end(), arcs.begin(), arcs.end());
  }
  SortUnique(&ctx.arc_indices);
  ctx.stats.empty = ctx.arc_indices.empty();
  return ctx;
}

EntityList BiasingFstToEntities(const Fst &bfst, const SymbolTable &symtab,
                                std::size_t max_paths) {
  bfst.Validate();
  EntityList list;
  list.source = "biasing-fst";
  const StateId n = bfst.NumStates();
  if (n == 0) return list;

  // Post-order DFS: detects cycles and counts complete paths per state,
  // saturating just above max_paths.
  enum class Mark : uint8_t { kNew, kOnStack, kDone };
  std::vector<Mark> mark(n, Mark::kNew);
  std::vector<std::size_t> paths(n, 0);
  const std::size_t cap = max_paths + 1;
  std::function<void(StateId)> visit = [&](StateId s) {
    mark[s] = Mark::kOnStack;
    std::size_t count = bfst.finals.count(s) ? 1 : 0;
    for (const Arc &arc : bfst.arcs[s]) {
      if (mark[arc.next_state] == Mark::kOnStack)
        throw BiasingError("biasing FST has a cycle through state " +
                           std::to_string(arc.next_state));
      if (mark[arc.next_state] == Mark::kNew) visit(arc.next_state);
      count = std::min(cap, count + paths[arc.next_state]);
    }
    paths[s] = count;
    mark[s] = Mark::kDone;
  };
  visit(bfst.start);
  if (paths[bfst.start] > max_paths)
    throw BiasingError("biasing FST has more than " + std::to_string(max_paths) +
                       " paths (counted at least " + std::to_string(paths[bfst.start]) +
                       ")");

  std::vector<std::string> words;
  std::function<void(StateId)> walk = [&](StateId s) {
    if (bfst.finals.count(s) && !words.empty()) list.entries.push_back(words);
    for (const Arc &arc : bfst.arcs[s]) {
      bool emits = arc.olabel != kEpsilon;
      if (emits) words.push_back(symtab.Word(arc.olabel));
      walk(arc.next_state);
      if (emits) words.pop_back();
    }
  };
  walk(bfst.start);
  return list;
}

void ContextRegistry::Add(BiasingContext ctx) {
  std::string id = ctx.id;
  if (contexts_.count(id)) throw BiasingError("duplicate context id '" + id + "'");
  contexts_.emplace(std::move(id),
                    std::make_shared<const BiasingContext>(std::move(ctx)));
}

std::shared_ptr<const BiasingContext> ContextRegistry::Get(const std::string &id) const {
  auto it = contexts_.find(id);
  if (it == contexts_.end()) throw BiasingError("unknown context id '" + id + "'");
  return it->second;
}

std::vector<std::string> ContextRegistry::Ids() const {
  std::vector<std::string> ids;
  for (const auto &[id, ctx] : contexts_) ids.push_back(id);
  return ids;
}

std::vector<ManifestEntry> ReadContextManifest(const std::string &path) {
  std::ifstream is(path);
  if (!is) throw BiasingError("cannot open context manifest: " + path);
  const std::filesystem::path base = std::filesystem::path(path).parent_path();
  std::vector<ManifestEntry> out;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    auto fields = SplitFields(line);
    if (fields.empty() || fields.front().front() == '#') continue;
    if (fields.size() != 2)
      throw ParseError(path + ": expected 'id<TAB>entity-file'", line_no);
    std::filesystem::path file{std::string(fields[1])};
    if (file.is_relative()) file = base / file;
    out.push_back({std::string(fields[0]), file.string()});
  }
  return out;
}

ContextRegistry LoadRegistry(const CsrFst &fst, const SymbolTable &symtab,
                             const std::vector<ManifestEntry> &manifest,
                             const BoostCompileConfig &cfg) {
  cfg.Check();
  ContextRegistry registry(fst.Fingerprint());
  std::set<std::string> ids;
  for (const auto &entry : manifest)
    if (!ids.insert(entry.id).second)
      throw BiasingError("duplicate context id '" + entry.id + "' in manifest");
  for (const auto &entry : manifest) {
    EntityList entities = ReadEntityListFile(entry.path);
    registry.Add(CompileContext(fst, symtab, entities, cfg, entry.id));
  }
  return registry;
}

std::string ContextToJson(const BiasingContext &ctx) {
  nlohmann::ordered_json j;
  j["id"] = ctx.id;
  j["discount"] = ctx.discount;
  j["arc_indices"] = ctx.arc_indices;
  j["stats"] = {{"compiled", ctx.stats.compiled},
                {"skipped_oov", ctx.stats.skipped_oov},
                {"unmatched", ctx.stats.unmatched},
                {"duplicates", ctx.stats.duplicates},
                {"empty", ctx.stats.empty}};
  return j.dump(2);
}

}  // namespace ctxboost
