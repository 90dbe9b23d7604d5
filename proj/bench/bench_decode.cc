// bench/bench_decode.cc

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

// Times the serial and OpenMP batch decoders against each other, and biased
// against unbiased decoding, on a synthetic graph.

#include <chrono>
#include <iostream>

#include <CLI11.hpp>
#include <omp.h>

#include "ctxboost/decoder.h"
#include "test_util.h"

using namespace ctxboost;
using namespace ctxboost::testing;

namespace {

double Median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

template <typename F>
double Seconds(F &&f) {
  auto t0 = std::chrono::steady_clock::now();
  f();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Decoder throughput benchmark"};
  int channels = 8, frames = 100, runs = 5;
  std::size_t boosted = 1013;
  uint64_t seed = 1;
  Cost discount = -2.0;
  std::string only;
  SyntheticGraphOptions gopt;
  DecoderConfig cfg;
  cfg.beam = 12.0;
  app.add_option("--channels", channels)->capture_default_str();
  app.add_option("--frames", frames)->capture_default_str();
  app.add_option("--runs", runs)->capture_default_str();
  app.add_option("--boosted", boosted, "Arc indices in the context")->capture_default_str();
  app.add_option("--states", gopt.num_states)->capture_default_str();
  app.add_option("--arcs-per-state", gopt.arcs_per_state)->capture_default_str();
  app.add_option("--beam", cfg.beam)->capture_default_str();
  app.add_option("--max-active", cfg.max_active)->capture_default_str();
  app.add_option("--seed", seed)->capture_default_str();
  app.add_option("--discount", discount)->capture_default_str();
  app.add_option("--only", only, "Run one serial variant and exit (for profilers)")
      ->check(CLI::IsMember({"biased", "unbiased"}));
  CLI11_PARSE(app, argc, argv);

  std::mt19937_64 rng(seed);
  const CsrFst csr = BuildCsr(SyntheticDecodingGraph(rng, gopt));
  ContextRegistry registry(csr.Fingerprint());
  registry.Add([&] {
    BiasingContext c = SampledContext(rng, csr, boosted, discount);
    c.id = "ctx";
    return c;
  }());
  std::vector<ScoreMatrix> scores;
  for (int c = 0; c < channels; ++c)
    scores.push_back(RandomScores(rng, frames, gopt.num_ilabels, 8.0));
  cfg.partial_every = frames + 1;

  auto make_batch = [&](bool biased) {
    std::vector<BatchItem> items;
    for (int c = 0; c < channels; ++c)
      items.push_back({InitChannel("ch" + std::to_string(c), registry,
                                   biased ? std::optional<std::string>("ctx") : std::nullopt, cfg),
                       scores[c]});
    return items;
  };

  std::cout << "graph: " << csr.NumStates() << " states, " << csr.NumArcs() << " arcs; "
            << channels << " channels x " << frames << " frames; " << omp_get_max_threads()
            << " OpenMP threads\n";

  if (!only.empty()) {
    auto items = make_batch(only == "biased");
    std::cout << only << " " << Seconds([&] { DecodeBatchSerial(items, csr, registry, cfg); })
              << " s\n";
    return 0;
  }

  std::vector<double> serial, parallel, unbiased, biased;
  for (int r = 0; r < runs; ++r) {
    auto a = make_batch(true), b = make_batch(true), c = make_batch(false);
    std::vector<ChannelResult> ra, rb;
    // Alternate which variant runs first so warm-up does not favor one.
    auto time_unbiased = [&] {
      unbiased.push_back(Seconds([&] { DecodeBatchSerial(c, csr, registry, cfg); }));
    };
    if (r % 2 == 0) time_unbiased();
    serial.push_back(Seconds([&] { ra = DecodeBatchSerial(a, csr, registry, cfg); }));
    if (r % 2 == 1) time_unbiased();
    parallel.push_back(Seconds([&] { rb = DecodeBatch(b, csr, registry, cfg); }));
    if (ra != rb) {
      std::cerr << "serial and parallel results differ\n";
      return 1;
    }
    biased.push_back(serial.back());
  }
  const double audio = channels * frames * scores[0].FrameDuration();
  std::cout << "serial   median " << Median(serial) << " s (RTFX " << audio / Median(serial)
            << ")\n"
            << "openmp   median " << Median(parallel) << " s (RTFX " << audio / Median(parallel)
            << "), speedup " << Median(serial) / Median(parallel) << "x\n"
            << "unbiased median " << Median(unbiased) << " s\n"
            << "biased   median " << Median(biased) << " s, overhead "
            << 100.0 * (Median(biased) / Median(unbiased) - 1.0) << "%\n";
  return 0;
}
