#include <benchmark/benchmark.h>

#include "proxyq/dataset.hpp"

static void BM_ParseTableJsonl(benchmark::State& state) {
  std::string body;
  for (int i = 0; i < 1000; ++i)
    body += "{\"id\":" + std::to_string(i) + ",\"review\":\"row text " +
            std::to_string(i) + "\",\"score\":" + std::to_string(i % 7) +
            "}\n";
  for (auto _ : state) {
    auto t = proxyq::parse_table_jsonl(body, "bench");
    benchmark::DoNotOptimize(t);
  }
  state.SetItemsProcessed(state.iterations() * 1000);
}
BENCHMARK(BM_ParseTableJsonl);

BENCHMARK_MAIN();
