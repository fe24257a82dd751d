#include <random>

#include <benchmark/benchmark.h>

#include "necti/io.hpp"
#include "necti/parser.hpp"
#include "necti/treeops.hpp"

namespace {

using namespace necti;

LabelInventory inventory() {
  return LabelInventory({{{"T6", LabelKind::kFine}, HeadSide::kRight},
                         {{"Bs", LabelKind::kFine}, HeadSide::kLeft},
                         {{"Di", LabelKind::kFine}, HeadSide::kRight}});
}

Sentence compound_of(int n) {
  std::string line = "<";
  for (int i = 0; i < n; ++i) line += (i ? "-c" : "c") + std::to_string(i);
  return parse_corpus_text(line + ">\n")[0];
}

void BM_Enumerate(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  for (auto _ : state) {
    ParseEnumerator enumerator(n);
    std::size_t count = 0;
    while (enumerator.next()) ++count;
    benchmark::DoNotOptimize(count);
  }
}
BENCHMARK(BM_Enumerate)->DenseRange(4, 10, 2);

void BM_DecodeCompound(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  auto labels = inventory();
  auto sentence = compound_of(n);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> dist;
  ScoreMatrices scores(sentence.size() + 1, labels.size());
  for (auto& v : scores.arc.values()) v = dist(rng);
  for (auto& v : scores.label.values()) v = dist(rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(decode_compound(scores, sentence.compounds()[0], labels));
  }
}
BENCHMARK(BM_DecodeCompound)->RangeMultiplier(2)->Range(2, 16);

void BM_TreeDependencyRoundTrip(benchmark::State& state) {
  auto labels = inventory();
  auto trees = enumerate_parses(8, "T6");
  for (auto _ : state) {
    for (const auto& tree : trees) {
      auto arcs = tree_to_dependency(tree, labels.head_rules());
      benchmark::DoNotOptimize(dependency_to_tree(arcs, labels.head_rules()));
    }
  }
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations() * trees.size()));
}
BENCHMARK(BM_TreeDependencyRoundTrip);

void BM_SpansRoundTrip(benchmark::State& state) {
  auto trees = enumerate_parses(8, "T6");
  for (auto _ : state) {
    for (const auto& tree : trees) benchmark::DoNotOptimize(spans_to_tree(tree_to_spans(tree), 8));
  }
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations() * trees.size()));
}
BENCHMARK(BM_SpansRoundTrip);

void BM_ParseSentence(benchmark::State& state) {
  auto data = parse_corpus_text(
      "tena saha <sumitrā-ānanda-vardhanāḥ> lakṣmaṇaḥ rāmam anujagāma\n"
      "<<sumitrā-ānanda>T6-vardhanāḥ>T6\n");
  ModelConfig config;
  config.lstm_hidden = static_cast<int>(state.range(0));
  config.word_dim = 100;
  Model model(config, inventory(), Vocabulary::build(data));
  model.init();
  for (auto _ : state) benchmark::DoNotOptimize(model.parse(data[0]));
}
BENCHMARK(BM_ParseSentence)->Arg(128)->Arg(512)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
