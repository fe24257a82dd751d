#include <filesystem>

#include <gtest/gtest.h>

#include "necti/io.hpp"
#include "synthetic.hpp"

namespace necti {
namespace {

const char* kSumitra =
    "<sumitrā-ānanda-vardhanāḥ> lakṣmaṇaḥ rāmam anujagāma\n"
    "<<sumitrā-ānanda>L1-vardhanāḥ>L1\n";

std::string error_of(const std::string& text) {
  try {
    parse_corpus_text(text);
  } catch (const Error& e) {
    return e.what();
  }
  return "no error";
}

TEST(Corpus, SentenceWithCompound) {
  auto data = parse_corpus_text(kSumitra);
  ASSERT_EQ(data.size(), 1u);
  const auto& s = data[0];
  EXPECT_EQ(s.id(), "1");
  ASSERT_EQ(s.size(), 6u);
  EXPECT_EQ(s.tokens()[1].surface, "ānanda");
  EXPECT_TRUE(s.tokens()[2].is_component);
  EXPECT_EQ(s.tokens()[2].component_index, 3);
  EXPECT_FALSE(s.tokens()[3].is_component);
  ASSERT_EQ(s.compounds().size(), 1u);
  const auto& c = s.compounds()[0];
  EXPECT_EQ(c.id, "1.1");
  EXPECT_EQ(c.n_components(), 3u);
  ASSERT_TRUE(c.gold_tree);
  EXPECT_EQ(c.gold_tree->n_internal(), 2);
  EXPECT_EQ(c.gold_tree->to_string(), "<<1-2>L1-3>L1");
}

TEST(Corpus, WithoutContextKeepsOnlyComponents) {
  auto data = parse_corpus_text(kSumitra, ContextMode::kWithoutContext);
  ASSERT_EQ(data.size(), 1u);
  EXPECT_EQ(data[0].size(), 3u);
  EXPECT_EQ(data[0].id(), "1.1");
  EXPECT_EQ(data[0].source_offset(), 0u);

  auto two = parse_corpus_text("a <b-c> d <e-f>\n<b-c>X\n<e-f>Y\n", ContextMode::kWithoutContext);
  ASSERT_EQ(two.size(), 2u);
  EXPECT_EQ(two[1].id(), "1.2");
  EXPECT_EQ(two[1].source_offset(), 4u);
}

TEST(Corpus, UnannotatedRecordsAndMultipleRecords) {
  auto data = parse_corpus_text("a <b-c>\n\n\nplain words only\n\n<d-e> <f-g>\n<d-e>X\n<f-g>Y\n");
  ASSERT_EQ(data.size(), 3u);
  EXPECT_FALSE(data[0].compounds()[0].gold_tree);
  EXPECT_TRUE(data[1].compounds().empty());
  EXPECT_EQ(data[2].id(), "3");
  EXPECT_EQ(data[2].compounds()[1].id, "3.2");
}

TEST(Corpus, ErrorsCarryLineNumbers) {
  EXPECT_EQ(error_of("x\n\n<a-b-c>\n<<a-b>X-<c-d>Y>Z\n").rfind("line 4:", 0), 0u);
  EXPECT_NE(error_of("<a-b-c>\n<<a-b>X-<c-d>Y>Z\n").find("annotation has 4"), std::string::npos);
  EXPECT_EQ(error_of("x <a-b\n").rfind("line 1: unbalanced brackets", 0), 0u);
  EXPECT_EQ(error_of("<a-b> <c-d>\n<a-b>X\n").rfind("line 2:", 0), 0u);
  EXPECT_EQ(error_of("<a>\n").rfind("line 1:", 0), 0u);
  EXPECT_EQ(error_of("<a--b>\n").rfind("line 1: empty component", 0), 0u);
  EXPECT_EQ(error_of("<a-b>\n<a-x>T\n").rfind("line 2: annotation components differ", 0), 0u);
  EXPECT_EQ(error_of("<a-b-c>\n<a-b-c>T\n").rfind("line 2:", 0), 0u);  // not binary
  EXPECT_EQ(error_of("<a-b>\n<a-b>CompoundRoot\n").rfind("line 2:", 0), 0u);
}

TEST(Corpus, RenderRoundTrip) {
  std::string text = std::string(kSumitra) + "\nx <a-b> y <c-d-e>\n<a-b>P\n<c-<d-e>Q>R\n\nbare <f-g>\n";
  auto data = parse_corpus_text(text);
  auto rendered = render_corpus(data);
  EXPECT_EQ(parse_corpus_text(rendered), data);
  EXPECT_EQ(render_corpus(parse_corpus_text(rendered)), rendered);

  auto synthetic = testing::synthetic_corpus(30, 4);
  EXPECT_EQ(parse_corpus_text(render_corpus(synthetic)), synthetic);

  // Whitespace is canonicalised.
  auto messy = parse_corpus_text("  x   <a-b>\t y \n <  a - b > P \n");
  EXPECT_EQ(render_corpus(messy), "x <a-b> y\n<a-b>P\n");
}

TEST(Corpus, FileRoundTrip) {
  auto dir = std::filesystem::path(NECTI_TEST_TMP);
  std::filesystem::create_directories(dir);
  auto data = testing::synthetic_corpus(5, 5);
  write_corpus(data, dir / "corpus.txt");
  EXPECT_EQ(parse_corpus(dir / "corpus.txt"), data);
  EXPECT_THROW(parse_corpus(dir / "missing.txt"), Error);
}

TEST(Conll, AppendixExampleHeads) {
  auto data = parse_corpus_text("<vidyā-ālaya-ghaṇṭā>\n<<vidyā-ālaya>T6-ghaṇṭā>T6\n");
  HeadRules rules = {{"T6", HeadSide::kRight}};
  auto graph = graph_from_trees(data[0], rules);
  auto text = render_conll(data, {graph});
  EXPECT_EQ(text,
            "# sent_id = 1\n"
            "1\tvidyā\t2\tT6\t1.1\n"
            "2\tālaya\t3\tT6\t1.1\n"
            "3\tghaṇṭā\t0\tCompoundRoot\t1.1\n");
}

TEST(Conll, PlainWordsAttachToGlobal) {
  auto data = parse_corpus_text("tena <a-b>\n<a-b>X\n");
  auto graph = graph_from_trees(data[0], {{"X", HeadSide::kRight}});
  auto text = render_conll(data, {graph});
  EXPECT_NE(text.find("1\ttena\t0\tGlobalRelation\t_\n"), std::string::npos);
}

TEST(Conll, RoundTripOnCorpus) {
  auto inventory = testing::synthetic_inventory();
  for (auto mode : {ContextMode::kWithContext, ContextMode::kWithoutContext}) {
    auto data = parse_corpus_text(testing::synthetic_corpus_text(25, 6), mode);
    std::vector<DependencyGraph> graphs;
    for (const auto& s : data) graphs.push_back(graph_from_trees(s, inventory.head_rules()));
    auto text = render_conll(data, graphs);
    auto back = parse_conll(text);
    ASSERT_EQ(back.size(), data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
      EXPECT_EQ(back[i].graph, graphs[i]);
      EXPECT_EQ(back[i].sentence.id(), data[i].id());
      EXPECT_EQ(back[i].sentence.source_id(), data[i].source_id());
      EXPECT_EQ(back[i].sentence.source_offset(), data[i].source_offset());
      EXPECT_EQ(attach_trees(back[i], inventory.head_rules()), data[i]);
    }
    std::vector<Sentence> sentences;
    for (const auto& c : back) sentences.push_back(c.sentence);
    EXPECT_EQ(render_conll(sentences, graphs), text);
  }
}

TEST(Conll, Errors) {
  auto data = parse_corpus_text("x <a-b>\n");
  DependencyGraph broken(4);
  broken.arcs[1] = {2, "X"};
  EXPECT_THROW(render_conll(data, {broken}), Error);
  EXPECT_THROW(render_conll(data, {}), Error);
  EXPECT_THROW(parse_conll("# sent_id = 1\n1\tx\t0\n"), Error);
  EXPECT_THROW(parse_conll("# sent_id = 1\n1\tx\t9\tGlobalRelation\t_\n"), Error);
  EXPECT_THROW(parse_conll("# sent_id = 1\n2\tx\t0\tGlobalRelation\t_\n"), Error);
}

TEST(Stats, HandCountedHistogram) {
  auto data = parse_corpus_text(
      "x <a-b> <c-d-e>\n<a-b>P\n<c-<d-e>Q>P\n\n"
      "<f-g-h-i>\n<<f-g>P-<h-i>Q>R\n\n"
      "y z\n");
  auto stats = corpus_stats(data);
  EXPECT_EQ(stats.n_records, 3u);
  EXPECT_EQ(stats.n_tokens, 6u + 4u + 2u);
  EXPECT_EQ(stats.n_compounds, 3u);
  EXPECT_EQ(stats.components, (std::map<int, std::size_t>{{2, 1}, {3, 1}, {4, 1}}));
  EXPECT_EQ(stats.labels, (std::map<std::string, std::size_t>{{"P", 3}, {"Q", 2}, {"R", 1}}));
  std::size_t total = 0;
  for (const auto& [n, count] : stats.components) total += count;
  EXPECT_EQ(total, stats.n_compounds);
  auto csv = stats.to_csv();
  EXPECT_NE(csv.find("compounds,,3\n"), std::string::npos);
  EXPECT_NE(csv.find("components,4,1\n"), std::string::npos);
  EXPECT_NE(csv.find("label,P,3\n"), std::string::npos);
}

}  // namespace
}  // namespace necti
