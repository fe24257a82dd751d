#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "necti/eval.hpp"
#include "necti/io.hpp"
#include "necti/parser.hpp"
#include "oracles.hpp"
#include "synthetic.hpp"

namespace necti {
namespace {

using numkit::Graph;
using numkit::Tensor;

ModelConfig tiny_config() {
  ModelConfig config;
  config.word_dim = 6;
  config.char_dim = 4;
  config.char_feature_dim = 5;
  config.span_dim = 3;
  config.lstm_hidden = 4;
  config.arc_mlp_dim = 5;
  config.label_mlp_dim = 3;
  config.dropout = 0;
  return config;
}

Model tiny_model(const std::vector<Sentence>& data, ModelConfig config = tiny_config()) {
  Model model(config, testing::synthetic_inventory(), Vocabulary::build(data));
  model.init();
  return model;
}

// A sentence made of one bare compound with n components.
Sentence bare_compound(int n) {
  std::string line = "<";
  for (int i = 0; i < n; ++i) line += (i ? "-c" : "c") + std::to_string(i + 1);
  return parse_corpus_text(line + ">\n")[0];
}

TEST(Scores, ShapeContract) {
  auto data = parse_corpus_text("x <a-b>\n");
  auto model = tiny_model(data);
  auto scores = model.score(data[0]);
  EXPECT_EQ(scores.arc.shape(), (std::vector<std::size_t>{4, 4}));
  EXPECT_EQ(scores.label.shape(), (std::vector<std::size_t>{4, 4, 5}));
  EXPECT_TRUE(scores.arc.all_finite());
  EXPECT_TRUE(scores.label.all_finite());
}

TEST(Scores, ArcBilinearPartIsLinearInU) {
  auto data = parse_corpus_text("x <a-b> y\n");
  auto model = tiny_model(data);
  Tensor& u = model.store().at("biaffine.arc.U").value;
  const Tensor original = u;
  auto base = model.score(data[0]).arc;
  for (auto& v : u.values()) v *= 2;
  auto doubled = model.score(data[0]).arc;
  u.fill(0);
  auto linear_only = model.score(data[0]).arc;
  u = original;
  for (std::size_t i = 0; i < base.size(); ++i) {
    EXPECT_NEAR(doubled[i] - linear_only[i], 2 * (base[i] - linear_only[i]), 1e-12);
  }
}

TEST(Scores, PairLabelPathMatchesFullTensor) {
  auto data = parse_corpus_text("x <a-b-c> y\n");
  auto model = tiny_model(data);
  Graph graph;
  auto states = model.encoder().run(graph, model.store(), data[0]);
  auto heads = model.scorer().heads(graph, model.store(), states);
  auto full = model.scorer().label_scores(graph, model.store(), heads);
  std::vector<int> deps = {1, 2, 3, 4, 5, 3};
  std::vector<int> hds = {0, 3, 4, 0, 2, 3};
  const Tensor& pair =
      graph.value(model.scorer().pair_label_scores(graph, model.store(), heads, deps, hds));
  ASSERT_EQ(full.size(), model.inventory().size());
  for (std::size_t i = 0; i < deps.size(); ++i) {
    for (std::size_t l = 0; l < full.size(); ++l) {
      EXPECT_NEAR(pair(i, l), graph.value(full[l])(deps[i], hds[i]), 1e-12);
    }
  }
}

TEST(Loss, UniformScoresGiveLn2PlusLnL) {
  // One plain word: candidate heads Global and itself.
  auto s = parse_corpus_text("solo\n")[0];
  LabelInventory inventory = testing::synthetic_inventory();
  DependencyGraph gold(2);
  gold.arcs[1] = {0, std::string(kGlobalRelation)};
  ScoreMatrices scores(2, inventory.size());
  EXPECT_NEAR(loss(scores, gold, inventory),
              std::log(2.0) + std::log(static_cast<double>(inventory.size())), 1e-12);
}

TEST(Loss, PeakedAtGoldApproachesZero) {
  auto s = parse_corpus_text("x <a-b-c>\n<<a-b>XA-c>XB\n")[0];
  auto inventory = testing::synthetic_inventory();
  auto gold = graph_from_trees(s, inventory.head_rules());
  ScoreMatrices scores(s.size() + 1, inventory.size());
  for (std::size_t d = 1; d < gold.n_nodes(); ++d) {
    scores.arc(d, gold.arcs[d].head) = 60;
    scores.label_at(d, gold.arcs[d].head, inventory.require_index(gold.arcs[d].label)) = 60;
  }
  EXPECT_LT(loss(scores, gold, inventory), 1e-20);
}

TEST(Loss, GraphLossMatchesScoreLoss) {
  auto data = testing::synthetic_corpus(3, 5);
  auto model = tiny_model(data);
  for (const auto& s : data) {
    auto gold = graph_from_trees(s, model.inventory().head_rules());
    Graph graph;
    double graph_loss = graph.scalar(model.training_loss(graph, s, gold));
    EXPECT_NEAR(graph_loss, loss(model.score(s), gold, model.inventory()), 1e-10);
  }
}

TEST(Loss, GradientMatchesFiniteDifferences) {
  auto data = parse_corpus_text("tena <aka-cit> iti\n<aka-cit>XC\n");
  auto config = tiny_config();
  config.lstm_hidden = 3;
  config.word_dim = 3;
  config.char_dim = 2;
  config.char_feature_dim = 2;
  config.span_dim = 2;
  config.arc_mlp_dim = 3;
  config.label_mlp_dim = 2;
  auto model = tiny_model(data, config);
  auto gold = graph_from_trees(data[0], model.inventory().head_rules());
  auto result = numkit::grad_check(
      [&](Graph& graph) { return model.training_loss(graph, data[0], gold); }, model.store(),
      1e-5);
  EXPECT_LT(result.max_rel_error, 1e-3) << result.worst_param << "[" << result.worst_index
                                        << "] analytic " << result.analytic << " numeric "
                                        << result.numeric;
  EXPECT_EQ(result.n_checked, model.store().n_values());
}

TEST(LogProbabilities, RowsNormalise) {
  std::mt19937_64 rng(1);
  auto scores = testing::random_scores(5, 4, rng);
  auto lp = log_probabilities(scores);
  for (std::size_t d = 1; d < 5; ++d) {
    double arc_mass = 0;
    for (std::size_t h = 0; h < 5; ++h) {
      arc_mass += std::exp(lp.arc(d, h));
      double label_mass = 0;
      for (std::size_t l = 0; l < 4; ++l) label_mass += std::exp(lp.label_at(d, h, l));
      EXPECT_NEAR(label_mass, 1.0, 1e-12);
    }
    EXPECT_NEAR(arc_mass, 1.0, 1e-12);
  }
}

TEST(Decoder, AllEqualScoresUseTieBreak) {
  auto s = bare_compound(3);
  auto inventory = testing::synthetic_inventory();
  ScoreMatrices scores(4, inventory.size());
  auto decoded = decode_compound(scores, s.compounds()[0], inventory);
  // Root = lowest component; lowest split keeps the chain 1 <- 2 <- 3, and
  // rightward arcs take the only left-headed label.
  CompoundArcs expected = {{1, 0, "CompoundRoot"}, {2, 1, "XC"}, {3, 2, "XC"}};
  EXPECT_EQ(decoded.arcs, expected);
  EXPECT_EQ(decoded.score, 0.0);
  EXPECT_EQ(dependency_to_tree(decoded.arcs, inventory.head_rules()).to_string(), "<1-<2-3>XC>XC");
}

TEST(Decoder, DominatingArcsWin) {
  auto s = bare_compound(3);
  auto inventory = testing::synthetic_inventory();
  std::mt19937_64 rng(2);
  auto scores = testing::random_scores(4, inventory.size(), rng);
  scores.arc(1, 2) += 50;
  scores.arc(2, 3) += 50;
  scores.arc(3, 0) += 50;
  scores.label_at(1, 2, inventory.require_index("XB")) += 50;
  scores.label_at(2, 3, inventory.require_index("XA")) += 50;
  auto decoded = decode_compound(scores, s.compounds()[0], inventory);
  CompoundArcs expected = {{1, 2, "XB"}, {2, 3, "XA"}, {3, 0, "CompoundRoot"}};
  EXPECT_EQ(decoded.arcs, expected);
  EXPECT_EQ(dependency_to_tree(decoded.arcs, inventory.head_rules()).to_string(), "<<1-2>XB-3>XA");
}

TEST(Decoder, MatchesBruteForce) {
  auto inventory = testing::synthetic_inventory();
  std::mt19937_64 rng(3);
  for (int n = 2; n <= 7; ++n) {
    // Plain words around the compound exercise the node offset.
    std::string line = "pre <";
    for (int i = 0; i < n; ++i) line += (i ? "-c" : "c") + std::to_string(i);
    auto s = parse_corpus_text(line + "> post\n")[0];
    const auto& compound = s.compounds()[0];
    for (int trial = 0; trial < 40; ++trial) {
      auto scores = testing::random_scores(s.size() + 1, inventory.size(), rng);
      auto decoded = decode_compound(scores, compound, inventory);
      double best = testing::brute_force_best(scores, compound, inventory);
      EXPECT_NEAR(decoded.score, best, 1e-9) << "n=" << n;
      EXPECT_NEAR(arc_set_score(scores, inventory, decoded.arcs), decoded.score, 1e-9);
    }
  }
}

TEST(Decoder, BruteForceOraclesAgree) {
  // Direction-restricted best labels equal the maximum over full label
  // assignments.
  auto inventory = testing::synthetic_inventory();
  std::mt19937_64 rng(4);
  for (int n = 2; n <= 5; ++n) {
    auto s = bare_compound(n);
    for (int trial = 0; trial < 10; ++trial) {
      auto scores = testing::random_scores(s.size() + 1, inventory.size(), rng);
      EXPECT_NEAR(testing::brute_force_best(scores, s.compounds()[0], inventory),
                  testing::brute_force_best_labeled(scores, s.compounds()[0], inventory), 1e-12);
    }
  }
}

TEST(Decoder, OutputIsAlwaysValid) {
  auto inventory = testing::synthetic_inventory();
  std::mt19937_64 rng(5);
  auto data = parse_corpus_text("a <b-c> d <e-f-g-h> <i-j-k>\n\n<l-m-n-o-p-q-r-s>\n\nt\n");
  for (int trial = 0; trial < 50; ++trial) {
    for (const auto& s : data) {
      auto scores = testing::random_scores(s.size() + 1, inventory.size(), rng);
      auto graph = decode(scores, s, inventory);
      EXPECT_TRUE(validate_graph(graph, s).empty());
      std::vector<CompoundSpans> pred;
      for (const auto& compound : s.compounds()) {
        auto tree = dependency_to_tree(compound_arcs(graph, compound), inventory.head_rules(),
                                       compound.offset());
        pred.push_back({compound.id, static_cast<int>(compound.n_components()),
                        tree_to_spans(tree)});
      }
      if (!pred.empty()) EXPECT_EQ(global_span_accuracy(pred), 1.0);
    }
  }
}

TEST(Decoder, LabelPermutationKeepsArcsForSymmetricLabelScores) {
  std::vector<std::pair<Label, HeadSide>> labels = {
      {{"P", LabelKind::kFine}, HeadSide::kRight}, {{"Q", LabelKind::kFine}, HeadSide::kLeft},
      {{"R", LabelKind::kFine}, HeadSide::kRight}, {{"S", LabelKind::kFine}, HeadSide::kLeft}};
  std::mt19937_64 rng(6);
  auto s = bare_compound(6);
  auto unlabeled = [](const CompoundArcs& arcs) {
    std::vector<std::pair<int, int>> out;
    for (const auto& a : arcs) out.push_back({a.dependent, a.head});
    return out;
  };
  for (int trial = 0; trial < 30; ++trial) {
    LabelInventory base(labels);
    auto scores = testing::random_scores(s.size() + 1, base.size(), rng);
    for (std::size_t d = 0; d < scores.n_nodes(); ++d) {
      for (std::size_t h = 0; h < scores.n_nodes(); ++h) {
        const double v = scores.label_at(d, h, 0);
        for (std::size_t l = 0; l < base.size(); ++l) scores.label_at(d, h, l) = v;
      }
    }
    auto reference = unlabeled(decode_compound(scores, s.compounds()[0], base).arcs);
    auto shuffled = labels;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    LabelInventory permuted(shuffled);
    EXPECT_EQ(unlabeled(decode_compound(scores, s.compounds()[0], permuted).arcs), reference);
  }
}

TEST(Decoder, PlainWordsForcedToGlobal) {
  auto inventory = testing::synthetic_inventory();
  auto s = parse_corpus_text("a <b-c> d\n")[0];
  ScoreMatrices scores(5, inventory.size());
  scores.arc(1, 2) = 100;  // ignored
  auto graph = decode(scores, s, inventory);
  EXPECT_EQ(graph.arcs[1], (Arc{0, "GlobalRelation"}));
  EXPECT_EQ(graph.arcs[4], (Arc{0, "GlobalRelation"}));
}

TEST(Decoder, NeedsASpanLabel) {
  auto s = bare_compound(2);
  LabelInventory empty;
  EXPECT_THROW(decode_compound(ScoreMatrices(3, empty.size()), s.compounds()[0], empty), Error);
}

TEST(Model, ParseContract) {
  auto data = parse_corpus_text("x <a-b> y <c-d-e-f>\n");
  auto model = tiny_model(data);
  auto result = model.parse(data[0]);
  ASSERT_EQ(result.spans.size(), 2u);
  EXPECT_EQ(result.spans[0].size(), 1u);
  EXPECT_EQ(result.spans[1].size(), 3u);
  EXPECT_TRUE(validate_graph(result.graph, data[0]).empty());
  for (const auto& spans : result.spans) {
    for (const auto& a : spans) {
      for (const auto& b : spans) {
        const bool disjoint = a.end < b.start || b.end < a.start;
        const bool nested = (a.start <= b.start && b.end <= a.end) ||
                            (b.start <= a.start && a.end <= b.end);
        EXPECT_TRUE(disjoint || nested);
      }
    }
  }
  EXPECT_EQ(result.spans[1].back().start, 1);
  EXPECT_EQ(result.spans[1].back().end, 4);
}

TEST(Model, ParseAllMatchesSequential) {
  auto data = testing::synthetic_corpus(12, 6);
  auto model = tiny_model(data);
  auto threaded = model.parse_all(data, nullptr, 4);
  ASSERT_EQ(threaded.size(), data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto single = model.parse(data[i]);
    EXPECT_EQ(threaded[i].graph, single.graph);
    EXPECT_EQ(threaded[i].spans, single.spans);
  }
}

TEST(Model, SaveLoadIsBitExact) {
  auto data = testing::synthetic_corpus(4, 7);
  auto model = tiny_model(data);
  auto bytes = model.serialize();
  EXPECT_EQ(bytes.substr(0, 4), "DNCT");
  auto loaded = Model::deserialize(bytes);
  EXPECT_EQ(loaded.serialize(), bytes);
  EXPECT_EQ(loaded.config(), model.config());
  EXPECT_EQ(loaded.inventory(), model.inventory());
  EXPECT_EQ(loaded.vocab(), model.vocab());
  for (const auto& [name, param] : model.store().params()) {
    EXPECT_EQ(loaded.store().at(name).value, param.value) << name;
  }
  for (const auto& s : data) {
    EXPECT_EQ(loaded.score(s).arc, model.score(s).arc);
    EXPECT_EQ(loaded.parse(s).graph, model.parse(s).graph);
  }

  auto dir = std::filesystem::path(NECTI_TEST_TMP);
  std::filesystem::create_directories(dir);
  model.save(dir / "model.bin");
  EXPECT_EQ(Model::load(dir / "model.bin").serialize(), bytes);

  EXPECT_THROW(Model::deserialize(bytes.substr(0, bytes.size() - 3)), Error);
  EXPECT_THROW(Model::deserialize(bytes + "x"), Error);
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(Model::deserialize(bad), Error);
}

TEST(Train, DeterministicGivenSeed) {
  auto data = testing::synthetic_corpus(6, 8);
  auto config = tiny_config();
  config.dropout = 0.33;
  config.epochs = 3;
  config.batch_size = 4;
  auto a = train(data, data, config, testing::synthetic_inventory());
  auto b = train(data, data, config, testing::synthetic_inventory());
  EXPECT_EQ(a.stats, b.stats);
  EXPECT_EQ(a.model.serialize(), b.model.serialize());
  EXPECT_EQ(a.stats.epoch_loss.size(), 3u);
  EXPECT_GE(a.stats.best_epoch, 0);
  config.seed = 2;
  auto c = train(data, data, config, testing::synthetic_inventory());
  EXPECT_NE(c.stats.epoch_loss, a.stats.epoch_loss);
}

TEST(Train, AblationsRun) {
  auto data = testing::synthetic_corpus(6, 9);
  for (auto [span, context] : {std::pair{false, true}, std::pair{true, false}}) {
    auto config = tiny_config();
    config.epochs = 2;
    config.use_span_encoding = span;
    config.use_context = context;
    auto result = train(data, data, config, testing::synthetic_inventory());
    EXPECT_EQ(result.stats.dev_lss.size(), 2u);
    EXPECT_EQ(result.model.store().contains("embed.span"), span);
    auto parsed = result.model.parse_all(data);
    EXPECT_EQ(parsed.size(), data.size());
  }
}

TEST(Train, NoDevKeepsLastEpoch) {
  auto data = testing::synthetic_corpus(3, 10);
  auto config = tiny_config();
  config.epochs = 2;
  int calls = 0;
  TrainOptions options;
  options.on_epoch = [&](int, const TrainStats&) { ++calls; };
  auto result = train(data, {}, config, testing::synthetic_inventory(), options);
  EXPECT_EQ(calls, 2);
  EXPECT_EQ(result.stats.best_epoch, 1);
  EXPECT_TRUE(result.stats.dev_lss.empty());
}

TEST(Train, Errors) {
  auto config = tiny_config();
  EXPECT_THROW(train({}, {}, config, testing::synthetic_inventory()), Error);
  auto unannotated = parse_corpus_text("x <a-b>\n");
  EXPECT_THROW(train(unannotated, {}, config, testing::synthetic_inventory()), Error);
}

TEST(TrainStats, TextHasOneLinePerEpoch) {
  TrainStats stats;
  stats.epoch_loss = {1.5, 0.5};
  stats.dev_uss = {0.5, 1};
  stats.dev_lss = {0.25, 1};
  stats.dev_em = {0, 1};
  stats.best_epoch = 1;
  auto text = stats.to_text();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 4);  // header, epochs, best epoch
  EXPECT_NE(text.find("best_epoch\t2"), std::string::npos);
}

}  // namespace
// Minibatch Adam with dropout does not decrease the loss at every single epoch,
// so the trend is checked on 5-epoch means once the first 5 epochs are past.
TEST(Train, LossTrendOnOverfitCorpus) {
  auto data = testing::synthetic_corpus(50, 7);
  auto config = testing::small_config();
  config.epochs = 40;
  auto result = train(data, {}, config, testing::synthetic_inventory());
  const auto& loss = result.stats.epoch_loss;
  ASSERT_EQ(loss.size(), 40u);
  for (std::size_t e = 5; e < loss.size(); ++e) EXPECT_LT(loss[e], loss[4]) << "epoch " << e + 1;
  double previous = std::numeric_limits<double>::infinity();
  for (std::size_t start = 5; start + 5 <= loss.size(); start += 5) {
    double mean = 0;
    for (std::size_t e = start; e < start + 5; ++e) mean += loss[e] / 5;
    EXPECT_LT(mean, previous) << "window from epoch " << start + 1;
    previous = mean;
  }
}

}  // namespace necti
