#pragma once

#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "necti/core.hpp"
#include "necti/encoder.hpp"
#include "necti/numkit.hpp"
#include "necti/treeops.hpp"

namespace necti {

// arc(d, h) scores head h for dependent d; label(d, h, l) is stored at
// [(d * n + h) * L + l]. Row 0 (Global as dependent) is unused.
struct ScoreMatrices {
  numkit::Tensor arc;
  numkit::Tensor label;

  ScoreMatrices() = default;
  ScoreMatrices(std::size_t n_nodes, std::size_t n_labels);
  std::size_t n_nodes() const { return arc.rows(); }
  std::size_t n_labels() const { return label.rank() == 3 ? label.shape()[2] : 0; }
  double& label_at(std::size_t d, std::size_t h, std::size_t l) {
    return label[(d * n_nodes() + h) * n_labels() + l];
  }
  double label_at(std::size_t d, std::size_t h, std::size_t l) const {
    return label[(d * n_nodes() + h) * n_labels() + l];
  }
};

// Row-wise log-softmax of the arc scores over candidate heads and of the
// label scores over labels, i.e. log P(head | dependent) and
// log P(label | dependent, head).
ScoreMatrices log_probabilities(const ScoreMatrices& scores);

struct DecodedCompound {
  CompoundArcs arcs;  // sorted by dependent
  double score = 0;
};

// Best label for arc h -> d among the span labels whose head rule agrees with
// the arc direction (lowest index on ties), or nullopt when none does.
std::optional<std::size_t> best_label(const ScoreMatrices& scores, const LabelInventory& inventory,
                                      int dependent, int head);

// Score of a labeled arc set: arc score plus label score of every arc.
double arc_set_score(const ScoreMatrices& scores, const LabelInventory& inventory,
                     const CompoundArcs& arcs);

// Highest-scoring projective single-root analysis of one compound. Ties go
// to the lowest split point, then the lowest root index, then the lowest
// label index. Throws when the inventory has no span label.
DecodedCompound decode_compound(const ScoreMatrices& scores, const Compound& compound,
                                const LabelInventory& inventory);

// Plain words are attached to Global with GlobalRelation; every compound is
// decoded independently.
DependencyGraph decode(const ScoreMatrices& scores, const Sentence& sentence,
                       const LabelInventory& inventory);

// Head cross-entropy over all candidate heads plus label cross-entropy at
// the gold arc, summed over non-Global nodes and divided by their count.
double loss(const ScoreMatrices& scores, const DependencyGraph& gold,
            const LabelInventory& inventory);

// MLP heads and biaffine forms over encoder states. Parameter names live
// under "mlp." and "biaffine.".
class BiaffineScorer {
 public:
  struct Heads {
    numkit::Var arc_dep;
    numkit::Var arc_head;
    numkit::Var label_dep;
    numkit::Var label_head;
  };

  BiaffineScorer(const ModelConfig& config, int input_dim, std::size_t n_labels);

  void init_params(numkit::ParamStore& store, std::mt19937_64& rng) const;

  Heads heads(numkit::Graph& graph, const numkit::ParamStore& store, numkit::Var states) const;
  // n x n, entry (d, h).
  numkit::Var arc_scores(numkit::Graph& graph, const numkit::ParamStore& store,
                         const Heads& heads) const;
  // One n x n matrix per label.
  std::vector<numkit::Var> label_scores(numkit::Graph& graph, const numkit::ParamStore& store,
                                        const Heads& heads) const;
  // m x L label scores for the (dependents[i], heads[i]) pairs only.
  numkit::Var pair_label_scores(numkit::Graph& graph, const numkit::ParamStore& store,
                                const Heads& heads, const std::vector<int>& dependents,
                                const std::vector<int>& head_nodes) const;

 private:
  numkit::Var mlp(numkit::Graph& graph, const numkit::ParamStore& store, numkit::Var states,
                  const std::string& name) const;

  int input_dim_;
  int arc_dim_;
  int label_dim_;
  std::size_t n_labels_;
  double dropout_;
};

struct ParseResult {
  DependencyGraph graph;
  std::vector<NestingTree> trees;             // one per compound
  std::vector<std::vector<SpanTuple>> spans;  // one list per compound
};

class Model {
 public:
  static constexpr std::uint32_t kVersion = 1;

  Model(ModelConfig config, LabelInventory inventory, Vocabulary vocab);

  // Fresh parameters from config.seed. Parameter values are rounded to
  // float precision so that save/load is exact.
  void init(const PretrainedVectors* pretrained = nullptr);

  const ModelConfig& config() const { return encoder_.config(); }
  const LabelInventory& inventory() const { return inventory_; }
  const Vocabulary& vocab() const { return encoder_.vocab(); }
  const Encoder& encoder() const { return encoder_; }
  const BiaffineScorer& scorer() const { return scorer_; }
  numkit::ParamStore& store() { return store_; }
  const numkit::ParamStore& store() const { return store_; }

  // Raw scores for a sentence as given (no splitting into compounds).
  ScoreMatrices score(const Sentence& sentence, const ContextualVectors* contextual = nullptr) const;
  // Training objective for one sentence, built on `graph`.
  numkit::Var training_loss(numkit::Graph& graph, const Sentence& sentence,
                            const DependencyGraph& gold,
                            const ContextualVectors* contextual = nullptr) const;
  // Sentences the model actually encodes: the sentence itself, or one
  // sentence per compound when the config disables context.
  std::vector<Sentence> model_inputs(const Sentence& sentence) const;

  // Decodes log_probabilities(score(...)) per compound.
  ParseResult parse(const Sentence& sentence, const ContextualVectors* contextual = nullptr) const;
  // Output order matches input order.
  std::vector<ParseResult> parse_all(const std::vector<Sentence>& sentences,
                                     const ContextualVectors* contextual = nullptr,
                                     unsigned threads = 1) const;

  // Rounds every parameter to the nearest float.
  void quantize();

  std::string serialize() const;
  static Model deserialize(std::string_view bytes);
  void save(const std::filesystem::path& path) const;
  static Model load(const std::filesystem::path& path);

 private:
  LabelInventory inventory_;
  Encoder encoder_;
  BiaffineScorer scorer_;
  numkit::ParamStore store_;
};

struct TrainStats {
  std::vector<double> epoch_loss;
  std::vector<double> dev_uss;
  std::vector<double> dev_lss;
  std::vector<double> dev_em;
  int best_epoch = -1;  // 0-based

  // Tab-separated `epoch loss dev_uss dev_lss dev_em` lines with a header.
  std::string to_text() const;

  friend bool operator==(const TrainStats&, const TrainStats&) = default;
};

struct TrainOptions {
  const PretrainedVectors* pretrained = nullptr;
  const ContextualVectors* contextual = nullptr;
  const ContextualVectors* dev_contextual = nullptr;
  std::function<void(int epoch, const TrainStats&)> on_epoch;
};

struct TrainResult {
  Model model;
  TrainStats stats;
};

// Mini-batch Adam with seeded shuffling. The parameters of the epoch with
// the best dev LSS F1 are returned (the last epoch when `dev` is empty).
// Throws on an empty training set or a training compound without a tree.
TrainResult train(const std::vector<Sentence>& train_set, const std::vector<Sentence>& dev_set,
                  const ModelConfig& config, const LabelInventory& inventory,
                  const TrainOptions& options = {});

}  // namespace necti
