#include "necti/parser.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <thread>

#include "binary_io.hpp"
#include "necti/eval.hpp"

namespace necti {

using numkit::Graph;
using numkit::ParamStore;
using numkit::Real;
using numkit::Tensor;
using numkit::Var;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_sum_exp(const double* values, std::size_t n) {
  double top = *std::max_element(values, values + n);
  double sum = 0;
  for (std::size_t i = 0; i < n; ++i) sum += std::exp(values[i] - top);
  return top + std::log(sum);
}

Tensor glorot(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<Real> dist(-bound, bound);
  Tensor t = Tensor::matrix(rows, cols);
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (a + 1) + 0xBF58476D1CE4E5B9ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Eisner chart over the components of one compound, local indices 0..n-1.
class EisnerChart {
 public:
  EisnerChart(int n, std::function<double(int head, int dep)> score)
      : n_(n), score_(std::move(score)) {
    for (auto* table : {&complete_left_, &complete_right_, &incomplete_left_, &incomplete_right_}) {
      table->assign(static_cast<std::size_t>(n * n), 0.0);
    }
    for (auto* table : {&split_cl_, &split_cr_, &split_il_, &split_ir_}) {
      table->assign(static_cast<std::size_t>(n * n), -1);
    }
    fill();
  }

  // Best total with component `root` attached to Global via root_score.
  std::pair<int, double> best_root(const std::vector<double>& root_score) const {
    int best = 0;
    double best_value = kNegInf;
    for (int r = 0; r < n_; ++r) {
      double value = cl(0, r) + cr(r, n_ - 1) + root_score[r];
      if (r == 0 || value > best_value) {
        best = r;
        best_value = value;
      }
    }
    return {best, best_value};
  }

  // heads[d] = local head of d, -1 for the root.
  std::vector<int> heads(int root) const {
    std::vector<int> out(n_, -1);
    walk_cl(0, root, out);
    walk_cr(root, n_ - 1, out);
    return out;
  }

 private:
  std::size_t at(int i, int j) const { return static_cast<std::size_t>(i * n_ + j); }
  double cl(int i, int j) const { return complete_left_[at(i, j)]; }
  double cr(int i, int j) const { return complete_right_[at(i, j)]; }
  double il(int i, int j) const { return incomplete_left_[at(i, j)]; }
  double ir(int i, int j) const { return incomplete_right_[at(i, j)]; }

  void fill() {
    for (int width = 1; width < n_; ++width) {
      for (int i = 0; i + width < n_; ++i) {
        const int j = i + width;
        int best_split = i;
        double best = kNegInf;
        for (int r = i; r < j; ++r) {
          double value = cr(i, r) + cl(r + 1, j);
          if (r == i || value > best) {
            best = value;
            best_split = r;
          }
        }
        incomplete_left_[at(i, j)] = best + score_(j, i);
        incomplete_right_[at(i, j)] = best + score_(i, j);
        split_il_[at(i, j)] = best_split;
        split_ir_[at(i, j)] = best_split;

        best = kNegInf;
        best_split = i;
        for (int r = i; r < j; ++r) {
          double value = cl(i, r) + il(r, j);
          if (r == i || value > best) {
            best = value;
            best_split = r;
          }
        }
        complete_left_[at(i, j)] = best;
        split_cl_[at(i, j)] = best_split;

        best = kNegInf;
        best_split = i + 1;
        for (int r = i + 1; r <= j; ++r) {
          double value = ir(i, r) + cr(r, j);
          if (r == i + 1 || value > best) {
            best = value;
            best_split = r;
          }
        }
        complete_right_[at(i, j)] = best;
        split_cr_[at(i, j)] = best_split;
      }
    }
  }

  void walk_cl(int i, int j, std::vector<int>& out) const {
    if (i == j) return;
    int r = split_cl_[at(i, j)];
    walk_cl(i, r, out);
    walk_il(r, j, out);
  }
  void walk_cr(int i, int j, std::vector<int>& out) const {
    if (i == j) return;
    int r = split_cr_[at(i, j)];
    walk_ir(i, r, out);
    walk_cr(r, j, out);
  }
  void walk_il(int i, int j, std::vector<int>& out) const {
    out[i] = j;
    int r = split_il_[at(i, j)];
    walk_cr(i, r, out);
    walk_cl(r + 1, j, out);
  }
  void walk_ir(int i, int j, std::vector<int>& out) const {
    out[j] = i;
    int r = split_ir_[at(i, j)];
    walk_cr(i, r, out);
    walk_cl(r + 1, j, out);
  }

  int n_;
  std::function<double(int, int)> score_;
  std::vector<double> complete_left_, complete_right_, incomplete_left_, incomplete_right_;
  std::vector<int> split_cl_, split_cr_, split_il_, split_ir_;
};

}  // namespace

ScoreMatrices::ScoreMatrices(std::size_t n_nodes, std::size_t n_labels)
    : arc(Tensor::matrix(n_nodes, n_nodes)), label(Tensor({n_nodes, n_nodes, n_labels})) {}

ScoreMatrices log_probabilities(const ScoreMatrices& scores) {
  ScoreMatrices out = scores;
  const std::size_t n = scores.n_nodes();
  const std::size_t n_labels = scores.n_labels();
  for (std::size_t d = 0; d < n; ++d) {
    double* row = out.arc.data() + d * n;
    const double norm = log_sum_exp(row, n);
    for (std::size_t h = 0; h < n; ++h) row[h] -= norm;
    if (n_labels == 0) continue;
    for (std::size_t h = 0; h < n; ++h) {
      double* labels = out.label.data() + (d * n + h) * n_labels;
      const double label_norm = log_sum_exp(labels, n_labels);
      for (std::size_t l = 0; l < n_labels; ++l) labels[l] -= label_norm;
    }
  }
  return out;
}

std::optional<std::size_t> best_label(const ScoreMatrices& scores, const LabelInventory& inventory,
                                      int dependent, int head) {
  const HeadSide wanted = dependent < head ? HeadSide::kRight : HeadSide::kLeft;
  std::optional<std::size_t> best;
  double best_value = kNegInf;
  for (std::size_t l = 0; l < inventory.n_span_labels(); ++l) {
    if (inventory.rule(inventory.at(l).name) != wanted) continue;
    double value = scores.label_at(dependent, head, l);
    if (!best || value > best_value) {
      best = l;
      best_value = value;
    }
  }
  return best;
}

double arc_set_score(const ScoreMatrices& scores, const LabelInventory& inventory,
                     const CompoundArcs& arcs) {
  double total = 0;
  for (const auto& arc : arcs) {
    total += scores.arc(arc.dependent, arc.head) +
             scores.label_at(arc.dependent, arc.head, inventory.require_index(arc.label));
  }
  return total;
}

DecodedCompound decode_compound(const ScoreMatrices& scores, const Compound& compound,
                                const LabelInventory& inventory) {
  const int n = static_cast<int>(compound.n_components());
  const int first = compound.offset() + 1;
  if (static_cast<std::size_t>(first + n) > scores.n_nodes()) {
    throw Error("scores do not cover compound " + compound.id);
  }
  if (inventory.n_span_labels() == 0) throw Error("label inventory has no span labels");

  // Best label per ordered pair, computed once.
  std::vector<std::optional<std::size_t>> labels(static_cast<std::size_t>(n * n));
  std::vector<double> arc_score(static_cast<std::size_t>(n * n), kNegInf);
  for (int h = 0; h < n; ++h) {
    for (int d = 0; d < n; ++d) {
      if (h == d) continue;
      auto l = best_label(scores, inventory, first + d, first + h);
      labels[h * n + d] = l;
      if (l) {
        arc_score[h * n + d] =
            scores.arc(first + d, first + h) + scores.label_at(first + d, first + h, *l);
      }
    }
  }
  std::vector<double> root_score(n);
  const std::size_t root_label = inventory.compound_root_index();
  for (int r = 0; r < n; ++r) {
    root_score[r] = scores.arc(first + r, 0) + scores.label_at(first + r, 0, root_label);
  }

  EisnerChart chart(n, [&](int h, int d) { return arc_score[h * n + d]; });
  auto [root, total] = chart.best_root(root_score);
  auto heads = chart.heads(root);

  DecodedCompound out;
  out.score = total;
  for (int d = 0; d < n; ++d) {
    if (heads[d] < 0) {
      out.arcs.push_back({first + d, 0, std::string(kCompoundRoot)});
    } else {
      out.arcs.push_back({first + d, first + heads[d], inventory.at(*labels[heads[d] * n + d]).name});
    }
  }
  return out;
}

DependencyGraph decode(const ScoreMatrices& scores, const Sentence& sentence,
                       const LabelInventory& inventory) {
  DependencyGraph graph(sentence.size() + 1);
  for (std::size_t t = 0; t < sentence.size(); ++t) {
    graph.arcs[t + 1] = {0, std::string(kGlobalRelation)};
  }
  for (const auto& compound : sentence.compounds()) {
    for (auto& arc : decode_compound(scores, compound, inventory).arcs) {
      graph.arcs[arc.dependent] = {arc.head, std::move(arc.label)};
    }
  }
  return graph;
}

double loss(const ScoreMatrices& scores, const DependencyGraph& gold,
            const LabelInventory& inventory) {
  const std::size_t n = scores.n_nodes();
  if (gold.n_nodes() != n) throw Error("gold graph does not match the score matrices");
  if (n < 2) throw Error("loss needs at least one token");
  const std::size_t n_labels = scores.n_labels();
  double total = 0;
  for (std::size_t d = 1; d < n; ++d) {
    const auto& arc = gold.arcs[d];
    const auto h = static_cast<std::size_t>(arc.head);
    if (arc.head < 0 || h >= n) throw Error("gold head out of range");
    const double* row = scores.arc.data() + d * n;
    total += log_sum_exp(row, n) - row[h];
    const double* label_row = scores.label.data() + (d * n + h) * n_labels;
    total += log_sum_exp(label_row, n_labels) - label_row[inventory.require_index(arc.label)];
  }
  return total / static_cast<double>(n - 1);
}

BiaffineScorer::BiaffineScorer(const ModelConfig& config, int input_dim, std::size_t n_labels)
    : input_dim_(input_dim),
      arc_dim_(config.arc_mlp_dim),
      label_dim_(config.label_mlp_dim),
      n_labels_(n_labels),
      dropout_(config.dropout) {}

void BiaffineScorer::init_params(ParamStore& store, std::mt19937_64& rng) const {
  for (const auto& [name, dim] : {std::pair{"mlp.arc_dep", arc_dim_}, {"mlp.arc_head", arc_dim_},
                                  {"mlp.label_dep", label_dim_}, {"mlp.label_head", label_dim_}}) {
    store.add(std::string(name) + ".W", glorot(input_dim_, dim, rng));
    store.add(std::string(name) + ".b", Tensor::matrix(1, dim));
  }
  const std::size_t a = arc_dim_;
  const std::size_t b = label_dim_;
  store.add("biaffine.arc.U", glorot(a, a, rng));
  store.add("biaffine.arc.u", glorot(a, 1, rng));
  store.add("biaffine.label.U", glorot(b, n_labels_ * b, rng));
  store.add("biaffine.label.W_dep", glorot(b, n_labels_, rng));
  store.add("biaffine.label.W_head", glorot(b, n_labels_, rng));
  store.add("biaffine.label.b", Tensor::matrix(1, n_labels_));
}

Var BiaffineScorer::mlp(Graph& graph, const ParamStore& store, Var states,
                        const std::string& name) const {
  Var hidden = graph.add_row(graph.matmul(states, graph.param(store, name + ".W")),
                             graph.param(store, name + ".b"));
  return graph.dropout(graph.relu(hidden), dropout_);
}

BiaffineScorer::Heads BiaffineScorer::heads(Graph& graph, const ParamStore& store,
                                            Var states) const {
  return {mlp(graph, store, states, "mlp.arc_dep"), mlp(graph, store, states, "mlp.arc_head"),
          mlp(graph, store, states, "mlp.label_dep"), mlp(graph, store, states, "mlp.label_head")};
}

Var BiaffineScorer::arc_scores(Graph& graph, const ParamStore& store, const Heads& heads) const {
  Var bilinear = graph.matmul_nt(graph.matmul(heads.arc_dep, graph.param(store, "biaffine.arc.U")),
                                 heads.arc_head);
  Var head_bias = graph.transpose(graph.matmul(heads.arc_head, graph.param(store, "biaffine.arc.u")));
  return graph.add_row(bilinear, head_bias);
}

std::vector<Var> BiaffineScorer::label_scores(Graph& graph, const ParamStore& store,
                                              const Heads& heads) const {
  const std::size_t b = label_dim_;
  Var dep_u = graph.matmul(heads.label_dep, graph.param(store, "biaffine.label.U"));
  Var dep_linear = graph.add_row(graph.matmul(heads.label_dep, graph.param(store, "biaffine.label.W_dep")),
                                 graph.param(store, "biaffine.label.b"));
  Var head_linear = graph.matmul(heads.label_head, graph.param(store, "biaffine.label.W_head"));
  std::vector<Var> out;
  out.reserve(n_labels_);
  for (std::size_t l = 0; l < n_labels_; ++l) {
    Var scores = graph.matmul_nt(graph.slice_cols(dep_u, l * b, b), heads.label_head);
    scores = graph.add_col(scores, graph.slice_cols(dep_linear, l, 1));
    scores = graph.add_row(scores, graph.transpose(graph.slice_cols(head_linear, l, 1)));
    out.push_back(scores);
  }
  return out;
}

Var BiaffineScorer::pair_label_scores(Graph& graph, const ParamStore& store, const Heads& heads,
                                      const std::vector<int>& dependents,
                                      const std::vector<int>& head_nodes) const {
  Var dep = graph.gather_rows(heads.label_dep, dependents);
  Var head = graph.gather_rows(heads.label_head, head_nodes);
  Var bilinear =
      graph.pair_bilinear(graph.matmul(dep, graph.param(store, "biaffine.label.U")), head, n_labels_);
  Var dep_linear = graph.add_row(graph.matmul(dep, graph.param(store, "biaffine.label.W_dep")),
                                 graph.param(store, "biaffine.label.b"));
  Var head_linear = graph.matmul(head, graph.param(store, "biaffine.label.W_head"));
  return graph.add(graph.add(bilinear, dep_linear), head_linear);
}

Model::Model(ModelConfig config, LabelInventory inventory, Vocabulary vocab)
    : inventory_(std::move(inventory)),
      encoder_(std::move(config), std::move(vocab)),
      scorer_(encoder_.config(), encoder_.output_dim(), inventory_.size()) {}

void Model::init(const PretrainedVectors* pretrained) {
  store_ = ParamStore();
  std::mt19937_64 rng(config().seed);
  encoder_.init_params(store_, rng, pretrained);
  scorer_.init_params(store_, rng);
  quantize();
}

void Model::quantize() {
  for (auto& [name, param] : store_.params()) {
    for (auto& v : param.value.values()) v = static_cast<float>(v);
  }
}

ScoreMatrices Model::score(const Sentence& sentence, const ContextualVectors* contextual) const {
  Graph graph;
  Var states = encoder_.run(graph, store_, sentence, contextual);
  auto heads = scorer_.heads(graph, store_, states);
  const Tensor& arc = graph.value(scorer_.arc_scores(graph, store_, heads));
  auto labels = scorer_.label_scores(graph, store_, heads);
  const std::size_t n = arc.rows();
  ScoreMatrices out(n, labels.size());
  out.arc = arc;
  for (std::size_t l = 0; l < labels.size(); ++l) {
    const Tensor& value = graph.value(labels[l]);
    for (std::size_t d = 0; d < n; ++d) {
      for (std::size_t h = 0; h < n; ++h) out.label_at(d, h, l) = value(d, h);
    }
  }
  if (!out.arc.all_finite() || !out.label.all_finite()) throw Error("non-finite scores");
  return out;
}

Var Model::training_loss(Graph& graph, const Sentence& sentence, const DependencyGraph& gold,
                         const ContextualVectors* contextual) const {
  const std::size_t n = sentence.size() + 1;
  if (gold.n_nodes() != n) throw Error("sentence " + sentence.id() + ": gold graph size mismatch");
  Var states = encoder_.run(graph, store_, sentence, contextual);
  auto heads = scorer_.heads(graph, store_, states);
  std::vector<int> dependents;
  std::vector<int> gold_heads;
  std::vector<int> gold_labels;
  for (std::size_t d = 1; d < n; ++d) {
    dependents.push_back(static_cast<int>(d));
    gold_heads.push_back(gold.arcs[d].head);
    gold_labels.push_back(static_cast<int>(inventory_.require_index(gold.arcs[d].label)));
  }
  Var arcs = graph.slice_rows(scorer_.arc_scores(graph, store_, heads), 1, n - 1);
  Var head_loss = graph.cross_entropy_rows(arcs, gold_heads);
  Var label_loss = graph.cross_entropy_rows(
      scorer_.pair_label_scores(graph, store_, heads, dependents, gold_heads), gold_labels);
  return graph.scale(graph.add(head_loss, label_loss), 1.0 / static_cast<double>(n - 1));
}

std::vector<Sentence> Model::model_inputs(const Sentence& sentence) const {
  if (config().use_context) return {sentence};
  std::vector<Sentence> out;
  for (std::size_t c = 0; c < sentence.compounds().size(); ++c) {
    out.push_back(sentence.compound_sentence(c));
  }
  return out;
}

ParseResult Model::parse(const Sentence& sentence, const ContextualVectors* contextual) const {
  ParseResult result;
  result.graph = DependencyGraph(sentence.size() + 1);
  for (std::size_t t = 0; t < sentence.size(); ++t) {
    result.graph.arcs[t + 1] = {0, std::string(kGlobalRelation)};
  }
  const auto& compounds = sentence.compounds();
  if (config().use_context) {
    if (!compounds.empty()) {
      result.graph = decode(log_probabilities(score(sentence, contextual)), sentence, inventory_);
    }
  } else {
    for (std::size_t c = 0; c < compounds.size(); ++c) {
      Sentence single = sentence.compound_sentence(c);
      auto decoded = decode_compound(log_probabilities(score(single, contextual)),
                                     single.compounds()[0], inventory_);
      const int shift = static_cast<int>(compounds[c].token_start);
      for (auto& arc : decoded.arcs) {
        result.graph.arcs[arc.dependent + shift] = {arc.head == 0 ? 0 : arc.head + shift,
                                                    std::move(arc.label)};
      }
    }
  }
  for (const auto& compound : compounds) {
    NestingTree tree = dependency_to_tree(compound_arcs(result.graph, compound),
                                          inventory_.head_rules(), compound.offset());
    result.spans.push_back(tree_to_spans(tree));
    result.trees.push_back(std::move(tree));
  }
  return result;
}

std::vector<ParseResult> Model::parse_all(const std::vector<Sentence>& sentences,
                                          const ContextualVectors* contextual,
                                          unsigned threads) const {
  std::vector<ParseResult> out(sentences.size());
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(sentences.size())));
  if (threads <= 1) {
    for (std::size_t i = 0; i < sentences.size(); ++i) out[i] = parse(sentences[i], contextual);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> workers;
  for (unsigned w = 0; w < threads; ++w) {
    workers.emplace_back([&, w] {
      try {
        for (std::size_t i = next++; i < sentences.size(); i = next++) {
          out[i] = parse(sentences[i], contextual);
        }
      } catch (...) {
        errors[w] = std::current_exception();
        next = sentences.size();
      }
    });
  }
  for (auto& worker : workers) worker.join();
  for (auto& error : errors) {
    if (error) std::rethrow_exception(error);
  }
  return out;
}

std::string Model::serialize() const {
  detail::ByteWriter w;
  w.raw("DNCT");
  w.u32(kVersion);
  w.str(config().to_text());
  w.u32(static_cast<std::uint32_t>(inventory_.n_span_labels()));
  for (std::size_t l = 0; l < inventory_.n_span_labels(); ++l) {
    const Label& label = inventory_.at(l);
    w.str(label.name);
    w.u32(static_cast<std::uint32_t>(label.kind));
    w.u32(static_cast<std::uint32_t>(inventory_.rule(label.name)));
  }
  const auto& words = vocab().words();
  const auto& chars = vocab().chars();
  w.u32(static_cast<std::uint32_t>(words.size() - 2));
  for (std::size_t i = 2; i < words.size(); ++i) w.str(words[i]);
  w.u32(static_cast<std::uint32_t>(chars.size() - 2));
  for (std::size_t i = 2; i < chars.size(); ++i) w.u32(static_cast<std::uint32_t>(chars[i]));
  w.u32(static_cast<std::uint32_t>(store_.params().size()));
  for (const auto& [name, param] : store_.params()) {
    w.str(name);
    const auto& shape = param.value.shape();
    w.u32(static_cast<std::uint32_t>(shape.size()));
    for (auto dim : shape) w.u32(static_cast<std::uint32_t>(dim));
    for (Real v : param.value.values()) w.f32(static_cast<float>(v));
  }
  return w.take();
}

Model Model::deserialize(std::string_view bytes) {
  detail::ByteReader r(bytes, "model file");
  if (r.raw(4) != "DNCT") throw Error("model file: bad magic");
  const std::uint32_t version = r.u32();
  if (version != kVersion) throw Error("model file: unsupported version " + std::to_string(version));
  ModelConfig config = ModelConfig::from_text(r.str());

  std::vector<std::pair<Label, HeadSide>> labels(r.u32());
  for (auto& [label, side] : labels) {
    label.name = r.str();
    const std::uint32_t kind = r.u32();
    const std::uint32_t rule = r.u32();
    if (kind > 1 || rule > 1) throw Error("model file: corrupt label inventory");
    label.kind = static_cast<LabelKind>(kind);
    side = static_cast<HeadSide>(rule);
  }
  std::vector<std::string> words(r.u32());
  for (auto& word : words) word = r.str();
  std::vector<char32_t> chars(r.u32());
  for (auto& c : chars) c = static_cast<char32_t>(r.u32());

  Model model(std::move(config), LabelInventory(std::move(labels)),
              Vocabulary(std::move(words), std::move(chars)));
  model.init();
  const std::uint32_t n_tensors = r.u32();
  if (n_tensors != model.store_.params().size()) {
    throw Error("model file: expected " + std::to_string(model.store_.params().size()) +
                " tensors, found " + std::to_string(n_tensors));
  }
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    std::string name = r.str();
    if (!model.store_.contains(name)) throw Error("model file: unexpected tensor " + name);
    Tensor& value = model.store_.at(name).value;
    std::vector<std::size_t> shape(r.u32());
    for (auto& dim : shape) dim = r.u32();
    if (shape != value.shape()) {
      throw Error("model file: tensor " + name + " has shape mismatch, expected " +
                  value.shape_string());
    }
    for (auto& v : value.values()) v = r.f32();
  }
  if (!r.at_end()) throw Error("model file: trailing data");
  return model;
}

void Model::save(const std::filesystem::path& path) const { write_file(path, serialize()); }

Model Model::load(const std::filesystem::path& path) { return deserialize(read_file(path)); }

std::string TrainStats::to_text() const {
  std::string out = "epoch\tloss\tdev_uss\tdev_lss\tdev_em\n";
  auto number = [](const std::vector<double>& values, std::size_t i) {
    if (i >= values.size()) return std::string("-");
    char buffer[32];
    std::snprintf(buffer, sizeof buffer, "%.6f", values[i]);
    return std::string(buffer);
  };
  for (std::size_t e = 0; e < epoch_loss.size(); ++e) {
    out += std::to_string(e + 1) + "\t" + number(epoch_loss, e) + "\t" + number(dev_uss, e) +
           "\t" + number(dev_lss, e) + "\t" + number(dev_em, e) + "\n";
  }
  out += "best_epoch\t" + std::to_string(best_epoch + 1) + "\n";
  return out;
}

TrainResult train(const std::vector<Sentence>& train_set, const std::vector<Sentence>& dev_set,
                  const ModelConfig& config, const LabelInventory& inventory,
                  const TrainOptions& options) {
  if (train_set.empty()) throw Error("empty training set");
  config.validate();
  Model model(config, inventory, Vocabulary::build(train_set, config.min_count));
  model.init(options.pretrained);

  struct Example {
    Sentence sentence;
    DependencyGraph gold;
  };
  std::vector<Example> examples;
  for (const auto& sentence : train_set) {
    for (auto& input : model.model_inputs(sentence)) {
      for (const auto& compound : input.compounds()) {
        if (!compound.gold_tree) throw Error("training compound " + compound.id + " has no tree");
      }
      DependencyGraph gold = graph_from_trees(input, inventory.head_rules());
      examples.push_back({std::move(input), std::move(gold)});
    }
  }
  if (examples.empty()) throw Error("training set has no compounds");

  std::vector<CompoundSpans> dev_gold;
  if (!dev_set.empty()) dev_gold = spans_from_sentences(dev_set);
  const ContextualVectors* dev_contextual =
      options.dev_contextual ? options.dev_contextual : options.contextual;

  ParamStore& store = model.store();
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainStats stats;
  double best_lss = -1;
  std::map<std::string, Tensor> best_params;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const double scale = 1.0 / static_cast<double>(end - start);
      for (std::size_t k = start; k < end; ++k) {
        const Example& example = examples[order[k]];
        Graph graph(true, mix_seed(config.seed, epoch, k), &store);
        Var sentence_loss =
            model.training_loss(graph, example.sentence, example.gold, options.contextual);
        total += graph.scalar(sentence_loss);
        graph.backward(graph.scale(sentence_loss, scale));
      }
      store.clip_grad_norm(config.clip_norm);
      numkit::adam_step(store, config.learning_rate);
    }
    stats.epoch_loss.push_back(total / static_cast<double>(examples.size()));

    if (!dev_set.empty()) {
      auto results = model.parse_all(dev_set, dev_contextual);
      std::vector<CompoundSpans> pred;
      for (std::size_t s = 0; s < dev_set.size(); ++s) {
        const auto& compounds = dev_set[s].compounds();
        for (std::size_t c = 0; c < compounds.size(); ++c) {
          pred.push_back({compounds[c].id, static_cast<int>(compounds[c].n_components()),
                          results[s].spans[c]});
        }
      }
      SpanScores scores = span_scores(pred, dev_gold);
      stats.dev_uss.push_back(scores.uss.f1);
      stats.dev_lss.push_back(scores.lss.f1);
      stats.dev_em.push_back(exact_match(pred, dev_gold));
      if (scores.lss.f1 > best_lss) {
        best_lss = scores.lss.f1;
        stats.best_epoch = epoch;
        best_params.clear();
        for (const auto& [name, param] : store.params()) best_params.emplace(name, param.value);
      }
    } else {
      stats.best_epoch = epoch;
    }
    if (options.on_epoch) options.on_epoch(epoch, stats);
  }
  if (!best_params.empty()) {
    for (auto& [name, value] : best_params) store.at(name).value = std::move(value);
  }
  model.quantize();
  return {std::move(model), std::move(stats)};
}

}  // namespace necti
