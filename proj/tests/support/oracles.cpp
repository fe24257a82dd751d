#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

namespace necti::testing {

namespace {

NestingTree with_labels(const NestingTree& tree, const std::vector<std::string>& labels,
                        std::size_t& next) {
  if (tree.is_leaf()) return tree;
  const std::string& label = labels[next++];
  auto left = with_labels(tree.left(), labels, next);
  auto right = with_labels(tree.right(), labels, next);
  return NestingTree::node(left, right, label);
}

// Head leaf of every internal node, plus the sequence of (dependent head)
// attachments along each head's projection path, bottom-up.
int collect_paths(const NestingTree& tree, const HeadRules& rules,
                  std::vector<std::vector<int>>& attachments) {
  if (tree.is_leaf()) return tree.leaf_index();
  int lh = collect_paths(tree.left(), rules, attachments);
  int rh = collect_paths(tree.right(), rules, attachments);
  if (rules.at(tree.label()) == HeadSide::kRight) {
    attachments[rh].push_back(lh);
    return rh;
  }
  attachments[lh].push_back(rh);
  return lh;
}

}  // namespace

NestingTree relabel(const NestingTree& tree, const std::vector<std::string>& labels,
                    std::mt19937_64& rng) {
  std::vector<std::string> drawn;
  for (int i = 0; i < tree.n_internal(); ++i) drawn.push_back(labels[rng() % labels.size()]);
  std::size_t next = 0;
  return with_labels(tree, drawn, next);
}

std::vector<std::vector<int>> all_projective_heads(int n) {
  std::vector<std::vector<int>> out;
  std::vector<int> heads(n + 1, 0);
  std::function<void(int)> assign = [&](int d) {
    if (d > n) {
      int roots = 0;
      for (int i = 1; i <= n; ++i) roots += heads[i] == 0;
      if (roots != 1) return;
      auto ancestor = [&](int a, int x) {
        for (int cur = x, steps = 0; cur != 0 && steps <= n; cur = heads[cur], ++steps) {
          if (cur == a) return true;
        }
        return false;
      };
      for (int i = 1; i <= n; ++i) {
        int cur = i;
        for (int steps = 0; cur != 0; ++steps) {
          if (steps > n) return;
          cur = heads[cur];
        }
      }
      for (int i = 1; i <= n; ++i) {
        int h = heads[i];
        if (h == 0) continue;
        for (int k = std::min(i, h) + 1; k < std::max(i, h); ++k) {
          if (!ancestor(h, k)) return;
        }
      }
      // The root must not be covered by any arc.
      for (int i = 1; i <= n; ++i) {
        int h = heads[i];
        if (h == 0) continue;
        for (int k = std::min(i, h) + 1; k < std::max(i, h); ++k) {
          if (heads[k] == 0) return;
        }
      }
      out.push_back(heads);
      return;
    }
    for (int h = 0; h <= n; ++h) {
      if (h == d) continue;
      heads[d] = h;
      assign(d + 1);
    }
  };
  assign(1);
  return out;
}

bool is_canonical(const NestingTree& tree, const HeadRules& rules) {
  std::vector<std::vector<int>> attachments(tree.last_leaf() + 1);
  collect_paths(tree, rules, attachments);
  for (int h = 1; h < static_cast<int>(attachments.size()); ++h) {
    const auto& deps = attachments[h];
    for (std::size_t i = 1; i < deps.size(); ++i) {
      int prev = std::abs(deps[i - 1] - h);
      int cur = std::abs(deps[i] - h);
      if (cur < prev) return false;
      if (cur == prev && deps[i] < h) return false;  // right must follow left
    }
  }
  return true;
}

double brute_force_best(const ScoreMatrices& scores, const Compound& compound,
                        const LabelInventory& inventory) {
  const int n = static_cast<int>(compound.n_components());
  const HeadRules sides = {{"<", HeadSide::kLeft}, {">", HeadSide::kRight}};
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& shape : enumerate_parses(n)) {
    for (int mask = 0; mask < (1 << (n - 1)); ++mask) {
      std::vector<std::string> labels;
      for (int i = 0; i < n - 1; ++i) labels.push_back(mask >> i & 1 ? ">" : "<");
      std::size_t next = 0;
      auto oriented = with_labels(shape, labels, next);
      double total = 0;
      for (const auto& arc : tree_to_dependency(oriented, sides, compound.offset())) {
        if (arc.head == 0) {
          total += scores.arc(arc.dependent, 0) +
                   scores.label_at(arc.dependent, 0, inventory.compound_root_index());
          continue;
        }
        const HeadSide wanted = arc.dependent < arc.head ? HeadSide::kRight : HeadSide::kLeft;
        double label_best = -std::numeric_limits<double>::infinity();
        for (std::size_t l = 0; l < inventory.n_span_labels(); ++l) {
          if (inventory.rule(inventory.at(l).name) == wanted) {
            label_best = std::max(label_best, scores.label_at(arc.dependent, arc.head, l));
          }
        }
        total += scores.arc(arc.dependent, arc.head) + label_best;
      }
      best = std::max(best, total);
    }
  }
  return best;
}

double brute_force_best_labeled(const ScoreMatrices& scores, const Compound& compound,
                                const LabelInventory& inventory) {
  const int n = static_cast<int>(compound.n_components());
  const std::size_t n_labels = inventory.n_span_labels();
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& shape : enumerate_parses(n)) {
    std::vector<std::size_t> choice(n - 1, 0);
    while (true) {
      std::vector<std::string> labels;
      for (auto c : choice) labels.push_back(inventory.at(c).name);
      std::size_t next = 0;
      auto tree = with_labels(shape, labels, next);
      auto arcs = tree_to_dependency(tree, inventory.head_rules(), compound.offset());
      best = std::max(best, arc_set_score(scores, inventory, arcs));
      std::size_t k = 0;
      while (k < choice.size() && ++choice[k] == n_labels) choice[k++] = 0;
      if (k == choice.size()) break;
    }
  }
  return best;
}

ScoreMatrices random_scores(std::size_t n_nodes, std::size_t n_labels, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  ScoreMatrices s(n_nodes, n_labels);
  for (auto& v : s.arc.values()) v = dist(rng);
  for (auto& v : s.label.values()) v = dist(rng);
  return s;
}

}  // namespace necti::testing
