#pragma once

#include <memory>
#include <string>
#include <vector>

namespace necti {

// Binary nesting of compound components. Leaves carry 1-based component
// indices; internal nodes carry the semantic relation label of the
// combination. Nodes are immutable and shared, so copies are cheap.
class NestingTree {
 public:
  NestingTree() = default;

  static NestingTree leaf(int component_index);
  // Throws necti::Error unless right's first leaf directly follows left's
  // last leaf.
  static NestingTree node(NestingTree left, NestingTree right, std::string label);

  bool empty() const { return node_ == nullptr; }
  bool is_leaf() const;
  int leaf_index() const;
  const NestingTree& left() const;
  const NestingTree& right() const;
  const std::string& label() const;

  int first_leaf() const;
  int last_leaf() const;
  int n_leaves() const { return last_leaf() - first_leaf() + 1; }
  int n_internal() const { return n_leaves() - 1; }

  // Renders `<<1-2>T6-3>T6` using component indices as leaves.
  std::string to_string() const;
  // Renders with component surfaces; surfaces[i] belongs to leaf i+1.
  std::string render(const std::vector<std::string>& surfaces) const;

  friend bool operator==(const NestingTree& a, const NestingTree& b);

 private:
  struct Node;
  explicit NestingTree(std::shared_ptr<const Node> node) : node_(std::move(node)) {}
  std::shared_ptr<const Node> node_;
};

struct NestingTree::Node {
  int leaf = 0;
  int first = 0;
  int last = 0;
  std::string label;
  NestingTree left;
  NestingTree right;
};

// One internal node of a nesting: 1-based inclusive component range plus
// relation label.
struct SpanTuple {
  int start = 0;
  int end = 0;
  std::string label;

  friend bool operator==(const SpanTuple&, const SpanTuple&) = default;
  friend auto operator<=>(const SpanTuple&, const SpanTuple&) = default;
};

}  // namespace necti
