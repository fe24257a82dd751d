#include "necti/tree.hpp"

#include "necti/core.hpp"

namespace necti {

NestingTree NestingTree::leaf(int component_index) {
  if (component_index < 1) throw Error("leaf index must be positive");
  auto node = std::make_shared<Node>();
  node->leaf = component_index;
  node->first = component_index;
  node->last = component_index;
  return NestingTree(std::move(node));
}

NestingTree NestingTree::node(NestingTree left, NestingTree right, std::string label) {
  if (left.empty() || right.empty()) throw Error("nesting node needs two children");
  if (left.last_leaf() + 1 != right.first_leaf()) {
    throw Error("nesting children are not adjacent: " + left.to_string() + " and " +
                right.to_string());
  }
  auto node = std::make_shared<Node>();
  node->first = left.first_leaf();
  node->last = right.last_leaf();
  node->label = std::move(label);
  node->left = std::move(left);
  node->right = std::move(right);
  return NestingTree(std::move(node));
}

bool NestingTree::is_leaf() const { return node_->leaf != 0; }
int NestingTree::leaf_index() const { return node_->leaf; }
const NestingTree& NestingTree::left() const { return node_->left; }
const NestingTree& NestingTree::right() const { return node_->right; }
const std::string& NestingTree::label() const { return node_->label; }
int NestingTree::first_leaf() const { return node_->first; }
int NestingTree::last_leaf() const { return node_->last; }

std::string NestingTree::to_string() const {
  if (empty()) return {};
  if (is_leaf()) return std::to_string(leaf_index());
  return "<" + left().to_string() + "-" + right().to_string() + ">" + label();
}

std::string NestingTree::render(const std::vector<std::string>& surfaces) const {
  if (is_leaf()) return surfaces.at(static_cast<std::size_t>(leaf_index() - 1));
  return "<" + left().render(surfaces) + "-" + right().render(surfaces) + ">" + label();
}

bool operator==(const NestingTree& a, const NestingTree& b) {
  if (a.node_ == b.node_) return true;
  if (a.empty() || b.empty()) return false;
  if (a.is_leaf() || b.is_leaf()) {
    return a.is_leaf() && b.is_leaf() && a.leaf_index() == b.leaf_index();
  }
  return a.label() == b.label() && a.left() == b.left() && a.right() == b.right();
}

}  // namespace necti
