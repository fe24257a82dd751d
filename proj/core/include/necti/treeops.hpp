#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "necti/core.hpp"
#include "necti/tree.hpp"

namespace necti {

// Head and label of one node. Node 0 is the Global node; its head is -1.
struct Arc {
  int head = -1;
  std::string label;

  friend bool operator==(const Arc&, const Arc&) = default;
};

// Labeled dependency graph over {Global} plus the sentence tokens; token t
// (0-based) is node t + 1.
struct DependencyGraph {
  std::vector<Arc> arcs;

  DependencyGraph() = default;
  explicit DependencyGraph(std::size_t n_nodes) : arcs(n_nodes) {}
  std::size_t n_nodes() const { return arcs.size(); }

  friend bool operator==(const DependencyGraph&, const DependencyGraph&) = default;
};

// One arc of a single compound, in sentence node coordinates.
struct CompoundArc {
  int dependent = 0;
  int head = 0;  // 0 = Global
  std::string label;

  friend bool operator==(const CompoundArc&, const CompoundArc&) = default;
  friend auto operator<=>(const CompoundArc&, const CompoundArc&) = default;
};

using CompoundArcs = std::vector<CompoundArc>;

// Exact Catalan number C_n = (2n)! / ((n+1)! n!).
boost::multiprecision::cpp_int catalan(unsigned n);

// Streams every binary bracketing of n components exactly once, in
// lexicographic order of their preorder encoding (left-branching first).
// Every internal node carries `label` (empty when unlabeled).
class ParseEnumerator {
 public:
  // Throws necti::Error when n_components < 2.
  explicit ParseEnumerator(int n_components, std::string label = {});

  std::optional<NestingTree> next();

 private:
  bool advance();
  void fill_from(std::size_t position);
  NestingTree build() const;

  int n_;
  std::string label_;
  std::vector<char> word_;  // preorder: 1 = internal node, 0 = leaf
  bool started_ = false;
  bool done_ = false;
};

std::vector<NestingTree> enumerate_parses(int n_components, std::string label = {});

// One tuple per internal node, ordered by (end - start, start).
std::vector<SpanTuple> tree_to_spans(const NestingTree& tree);

// Inverse of tree_to_spans. Throws necti::Error("not a full parenthesization")
// unless the spans are exactly the internal nodes of one binary tree over
// components 1..n.
NestingTree spans_to_tree(const std::vector<SpanTuple>& spans, int n);

// Converts a nesting to arcs for one compound whose component i is sentence
// node offset + i. The root's head component attaches to Global (node 0) with
// CompoundRoot. Throws on labels without a head rule.
CompoundArcs tree_to_dependency(const NestingTree& tree, const HeadRules& rules, int offset = 0);

// Canonical binarization of a compound's arcs (compound-internal arcs plus
// the CompoundRoot arc): each head takes its dependents nearest first, the
// left dependent first on a distance tie. Throws on multiple roots, cycles,
// non-projective arcs, or labels whose head rule contradicts the arc
// direction.
NestingTree dependency_to_tree(const CompoundArcs& arcs, const HeadRules& rules, int offset = 0);

// Arcs of `graph` belonging to compound `compound`.
CompoundArcs compound_arcs(const DependencyGraph& graph, const Compound& compound);

// Gold graph: plain words attach to Global, compounds via their gold trees.
DependencyGraph graph_from_trees(const Sentence& sentence, const HeadRules& rules);

// Empty result iff every structural invariant holds for `graph` over `sentence`.
std::vector<std::string> validate_graph(const DependencyGraph& graph, const Sentence& sentence);

// `<left-right>LABEL` nesting syntax. Leaves are component surfaces; labels
// may be empty. Whitespace between symbols is ignored.
struct BracketParse {
  NestingTree tree;
  std::vector<std::string> surfaces;
};
BracketParse parse_brackets(std::string_view text);

}  // namespace necti
