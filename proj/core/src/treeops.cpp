#include "necti/treeops.hpp"

#include <algorithm>
#include <cstdlib>
#include <map>
#include <set>

namespace necti {

namespace {

[[noreturn]] void not_full_parenthesization(const std::string& detail) {
  throw Error("not a full parenthesization: " + detail);
}

void collect_spans(const NestingTree& tree, std::vector<SpanTuple>& out) {
  if (tree.is_leaf()) return;
  out.push_back({tree.first_leaf(), tree.last_leaf(), tree.label()});
  collect_spans(tree.left(), out);
  collect_spans(tree.right(), out);
}

HeadSide lookup_rule(const HeadRules& rules, const std::string& label) {
  auto it = rules.find(label);
  if (it == rules.end()) {
    throw Error("unknown label '" + label + "' (no head rule)");
  }
  return it->second;
}

int emit_arcs(const NestingTree& tree, const HeadRules& rules, int offset, CompoundArcs& out) {
  if (tree.is_leaf()) return tree.leaf_index();
  int left_head = emit_arcs(tree.left(), rules, offset, out);
  int right_head = emit_arcs(tree.right(), rules, offset, out);
  if (lookup_rule(rules, tree.label()) == HeadSide::kRight) {
    out.push_back({offset + left_head, offset + right_head, tree.label()});
    return right_head;
  }
  out.push_back({offset + right_head, offset + left_head, tree.label()});
  return left_head;
}

struct LocalArcs {
  int n = 0;
  int root = 0;
  std::vector<int> head;  // 1-based local; 0 = Global
  std::vector<std::string> label;
};

LocalArcs to_local(const CompoundArcs& arcs, int offset) {
  LocalArcs local;
  local.n = static_cast<int>(arcs.size());
  if (local.n < 1) throw Error("compound has no arcs");
  local.head.assign(local.n + 1, -1);
  local.label.assign(local.n + 1, {});
  for (const auto& arc : arcs) {
    int d = arc.dependent - offset;
    if (d < 1 || d > local.n) {
      throw Error("arc dependent " + std::to_string(arc.dependent) + " lies outside the compound");
    }
    if (local.head[d] != -1) {
      throw Error("component " + std::to_string(d) + " has more than one head");
    }
    int h = arc.head == 0 ? 0 : arc.head - offset;
    if (h < 0 || h > local.n || h == d) {
      throw Error("arc head " + std::to_string(arc.head) + " of component " + std::to_string(d) +
                  " lies outside the compound");
    }
    local.head[d] = h;
    local.label[d] = arc.label;
  }
  for (int d = 1; d <= local.n; ++d) {
    if (local.head[d] == 0) {
      if (local.root != 0) throw Error("compound has multiple roots");
      if (local.label[d] != kCompoundRoot) {
        throw Error("root arc of component " + std::to_string(d) + " must be CompoundRoot");
      }
      local.root = d;
    } else if (is_structural_label(local.label[d])) {
      throw Error("compound-internal arc of component " + std::to_string(d) +
                  " carries structural label " + local.label[d]);
    }
  }
  if (local.root == 0) throw Error("compound has no root arc");
  for (int d = 1; d <= local.n; ++d) {
    int cur = d;
    for (int steps = 0; cur != 0; ++steps) {
      if (steps > local.n) throw Error("compound arcs contain a cycle");
      cur = local.head[cur];
    }
  }
  return local;
}

bool dominates(const LocalArcs& local, int ancestor, int node) {
  for (int cur = node; cur != 0; cur = local.head[cur]) {
    if (cur == ancestor) return true;
  }
  return false;
}

NestingTree binarize(const LocalArcs& local, const std::vector<std::vector<int>>& deps,
                     const HeadRules& rules, int h) {
  NestingTree tree = NestingTree::leaf(h);
  for (int d : deps[h]) {
    NestingTree sub = binarize(local, deps, rules, d);
    const std::string& label = local.label[d];
    HeadSide side = lookup_rule(rules, label);
    if (d < h) {
      if (side != HeadSide::kRight) {
        throw Error("label '" + label + "' is left-headed but component " + std::to_string(d) +
                    " attaches rightward to " + std::to_string(h));
      }
      tree = NestingTree::node(std::move(sub), std::move(tree), label);
    } else {
      if (side != HeadSide::kLeft) {
        throw Error("label '" + label + "' is right-headed but component " + std::to_string(d) +
                    " attaches leftward to " + std::to_string(h));
      }
      tree = NestingTree::node(std::move(tree), std::move(sub), label);
    }
  }
  return tree;
}

std::size_t parse_skip_ws(std::string_view text, std::size_t pos) {
  while (pos < text.size() &&
         (text[pos] == ' ' || text[pos] == '\t' || text[pos] == '\r' || text[pos] == '\n')) {
    ++pos;
  }
  return pos;
}

bool is_symbol_char(char c) {
  return c != '<' && c != '>' && c != '-' && c != ' ' && c != '\t' && c != '\r' && c != '\n';
}

struct BracketParser {
  std::string_view text;
  std::size_t pos = 0;
  std::vector<std::string> surfaces;

  [[noreturn]] void fail(const std::string& what) const {
    throw Error("invalid nesting string '" + std::string(text) + "': " + what + " at offset " +
                std::to_string(pos));
  }

  std::string symbol() {
    std::size_t start = pos;
    while (pos < text.size() && is_symbol_char(text[pos])) ++pos;
    return std::string(text.substr(start, pos - start));
  }

  NestingTree item() {
    pos = parse_skip_ws(text, pos);
    if (pos >= text.size()) fail("unexpected end");
    if (text[pos] == '<') {
      ++pos;
      NestingTree left = item();
      pos = parse_skip_ws(text, pos);
      if (pos >= text.size() || text[pos] != '-') fail("expected '-'");
      ++pos;
      NestingTree right = item();
      pos = parse_skip_ws(text, pos);
      if (pos >= text.size()) fail("unbalanced brackets");
      if (text[pos] == '-') fail("non-binary combination");
      if (text[pos] != '>') fail("expected '>'");
      ++pos;
      pos = parse_skip_ws(text, pos);
      std::string label = symbol();
      return NestingTree::node(std::move(left), std::move(right), std::move(label));
    }
    std::string surface = symbol();
    if (surface.empty()) fail("expected component");
    surfaces.push_back(std::move(surface));
    return NestingTree::leaf(static_cast<int>(surfaces.size()));
  }
};

}  // namespace

boost::multiprecision::cpp_int catalan(unsigned n) {
  boost::multiprecision::cpp_int value = 1;
  // C_{k} = C_{k-1} * 2(2k-1) / (k+1), exact at every step.
  for (unsigned k = 1; k <= n; ++k) {
    value *= 2 * (2 * k - 1);
    value /= (k + 1);
  }
  return value;
}

ParseEnumerator::ParseEnumerator(int n_components, std::string label)
    : n_(n_components), label_(std::move(label)) {
  if (n_components < 2) {
    throw Error("a compound needs at least 2 components, got " + std::to_string(n_components));
  }
  word_.assign(static_cast<std::size_t>(2 * n_ - 1), 0);
}

void ParseEnumerator::fill_from(std::size_t position) {
  int ones = 0;
  for (std::size_t i = 0; i < position; ++i) ones += word_[i];
  for (std::size_t i = position; i < word_.size(); ++i) {
    if (ones < n_ - 1) {
      word_[i] = 1;
      ++ones;
    } else {
      word_[i] = 0;
    }
  }
}

bool ParseEnumerator::advance() {
  // Prefix counts for every position, then the rightmost 1 that can become a
  // 0 while the prefix stays an incomplete preorder.
  std::vector<int> ones(word_.size() + 1, 0);
  std::vector<int> zeros(word_.size() + 1, 0);
  for (std::size_t i = 0; i < word_.size(); ++i) {
    ones[i + 1] = ones[i] + word_[i];
    zeros[i + 1] = zeros[i] + (1 - word_[i]);
  }
  for (std::size_t i = word_.size(); i-- > 0;) {
    if (word_[i] == 1 && ones[i] - zeros[i] > 0) {
      word_[i] = 0;
      fill_from(i + 1);
      return true;
    }
  }
  return false;
}

NestingTree ParseEnumerator::build() const {
  std::size_t pos = 0;
  int next_leaf = 1;
  auto rec = [&](auto&& self) -> NestingTree {
    if (word_[pos++] == 0) return NestingTree::leaf(next_leaf++);
    NestingTree left = self(self);
    NestingTree right = self(self);
    return NestingTree::node(std::move(left), std::move(right), label_);
  };
  return rec(rec);
}

std::optional<NestingTree> ParseEnumerator::next() {
  if (done_) return std::nullopt;
  if (!started_) {
    started_ = true;
    fill_from(0);
  } else if (!advance()) {
    done_ = true;
    return std::nullopt;
  }
  return build();
}

std::vector<NestingTree> enumerate_parses(int n_components, std::string label) {
  ParseEnumerator enumerator(n_components, std::move(label));
  std::vector<NestingTree> out;
  while (auto tree = enumerator.next()) out.push_back(std::move(*tree));
  return out;
}

std::vector<SpanTuple> tree_to_spans(const NestingTree& tree) {
  std::vector<SpanTuple> spans;
  collect_spans(tree, spans);
  std::stable_sort(spans.begin(), spans.end(), [](const SpanTuple& a, const SpanTuple& b) {
    int wa = a.end - a.start;
    int wb = b.end - b.start;
    return wa != wb ? wa < wb : a.start < b.start;
  });
  return spans;
}

NestingTree spans_to_tree(const std::vector<SpanTuple>& spans, int n) {
  if (n < 2) not_full_parenthesization("fewer than 2 components");
  if (static_cast<int>(spans.size()) != n - 1) {
    not_full_parenthesization("expected " + std::to_string(n - 1) + " spans, got " +
                              std::to_string(spans.size()));
  }
  std::map<std::pair<int, int>, std::string> by_range;
  for (const auto& span : spans) {
    if (span.start < 1 || span.end > n || span.start >= span.end) {
      not_full_parenthesization("span (" + std::to_string(span.start) + "," +
                                std::to_string(span.end) + ") out of range");
    }
    if (!by_range.emplace(std::pair{span.start, span.end}, span.label).second) {
      not_full_parenthesization("duplicate span (" + std::to_string(span.start) + "," +
                                std::to_string(span.end) + ")");
    }
  }
  auto build = [&](auto&& self, int start, int end) -> NestingTree {
    if (start == end) return NestingTree::leaf(start);
    auto it = by_range.find({start, end});
    if (it == by_range.end()) {
      not_full_parenthesization("missing span (" + std::to_string(start) + "," +
                                std::to_string(end) + ")");
    }
    int split = start;
    for (auto sub = by_range.lower_bound({start, start}); sub != by_range.end() &&
                                                         sub->first.first == start &&
                                                         sub->first.second < end;
         ++sub) {
      split = sub->first.second;
    }
    NestingTree left = self(self, start, split);
    NestingTree right = self(self, split + 1, end);
    return NestingTree::node(std::move(left), std::move(right), it->second);
  };
  return build(build, 1, n);
}

CompoundArcs tree_to_dependency(const NestingTree& tree, const HeadRules& rules, int offset) {
  CompoundArcs arcs;
  int head = emit_arcs(tree, rules, offset, arcs);
  arcs.push_back({offset + head, 0, std::string(kCompoundRoot)});
  std::sort(arcs.begin(), arcs.end());
  return arcs;
}

NestingTree dependency_to_tree(const CompoundArcs& arcs, const HeadRules& rules, int offset) {
  LocalArcs local = to_local(arcs, offset);
  for (int d = 1; d <= local.n; ++d) {
    int h = local.head[d];
    if (h == 0) continue;
    for (int k = std::min(d, h) + 1; k < std::max(d, h); ++k) {
      if (!dominates(local, h, k)) {
        throw Error("compound arcs are non-projective: arc " + std::to_string(d) + "->" +
                    std::to_string(h) + " crosses component " + std::to_string(k));
      }
    }
  }
  std::vector<std::vector<int>> deps(local.n + 1);
  for (int d = 1; d <= local.n; ++d) {
    if (local.head[d] != 0) deps[local.head[d]].push_back(d);
  }
  for (int h = 1; h <= local.n; ++h) {
    std::sort(deps[h].begin(), deps[h].end(), [h](int a, int b) {
      int da = std::abs(a - h);
      int db = std::abs(b - h);
      return da != db ? da < db : a < b;
    });
  }
  return binarize(local, deps, rules, local.root);
}

CompoundArcs compound_arcs(const DependencyGraph& graph, const Compound& compound) {
  CompoundArcs arcs;
  for (std::size_t t = compound.token_start; t <= compound.token_end; ++t) {
    const Arc& arc = graph.arcs.at(t + 1);
    arcs.push_back({static_cast<int>(t + 1), arc.head, arc.label});
  }
  return arcs;
}

DependencyGraph graph_from_trees(const Sentence& sentence, const HeadRules& rules) {
  DependencyGraph graph(sentence.size() + 1);
  for (std::size_t i = 1; i < graph.n_nodes(); ++i) {
    graph.arcs[i] = {0, std::string(kGlobalRelation)};
  }
  for (const auto& compound : sentence.compounds()) {
    if (!compound.gold_tree) {
      throw Error("compound " + compound.id + " has no tree");
    }
    for (const auto& arc : tree_to_dependency(*compound.gold_tree, rules, compound.offset())) {
      graph.arcs[arc.dependent] = {arc.head, arc.label};
    }
  }
  return graph;
}

std::vector<std::string> validate_graph(const DependencyGraph& graph, const Sentence& sentence) {
  std::vector<std::string> violations;
  const int n = static_cast<int>(graph.n_nodes());
  if (graph.n_nodes() != sentence.size() + 1) {
    violations.push_back("graph has " + std::to_string(graph.n_nodes()) + " nodes, expected " +
                         std::to_string(sentence.size() + 1));
    return violations;
  }
  if (graph.arcs[0].head != -1) violations.push_back("Global node must not have a head");
  bool heads_in_range = true;
  for (int i = 1; i < n; ++i) {
    int h = graph.arcs[i].head;
    if (h < 0 || h >= n || h == i) {
      violations.push_back("token " + std::to_string(i) + " has invalid head " +
                           std::to_string(h));
      heads_in_range = false;
    }
  }
  if (!heads_in_range) return violations;

  auto owner = sentence.compound_of_token();
  for (int i = 1; i < n; ++i) {
    if (owner[i - 1] != -1) continue;
    if (graph.arcs[i].head != 0) {
      violations.push_back("plain token " + std::to_string(i) + " head must be Global");
    } else if (graph.arcs[i].label != kGlobalRelation) {
      violations.push_back("plain token " + std::to_string(i) + " label must be GlobalRelation");
    }
  }

  for (int i = 1; i < n; ++i) {
    int cur = i;
    for (int steps = 0; cur != 0 && steps <= n; ++steps) cur = graph.arcs[cur].head;
    if (cur != 0) violations.push_back("token " + std::to_string(i) + " lies on a cycle");
  }

  for (const auto& compound : sentence.compounds()) {
    const int first = compound.offset() + 1;
    const int last = static_cast<int>(compound.token_end) + 1;
    int roots = 0;
    bool local_ok = true;
    for (int i = first; i <= last; ++i) {
      const Arc& arc = graph.arcs[i];
      if (arc.head == 0) {
        ++roots;
        if (arc.label != kCompoundRoot) {
          violations.push_back("component token " + std::to_string(i) +
                               " attaches to Global without CompoundRoot");
        }
      } else if (arc.head < first || arc.head > last) {
        violations.push_back("component token " + std::to_string(i) +
                             " head lies outside compound " + compound.id);
        local_ok = false;
      } else if (is_structural_label(arc.label) || arc.label.empty()) {
        violations.push_back("component token " + std::to_string(i) + " has invalid label '" +
                             arc.label + "'");
      }
    }
    if (roots != 1) {
      violations.push_back("compound " + compound.id + " has " + std::to_string(roots) +
                           " root arcs");
      continue;
    }
    if (!local_ok) continue;
    auto dominated_by = [&](int ancestor, int node) {
      for (int cur = node, steps = 0; cur != 0 && steps <= n; cur = graph.arcs[cur].head, ++steps) {
        if (cur == ancestor) return true;
      }
      return false;
    };
    bool projective = true;
    for (int d = first; d <= last && projective; ++d) {
      int h = graph.arcs[d].head;
      if (h == 0) continue;
      for (int k = std::min(d, h) + 1; k < std::max(d, h); ++k) {
        if (!dominated_by(h, k)) {
          projective = false;
          break;
        }
      }
    }
    if (!projective) violations.push_back("compound " + compound.id + " is not projective");
  }
  return violations;
}

BracketParse parse_brackets(std::string_view text) {
  BracketParser parser{text, 0, {}};
  NestingTree tree = parser.item();
  if (tree.is_leaf()) parser.fail("a nesting needs at least two components");
  parser.pos = parse_skip_ws(text, parser.pos);
  if (parser.pos != text.size()) parser.fail("trailing characters");
  return {std::move(tree), std::move(parser.surfaces)};
}

}  // namespace necti
