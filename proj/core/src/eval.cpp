#include "necti/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <set>
#include <tuple>

#include "necti/treeops.hpp"

namespace necti {

namespace {

using Labeled = std::tuple<int, int, std::string>;
using Unlabeled = std::pair<int, int>;

std::set<Labeled> labeled_set(const CompoundSpans& c) {
  std::set<Labeled> out;
  for (const auto& s : c.spans) out.emplace(s.start, s.end, s.label);
  return out;
}

std::set<Unlabeled> unlabeled_set(const CompoundSpans& c) {
  std::set<Unlabeled> out;
  for (const auto& s : c.spans) out.emplace(s.start, s.end);
  return out;
}

template <typename Set>
std::size_t intersection_size(const Set& a, const Set& b) {
  std::size_t n = 0;
  for (const auto& x : a) n += b.count(x);
  return n;
}

// Gold entry for every predicted compound, in prediction order.
std::vector<const CompoundSpans*> align(const std::vector<CompoundSpans>& pred,
                                        const std::vector<CompoundSpans>& gold) {
  std::map<std::string, const CompoundSpans*> by_id;
  for (const auto& g : gold) {
    if (!by_id.emplace(g.id, &g).second) throw Error("duplicate gold compound id " + g.id);
  }
  std::set<std::string> seen;
  std::vector<const CompoundSpans*> out;
  for (const auto& p : pred) {
    auto it = by_id.find(p.id);
    if (it == by_id.end()) throw Error("unaligned compound ids: " + p.id + " missing from gold");
    if (!seen.insert(p.id).second) throw Error("duplicate predicted compound id " + p.id);
    out.push_back(it->second);
  }
  for (const auto& g : gold) {
    if (!seen.count(g.id)) throw Error("unaligned compound ids: " + g.id + " missing from predictions");
  }
  return out;
}

std::string format(double value) {
  char buffer[32];
  std::snprintf(buffer, sizeof buffer, "%.6f", value);
  return buffer;
}

}  // namespace

PRF prf_from_counts(std::size_t true_positive, std::size_t predicted, std::size_t gold) {
  if (predicted == 0 && gold == 0) return {1, 1, 1};
  PRF out;
  out.precision = predicted == 0 ? 0 : static_cast<double>(true_positive) / predicted;
  out.recall = gold == 0 ? 0 : static_cast<double>(true_positive) / gold;
  const double sum = out.precision + out.recall;
  out.f1 = sum == 0 ? 0 : 2 * out.precision * out.recall / sum;
  return out;
}

SpanScores span_scores(const std::vector<CompoundSpans>& pred, const std::vector<CompoundSpans>& gold,
                       Average average) {
  auto golds = align(pred, gold);
  std::size_t tp_l = 0, tp_u = 0, n_pred_l = 0, n_pred_u = 0, n_gold_l = 0, n_gold_u = 0;
  SpanScores macro;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    auto pl = labeled_set(pred[i]);
    auto gl = labeled_set(*golds[i]);
    auto pu = unlabeled_set(pred[i]);
    auto gu = unlabeled_set(*golds[i]);
    const std::size_t cl = intersection_size(pl, gl);
    const std::size_t cu = intersection_size(pu, gu);
    if (average == Average::kMacro) {
      PRF l = prf_from_counts(cl, pl.size(), gl.size());
      PRF u = prf_from_counts(cu, pu.size(), gu.size());
      macro.lss.precision += l.precision;
      macro.lss.recall += l.recall;
      macro.lss.f1 += l.f1;
      macro.uss.precision += u.precision;
      macro.uss.recall += u.recall;
      macro.uss.f1 += u.f1;
    }
    tp_l += cl;
    tp_u += cu;
    n_pred_l += pl.size();
    n_pred_u += pu.size();
    n_gold_l += gl.size();
    n_gold_u += gu.size();
  }
  if (average == Average::kMacro) {
    if (pred.empty()) return {{1, 1, 1}, {1, 1, 1}};
    const double n = static_cast<double>(pred.size());
    for (PRF* p : {&macro.lss, &macro.uss}) {
      p->precision /= n;
      p->recall /= n;
      p->f1 /= n;
    }
    return macro;
  }
  return {prf_from_counts(tp_u, n_pred_u, n_gold_u), prf_from_counts(tp_l, n_pred_l, n_gold_l)};
}

double exact_match(const std::vector<CompoundSpans>& pred, const std::vector<CompoundSpans>& gold) {
  auto golds = align(pred, gold);
  if (pred.empty()) return 1.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    hits += labeled_set(pred[i]) == labeled_set(*golds[i]) ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

std::map<int, Bucket> bucket_by_components(const std::vector<CompoundSpans>& pred,
                                           const std::vector<CompoundSpans>& gold) {
  auto golds = align(pred, gold);
  std::map<int, std::pair<std::vector<CompoundSpans>, std::vector<CompoundSpans>>> groups;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const int n = golds[i]->n_components;
    if (n < 2 || n > 10) continue;
    groups[n].first.push_back(pred[i]);
    groups[n].second.push_back(*golds[i]);
  }
  std::map<int, Bucket> out;
  for (const auto& [n, group] : groups) {
    out[n] = {span_scores(group.first, group.second).lss.f1, group.first.size()};
  }
  return out;
}

double global_span_accuracy(const std::vector<CompoundSpans>& pred) {
  if (pred.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& c : pred) {
    hits += std::any_of(c.spans.begin(), c.spans.end(),
                        [&](const SpanTuple& s) { return s.start == 1 && s.end == c.n_components; })
                ? 1
                : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

Throughput measure_throughput(const std::function<void()>& parse_all, std::size_t n_sentences,
                              int passes) {
  if (n_sentences == 0) throw Error("throughput needs at least one sentence");
  if (passes < 1) throw Error("throughput needs at least one timed pass");
  parse_all();
  Throughput out;
  for (int p = 0; p < passes; ++p) {
    auto start = std::chrono::steady_clock::now();
    parse_all();
    std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
    const double seconds = std::max(elapsed.count(), 1e-9);
    out.passes.push_back(static_cast<double>(n_sentences) / seconds);
  }
  std::vector<double> sorted = out.passes;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t mid = sorted.size() / 2;
  out.median = sorted.size() % 2 ? sorted[mid] : (sorted[mid - 1] + sorted[mid]) / 2;
  return out;
}

EvalReport evaluate(const std::vector<CompoundSpans>& pred, const std::vector<CompoundSpans>& gold,
                    Average average) {
  EvalReport report;
  report.scores = span_scores(pred, gold, average);
  report.average = average;
  report.em = exact_match(pred, gold);
  report.buckets = bucket_by_components(pred, gold);
  report.global_span_accuracy = global_span_accuracy(pred);
  report.n_compounds = pred.size();
  return report;
}

std::string EvalReport::to_table() const {
  std::string out;
  char line[128];
  std::snprintf(line, sizeof line, "%-8s %10s %10s %10s\n", "metric", "precision", "recall", "f1");
  out += line;
  for (const auto& [name, prf] : {std::pair{"USS", scores.uss}, std::pair{"LSS", scores.lss}}) {
    std::snprintf(line, sizeof line, "%-8s %10.4f %10.4f %10.4f\n", name, prf.precision * 100,
                  prf.recall * 100, prf.f1 * 100);
    out += line;
  }
  std::snprintf(line, sizeof line, "%-8s %32.4f\n", "EM", em * 100);
  out += line;
  std::snprintf(line, sizeof line, "%-8s %32.4f\n", "global", global_span_accuracy * 100);
  out += line;
  std::snprintf(line, sizeof line, "averaging: %s, compounds: %zu\n",
                average == Average::kMicro ? "micro" : "macro", n_compounds);
  out += line;
  if (sentences_per_second) {
    std::snprintf(line, sizeof line, "sentences/second: %.2f\n", *sentences_per_second);
    out += line;
  }
  return out;
}

std::string EvalReport::to_tsv() const {
  std::string out;
  auto add = [&](const std::string& key, const std::string& value) {
    out += key + "\t" + value + "\n";
  };
  add("average", average == Average::kMicro ? "micro" : "macro");
  add("compounds", std::to_string(n_compounds));
  add("uss_precision", format(scores.uss.precision));
  add("uss_recall", format(scores.uss.recall));
  add("uss_f1", format(scores.uss.f1));
  add("lss_precision", format(scores.lss.precision));
  add("lss_recall", format(scores.lss.recall));
  add("lss_f1", format(scores.lss.f1));
  add("em", format(em));
  add("global_span_accuracy", format(global_span_accuracy));
  if (sentences_per_second) add("sentences_per_second", format(*sentences_per_second));
  return out;
}

std::string EvalReport::buckets_csv() const {
  std::string out = "n,lss_f1,count\n";
  for (const auto& [n, bucket] : buckets) {
    out += std::to_string(n) + "," + format(bucket.lss_f1) + "," + std::to_string(bucket.count) + "\n";
  }
  return out;
}

std::vector<CompoundSpans> spans_from_sentences(const std::vector<Sentence>& sentences) {
  std::vector<CompoundSpans> out;
  for (const auto& sentence : sentences) {
    for (const auto& compound : sentence.compounds()) {
      if (!compound.gold_tree) throw Error("compound " + compound.id + " has no annotation");
      out.push_back({compound.id, static_cast<int>(compound.n_components()),
                     tree_to_spans(*compound.gold_tree)});
    }
  }
  return out;
}

}  // namespace necti
