#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "necti/core.hpp"
#include "necti/tree.hpp"

namespace necti {

// Span tuples of one compound.
struct CompoundSpans {
  std::string id;
  int n_components = 0;
  std::vector<SpanTuple> spans;
};

struct PRF {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

// Precision/recall/F1 from counts; an empty prediction against an empty
// gold set scores 1.
PRF prf_from_counts(std::size_t true_positive, std::size_t predicted, std::size_t gold);

struct SpanScores {
  PRF uss;
  PRF lss;
};

enum class Average { kMicro, kMacro };

// Micro: tuples (compound, start, end[, label]) pooled over all compounds.
// Macro: per-compound F1 averaged. Duplicate tuples count once. Throws when
// the compound ids of pred and gold differ.
SpanScores span_scores(const std::vector<CompoundSpans>& pred, const std::vector<CompoundSpans>& gold,
                       Average average = Average::kMicro);

// Fraction of compounds whose labeled span set equals gold.
double exact_match(const std::vector<CompoundSpans>& pred, const std::vector<CompoundSpans>& gold);

struct Bucket {
  double lss_f1 = 0;
  std::size_t count = 0;
};

// LSS micro-F1 per component count N in [2, 10]; empty buckets are absent.
std::map<int, Bucket> bucket_by_components(const std::vector<CompoundSpans>& pred,
                                           const std::vector<CompoundSpans>& gold);

// Fraction of predicted compounds whose spans include (1, N).
double global_span_accuracy(const std::vector<CompoundSpans>& pred);

struct Throughput {
  double median = 0;  // sentences per second
  std::vector<double> passes;
};

// Runs `parse_all` once untimed, then `passes` timed passes. Throws when
// sentences is empty or passes < 1.
Throughput measure_throughput(const std::function<void()>& parse_all, std::size_t n_sentences,
                              int passes = 3);

struct EvalReport {
  SpanScores scores;
  Average average = Average::kMicro;
  double em = 0;
  std::map<int, Bucket> buckets;
  double global_span_accuracy = 0;
  std::size_t n_compounds = 0;
  std::optional<double> sentences_per_second;

  std::string to_table() const;
  // One `key\tvalue` line per metric.
  std::string to_tsv() const;
  // `n,lss_f1,count` rows with a header.
  std::string buckets_csv() const;
};

EvalReport evaluate(const std::vector<CompoundSpans>& pred, const std::vector<CompoundSpans>& gold,
                    Average average = Average::kMicro);

// Gold spans of every compound; throws when a compound has no tree.
std::vector<CompoundSpans> spans_from_sentences(const std::vector<Sentence>& sentences);

}  // namespace necti
