#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "necti/core.hpp"
#include "necti/treeops.hpp"

namespace necti {

enum class ContextMode { kWithContext, kWithoutContext };

// Corpus records: a token line where compounds are written `<c1-c2-...>`,
// then either no annotation or one nesting line per compound in order, then
// a blank line. Record r (1-based) becomes sentence "r"; its k-th compound
// gets id "r.k". Without context, every compound becomes its own sentence.
// Errors carry the line number.
std::vector<Sentence> parse_corpus_text(std::string_view text,
                                        ContextMode mode = ContextMode::kWithContext);
std::vector<Sentence> parse_corpus(const std::filesystem::path& path,
                                   ContextMode mode = ContextMode::kWithContext);

// Inverse of parse_corpus_text in context mode. Compounds are annotated when
// every compound of the sentence has a tree.
std::string render_corpus(const std::vector<Sentence>& sentences);
void write_corpus(const std::vector<Sentence>& sentences, const std::filesystem::path& path);

struct ConllSentence {
  Sentence sentence;  // no trees attached
  DependencyGraph graph;
};

// `ID FORM HEAD DEPREL COMPOUND_ID` per token, preceded by `# sent_id = ...`
// (and `# source = id offset` when the sentence was cut from another one).
// Throws when a graph fails validate_graph.
std::string render_conll(const std::vector<Sentence>& sentences,
                         const std::vector<DependencyGraph>& graphs);
void write_conll(const std::vector<Sentence>& sentences, const std::vector<DependencyGraph>& graphs,
                 const std::filesystem::path& path);
std::vector<ConllSentence> parse_conll(std::string_view text);

// Sentence with every compound's tree recovered from the graph.
Sentence attach_trees(const ConllSentence& conll, const HeadRules& rules);

struct DatasetStats {
  std::size_t n_records = 0;
  std::size_t n_tokens = 0;
  std::size_t n_compounds = 0;
  std::map<int, std::size_t> components;       // N -> compounds
  std::map<std::string, std::size_t> labels;   // span label frequency

  // `kind,key,value` rows.
  std::string to_csv() const;
};

DatasetStats corpus_stats(const std::vector<Sentence>& sentences);

}  // namespace necti
