#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "necti/tree.hpp"

namespace necti {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::string_view kCompoundRoot = "CompoundRoot";
inline constexpr std::string_view kGlobalRelation = "GlobalRelation";

enum class LabelKind { kCoarse, kFine, kStructural };
enum class LabelMode { kCoarse, kFine };
enum class HeadSide { kLeft, kRight };

// Which child of an internal node contributes the headword, keyed by label.
using HeadRules = std::unordered_map<std::string, HeadSide>;

struct Label {
  std::string name;
  LabelKind kind = LabelKind::kFine;

  friend bool operator==(const Label&, const Label&) = default;
};

bool is_valid_label_name(std::string_view name);
bool is_structural_label(std::string_view name);
std::string_view head_side_name(HeadSide side);

// Ordered label set. Span labels come first in file order, followed by the
// two structural labels; indices never change after construction.
class LabelInventory {
 public:
  LabelInventory() : LabelInventory(std::vector<std::pair<Label, HeadSide>>{}) {}
  // Throws on invalid or duplicate names, or on structural names among the
  // span labels.
  explicit LabelInventory(std::vector<std::pair<Label, HeadSide>> span_labels);

  std::size_t size() const { return labels_.size(); }
  std::size_t n_span_labels() const { return labels_.size() - 2; }
  const std::vector<Label>& labels() const { return labels_; }
  const Label& at(std::size_t index) const { return labels_.at(index); }
  std::optional<std::size_t> index_of(std::string_view name) const;
  std::size_t require_index(std::string_view name) const;
  bool contains(std::string_view name) const { return index_of(name).has_value(); }

  std::size_t compound_root_index() const { return labels_.size() - 2; }
  std::size_t global_relation_index() const { return labels_.size() - 1; }

  HeadSide rule(std::string_view name) const;
  const HeadRules& head_rules() const { return rules_; }

  // Inventory file text (span labels only, `name\tside` per line).
  std::string to_text() const;

  friend bool operator==(const LabelInventory& a, const LabelInventory& b) {
    return a.labels_ == b.labels_ && a.rules_ == b.rules_;
  }

 private:
  std::vector<Label> labels_;
  std::unordered_map<std::string, std::size_t> index_;
  HeadRules rules_;
};

LabelInventory parse_label_inventory(std::string_view text, LabelMode mode);
LabelInventory load_label_inventory(const std::filesystem::path& path, LabelMode mode);
void save_label_inventory(const LabelInventory& inventory, const std::filesystem::path& path);

struct Token {
  std::string surface;
  bool is_component = false;
  std::optional<std::string> compound_id;
  std::optional<int> component_index;  // 1-based within the compound

  friend bool operator==(const Token&, const Token&) = default;
};

struct Compound {
  std::string id;
  std::size_t token_start = 0;  // 0-based sentence token index, inclusive
  std::size_t token_end = 0;    // inclusive
  std::optional<NestingTree> gold_tree;

  std::size_t n_components() const { return token_end - token_start + 1; }
  // Node index of the first component in the sentence's dependency graph
  // minus one, i.e. component i maps to node offset() + i.
  int offset() const { return static_cast<int>(token_start); }

  friend bool operator==(const Compound&, const Compound&) = default;
};

class Sentence {
 public:
  Sentence() = default;
  // Throws necti::Error when compounds overlap, fall outside the token list,
  // have fewer than two components, or disagree with the token annotations.
  Sentence(std::string id, std::vector<Token> tokens, std::vector<Compound> compounds,
           std::string source_id = {}, std::size_t source_offset = 0);

  const std::string& id() const { return id_; }
  const std::vector<Token>& tokens() const { return tokens_; }
  const std::vector<Compound>& compounds() const { return compounds_; }
  std::size_t size() const { return tokens_.size(); }

  // Identity of the sentence the tokens were taken from (differs from id()
  // when a compound was cut out of its context) and the offset of token 0
  // inside it.
  const std::string& source_id() const { return source_id_; }
  std::size_t source_offset() const { return source_offset_; }

  // Compound c cut out of its context as a single-compound sentence; its id
  // is the compound id and its source points back into this sentence.
  Sentence compound_sentence(std::size_t c) const;
  // Copy with the compounds' trees replaced, in compound order.
  Sentence with_trees(const std::vector<NestingTree>& trees) const;
  // Compound index owning each token, or -1 for plain words.
  std::vector<int> compound_of_token() const;

  friend bool operator==(const Sentence&, const Sentence&) = default;

 private:
  std::string id_;
  std::vector<Token> tokens_;
  std::vector<Compound> compounds_;
  std::string source_id_;
  std::size_t source_offset_ = 0;
};

LabelInventory collect_labels_from_data(const std::vector<Sentence>& sentences);

struct ModelConfig {
  int word_dim = 300;
  int char_dim = 100;
  int char_feature_dim = 100;
  int span_dim = 50;
  int lstm_hidden = 512;
  int lstm_layers = 2;
  int arc_mlp_dim = 512;
  int label_mlp_dim = 128;
  double dropout = 0.33;
  double learning_rate = 0.002;
  double clip_norm = 5.0;
  int batch_size = 16;
  int epochs = 100;
  int min_count = 1;
  bool use_span_encoding = true;
  bool use_pretrained_vectors = true;
  bool use_contextual_vectors = false;
  bool use_context = true;
  int contextual_dim = 0;
  std::uint64_t seed = 1;

  // Throws necti::Error for unknown keys or unparsable values.
  void set(std::string_view key, std::string_view value);
  void validate() const;
  std::string to_text() const;
  static ModelConfig from_text(std::string_view text);
  static ModelConfig load(const std::filesystem::path& path);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// UTF-8 helpers; invalid sequences throw necti::Error.
std::u32string decode_utf8(std::string_view text);
std::string encode_utf8(char32_t code_point);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);
std::vector<std::string> split_whitespace(std::string_view text);
std::string_view trim(std::string_view text);

}  // namespace necti
