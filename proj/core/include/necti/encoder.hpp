#pragma once

#include <filesystem>
#include <map>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "necti/core.hpp"
#include "necti/numkit.hpp"

namespace necti {

// Word and character indices. Words: 0 = <pad>, 1 = <unk>; characters:
// 0 = padding, 1 = unknown. Remaining entries are sorted.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;

  Vocabulary() : Vocabulary(std::vector<std::string>{}, std::vector<char32_t>{}) {}
  // `words` and `chars` exclude the reserved entries.
  Vocabulary(std::vector<std::string> words, std::vector<char32_t> chars);

  // Words seen fewer than min_count times map to <unk>.
  static Vocabulary build(const std::vector<Sentence>& train, int min_count = 1);

  int word_index(std::string_view word) const;
  int char_index(char32_t c) const;
  std::size_t n_words() const { return words_.size(); }
  std::size_t n_chars() const { return chars_.size(); }
  // Full tables including the reserved entries.
  const std::vector<std::string>& words() const { return words_; }
  const std::vector<char32_t>& chars() const { return chars_; }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.words_ == b.words_ && a.chars_ == b.chars_;
  }

 private:
  std::vector<std::string> words_;
  std::vector<char32_t> chars_;
  std::unordered_map<std::string, int> word_ids_;
  std::unordered_map<char32_t, int> char_ids_;
};

// Text vectors in the `.vec` layout: optional "count dim" header line, then
// `token v1 ... vd` per line.
struct PretrainedVectors {
  int dim = 0;
  std::unordered_map<std::string, std::vector<float>> vectors;

  static PretrainedVectors parse(std::string_view text);
  static PretrainedVectors load(const std::filesystem::path& path);
};

// Precomputed per-token vectors keyed by sentence id. Binary layout: magic
// "NCTV", u32 version, u32 dim, then records of (u32-length-prefixed id,
// u32 token count, count * dim little-endian f32).
class ContextualVectors {
 public:
  static constexpr std::uint32_t kVersion = 1;

  ContextualVectors() = default;
  explicit ContextualVectors(int dim) : dim_(dim) {}

  int dim() const { return dim_; }
  std::size_t n_sentences() const { return records_.size(); }
  // Throws necti::Error when the row width differs from dim() or the id repeats.
  void add(const std::string& sentence_id, std::vector<std::vector<float>> token_vectors);
  bool contains(const std::string& sentence_id) const { return records_.count(sentence_id) != 0; }
  std::size_t n_tokens(const std::string& sentence_id) const;
  // Throws necti::Error naming the sentence and token when absent.
  std::span<const float> vector(const std::string& sentence_id, std::size_t token) const;

  std::string serialize() const;
  static ContextualVectors deserialize(std::string_view bytes);
  void save(const std::filesystem::path& path) const;
  static ContextualVectors load(const std::filesystem::path& path);

  friend bool operator==(const ContextualVectors&, const ContextualVectors&) = default;

 private:
  int dim_ = 0;
  std::vector<std::string> order_;
  std::map<std::string, std::vector<std::vector<float>>> records_;
};

// Token representations and the stacked bidirectional LSTM. Parameter names
// live under "embed.", "char_cnn.", "lstm." and "encoder.".
class Encoder {
 public:
  static constexpr std::size_t kCharWindow = 3;

  Encoder(ModelConfig config, Vocabulary vocab);

  const ModelConfig& config() const { return config_; }
  const Vocabulary& vocab() const { return vocab_; }
  int input_dim() const;
  int output_dim() const { return 2 * config_.lstm_hidden; }

  // Adds the encoder's parameters. Words present in `pretrained` start from
  // their vectors when the config enables pretrained vectors.
  void init_params(numkit::ParamStore& store, std::mt19937_64& rng,
                   const PretrainedVectors* pretrained = nullptr) const;

  // One row per token: [word or contextual ; char feature ; span].
  numkit::Var embed(numkit::Graph& graph, const numkit::ParamStore& store, const Sentence& sentence,
                    const ContextualVectors* contextual = nullptr) const;
  // Row 0 is the Global node, row t + 1 belongs to token t.
  numkit::Var encode(numkit::Graph& graph, const numkit::ParamStore& store,
                     numkit::Var embedded) const;
  numkit::Var run(numkit::Graph& graph, const numkit::ParamStore& store, const Sentence& sentence,
                  const ContextualVectors* contextual = nullptr) const;

 private:
  numkit::Var char_feature(numkit::Graph& graph, const numkit::ParamStore& store,
                           const std::string& surface) const;
  numkit::Var lstm_direction(numkit::Graph& graph, const numkit::ParamStore& store,
                             numkit::Var input, const std::string& prefix, bool reverse) const;

  ModelConfig config_;
  Vocabulary vocab_;
};

}  // namespace necti
