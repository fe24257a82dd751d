#include "necti/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "binary_io.hpp"

namespace necti {

using numkit::Graph;
using numkit::ParamStore;
using numkit::Real;
using numkit::Tensor;
using numkit::Var;

namespace {

Tensor uniform(std::size_t rows, std::size_t cols, Real bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<Real> dist(-bound, bound);
  Tensor t = Tensor::matrix(rows, cols);
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

}  // namespace

Vocabulary::Vocabulary(std::vector<std::string> words, std::vector<char32_t> chars) {
  words_ = {"<pad>", "<unk>"};
  for (auto& w : words) words_.push_back(std::move(w));
  chars_ = {0, 0};
  for (char32_t c : chars) chars_.push_back(c);
  for (std::size_t i = 2; i < words_.size(); ++i) {
    if (!word_ids_.emplace(words_[i], static_cast<int>(i)).second) {
      throw Error("duplicate vocabulary word '" + words_[i] + "'");
    }
  }
  for (std::size_t i = 2; i < chars_.size(); ++i) {
    if (!char_ids_.emplace(chars_[i], static_cast<int>(i)).second) {
      throw Error("duplicate vocabulary character");
    }
  }
}

Vocabulary Vocabulary::build(const std::vector<Sentence>& train, int min_count) {
  std::map<std::string, int> counts;
  std::set<char32_t> chars;
  for (const auto& sentence : train) {
    for (const auto& token : sentence.tokens()) {
      ++counts[token.surface];
      for (char32_t c : decode_utf8(token.surface)) chars.insert(c);
    }
  }
  std::vector<std::string> words;
  for (const auto& [word, count] : counts) {
    if (count >= min_count) words.push_back(word);
  }
  return Vocabulary(std::move(words), std::vector<char32_t>(chars.begin(), chars.end()));
}

int Vocabulary::word_index(std::string_view word) const {
  auto it = word_ids_.find(std::string(word));
  return it == word_ids_.end() ? kUnk : it->second;
}

int Vocabulary::char_index(char32_t c) const {
  auto it = char_ids_.find(c);
  return it == char_ids_.end() ? kUnk : it->second;
}

PretrainedVectors PretrainedVectors::parse(std::string_view text) {
  PretrainedVectors out;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    std::size_t next = text.find('\n', pos);
    if (next == std::string_view::npos) next = text.size();
    std::string_view line = trim(text.substr(pos, next - pos));
    pos = next + 1;
    ++line_no;
    if (line.empty()) continue;
    auto fields = split_whitespace(line);
    if (line_no == 1 && fields.size() == 2) {
      bool header = std::all_of(fields[0].begin(), fields[0].end(), ::isdigit) &&
                    std::all_of(fields[1].begin(), fields[1].end(), ::isdigit);
      if (header) {
        out.dim = std::stoi(fields[1]);
        continue;
      }
    }
    if (fields.size() < 2) {
      throw Error("vector file line " + std::to_string(line_no) + ": expected token and values");
    }
    const int dim = static_cast<int>(fields.size() - 1);
    if (out.dim == 0) out.dim = dim;
    if (dim != out.dim) {
      throw Error("vector file line " + std::to_string(line_no) + ": expected " +
                  std::to_string(out.dim) + " values, got " + std::to_string(dim));
    }
    std::vector<float> values;
    values.reserve(dim);
    for (std::size_t i = 1; i < fields.size(); ++i) {
      try {
        values.push_back(std::stof(fields[i]));
      } catch (const std::exception&) {
        throw Error("vector file line " + std::to_string(line_no) + ": invalid number '" +
                    fields[i] + "'");
      }
    }
    out.vectors.insert_or_assign(fields[0], std::move(values));
  }
  return out;
}

PretrainedVectors PretrainedVectors::load(const std::filesystem::path& path) {
  return parse(read_file(path));
}

void ContextualVectors::add(const std::string& sentence_id,
                            std::vector<std::vector<float>> token_vectors) {
  for (const auto& v : token_vectors) {
    if (static_cast<int>(v.size()) != dim_) {
      throw Error("contextual vectors for sentence " + sentence_id + " have dimension " +
                  std::to_string(v.size()) + ", expected " + std::to_string(dim_));
    }
  }
  if (!records_.emplace(sentence_id, std::move(token_vectors)).second) {
    throw Error("duplicate contextual vectors for sentence " + sentence_id);
  }
  order_.push_back(sentence_id);
}

std::size_t ContextualVectors::n_tokens(const std::string& sentence_id) const {
  auto it = records_.find(sentence_id);
  return it == records_.end() ? 0 : it->second.size();
}

std::span<const float> ContextualVectors::vector(const std::string& sentence_id,
                                                 std::size_t token) const {
  auto it = records_.find(sentence_id);
  if (it == records_.end() || token >= it->second.size()) {
    throw Error("missing contextual vector for sentence " + sentence_id + " token " +
                std::to_string(token + 1));
  }
  return it->second[token];
}

std::string ContextualVectors::serialize() const {
  detail::ByteWriter w;
  w.raw("NCTV");
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(dim_));
  for (const auto& id : order_) {
    const auto& rows = records_.at(id);
    w.str(id);
    w.u32(static_cast<std::uint32_t>(rows.size()));
    for (const auto& row : rows) {
      for (float v : row) w.f32(v);
    }
  }
  return w.take();
}

ContextualVectors ContextualVectors::deserialize(std::string_view bytes) {
  detail::ByteReader r(bytes, "contextual vector file");
  if (r.raw(4) != "NCTV") throw Error("contextual vector file: bad magic");
  const std::uint32_t version = r.u32();
  if (version != kVersion) {
    throw Error("contextual vector file: unsupported version " + std::to_string(version));
  }
  ContextualVectors out(static_cast<int>(r.u32()));
  while (!r.at_end()) {
    std::string id = r.str();
    const std::uint32_t count = r.u32();
    std::vector<std::vector<float>> rows(count, std::vector<float>(out.dim_));
    for (auto& row : rows) {
      for (auto& v : row) v = r.f32();
    }
    out.add(id, std::move(rows));
  }
  return out;
}

void ContextualVectors::save(const std::filesystem::path& path) const {
  write_file(path, serialize());
}

ContextualVectors ContextualVectors::load(const std::filesystem::path& path) {
  return deserialize(read_file(path));
}

Encoder::Encoder(ModelConfig config, Vocabulary vocab)
    : config_(std::move(config)), vocab_(std::move(vocab)) {
  config_.validate();
  if (config_.use_contextual_vectors && config_.contextual_dim <= 0) {
    throw Error("contextual vectors enabled without a contextual dimension");
  }
}

int Encoder::input_dim() const {
  int dim = config_.use_contextual_vectors ? config_.contextual_dim : config_.word_dim;
  dim += config_.char_feature_dim;
  if (config_.use_span_encoding) dim += config_.span_dim;
  return dim;
}

void Encoder::init_params(ParamStore& store, std::mt19937_64& rng,
                          const PretrainedVectors* pretrained) const {
  if (!config_.use_contextual_vectors) {
    Tensor words = uniform(vocab_.n_words(), config_.word_dim, 0.1, rng);
    if (config_.use_pretrained_vectors && pretrained) {
      if (pretrained->dim != config_.word_dim) {
        throw Error("pretrained vectors have dimension " + std::to_string(pretrained->dim) +
                    " but word_dim is " + std::to_string(config_.word_dim));
      }
      for (std::size_t i = 2; i < vocab_.n_words(); ++i) {
        auto it = pretrained->vectors.find(vocab_.words()[i]);
        if (it == pretrained->vectors.end()) continue;
        for (int k = 0; k < config_.word_dim; ++k) words(i, k) = it->second[k];
      }
    }
    store.add("embed.word", std::move(words));
  }
  store.add("embed.char", uniform(vocab_.n_chars(), config_.char_dim, 0.1, rng));
  const std::size_t window_dim = kCharWindow * config_.char_dim;
  store.add("char_cnn.W",
            uniform(window_dim, config_.char_feature_dim,
                    std::sqrt(6.0 / static_cast<Real>(window_dim + config_.char_feature_dim)), rng));
  store.add("char_cnn.b", Tensor::matrix(1, config_.char_feature_dim));
  if (config_.use_span_encoding) {
    store.add("embed.span", uniform(2, config_.span_dim, 0.1, rng));
  }
  const std::size_t h = config_.lstm_hidden;
  const Real bound = 1.0 / std::sqrt(static_cast<Real>(h));
  for (int layer = 0; layer < config_.lstm_layers; ++layer) {
    const std::size_t in = layer == 0 ? input_dim() : 2 * h;
    for (const char* dir : {"fwd", "bwd"}) {
      const std::string prefix = "lstm." + std::to_string(layer) + "." + dir;
      store.add(prefix + ".W", uniform(in, 4 * h, bound, rng));
      store.add(prefix + ".U", uniform(h, 4 * h, bound, rng));
      Tensor bias = Tensor::matrix(1, 4 * h);
      for (std::size_t k = h; k < 2 * h; ++k) bias[k] = 1.0;  // forget gate
      store.add(prefix + ".b", std::move(bias));
    }
  }
  store.add("encoder.global", uniform(1, 2 * h, 0.1, rng));
}

Var Encoder::char_feature(Graph& graph, const ParamStore& store, const std::string& surface) const {
  std::vector<int> ids{0};
  for (char32_t c : decode_utf8(surface)) ids.push_back(vocab_.char_index(c));
  ids.push_back(0);
  while (ids.size() < kCharWindow) ids.push_back(0);
  Var chars = graph.lookup(store, "embed.char", ids);
  Var windows = graph.windows(chars, kCharWindow);
  Var conv = graph.add_row(graph.matmul(windows, graph.param(store, "char_cnn.W")),
                           graph.param(store, "char_cnn.b"));
  return graph.max_rows(graph.tanh(conv));
}

Var Encoder::embed(Graph& graph, const ParamStore& store, const Sentence& sentence,
                   const ContextualVectors* contextual) const {
  const auto& tokens = sentence.tokens();
  if (tokens.empty()) throw Error("cannot encode an empty sentence");
  std::vector<Var> parts;
  if (config_.use_contextual_vectors) {
    if (!contextual) throw Error("model needs contextual vectors but none were supplied");
    if (contextual->dim() != config_.contextual_dim) {
      throw Error("contextual vectors have dimension " + std::to_string(contextual->dim()) +
                  ", model expects " + std::to_string(config_.contextual_dim));
    }
    Tensor rows = Tensor::matrix(tokens.size(), config_.contextual_dim);
    for (std::size_t t = 0; t < tokens.size(); ++t) {
      auto v = contextual->vector(sentence.source_id(), sentence.source_offset() + t);
      std::copy(v.begin(), v.end(), rows.row(t).begin());
    }
    parts.push_back(graph.constant(std::move(rows)));
  } else {
    std::vector<int> ids;
    for (const auto& token : tokens) ids.push_back(vocab_.word_index(token.surface));
    parts.push_back(graph.lookup(store, "embed.word", ids));
  }
  std::vector<Var> char_rows;
  for (const auto& token : tokens) char_rows.push_back(char_feature(graph, store, token.surface));
  parts.push_back(graph.concat_rows(char_rows));
  if (config_.use_span_encoding) {
    std::vector<int> ids;
    for (const auto& token : tokens) ids.push_back(token.is_component ? 1 : 0);
    parts.push_back(graph.lookup(store, "embed.span", ids));
  }
  return graph.concat_cols(parts);
}

Var Encoder::lstm_direction(Graph& graph, const ParamStore& store, Var input,
                            const std::string& prefix, bool reverse) const {
  const std::size_t h = config_.lstm_hidden;
  const std::size_t n = graph.value(input).rows();
  Var projected = graph.add_row(graph.matmul(input, graph.param(store, prefix + ".W")),
                                graph.param(store, prefix + ".b"));
  Var recurrent = graph.param(store, prefix + ".U");
  Var hidden = graph.constant(Tensor::matrix(1, h));
  Var cell = graph.constant(Tensor::matrix(1, h));
  std::vector<Var> outputs(n);
  for (std::size_t step = 0; step < n; ++step) {
    const std::size_t t = reverse ? n - 1 - step : step;
    Var gates = graph.add(graph.slice_rows(projected, t, 1), graph.matmul(hidden, recurrent));
    Var in_gate = graph.sigmoid(graph.slice_cols(gates, 0, h));
    Var forget_gate = graph.sigmoid(graph.slice_cols(gates, h, h));
    Var candidate = graph.tanh(graph.slice_cols(gates, 2 * h, h));
    Var out_gate = graph.sigmoid(graph.slice_cols(gates, 3 * h, h));
    cell = graph.add(graph.mul(forget_gate, cell), graph.mul(in_gate, candidate));
    hidden = graph.mul(out_gate, graph.tanh(cell));
    outputs[t] = hidden;
  }
  return graph.concat_rows(outputs);
}

Var Encoder::encode(Graph& graph, const ParamStore& store, Var embedded) const {
  if (graph.value(embedded).rows() == 0) throw Error("cannot encode an empty sequence");
  Var x = graph.dropout(embedded, config_.dropout);
  for (int layer = 0; layer < config_.lstm_layers; ++layer) {
    const std::string prefix = "lstm." + std::to_string(layer);
    Var forward = lstm_direction(graph, store, x, prefix + ".fwd", false);
    Var backward = lstm_direction(graph, store, x, prefix + ".bwd", true);
    x = graph.dropout(graph.concat_cols({forward, backward}), config_.dropout);
  }
  Var states = graph.concat_rows({graph.param(store, "encoder.global"), x});
  graph.check_finite(states, "encoder states");
  return states;
}

Var Encoder::run(Graph& graph, const ParamStore& store, const Sentence& sentence,
                 const ContextualVectors* contextual) const {
  return encode(graph, store, embed(graph, store, sentence, contextual));
}

}  // namespace necti
