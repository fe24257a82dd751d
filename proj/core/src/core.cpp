#include "necti/core.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace necti {

namespace {

const char* const kCoarseLabels[] = {"Avyayībhāva", "Bahuvrīhi", "Tatpuruṣa", "Dvandva"};

void collect_tree_labels(const NestingTree& tree, std::set<std::string>& out) {
  if (tree.is_leaf()) return;
  if (!tree.label().empty()) out.insert(tree.label());
  collect_tree_labels(tree.left(), out);
  collect_tree_labels(tree.right(), out);
}

bool parse_bool(std::string_view value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw Error("invalid boolean value '" + std::string(value) + "'");
}

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
  T out{};
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw Error("invalid value '" + std::string(value) + "' for config key '" +
                std::string(key) + "'");
  }
  return out;
}

double parse_real(std::string_view key, std::string_view value) {
  try {
    std::size_t used = 0;
    double out = std::stod(std::string(value), &used);
    if (used != value.size()) throw std::invalid_argument("trailing");
    return out;
  } catch (const std::exception&) {
    throw Error("invalid value '" + std::string(value) + "' for config key '" +
                std::string(key) + "'");
  }
}

std::string format_real(double value) {
  std::ostringstream os;
  os.precision(17);
  os << value;
  return os.str();
}

}  // namespace

bool is_valid_label_name(std::string_view name) {
  if (name.empty()) return false;
  for (char c : name) {
    if (c == '<' || c == '>' || c == '-' || c == ' ' || c == '\t' || c == '\n' ||
        c == '\r' || c == '\v' || c == '\f') {
      return false;
    }
  }
  return true;
}

bool is_structural_label(std::string_view name) {
  return name == kCompoundRoot || name == kGlobalRelation;
}

std::string_view head_side_name(HeadSide side) {
  return side == HeadSide::kLeft ? "left" : "right";
}

LabelInventory::LabelInventory(std::vector<std::pair<Label, HeadSide>> span_labels) {
  for (auto& [label, side] : span_labels) {
    if (!is_valid_label_name(label.name)) {
      throw Error("invalid label name '" + label.name + "'");
    }
    if (is_structural_label(label.name)) {
      throw Error("label '" + label.name + "' is reserved");
    }
    if (index_.count(label.name)) throw Error("duplicate label '" + label.name + "'");
    index_.emplace(label.name, labels_.size());
    rules_.emplace(label.name, side);
    labels_.push_back(std::move(label));
  }
  for (std::string_view name : {kCompoundRoot, kGlobalRelation}) {
    index_.emplace(std::string(name), labels_.size());
    labels_.push_back(Label{std::string(name), LabelKind::kStructural});
  }
}

std::optional<std::size_t> LabelInventory::index_of(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t LabelInventory::require_index(std::string_view name) const {
  auto index = index_of(name);
  if (!index) throw Error("unknown label '" + std::string(name) + "'");
  return *index;
}

HeadSide LabelInventory::rule(std::string_view name) const {
  auto it = rules_.find(std::string(name));
  if (it == rules_.end()) throw Error("no head rule for label '" + std::string(name) + "'");
  return it->second;
}

std::string LabelInventory::to_text() const {
  std::string out;
  for (std::size_t i = 0; i < n_span_labels(); ++i) {
    out += labels_[i].name;
    out += '\t';
    out += head_side_name(rules_.at(labels_[i].name));
    out += '\n';
  }
  return out;
}

LabelInventory parse_label_inventory(std::string_view text, LabelMode mode) {
  std::vector<std::pair<Label, HeadSide>> entries;
  const LabelKind kind = mode == LabelMode::kCoarse ? LabelKind::kCoarse : LabelKind::kFine;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t next = text.find('\n', pos);
    if (next == std::string_view::npos) next = text.size();
    std::string_view line = trim(text.substr(pos, next - pos));
    pos = next + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    auto fields = split_whitespace(line);
    HeadSide side = HeadSide::kRight;
    if (fields.size() > 2) {
      throw Error("line " + std::to_string(line_no) + ": malformed head-rule column");
    }
    if (fields.size() == 2) {
      if (fields[1] == "left") {
        side = HeadSide::kLeft;
      } else if (fields[1] == "right") {
        side = HeadSide::kRight;
      } else {
        throw Error("line " + std::to_string(line_no) + ": malformed head-rule column '" +
                    fields[1] + "'");
      }
    }
    for (const auto& [existing, unused] : entries) {
      if (existing.name == fields[0]) {
        throw Error("line " + std::to_string(line_no) + ": duplicate label '" + fields[0] + "'");
      }
    }
    entries.push_back({Label{fields[0], kind}, side});
  }
  if (entries.empty()) throw Error("empty inventory");
  if (mode == LabelMode::kCoarse) {
    std::set<std::string> expected(std::begin(kCoarseLabels), std::end(kCoarseLabels));
    std::set<std::string> got;
    for (const auto& entry : entries) got.insert(entry.first.name);
    if (got != expected) {
      throw Error(
          "coarse inventory must contain exactly Avyayībhāva, Bahuvrīhi, Tatpuruṣa, Dvandva");
    }
  }
  return LabelInventory(std::move(entries));
}

LabelInventory load_label_inventory(const std::filesystem::path& path, LabelMode mode) {
  return parse_label_inventory(read_file(path), mode);
}

void save_label_inventory(const LabelInventory& inventory, const std::filesystem::path& path) {
  write_file(path, inventory.to_text());
}

Sentence::Sentence(std::string id, std::vector<Token> tokens, std::vector<Compound> compounds,
                   std::string source_id, std::size_t source_offset)
    : id_(std::move(id)),
      tokens_(std::move(tokens)),
      compounds_(std::move(compounds)),
      source_id_(source_id.empty() ? id_ : std::move(source_id)),
      source_offset_(source_offset) {
  std::vector<int> owner(tokens_.size(), -1);
  for (std::size_t c = 0; c < compounds_.size(); ++c) {
    const Compound& compound = compounds_[c];
    if (compound.token_end < compound.token_start || compound.token_end >= tokens_.size()) {
      throw Error("sentence " + id_ + ": compound " + compound.id + " has an invalid token range");
    }
    if (compound.n_components() < 2) {
      throw Error("sentence " + id_ + ": compound " + compound.id +
                  " has fewer than two components");
    }
    for (std::size_t t = compound.token_start; t <= compound.token_end; ++t) {
      if (owner[t] != -1) {
        throw Error("sentence " + id_ + ": compounds " + compounds_[owner[t]].id + " and " +
                    compound.id + " overlap");
      }
      owner[t] = static_cast<int>(c);
    }
    if (compound.gold_tree && !compound.gold_tree->empty() &&
        (compound.gold_tree->first_leaf() != 1 ||
         compound.gold_tree->last_leaf() != static_cast<int>(compound.n_components()))) {
      throw Error("sentence " + id_ + ": tree of compound " + compound.id +
                  " does not cover its components");
    }
  }
  for (std::size_t t = 0; t < tokens_.size(); ++t) {
    const Token& token = tokens_[t];
    if (token.is_component != token.compound_id.has_value() ||
        token.is_component != token.component_index.has_value()) {
      throw Error("sentence " + id_ + ": token " + std::to_string(t + 1) +
                  " has inconsistent compound annotation");
    }
    if (owner[t] == -1) {
      if (token.is_component) {
        throw Error("sentence " + id_ + ": token " + std::to_string(t + 1) +
                    " is marked as a component outside any compound");
      }
      continue;
    }
    const Compound& compound = compounds_[owner[t]];
    if (!token.is_component || *token.compound_id != compound.id ||
        *token.component_index != static_cast<int>(t - compound.token_start + 1)) {
      throw Error("sentence " + id_ + ": token " + std::to_string(t + 1) +
                  " disagrees with compound " + compound.id);
    }
  }
}

Sentence Sentence::compound_sentence(std::size_t c) const {
  const Compound& compound = compounds_.at(c);
  std::vector<Token> tokens(tokens_.begin() + static_cast<std::ptrdiff_t>(compound.token_start),
                            tokens_.begin() + static_cast<std::ptrdiff_t>(compound.token_end) + 1);
  Compound local = compound;
  local.token_start = 0;
  local.token_end = compound.n_components() - 1;
  return Sentence(compound.id, std::move(tokens), {std::move(local)}, source_id_,
                  source_offset_ + compound.token_start);
}

Sentence Sentence::with_trees(const std::vector<NestingTree>& trees) const {
  if (trees.size() != compounds_.size()) {
    throw Error("sentence " + id_ + ": expected " + std::to_string(compounds_.size()) + " trees");
  }
  std::vector<Compound> compounds = compounds_;
  for (std::size_t c = 0; c < compounds.size(); ++c) compounds[c].gold_tree = trees[c];
  return Sentence(id_, tokens_, std::move(compounds), source_id_, source_offset_);
}

std::vector<int> Sentence::compound_of_token() const {
  std::vector<int> owner(tokens_.size(), -1);
  for (std::size_t c = 0; c < compounds_.size(); ++c) {
    for (std::size_t t = compounds_[c].token_start; t <= compounds_[c].token_end; ++t) {
      owner[t] = static_cast<int>(c);
    }
  }
  return owner;
}

LabelInventory collect_labels_from_data(const std::vector<Sentence>& sentences) {
  std::set<std::string> names;
  for (const auto& sentence : sentences) {
    for (const auto& compound : sentence.compounds()) {
      if (compound.gold_tree) collect_tree_labels(*compound.gold_tree, names);
    }
  }
  std::vector<std::pair<Label, HeadSide>> entries;
  for (const auto& name : names) {
    entries.push_back({Label{name, LabelKind::kFine}, HeadSide::kRight});
  }
  return LabelInventory(std::move(entries));
}

void ModelConfig::set(std::string_view key, std::string_view value) {
  if (key == "word_dim") word_dim = parse_number<int>(key, value);
  else if (key == "char_dim") char_dim = parse_number<int>(key, value);
  else if (key == "char_feature_dim") char_feature_dim = parse_number<int>(key, value);
  else if (key == "span_dim") span_dim = parse_number<int>(key, value);
  else if (key == "lstm_hidden") lstm_hidden = parse_number<int>(key, value);
  else if (key == "lstm_layers") lstm_layers = parse_number<int>(key, value);
  else if (key == "arc_mlp_dim") arc_mlp_dim = parse_number<int>(key, value);
  else if (key == "label_mlp_dim") label_mlp_dim = parse_number<int>(key, value);
  else if (key == "dropout") dropout = parse_real(key, value);
  else if (key == "learning_rate") learning_rate = parse_real(key, value);
  else if (key == "clip_norm") clip_norm = parse_real(key, value);
  else if (key == "batch_size") batch_size = parse_number<int>(key, value);
  else if (key == "epochs") epochs = parse_number<int>(key, value);
  else if (key == "min_count") min_count = parse_number<int>(key, value);
  else if (key == "use_span_encoding") use_span_encoding = parse_bool(value);
  else if (key == "use_pretrained_vectors") use_pretrained_vectors = parse_bool(value);
  else if (key == "use_contextual_vectors") use_contextual_vectors = parse_bool(value);
  else if (key == "use_context") use_context = parse_bool(value);
  else if (key == "contextual_dim") contextual_dim = parse_number<int>(key, value);
  else if (key == "seed") seed = parse_number<std::uint64_t>(key, value);
  else throw Error("unknown config key '" + std::string(key) + "'");
}

void ModelConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v <= 0) throw Error(std::string(name) + " must be positive");
  };
  positive(word_dim, "word_dim");
  positive(char_dim, "char_dim");
  positive(char_feature_dim, "char_feature_dim");
  positive(span_dim, "span_dim");
  positive(lstm_hidden, "lstm_hidden");
  positive(lstm_layers, "lstm_layers");
  positive(arc_mlp_dim, "arc_mlp_dim");
  positive(label_mlp_dim, "label_mlp_dim");
  positive(batch_size, "batch_size");
  positive(min_count, "min_count");
  if (epochs < 0) throw Error("epochs must be non-negative");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw Error("dropout must lie in [0, 1)");
  if (!(learning_rate > 0.0)) throw Error("learning_rate must be positive");
  if (!(clip_norm > 0.0)) throw Error("clip_norm must be positive");
}

std::string ModelConfig::to_text() const {
  std::ostringstream os;
  auto b = [](bool v) { return v ? "true" : "false"; };
  os << "word_dim=" << word_dim << '\n'
     << "char_dim=" << char_dim << '\n'
     << "char_feature_dim=" << char_feature_dim << '\n'
     << "span_dim=" << span_dim << '\n'
     << "lstm_hidden=" << lstm_hidden << '\n'
     << "lstm_layers=" << lstm_layers << '\n'
     << "arc_mlp_dim=" << arc_mlp_dim << '\n'
     << "label_mlp_dim=" << label_mlp_dim << '\n'
     << "dropout=" << format_real(dropout) << '\n'
     << "learning_rate=" << format_real(learning_rate) << '\n'
     << "clip_norm=" << format_real(clip_norm) << '\n'
     << "batch_size=" << batch_size << '\n'
     << "epochs=" << epochs << '\n'
     << "min_count=" << min_count << '\n'
     << "use_span_encoding=" << b(use_span_encoding) << '\n'
     << "use_pretrained_vectors=" << b(use_pretrained_vectors) << '\n'
     << "use_contextual_vectors=" << b(use_contextual_vectors) << '\n'
     << "use_context=" << b(use_context) << '\n'
     << "contextual_dim=" << contextual_dim << '\n'
     << "seed=" << seed << '\n';
  return os.str();
}

ModelConfig ModelConfig::from_text(std::string_view text) {
  ModelConfig config;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos <= text.size()) {
    std::size_t next = text.find('\n', pos);
    if (next == std::string_view::npos) next = text.size();
    std::string_view line = trim(text.substr(pos, next - pos));
    pos = next + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error("config line " + std::to_string(line_no) + ": expected key=value");
    }
    config.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return config;
}

ModelConfig ModelConfig::load(const std::filesystem::path& path) {
  return from_text(read_file(path));
}

std::u32string decode_utf8(std::string_view text) {
  std::u32string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size();) {
    auto lead = static_cast<unsigned char>(text[i]);
    int extra = 0;
    char32_t cp = 0;
    if (lead < 0x80) {
      cp = lead;
    } else if ((lead & 0xE0) == 0xC0) {
      cp = lead & 0x1F;
      extra = 1;
    } else if ((lead & 0xF0) == 0xE0) {
      cp = lead & 0x0F;
      extra = 2;
    } else if ((lead & 0xF8) == 0xF0) {
      cp = lead & 0x07;
      extra = 3;
    } else {
      throw Error("invalid UTF-8 lead byte");
    }
    if (i + extra >= text.size() && extra > 0) throw Error("truncated UTF-8 sequence");
    for (int k = 1; k <= extra; ++k) {
      auto byte = static_cast<unsigned char>(text[i + k]);
      if ((byte & 0xC0) != 0x80) throw Error("invalid UTF-8 continuation byte");
      cp = (cp << 6) | (byte & 0x3F);
    }
    out.push_back(cp);
    i += extra + 1;
  }
  return out;
}

std::string encode_utf8(char32_t cp) {
  std::string out;
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const std::filesystem::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  auto is_space = [](char c) {
    return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\v' || c == '\f';
  };
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i > start) out.emplace_back(text.substr(start, i - start));
  }
  return out;
}

std::string_view trim(std::string_view text) {
  const char* ws = " \t\r\n\v\f";
  auto first = text.find_first_not_of(ws);
  if (first == std::string_view::npos) return {};
  auto last = text.find_last_not_of(ws);
  return text.substr(first, last - first + 1);
}

}  // namespace necti
