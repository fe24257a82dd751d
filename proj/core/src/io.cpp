#include "necti/io.hpp"

#include <charconv>

namespace necti {

namespace {

[[noreturn]] void fail_at(std::size_t line, const std::string& what) {
  throw Error("line " + std::to_string(line) + ": " + what);
}

struct RawRecord {
  std::size_t first_line = 0;
  std::vector<std::pair<std::size_t, std::string_view>> lines;
};

std::vector<RawRecord> split_records(std::string_view text) {
  std::vector<RawRecord> records;
  RawRecord current;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos <= text.size()) {
    std::size_t next = text.find('\n', pos);
    if (next == std::string_view::npos) next = text.size();
    std::string_view line = text.substr(pos, next - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++line_no;
    if (trim(line).empty()) {
      if (!current.lines.empty()) records.push_back(std::move(current));
      current = {};
    } else {
      if (current.lines.empty()) current.first_line = line_no;
      current.lines.emplace_back(line_no, trim(line));
    }
    pos = next + 1;
  }
  if (!current.lines.empty()) records.push_back(std::move(current));
  return records;
}

Sentence parse_record(const RawRecord& record, std::size_t record_no) {
  const std::string id = std::to_string(record_no);
  const std::size_t line_no = record.lines[0].first;
  std::vector<Token> tokens;
  std::vector<Compound> compounds;
  std::vector<std::vector<std::string>> surfaces;
  for (const auto& word : split_whitespace(record.lines[0].second)) {
    const bool opens = word.front() == '<';
    const bool closes = word.back() == '>';
    if (!opens && !closes && word.find_first_of("<>") == std::string::npos) {
      tokens.push_back({word, false, std::nullopt, std::nullopt});
      continue;
    }
    if (!opens || !closes || word.size() < 2 ||
        word.find_first_of("<>", 1) != word.size() - 1) {
      fail_at(line_no, "unbalanced brackets in '" + word + "'");
    }
    std::vector<std::string> parts;
    std::string_view inner(word.data() + 1, word.size() - 2);
    std::size_t start = 0;
    while (true) {
      std::size_t dash = inner.find('-', start);
      std::string_view part = inner.substr(start, dash == std::string_view::npos ? dash : dash - start);
      if (part.empty()) fail_at(line_no, "empty component in '" + word + "'");
      parts.emplace_back(part);
      if (dash == std::string_view::npos) break;
      start = dash + 1;
    }
    if (parts.size() < 2) fail_at(line_no, "compound '" + word + "' has fewer than two components");
    Compound compound;
    compound.id = id + "." + std::to_string(compounds.size() + 1);
    compound.token_start = tokens.size();
    for (std::size_t i = 0; i < parts.size(); ++i) {
      tokens.push_back({parts[i], true, compound.id, static_cast<int>(i + 1)});
    }
    compound.token_end = tokens.size() - 1;
    compounds.push_back(std::move(compound));
    surfaces.push_back(std::move(parts));
  }
  if (tokens.empty()) fail_at(line_no, "empty sentence");

  const std::size_t n_annotations = record.lines.size() - 1;
  if (n_annotations != 0 && n_annotations != compounds.size()) {
    fail_at(record.lines.back().first, "record has " + std::to_string(compounds.size()) +
                                           " compounds but " + std::to_string(n_annotations) +
                                           " annotation lines");
  }
  for (std::size_t c = 0; c < n_annotations; ++c) {
    const auto& [ann_line, text] = record.lines[c + 1];
    BracketParse parsed;
    try {
      parsed = parse_brackets(text);
    } catch (const Error& e) {
      fail_at(ann_line, e.what());
    }
    if (parsed.surfaces.size() != surfaces[c].size()) {
      fail_at(ann_line, "annotation has " + std::to_string(parsed.surfaces.size()) +
                            " components but compound " + compounds[c].id + " has " +
                            std::to_string(surfaces[c].size()));
    }
    if (parsed.surfaces != surfaces[c]) {
      fail_at(ann_line, "annotation components differ from compound " + compounds[c].id);
    }
    for (const auto& span : tree_to_spans(parsed.tree)) {
      if (!is_valid_label_name(span.label) || is_structural_label(span.label)) {
        fail_at(ann_line, "invalid label '" + span.label + "'");
      }
    }
    compounds[c].gold_tree = parsed.tree;
  }
  try {
    return Sentence(id, std::move(tokens), std::move(compounds));
  } catch (const Error& e) {
    fail_at(line_no, e.what());
  }
}

}  // namespace

std::vector<Sentence> parse_corpus_text(std::string_view text, ContextMode mode) {
  std::vector<Sentence> out;
  std::size_t record_no = 0;
  for (const auto& record : split_records(text)) {
    Sentence sentence = parse_record(record, ++record_no);
    if (mode == ContextMode::kWithContext) {
      out.push_back(std::move(sentence));
    } else {
      for (std::size_t c = 0; c < sentence.compounds().size(); ++c) {
        out.push_back(sentence.compound_sentence(c));
      }
    }
  }
  return out;
}

std::vector<Sentence> parse_corpus(const std::filesystem::path& path, ContextMode mode) {
  try {
    return parse_corpus_text(read_file(path), mode);
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

std::string render_corpus(const std::vector<Sentence>& sentences) {
  std::string out;
  for (const auto& sentence : sentences) {
    if (!out.empty()) out += "\n";
    const auto owner = sentence.compound_of_token();
    const auto& tokens = sentence.tokens();
    std::string line;
    for (std::size_t t = 0; t < tokens.size(); ++t) {
      if (!line.empty()) line += ' ';
      if (owner[t] < 0) {
        line += tokens[t].surface;
        continue;
      }
      const Compound& compound = sentence.compounds()[owner[t]];
      line += '<';
      for (std::size_t k = compound.token_start; k <= compound.token_end; ++k) {
        if (k != compound.token_start) line += '-';
        line += tokens[k].surface;
      }
      line += '>';
      t = compound.token_end;
    }
    out += line + "\n";
    bool annotated = !sentence.compounds().empty();
    for (const auto& compound : sentence.compounds()) annotated = annotated && compound.gold_tree;
    if (!annotated) continue;
    for (const auto& compound : sentence.compounds()) {
      std::vector<std::string> surfaces;
      for (std::size_t t = compound.token_start; t <= compound.token_end; ++t) {
        surfaces.push_back(tokens[t].surface);
      }
      out += compound.gold_tree->render(surfaces) + "\n";
    }
  }
  return out;
}

void write_corpus(const std::vector<Sentence>& sentences, const std::filesystem::path& path) {
  write_file(path, render_corpus(sentences));
}

std::string render_conll(const std::vector<Sentence>& sentences,
                         const std::vector<DependencyGraph>& graphs) {
  if (sentences.size() != graphs.size()) throw Error("one graph per sentence is required");
  std::string out;
  for (std::size_t s = 0; s < sentences.size(); ++s) {
    const Sentence& sentence = sentences[s];
    const DependencyGraph& graph = graphs[s];
    auto violations = validate_graph(graph, sentence);
    if (!violations.empty()) {
      throw Error("sentence " + sentence.id() + ": invalid graph: " + violations.front());
    }
    if (s != 0) out += "\n";
    out += "# sent_id = " + sentence.id() + "\n";
    if (sentence.source_id() != sentence.id() || sentence.source_offset() != 0) {
      out += "# source = " + sentence.source_id() + " " + std::to_string(sentence.source_offset()) +
             "\n";
    }
    for (std::size_t t = 0; t < sentence.size(); ++t) {
      const Token& token = sentence.tokens()[t];
      const Arc& arc = graph.arcs[t + 1];
      out += std::to_string(t + 1) + "\t" + token.surface + "\t" + std::to_string(arc.head) + "\t" +
             arc.label + "\t" + (token.compound_id ? *token.compound_id : "_") + "\n";
    }
  }
  return out;
}

void write_conll(const std::vector<Sentence>& sentences, const std::vector<DependencyGraph>& graphs,
                 const std::filesystem::path& path) {
  write_file(path, render_conll(sentences, graphs));
}

std::vector<ConllSentence> parse_conll(std::string_view text) {
  std::vector<ConllSentence> out;
  struct Row {
    std::string form;
    int head;
    std::string label;
    std::string compound;
  };
  std::string id;
  std::string source_id;
  std::size_t source_offset = 0;
  std::vector<Row> rows;
  std::size_t first_line = 0;

  auto flush = [&](std::size_t line_no) {
    if (rows.empty()) {
      if (!id.empty()) fail_at(line_no, "sentence " + id + " has no tokens");
      return;
    }
    std::vector<Token> tokens;
    std::vector<Compound> compounds;
    for (std::size_t t = 0; t < rows.size(); ++t) {
      const Row& row = rows[t];
      if (row.compound == "_") {
        tokens.push_back({row.form, false, std::nullopt, std::nullopt});
        continue;
      }
      if (compounds.empty() || compounds.back().id != row.compound ||
          compounds.back().token_end + 1 != t) {
        for (const auto& c : compounds) {
          if (c.id == row.compound) fail_at(first_line, "compound " + row.compound + " is not contiguous");
        }
        compounds.push_back({row.compound, t, t, std::nullopt});
      } else {
        compounds.back().token_end = t;
      }
      tokens.push_back({row.form, true, row.compound,
                        static_cast<int>(t - compounds.back().token_start + 1)});
    }
    DependencyGraph graph(rows.size() + 1);
    for (std::size_t t = 0; t < rows.size(); ++t) {
      if (rows[t].head < 0 || static_cast<std::size_t>(rows[t].head) > rows.size()) {
        fail_at(first_line, "head out of range for token " + std::to_string(t + 1));
      }
      graph.arcs[t + 1] = {rows[t].head, rows[t].label};
    }
    try {
      Sentence sentence(id.empty() ? std::to_string(out.size() + 1) : id, std::move(tokens),
                        std::move(compounds), source_id, source_offset);
      out.push_back({std::move(sentence), std::move(graph)});
    } catch (const Error& e) {
      fail_at(first_line, e.what());
    }
    id.clear();
    source_id.clear();
    source_offset = 0;
    rows.clear();
  };

  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos <= text.size()) {
    std::size_t next = text.find('\n', pos);
    if (next == std::string_view::npos) next = text.size();
    std::string_view line = text.substr(pos, next - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos = next + 1;
    ++line_no;
    if (trim(line).empty()) {
      flush(line_no);
      continue;
    }
    if (line.front() == '#') {
      if (rows.empty() && first_line == 0) first_line = line_no;
      auto fields = split_whitespace(line.substr(1));
      if (fields.size() == 3 && fields[0] == "sent_id" && fields[1] == "=") {
        id = fields[2];
      } else if (fields.size() == 4 && fields[0] == "source" && fields[1] == "=") {
        source_id = fields[2];
        try {
          source_offset = std::stoul(fields[3]);
        } catch (const std::exception&) {
          fail_at(line_no, "invalid source offset");
        }
      }
      continue;
    }
    if (rows.empty()) first_line = line_no;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      std::size_t tab = line.find('\t', start);
      fields.emplace_back(line.substr(start, tab == std::string_view::npos ? tab : tab - start));
      if (tab == std::string_view::npos) break;
      start = tab + 1;
    }
    if (fields.size() != 5) fail_at(line_no, "expected 5 tab-separated columns");
    int token_id = 0;
    int head = 0;
    auto parse_int = [&](const std::string& s, int& v) {
      auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      return ec == std::errc() && ptr == s.data() + s.size();
    };
    if (!parse_int(fields[0], token_id) || token_id != static_cast<int>(rows.size() + 1)) {
      fail_at(line_no, "expected token id " + std::to_string(rows.size() + 1));
    }
    if (!parse_int(fields[2], head)) fail_at(line_no, "invalid head '" + fields[2] + "'");
    rows.push_back({fields[1], head, fields[3], fields[4]});
  }
  flush(line_no);
  return out;
}

Sentence attach_trees(const ConllSentence& conll, const HeadRules& rules) {
  std::vector<NestingTree> trees;
  for (const auto& compound : conll.sentence.compounds()) {
    trees.push_back(dependency_to_tree(compound_arcs(conll.graph, compound), rules, compound.offset()));
  }
  return conll.sentence.with_trees(trees);
}

std::string DatasetStats::to_csv() const {
  std::string out = "kind,key,value\n";
  out += "records,," + std::to_string(n_records) + "\n";
  out += "tokens,," + std::to_string(n_tokens) + "\n";
  out += "compounds,," + std::to_string(n_compounds) + "\n";
  for (const auto& [n, count] : components) {
    out += "components," + std::to_string(n) + "," + std::to_string(count) + "\n";
  }
  for (const auto& [label, count] : labels) {
    out += "label," + label + "," + std::to_string(count) + "\n";
  }
  return out;
}

DatasetStats corpus_stats(const std::vector<Sentence>& sentences) {
  DatasetStats stats;
  stats.n_records = sentences.size();
  for (const auto& sentence : sentences) {
    stats.n_tokens += sentence.size();
    for (const auto& compound : sentence.compounds()) {
      ++stats.n_compounds;
      ++stats.components[static_cast<int>(compound.n_components())];
      if (!compound.gold_tree) continue;
      for (const auto& span : tree_to_spans(*compound.gold_tree)) ++stats.labels[span.label];
    }
  }
  return stats;
}

}  // namespace necti
