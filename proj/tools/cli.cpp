#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <optional>
#include <sstream>

#include "necti/core.hpp"
#include "necti/encoder.hpp"
#include "necti/eval.hpp"
#include "necti/io.hpp"
#include "necti/parser.hpp"
#include "necti/treeops.hpp"

namespace necti::cli {

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string one_line(std::string text) {
  std::replace(text.begin(), text.end(), '\n', ' ');
  while (!text.empty() && text.back() == ' ') text.pop_back();
  return text;
}

std::string fixed(double value, int digits = 6) {
  char buffer[64];
  std::snprintf(buffer, sizeof buffer, "%.*f", digits, value);
  return buffer;
}

LabelMode parse_mode(const std::string& mode) {
  return mode == "coarse" ? LabelMode::kCoarse : LabelMode::kFine;
}

// Labels from a file, or those observed in `data` checked against `mode`.
LabelInventory resolve_inventory(const std::string& labels_path, const std::string& mode,
                                 const std::vector<Sentence>& data) {
  if (!labels_path.empty()) return load_label_inventory(labels_path, parse_mode(mode));
  LabelInventory collected = collect_labels_from_data(data);
  if (parse_mode(mode) == LabelMode::kFine) return collected;
  return parse_label_inventory(collected.to_text(), LabelMode::kCoarse);
}

void emit(const std::string& text, const std::string& path, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
  } else {
    write_file(path, text);
  }
}

std::vector<CompoundSpans> predicted_spans(const std::vector<Sentence>& sentences,
                                           const std::vector<ParseResult>& results) {
  std::vector<CompoundSpans> out;
  for (std::size_t s = 0; s < sentences.size(); ++s) {
    const auto& compounds = sentences[s].compounds();
    for (std::size_t c = 0; c < compounds.size(); ++c) {
      out.push_back({compounds[c].id, static_cast<int>(compounds[c].n_components()),
                     results[s].spans[c]});
    }
  }
  return out;
}

std::string render_spans(const std::vector<Sentence>& sentences) {
  std::string out;
  for (const auto& sentence : sentences) {
    for (const auto& compound : sentence.compounds()) {
      for (const auto& span : tree_to_spans(*compound.gold_tree)) {
        out += compound.id + "\t" + std::to_string(span.start) + "\t" + std::to_string(span.end) +
               "\t" + span.label + "\n";
      }
    }
  }
  return out;
}

std::optional<ContextualVectors> load_contextual(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return ContextualVectors::load(path);
}

struct TrainArgs {
  std::string data, dev, labels, mode = "fine", config, out, log, vectors, contextual,
      dev_contextual;
  std::vector<std::string> set;
  bool no_context = false, no_span_encoding = false, no_pretrained = false;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  ModelConfig config = a.config.empty() ? ModelConfig{} : ModelConfig::load(a.config);
  for (const auto& kv : a.set) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
    config.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (a.no_context) config.use_context = false;
  if (a.no_span_encoding) config.use_span_encoding = false;
  if (a.no_pretrained) config.use_pretrained_vectors = false;
  if (a.seed) config.seed = *a.seed;
  if (a.epochs) config.epochs = *a.epochs;

  auto train_set = parse_corpus(a.data);
  std::vector<Sentence> dev_set;
  if (!a.dev.empty()) dev_set = parse_corpus(a.dev);
  LabelInventory inventory = resolve_inventory(a.labels, a.mode, train_set);

  std::optional<PretrainedVectors> pretrained;
  if (!a.vectors.empty() && config.use_pretrained_vectors) {
    pretrained = PretrainedVectors::load(a.vectors);
    config.word_dim = pretrained->dim;
  }
  auto contextual = load_contextual(a.contextual);
  auto dev_contextual = load_contextual(a.dev_contextual);
  if (contextual) {
    config.use_contextual_vectors = true;
    config.contextual_dim = contextual->dim();
  }

  TrainOptions options;
  options.pretrained = pretrained ? &*pretrained : nullptr;
  options.contextual = contextual ? &*contextual : nullptr;
  options.dev_contextual = dev_contextual ? &*dev_contextual : nullptr;
  options.on_epoch = [&](int epoch, const TrainStats& stats) {
    out << "epoch " << epoch + 1 << " loss " << fixed(stats.epoch_loss.back());
    if (!stats.dev_lss.empty()) {
      out << " dev_uss " << fixed(stats.dev_uss.back()) << " dev_lss "
          << fixed(stats.dev_lss.back()) << " dev_em " << fixed(stats.dev_em.back());
    }
    out << "\n";
  };
  TrainResult result = train(train_set, dev_set, config, inventory, options);
  result.model.save(a.out);
  if (!a.log.empty()) write_file(a.log, result.stats.to_text());
  out << "best_epoch " << result.stats.best_epoch + 1 << "\n";
  if (!result.stats.dev_lss.empty()) {
    out << "best_dev_lss " << fixed(result.stats.dev_lss[result.stats.best_epoch]) << "\n";
  }
  out << "model " << a.out << "\n";
  return 0;
}

struct ParseArgs {
  std::string model, input, output, format = "brackets", contextual;
  unsigned threads = 1;
};

int cmd_parse(const ParseArgs& a, std::ostream& out) {
  Model model = Model::load(a.model);
  auto sentences = parse_corpus(a.input);
  auto contextual = load_contextual(a.contextual);
  auto results = model.parse_all(sentences, contextual ? &*contextual : nullptr, a.threads);
  std::vector<Sentence> parsed;
  std::vector<DependencyGraph> graphs;
  for (std::size_t s = 0; s < sentences.size(); ++s) {
    parsed.push_back(sentences[s].with_trees(results[s].trees));
    graphs.push_back(results[s].graph);
  }
  std::string text;
  if (a.format == "brackets") {
    text = render_corpus(parsed);
  } else if (a.format == "conll") {
    text = render_conll(parsed, graphs);
  } else {
    text = render_spans(parsed);
  }
  emit(text, a.output, out);
  return 0;
}

struct EvalArgs {
  std::string gold, pred, pred_format = "brackets", model, data, average = "micro", buckets, tsv,
      contextual, labels, mode = "fine";
  unsigned threads = 1;
};

std::vector<Sentence> load_predictions(const EvalArgs& a, const std::vector<Sentence>& gold) {
  if (a.pred_format == "brackets") return parse_corpus(a.pred);
  HeadRules rules;
  if (!a.labels.empty()) {
    rules = load_label_inventory(a.labels, parse_mode(a.mode)).head_rules();
  } else {
    rules = collect_labels_from_data(gold).head_rules();
  }
  std::vector<Sentence> out;
  for (const auto& conll : parse_conll(read_file(a.pred))) out.push_back(attach_trees(conll, rules));
  return out;
}

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const bool from_files = !a.gold.empty() || !a.pred.empty();
  const bool from_model = !a.model.empty() || !a.data.empty();
  if (from_files == from_model) throw UsageError("give either --gold and --pred, or --model and --data");
  if (from_files && (a.gold.empty() || a.pred.empty())) {
    throw UsageError("--gold and --pred must be given together");
  }
  if (from_model && (a.model.empty() || a.data.empty())) {
    throw UsageError("--model and --data must be given together");
  }
  const Average average = a.average == "macro" ? Average::kMacro : Average::kMicro;
  std::vector<CompoundSpans> gold;
  std::vector<CompoundSpans> pred;
  if (from_files) {
    auto gold_sentences = parse_corpus(a.gold);
    gold = spans_from_sentences(gold_sentences);
    pred = spans_from_sentences(load_predictions(a, gold_sentences));
  } else {
    Model model = Model::load(a.model);
    auto sentences = parse_corpus(a.data);
    auto contextual = load_contextual(a.contextual);
    gold = spans_from_sentences(sentences);
    pred = predicted_spans(sentences,
                           model.parse_all(sentences, contextual ? &*contextual : nullptr, a.threads));
  }
  EvalReport report = evaluate(pred, gold, average);
  out << report.to_table();
  if (!a.tsv.empty()) write_file(a.tsv, report.to_tsv());
  if (!a.buckets.empty()) write_file(a.buckets, report.buckets_csv());
  return 0;
}

struct EnumerateArgs {
  std::string components, label;
  std::optional<int> n;
  bool count_only = false;
};

int cmd_enumerate(const EnumerateArgs& a, std::ostream& out) {
  std::vector<std::string> surfaces;
  int n = 0;
  if (!a.components.empty()) {
    std::stringstream ss(a.components);
    std::string part;
    while (std::getline(ss, part, ',')) {
      if (part.empty()) throw UsageError("empty component in --components");
      surfaces.push_back(part);
    }
    n = static_cast<int>(surfaces.size());
  } else if (a.n) {
    n = *a.n;
    for (int i = 1; i <= n; ++i) surfaces.push_back(std::to_string(i));
  } else {
    throw UsageError("give --components or --n");
  }
  if (n < 2) throw UsageError("a compound needs at least 2 components");
  if (!a.label.empty() && (!is_valid_label_name(a.label) || is_structural_label(a.label))) {
    throw UsageError("invalid label '" + a.label + "'");
  }
  if (a.count_only) {
    out << catalan(static_cast<unsigned>(n - 1)) << "\n";
    return 0;
  }
  ParseEnumerator enumerator(n, a.label);
  while (auto tree = enumerator.next()) out << tree->render(surfaces) << "\n";
  return 0;
}

struct ConvertArgs {
  std::string from, to, rules, mode = "fine", input, output;
};

int cmd_convert(const ConvertArgs& a, std::ostream& out) {
  std::vector<Sentence> sentences;
  if (a.from == "brackets") {
    sentences = parse_corpus(a.input);
  }
  HeadRules rules;
  if (!a.rules.empty()) {
    rules = load_label_inventory(a.rules, parse_mode(a.mode)).head_rules();
  } else if (a.from == "brackets") {
    rules = collect_labels_from_data(sentences).head_rules();
  }
  std::vector<ConllSentence> conll;
  if (a.from == "conll") {
    conll = parse_conll(read_file(a.input));
    if (a.rules.empty()) {
      // Without a rule file every observed label defaults to right-headed.
      for (const auto& c : conll) {
        for (const auto& arc : c.graph.arcs) {
          if (!arc.label.empty() && !is_structural_label(arc.label)) rules.emplace(arc.label, HeadSide::kRight);
        }
      }
    }
    for (const auto& c : conll) sentences.push_back(attach_trees(c, rules));
  }
  for (const auto& sentence : sentences) {
    for (const auto& compound : sentence.compounds()) {
      if (!compound.gold_tree) throw Error("compound " + compound.id + " has no annotation");
    }
  }
  std::string text;
  if (a.to == "brackets") {
    text = render_corpus(sentences);
  } else if (a.to == "spans") {
    text = render_spans(sentences);
  } else {
    std::vector<DependencyGraph> graphs;
    for (const auto& sentence : sentences) graphs.push_back(graph_from_trees(sentence, rules));
    text = render_conll(sentences, graphs);
  }
  emit(text, a.output, out);
  return 0;
}

struct StatsArgs {
  std::string data, csv;
};

int cmd_stats(const StatsArgs& a, std::ostream& out) {
  DatasetStats stats = corpus_stats(parse_corpus(a.data));
  out << "records\t" << stats.n_records << "\n"
      << "tokens\t" << stats.n_tokens << "\n"
      << "compounds\t" << stats.n_compounds << "\n";
  for (const auto& [n, count] : stats.components) out << "components=" << n << "\t" << count << "\n";
  for (const auto& [label, count] : stats.labels) out << "label=" << label << "\t" << count << "\n";
  if (!a.csv.empty()) write_file(a.csv, stats.to_csv());
  return 0;
}

struct BenchArgs {
  std::string model, data, contextual;
  int passes = 3;
  unsigned threads = 1;
};

int cmd_bench(const BenchArgs& a, std::ostream& out) {
  if (a.passes < 3) throw UsageError("--passes must be at least 3");
  Model model = Model::load(a.model);
  auto sentences = parse_corpus(a.data);
  auto contextual = load_contextual(a.contextual);
  const ContextualVectors* ctx = contextual ? &*contextual : nullptr;
  Throughput result = measure_throughput(
      [&] { model.parse_all(sentences, ctx, a.threads); }, sentences.size(), a.passes);
  const auto [lo, hi] = std::minmax_element(result.passes.begin(), result.passes.end());
  out << "sentences\t" << sentences.size() << "\n"
      << "passes\t" << result.passes.size() << "\n"
      << "median_sentences_per_second\t" << fixed(result.median, 3) << "\n"
      << "min_sentences_per_second\t" << fixed(*lo, 3) << "\n"
      << "max_sentences_per_second\t" << fixed(*hi, 3) << "\n"
      << "relative_spread\t" << fixed((*hi - *lo) / result.median, 4) << "\n";
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Nested compound analysis toolkit", "necti"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for all subcommands");

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Train a parser model");
  train->add_option("--data", train_args.data, "Training corpus")->required()->check(CLI::ExistingFile);
  train->add_option("--dev", train_args.dev, "Development corpus")->check(CLI::ExistingFile);
  train->add_option("--labels", train_args.labels, "Label inventory file")->check(CLI::ExistingFile);
  train->add_option("--mode", train_args.mode, "Label granularity")
      ->check(CLI::IsMember({"coarse", "fine"}));
  train->add_option("--config", train_args.config, "key=value configuration file")
      ->check(CLI::ExistingFile);
  train->add_option("--set", train_args.set, "Configuration override key=value");
  train->add_option("--out", train_args.out, "Model output path")->required();
  train->add_option("--log", train_args.log, "Per-epoch statistics output path");
  train->add_flag("--no-context", train_args.no_context, "Encode each compound on its own");
  train->add_flag("--no-span-encoding", train_args.no_span_encoding, "Drop the span embedding");
  train->add_flag("--no-pretrained", train_args.no_pretrained, "Ignore pretrained word vectors");
  train->add_option("--vectors", train_args.vectors, "Pretrained .vec word vectors")
      ->check(CLI::ExistingFile);
  train->add_option("--contextual", train_args.contextual, "Contextual vectors for --data")
      ->check(CLI::ExistingFile);
  train->add_option("--dev-contextual", train_args.dev_contextual, "Contextual vectors for --dev")
      ->check(CLI::ExistingFile);
  train->add_option("--seed", train_args.seed, "Random seed");
  train->add_option("--epochs", train_args.epochs, "Number of epochs")->check(CLI::NonNegativeNumber);

  ParseArgs parse_args;
  auto* parse = app.add_subcommand("parse", "Parse a corpus with a trained model");
  parse->add_option("--model", parse_args.model, "Model file")->required()->check(CLI::ExistingFile);
  parse->add_option("--input", parse_args.input, "Corpus to parse")->required()->check(CLI::ExistingFile);
  parse->add_option("--output", parse_args.output, "Output path (default: stdout)");
  parse->add_option("--format", parse_args.format, "Output format")
      ->check(CLI::IsMember({"spans", "brackets", "conll"}));
  parse->add_option("--contextual", parse_args.contextual, "Contextual vectors for --input")
      ->check(CLI::ExistingFile);
  parse->add_option("--threads", parse_args.threads, "Worker threads")->check(CLI::PositiveNumber);

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "Score predictions against gold annotations");
  eval->add_option("--gold", eval_args.gold, "Gold corpus")->check(CLI::ExistingFile);
  eval->add_option("--pred", eval_args.pred, "Predicted corpus")->check(CLI::ExistingFile);
  eval->add_option("--pred-format", eval_args.pred_format, "Format of --pred")
      ->check(CLI::IsMember({"brackets", "conll"}));
  eval->add_option("--labels", eval_args.labels, "Label inventory for conll predictions")
      ->check(CLI::ExistingFile);
  eval->add_option("--mode", eval_args.mode, "Label granularity")->check(CLI::IsMember({"coarse", "fine"}));
  eval->add_option("--model", eval_args.model, "Model file")->check(CLI::ExistingFile);
  eval->add_option("--data", eval_args.data, "Annotated corpus to parse and score")
      ->check(CLI::ExistingFile);
  eval->add_option("--contextual", eval_args.contextual, "Contextual vectors for --data")
      ->check(CLI::ExistingFile);
  eval->add_option("--average", eval_args.average, "Span score averaging")
      ->check(CLI::IsMember({"micro", "macro"}));
  eval->add_option("--buckets", eval_args.buckets, "Write per-component-count CSV here");
  eval->add_option("--tsv", eval_args.tsv, "Write key<TAB>value metrics here");
  eval->add_option("--threads", eval_args.threads, "Worker threads")->check(CLI::PositiveNumber);

  EnumerateArgs enumerate_args;
  auto* enumerate = app.add_subcommand("enumerate", "List every bracketing of a compound");
  auto* components_opt =
      enumerate->add_option("--components", enumerate_args.components, "Comma-separated components");
  auto* n_opt = enumerate->add_option("--n", enumerate_args.n, "Number of components");
  components_opt->excludes(n_opt);
  enumerate->add_option("--label", enumerate_args.label, "Label for every internal node");
  enumerate->add_flag("--count-only", enumerate_args.count_only, "Print only the number of bracketings");

  ConvertArgs convert_args;
  auto* convert = app.add_subcommand("convert", "Convert between annotation formats");
  convert->add_option("--from", convert_args.from, "Input format")
      ->required()
      ->check(CLI::IsMember({"brackets", "conll"}));
  convert->add_option("--to", convert_args.to, "Output format")
      ->required()
      ->check(CLI::IsMember({"brackets", "conll", "spans"}));
  convert->add_option("--rules", convert_args.rules, "Label inventory with head rules")
      ->check(CLI::ExistingFile);
  convert->add_option("--mode", convert_args.mode, "Label granularity")
      ->check(CLI::IsMember({"coarse", "fine"}));
  convert->add_option("--input", convert_args.input, "Input file")->required()->check(CLI::ExistingFile);
  convert->add_option("--output", convert_args.output, "Output path (default: stdout)");

  StatsArgs stats_args;
  auto* stats = app.add_subcommand("stats", "Corpus statistics");
  stats->add_option("--data", stats_args.data, "Corpus")->required()->check(CLI::ExistingFile);
  stats->add_option("--csv", stats_args.csv, "Write statistics CSV here");

  BenchArgs bench_args;
  auto* bench = app.add_subcommand("bench", "Measure parsing throughput");
  bench->add_option("--model", bench_args.model, "Model file")->required()->check(CLI::ExistingFile);
  bench->add_option("--data", bench_args.data, "Corpus")->required()->check(CLI::ExistingFile);
  bench->add_option("--contextual", bench_args.contextual, "Contextual vectors for --data")
      ->check(CLI::ExistingFile);
  bench->add_option("--passes", bench_args.passes, "Timed passes (at least 3)");
  bench->add_option("--threads", bench_args.threads, "Worker threads")->check(CLI::PositiveNumber);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << one_line(e.what()) << "\n";
    return 2;
  }

  try {
    if (*train) return cmd_train(train_args, out);
    if (*parse) return cmd_parse(parse_args, out);
    if (*eval) return cmd_eval(eval_args, out);
    if (*enumerate) return cmd_enumerate(enumerate_args, out);
    if (*convert) return cmd_convert(convert_args, out);
    if (*stats) return cmd_stats(stats_args, out);
    if (*bench) return cmd_bench(bench_args, out);
  } catch (const UsageError& e) {
    err << "usage error: " << one_line(e.what()) << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << one_line(e.what()) << "\n";
    return 1;
  }
  return 2;
}

}  // namespace necti::cli
