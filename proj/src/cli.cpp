#include "title_forge/cli.hpp"

#include <algorithm>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "title_forge/checkpoint.hpp"
#include "title_forge/corpus.hpp"
#include "title_forge/decoding.hpp"
#include "title_forge/error.hpp"
#include "title_forge/evaluation.hpp"
#include "title_forge/service.hpp"
#include "title_forge/tokenizer.hpp"
#include "title_forge/training.hpp"

namespace title_forge {

namespace fs = std::filesystem;

void configure_logging() {
  auto logger = spdlog::get("title_forge");
  if (!logger) logger = spdlog::stderr_color_mt("title_forge");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::info);
  if (const char* env = std::getenv("TITLE_FORGE_LOG")) {
    auto level = spdlog::level::from_str(env);
    // from_str maps unknown names to off; only accept an exact "off".
    if (level != spdlog::level::off || std::string_view(env) == "off") spdlog::set_level(level);
  }
}

namespace {

/// Thrown for invalid flag combinations found after parsing.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot read " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

/// An argument naming an existing regular file stands for its contents.
std::string text_or_file(const std::string& arg) {
  std::error_code ec;
  if (!arg.empty() && arg.size() < 4096 && fs::is_regular_file(arg, ec)) return read_file(arg);
  return arg;
}

void require_directory(const fs::path& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw Error(Errc::Io, "corpus directory not found: " + dir.string());
}

std::vector<Language> parse_languages(const std::vector<std::string>& names) {
  if (names.empty()) return {kAllLanguages.begin(), kAllLanguages.end()};
  std::vector<Language> out;
  for (const auto& n : names) {
    auto lang = parse_language(n);
    if (!lang) throw UsageError("unknown language '" + n + "'");
    out.push_back(*lang);
  }
  return out;
}

InputMode parse_mode(const std::string& text) {
  auto mode = parse_input_mode(text);
  if (!mode) throw UsageError("--input-mode must be both, code_only or desc_only");
  return *mode;
}

std::vector<PostTriplet> read_split(const fs::path& dir, Language lang, SplitName split) {
  auto path = split_path(dir, lang, split);
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) throw Error(Errc::Io, "missing split file " + path.string());
  return read_triplets(path);
}

fs::path default_vocab_path(const fs::path& ckpt) { return fs::path(ckpt.string() + ".vocab"); }

// ---- corpus ---------------------------------------------------------------

struct CorpusArgs {
  std::string dump, out;
  std::uint64_t seed = 0;
  std::size_t train_n = 60000, test_n = 5000;
  std::vector<std::string> languages;
};

void run_corpus(const CorpusArgs& a, std::ostream& out) {
  CorpusBuildOptions opts;
  opts.dump = a.dump;
  opts.out_dir = a.out;
  opts.seed = a.seed;
  opts.train_n = a.train_n;
  opts.test_n = a.test_n;
  opts.languages = parse_languages(a.languages);
  auto report = build_corpus(opts);
  out << "rows " << report.dump.rows << ", questions " << report.dump.questions << ", passed rules "
      << report.passed_rules << ", extraction failures " << report.extraction_failures << '\n';
  for (auto lang : opts.languages) {
    auto i = task_index(lang);
    out << language_id(lang) << ": kept " << report.kept[i] << ", train " << report.train[i] << ", validation "
        << report.validation[i] << ", test " << report.test[i] << '\n';
  }
}

// ---- tokenizer ------------------------------------------------------------

struct TokenizerArgs {
  std::string corpus, out;
  std::size_t size = 16000;
  std::vector<std::string> languages;
};

std::vector<std::string> tokenizer_texts(const fs::path& corpus, const std::vector<Language>& langs) {
  std::vector<std::string> texts;
  for (auto lang : langs) {
    texts.emplace_back(task_prefix(lang));
    for (auto& t : read_split(corpus, lang, SplitName::Train)) {
      texts.push_back(std::move(t.description));
      texts.push_back(std::move(t.code));
      texts.push_back(std::move(t.title));
    }
  }
  return texts;
}

void run_tokenizer(const TokenizerArgs& a, std::ostream& out) {
  require_directory(a.corpus);
  auto texts = tokenizer_texts(a.corpus, parse_languages(a.languages));
  auto vocab = train_vocabulary(texts, a.size);
  vocab.save(a.out);
  out << "vocabulary of " << vocab.size() << " pieces written to " << a.out << '\n';
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  std::string corpus, out, config, vocab, history, input_mode;
  std::size_t max_steps = 0;
};

void run_train(const TrainArgs& a, std::ostream& out) {
  require_directory(a.corpus);
  RunConfig run = a.config.empty() ? RunConfig{} : load_run_config(a.config);
  if (!a.input_mode.empty()) run.training.input_mode = parse_mode(a.input_mode);
  if (a.max_steps != 0) run.training.max_steps = a.max_steps;
  run.training.validate();

  std::array<std::vector<PostTriplet>, kNumTasks> train, validation;
  for (auto lang : kAllLanguages) {
    train[task_index(lang)] = read_split(a.corpus, lang, SplitName::Train);
    validation[task_index(lang)] = read_split(a.corpus, lang, SplitName::Validation);
  }

  Vocabulary vocab;
  fs::path vocab_path = a.vocab.empty() ? fs::path(a.corpus) / "vocab.txt" : fs::path(a.vocab);
  std::error_code ec;
  if (fs::is_regular_file(vocab_path, ec)) {
    vocab = Vocabulary::load(vocab_path);
  } else if (!a.vocab.empty()) {
    throw Error(Errc::Io, "vocabulary not found: " + vocab_path.string());
  } else {
    spdlog::info("no vocabulary at {}; learning {} pieces from the training split", vocab_path.string(),
                 run.model.vocab_size);
    vocab = train_vocabulary(tokenizer_texts(a.corpus, {kAllLanguages.begin(), kAllLanguages.end()}),
                             run.model.vocab_size);
  }
  run.model.vocab_size = vocab.size();
  run.model.dropout = run.training.dropout;
  run.model.validate();

  TaskCorpora tasks;
  for (std::size_t t = 0; t < kNumTasks; ++t) {
    tasks[t].train = make_examples(vocab, train[t], run.training.input_mode, run.model);
    tasks[t].validation = make_examples(vocab, validation[t], run.training.input_mode, run.model);
  }

  const fs::path history_path = a.history.empty() ? fs::path(a.out + ".history.jsonl") : fs::path(a.history);
  std::ofstream history(history_path);
  if (!history) throw Error(Errc::Io, "cannot write " + history_path.string());

  Transformer model(run.model, run.training.seed);
  spdlog::info("training {} parameters", model.parameter_count());
  FitHooks hooks;
  hooks.on_step = [&history](const StepRecord& r) {
    history << step_record_line(r) << '\n';
    if (r.step % 50 == 0) spdlog::info("step {} loss {:.4f}", r.step, r.combined);
  };
  auto result = fit(model, tasks, run.training, hooks);

  save_checkpoint(a.out, model);
  vocab.save(default_vocab_path(a.out));
  out << "steps " << result.steps.size() << ", epochs " << result.epochs.size();
  if (result.validated) out << ", best epoch " << result.best_epoch << " (validation " << result.best_validation << ")";
  out << "\ncheckpoint " << a.out << " (" << checkpoint_id(a.out) << ")\n";
}

// ---- evaluate -------------------------------------------------------------

struct EvaluateArgs {
  std::string ckpt, vocab, baseline, corpus, report, input_mode = "both";
  std::size_t beam = 5, limit = 0;
  std::vector<std::string> languages;
};

void run_evaluate(const EvaluateArgs& a, std::ostream& out) {
  if (a.ckpt.empty() == a.baseline.empty()) throw UsageError("give exactly one of --ckpt or --baseline");
  if (!a.baseline.empty() && a.baseline != "bm25") throw UsageError("the only baseline is bm25");
  require_directory(a.corpus);
  const auto mode = parse_mode(a.input_mode);
  const auto langs = parse_languages(a.languages);

  std::optional<Transformer> model;
  std::optional<Vocabulary> vocab;
  if (!a.ckpt.empty()) {
    model.emplace(load_checkpoint(a.ckpt));
    vocab.emplace(Vocabulary::load(a.vocab.empty() ? default_vocab_path(a.ckpt) : fs::path(a.vocab)));
  }

  EvaluationReport report{model ? "model" : "bm25", mode, {}};
  for (auto lang : langs) {
    LanguageTestSet set{lang, read_split(a.corpus, lang, SplitName::Test)};
    if (a.limit != 0 && set.posts.size() > a.limit) set.posts.resize(a.limit);
    EvaluationReport part;
    if (model) {
      ModelTitleGenerator gen(*model, *vocab, BeamConfig{a.beam, model->config().max_decoder_len, 1.0});
      part = evaluate(gen, std::span(&set, 1), mode);
    } else {
      Bm25TitleGenerator gen(Bm25Index::build(read_split(a.corpus, lang, SplitName::Train)));
      part = evaluate(gen, std::span(&set, 1), mode);
    }
    report.languages.push_back(part.languages.front());
  }
  auto jsonl = report_jsonl(report);
  if (!a.report.empty()) {
    std::ofstream file(a.report);
    if (!file) throw Error(Errc::Io, "cannot write " + a.report);
    file << jsonl;
  }
  out << jsonl;
}

// ---- generate -------------------------------------------------------------

struct GenerateArgs {
  std::string ckpt, vocab, lang, desc, code;
  std::size_t beam = 5, num_titles = 3;
};

void run_generate(const GenerateArgs& a, std::ostream& out) {
  auto lang = parse_language(a.lang);
  if (!lang) throw UsageError("unknown language '" + a.lang + "'");
  if (a.beam == 0 || a.num_titles == 0) throw UsageError("--beam and --num-titles must be positive");
  if (a.num_titles > a.beam) throw UsageError("--num-titles must not exceed --beam");
  const auto desc = text_or_file(a.desc);
  const auto code = text_or_file(a.code);

  auto model = load_checkpoint(a.ckpt);
  auto vocab = Vocabulary::load(a.vocab.empty() ? default_vocab_path(a.ckpt) : fs::path(a.vocab));
  auto input = build_model_input(vocab, *lang, desc, code, model.config().max_encoder_len);
  auto hyps = beam_search(model, input, BeamConfig{a.beam, model.config().max_decoder_len, 1.0});
  for (std::size_t i = 0; i < hyps.size() && i < a.num_titles; ++i) out << hypothesis_text(vocab, hyps[i]) << '\n';
}

// ---- serve ----------------------------------------------------------------

struct ServeArgs {
  std::string ckpt, vocab, bind = "127.0.0.1:8080";
  std::size_t beam_default = 5, workers = 0;
};

void run_serve(const ServeArgs& a, std::ostream& out) {
  auto [host, port] = parse_bind_address(a.bind);
  auto model = load_checkpoint(a.ckpt);
  auto vocab = Vocabulary::load(a.vocab.empty() ? default_vocab_path(a.ckpt) : fs::path(a.vocab));

  // Block termination signals before any thread starts so only sigwait sees them.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  TitleService::Options opts;
  opts.limits.default_beam_width = a.beam_default;
  opts.limits.default_num_titles = std::min<std::size_t>(3, a.beam_default);
  opts.max_concurrent_decodes = a.workers;
  TitleService service(opts);
  service.load(std::move(model), std::move(vocab), checkpoint_id(a.ckpt));
  const int bound = service.start(host, port);
  out << "serving on " << host << ":" << bound << std::endl;
  service.warm_up();

  int received = 0;
  sigwait(&signals, &received);
  spdlog::info("signal {} received, shutting down", received);
  service.stop();
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Stack Overflow title generation from code and problem descriptions", "title_forge"};
  app.require_subcommand(1);

  CorpusArgs corpus_args;
  auto* corpus = app.add_subcommand("corpus", "Corpus mining from a Stack Exchange dump");
  corpus->require_subcommand(1);
  auto* corpus_build = corpus->add_subcommand("build", "Mine <description, code, title> triplets from Posts.xml");
  corpus_build->add_option("--dump", corpus_args.dump, "Posts.xml dump")->required();
  corpus_build->add_option("--out", corpus_args.out, "Output directory for <lang>.<split>.jsonl")->required();
  corpus_build->add_option("--seed", corpus_args.seed, "Shuffle seed for the split");
  corpus_build->add_option("--train-n", corpus_args.train_n, "Training posts per language");
  corpus_build->add_option("--test-n", corpus_args.test_n, "Test posts per language");
  corpus_build->add_option("--langs", corpus_args.languages, "Comma-separated languages (default: all four)")
      ->delimiter(',');

  TokenizerArgs tok_args;
  auto* tokenizer = app.add_subcommand("tokenizer", "Learn a BPE vocabulary from the training splits");
  tokenizer->add_option("--corpus", tok_args.corpus, "Corpus directory")->required();
  tokenizer->add_option("--out", tok_args.out, "Vocabulary file to write")->required();
  tokenizer->add_option("--size", tok_args.size, "Target vocabulary size");
  tokenizer->add_option("--langs", tok_args.languages, "Comma-separated languages (default: all four)")
      ->delimiter(',');

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Multi-task training over the four languages");
  train->add_option("--corpus", train_args.corpus, "Corpus directory")->required();
  train->add_option("--out", train_args.out, "Checkpoint to write (vocabulary goes to <out>.vocab)")->required();
  train->add_option("--config", train_args.config, "key=value training and model configuration");
  train->add_option("--vocab", train_args.vocab, "Vocabulary file (default: <corpus>/vocab.txt, learned if absent)");
  train->add_option("--input-mode", train_args.input_mode, "both, code_only or desc_only (overrides the config)");
  train->add_option("--history", train_args.history, "Loss history JSONL (default: <out>.history.jsonl)");
  train->add_option("--max-steps", train_args.max_steps, "Optimizer step budget (overrides the config)");

  EvaluateArgs eval_args;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Rouge-1/2/L of a checkpoint or the BM25 baseline");
  evaluate_cmd->add_option("--ckpt", eval_args.ckpt, "Checkpoint to evaluate");
  evaluate_cmd->add_option("--vocab", eval_args.vocab, "Vocabulary (default: <ckpt>.vocab)");
  evaluate_cmd->add_option("--baseline", eval_args.baseline, "Evaluate a baseline instead (bm25)");
  evaluate_cmd->add_option("--corpus", eval_args.corpus, "Corpus directory")->required();
  evaluate_cmd->add_option("--input-mode", eval_args.input_mode, "both, code_only or desc_only");
  evaluate_cmd->add_option("--report", eval_args.report, "JSONL report to write");
  evaluate_cmd->add_option("--beam", eval_args.beam, "Beam width");
  evaluate_cmd->add_option("--limit", eval_args.limit, "Score at most this many test posts per language");
  evaluate_cmd->add_option("--langs", eval_args.languages, "Comma-separated languages (default: all four)")
      ->delimiter(',');

  GenerateArgs gen_args;
  auto* generate_cmd = app.add_subcommand("generate", "Suggest titles for one post");
  generate_cmd->add_option("--ckpt", gen_args.ckpt, "Checkpoint")->required();
  generate_cmd->add_option("--vocab", gen_args.vocab, "Vocabulary (default: <ckpt>.vocab)");
  generate_cmd->add_option("--lang", gen_args.lang, "java, csharp, python or javascript")->required();
  generate_cmd->add_option("--desc", gen_args.desc, "Problem description, literal text or a file path");
  generate_cmd->add_option("--code", gen_args.code, "Code snippet, literal text or a file path");
  generate_cmd->add_option("--beam", gen_args.beam, "Beam width");
  generate_cmd->add_option("--num-titles", gen_args.num_titles, "Titles to print, best first");

  ServeArgs serve_args;
  auto* serve = app.add_subcommand("serve", "HTTP service: POST /api/generate, GET /api/health");
  serve->add_option("--ckpt", serve_args.ckpt, "Checkpoint")->required();
  serve->add_option("--vocab", serve_args.vocab, "Vocabulary (default: <ckpt>.vocab)");
  serve->add_option("--bind", serve_args.bind, "host:port to listen on");
  serve->add_option("--beam-default", serve_args.beam_default, "Beam width when a request names none");
  serve->add_option("--workers", serve_args.workers, "Concurrent decodes (default: processor cores)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    err << app.help();
    return kExitUsage;
  }

  try {
    if (app.got_subcommand(corpus)) run_corpus(corpus_args, out);
    else if (app.got_subcommand(tokenizer)) run_tokenizer(tok_args, out);
    else if (app.got_subcommand(train)) run_train(train_args, out);
    else if (app.got_subcommand(evaluate_cmd)) run_evaluate(eval_args, out);
    else if (app.got_subcommand(generate_cmd)) run_generate(gen_args, out);
    else if (app.got_subcommand(serve)) run_serve(serve_args, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace title_forge
