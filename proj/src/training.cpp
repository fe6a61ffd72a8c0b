#include "title_forge/training.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "title_forge/error.hpp"
#include "title_forge/ops.hpp"

namespace title_forge {

std::string_view input_mode_name(InputMode mode) noexcept {
  switch (mode) {
    case InputMode::Both: return "both";
    case InputMode::CodeOnly: return "code_only";
    case InputMode::DescOnly: return "desc_only";
  }
  return "both";
}

std::optional<InputMode> parse_input_mode(std::string_view text) {
  if (text == "both") return InputMode::Both;
  if (text == "code_only" || text == "code") return InputMode::CodeOnly;
  if (text == "desc_only" || text == "desc") return InputMode::DescOnly;
  return std::nullopt;
}

void TrainingConfig::validate() const {
  auto bad = [](const std::string& what) { throw Error(Errc::BadConfig, what); };
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) bad("learning_rate must be a finite value > 0");
  if (batch_size == 0) bad("batch_size must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) bad("dropout must be in [0, 1)");
  if (max_epochs == 0) bad("max_epochs must be positive");
  if (patience == 0) bad("patience must be positive");
  if (!(clip_norm > 0.0)) bad("clip_norm must be positive");
}

namespace {

std::string_view trim(std::string_view s) {
  const auto* ws = " \t\r\n";
  auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

template <class N>
N parse_number(std::string_view key, std::string_view value) {
  N out{};
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size())
    throw Error(Errc::BadConfig, std::string(key) + ": not a number: '" + std::string(value) + "'");
  return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw Error(Errc::BadConfig, std::string(key) + ": not a boolean: '" + std::string(value) + "'");
}

}  // namespace

RunConfig parse_run_config(std::string_view text, RunConfig config) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    auto nl = text.find('\n');
    auto line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw Error(Errc::BadConfig, "line " + std::to_string(line_no) + ": expected key = value");
    auto key = trim(line.substr(0, eq));
    auto value = trim(line.substr(eq + 1));
    auto& t = config.training;
    auto& m = config.model;
    if (key == "learning_rate") t.learning_rate = parse_number<double>(key, value);
    else if (key == "batch_size") t.batch_size = parse_number<std::size_t>(key, value);
    else if (key == "dropout") m.dropout = t.dropout = parse_number<double>(key, value);
    else if (key == "max_epochs") t.max_epochs = parse_number<std::size_t>(key, value);
    else if (key == "max_steps") t.max_steps = parse_number<std::size_t>(key, value);
    else if (key == "patience") t.patience = parse_number<std::size_t>(key, value);
    else if (key == "seed") t.seed = parse_number<std::uint64_t>(key, value);
    else if (key == "freeze_norm_and_bias") t.freeze_norm_and_bias = parse_bool(key, value);
    else if (key == "clip_norm") t.clip_norm = parse_number<double>(key, value);
    else if (key == "input_mode") {
      auto mode = parse_input_mode(value);
      if (!mode) throw Error(Errc::BadConfig, "input_mode: expected both, code_only or desc_only");
      t.input_mode = *mode;
    } else if (key == "d_model") m.d_model = parse_number<std::size_t>(key, value);
    else if (key == "n_heads") m.n_heads = parse_number<std::size_t>(key, value);
    else if (key == "n_layers") m.n_layers = parse_number<std::size_t>(key, value);
    else if (key == "d_ff") m.d_ff = parse_number<std::size_t>(key, value);
    else if (key == "vocab_size") m.vocab_size = parse_number<std::size_t>(key, value);
    else if (key == "max_encoder_len") m.max_encoder_len = parse_number<std::size_t>(key, value);
    else if (key == "max_decoder_len") m.max_decoder_len = parse_number<std::size_t>(key, value);
    else throw Error(Errc::BadConfig, "unknown key '" + std::string(key) + "'");
  }
  // The model section is checked once the vocabulary size is known.
  config.training.validate();
  return config;
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig defaults) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_run_config(buffer.str(), std::move(defaults));
}

ModelInput model_input_for(const Vocabulary& vocab, const PostTriplet& triplet, InputMode mode,
                           std::size_t max_encoder_len) {
  std::string_view desc = mode == InputMode::CodeOnly ? std::string_view{} : std::string_view{triplet.description};
  std::string_view code = mode == InputMode::DescOnly ? std::string_view{} : std::string_view{triplet.code};
  return build_model_input(vocab, triplet.language, desc, code, max_encoder_len);
}

Example make_example(const Vocabulary& vocab, const PostTriplet& triplet, InputMode mode, const ModelConfig& config) {
  if (config.max_decoder_len < 2) throw Error(Errc::BadConfig, "max_decoder_len must be at least 2");
  Example ex;
  ex.source = model_input_for(vocab, triplet, mode, config.max_encoder_len).token_ids;
  auto title = vocab.encode(triplet.title);
  if (title.size() > config.max_decoder_len - 1) title.resize(config.max_decoder_len - 1);
  ex.decoder_input.reserve(title.size() + 1);
  ex.decoder_input.push_back(special::kBos);
  ex.decoder_input.insert(ex.decoder_input.end(), title.begin(), title.end());
  ex.target = title;
  ex.target.push_back(special::kEos);
  return ex;
}

std::vector<Example> make_examples(const Vocabulary& vocab, std::span<const PostTriplet> triplets, InputMode mode,
                                   const ModelConfig& config) {
  std::vector<Example> out;
  out.reserve(triplets.size());
  for (const auto& t : triplets) out.push_back(make_example(vocab, t, mode, config));
  return out;
}

template <class T>
BasicTensor<T> task_loss(const BasicTransformer<T>& model, const TaskBatch& batch, const ForwardContext& ctx) {
  if (batch.examples.empty()) throw Error(Errc::EmptyTarget, "empty batch");
  std::vector<BasicTensor<T>> logits;
  std::vector<TokenId> targets;
  logits.reserve(batch.examples.size());
  for (const auto& ex : batch.examples) {
    if (ex.decoder_input.size() != ex.target.size())
      throw Error(Errc::ShapeMismatch, "decoder input and target lengths differ");
    auto encoded = model.encode(ex.source, ctx);
    logits.push_back(model.decoder_logits(ex.decoder_input, encoded, ctx));
    targets.insert(targets.end(), ex.target.begin(), ex.target.end());
  }
  auto all = logits.size() == 1 ? logits.front() : ops::concat_rows<T>(logits);
  return ops::cross_entropy(all, targets, special::kPad);
}

template <class T>
BasicTensor<T> multi_task_loss(std::span<const BasicTensor<T>> task_losses) {
  if (task_losses.size() != kNumTasks)
    throw Error(Errc::WrongArity, "expected " + std::to_string(kNumTasks) + " task losses, got " +
                                      std::to_string(task_losses.size()));
  auto total = task_losses[0];
  for (std::size_t i = 1; i < task_losses.size(); ++i) total = ops::add(total, task_losses[i]);
  return ops::scale(total, T(1) / T(kNumTasks));
}

double multi_task_loss(std::span<const double> task_losses) {
  if (task_losses.size() != kNumTasks)
    throw Error(Errc::WrongArity, "expected " + std::to_string(kNumTasks) + " task losses, got " +
                                      std::to_string(task_losses.size()));
  return std::accumulate(task_losses.begin(), task_losses.end(), 0.0) / static_cast<double>(kNumTasks);
}

template BasicTensor<float> task_loss(const BasicTransformer<float>&, const TaskBatch&, const ForwardContext&);
template BasicTensor<double> task_loss(const BasicTransformer<double>&, const TaskBatch&, const ForwardContext&);
template BasicTensor<float> multi_task_loss(std::span<const BasicTensor<float>>);
template BasicTensor<double> multi_task_loss(std::span<const BasicTensor<double>>);

bool is_frozen(ParamKind kind, bool freeze_norm_and_bias) noexcept {
  if (!freeze_norm_and_bias) return false;
  return kind == ParamKind::Bias || kind == ParamKind::NormGain || kind == ParamKind::NormShift;
}

AdamOptimizer::AdamOptimizer(Options options) : options_(options) {
  if (!(options_.learning_rate >= 0.0)) throw Error(Errc::BadConfig, "learning rate must be >= 0");
}

void AdamOptimizer::step(std::span<Parameter<float>> params) {
  if (first_moment_.empty()) {
    first_moment_.resize(params.size());
    second_moment_.resize(params.size());
  } else if (first_moment_.size() != params.size()) {
    throw Error(Errc::InvalidArgument, "parameter list changed between optimizer steps");
  }
  ++step_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (is_frozen(p.kind, options_.freeze_norm_and_bias)) continue;
    if (!p.tensor.has_grad()) throw Error(Errc::MissingGrad, "no gradient for " + p.name);
    auto value = p.tensor.data();
    auto grad = std::as_const(p.tensor).grad();
    auto& m = first_moment_[i];
    auto& v = second_moment_[i];
    if (m.empty()) {
      m.assign(value.size(), 0.0f);
      v.assign(value.size(), 0.0f);
    }
    for (std::size_t j = 0; j < value.size(); ++j) {
      const double g = grad[j];
      const double mj = b1 * m[j] + (1.0 - b1) * g;
      const double vj = b2 * v[j] + (1.0 - b2) * g * g;
      m[j] = static_cast<float>(mj);
      v[j] = static_cast<float>(vj);
      const double update = options_.learning_rate * (mj / correction1) / (std::sqrt(vj / correction2) + options_.epsilon);
      value[j] = static_cast<float>(value[j] - update);
    }
  }
}

double clip_grad_norm(std::span<Parameter<float>> params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) continue;
    for (float g : std::as_const(p.tensor).grad()) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const float factor = static_cast<float>(max_norm / norm);
    for (auto& p : params) {
      if (!p.tensor.has_grad()) continue;
      for (float& g : p.tensor.grad()) g *= factor;
    }
  }
  return norm;
}

void zero_grads(std::span<Parameter<float>> params) {
  for (auto& p : params) p.tensor.zero_grad();
}

EarlyStopping::EarlyStopping(std::size_t patience)
    : patience_(patience), best_(std::numeric_limits<double>::infinity()) {
  if (patience == 0) throw Error(Errc::BadConfig, "patience must be positive");
}

bool EarlyStopping::observe(double metric) {
  ++epochs_;
  if (metric < best_) {
    best_ = metric;
    best_epoch_ = epochs_;
    since_improvement_ = 0;
    return true;
  }
  ++since_improvement_;
  return false;
}

double validation_loss(const Transformer& model, const TaskCorpora& tasks, std::size_t batch_size) {
  if (batch_size == 0) batch_size = 1;
  double total = 0.0;
  for (std::size_t t = 0; t < kNumTasks; ++t) {
    const auto& examples = tasks[t].validation;
    if (examples.empty()) throw Error(Errc::MissingTask, std::string("no validation data for ") +
                                                             std::string(language_id(kAllLanguages[t])));
    double nll = 0.0;
    std::size_t tokens = 0;
    for (std::size_t begin = 0; begin < examples.size(); begin += batch_size) {
      TaskBatch batch{kAllLanguages[t], {}};
      std::size_t end = std::min(examples.size(), begin + batch_size);
      std::size_t count = 0;
      for (std::size_t i = begin; i < end; ++i) {
        batch.examples.push_back(examples[i]);
        count += examples[i].target.size();
      }
      nll += static_cast<double>(task_loss(model, batch).item()) * static_cast<double>(count);
      tokens += count;
    }
    total += nll / static_cast<double>(tokens);
  }
  return total / static_cast<double>(kNumTasks);
}

FitResult fit(Transformer& model, const TaskCorpora& tasks, const TrainingConfig& config, const FitHooks& hooks) {
  config.validate();
  std::size_t smallest = std::numeric_limits<std::size_t>::max();
  bool have_validation = true;
  for (std::size_t t = 0; t < kNumTasks; ++t) {
    if (tasks[t].train.empty())
      throw Error(Errc::MissingTask,
                  std::string("no training data for ") + std::string(language_id(kAllLanguages[t])));
    smallest = std::min(smallest, tasks[t].train.size());
    if (tasks[t].validation.empty()) have_validation = false;
  }
  have_validation = have_validation || static_cast<bool>(hooks.validation);

  std::mt19937_64 rng(config.seed);
  ForwardContext ctx{true, config.dropout, &rng};
  auto params = model.parameters();
  AdamOptimizer adam({config.learning_rate, 0.9, 0.999, 1e-8, config.freeze_norm_and_bias});
  EarlyStopping stopper(config.patience);
  std::optional<Transformer> best;
  Tape tape;
  FitResult result;
  result.validated = have_validation;

  const std::size_t steps_per_epoch = (smallest + config.batch_size - 1) / config.batch_size;
  std::size_t step = 0;
  bool budget_spent = false;
  for (std::size_t epoch = 1; epoch <= config.max_epochs && !budget_spent; ++epoch) {
    std::array<std::vector<std::size_t>, kNumTasks> order;
    for (std::size_t t = 0; t < kNumTasks; ++t) {
      order[t].resize(tasks[t].train.size());
      std::iota(order[t].begin(), order[t].end(), std::size_t{0});
      std::shuffle(order[t].begin(), order[t].end(), rng);
    }
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      tape.reset();
      StepRecord record;
      {
        TapeScope scope(tape);
        std::vector<Tensor> losses;
        for (std::size_t t = 0; t < kNumTasks; ++t) {
          TaskBatch batch{kAllLanguages[t], {}};
          const std::size_t begin = s * config.batch_size;
          const std::size_t end = std::min(order[t].size(), begin + config.batch_size);
          for (std::size_t i = begin; i < end; ++i) batch.examples.push_back(tasks[t].train[order[t][i]]);
          losses.push_back(task_loss(model, batch, ctx));
          record.task_losses[t] = losses.back().item();
        }
        auto combined = multi_task_loss<float>(losses);
        record.combined = combined.item();
        tape.backward(combined);
      }
      clip_grad_norm(params, config.clip_norm);
      adam.step(params);
      zero_grads(params);
      record.step = ++step;
      record.epoch = epoch;
      if (hooks.on_step) hooks.on_step(record);
      result.steps.push_back(record);
      if (config.max_steps != 0 && step >= config.max_steps) {
        budget_spent = true;
        break;
      }
    }

    if (!have_validation) continue;
    const double metric = hooks.validation ? hooks.validation(model, epoch)
                                           : validation_loss(model, tasks, config.batch_size);
    EpochRecord er{epoch, metric, stopper.observe(metric)};
    if (er.improved) {
      if (!best) best.emplace(model.config(), 0);
      best->copy_parameters_from(model);
    }
    spdlog::info("epoch {} validation {:.5f}{}", epoch, metric, er.improved ? " (best)" : "");
    if (hooks.on_epoch) hooks.on_epoch(er);
    result.epochs.push_back(er);
    if (stopper.should_stop()) {
      result.early_stopped = true;
      break;
    }
  }
  if (best) {
    model.copy_parameters_from(*best);
    result.best_epoch = stopper.best_epoch();
    result.best_validation = stopper.best();
  }
  return result;
}

std::string step_record_line(const StepRecord& record) {
  nlohmann::ordered_json j;
  j["step"] = record.step;
  j["epoch"] = record.epoch;
  nlohmann::ordered_json losses;
  for (std::size_t t = 0; t < kNumTasks; ++t) losses[std::string(language_id(kAllLanguages[t]))] = record.task_losses[t];
  j["losses"] = losses;
  j["combined"] = record.combined;
  return j.dump();
}

}  // namespace title_forge
