#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "title_forge/corpus.hpp"
#include "title_forge/model.hpp"
#include "title_forge/tokenizer.hpp"

namespace title_forge {

/// Which modalities reach the encoder. The <code> separator is always present.
enum class InputMode { Both, CodeOnly, DescOnly };

std::string_view input_mode_name(InputMode mode) noexcept;
std::optional<InputMode> parse_input_mode(std::string_view text);

struct TrainingConfig {
  double learning_rate = 0.0005;
  std::size_t batch_size = 30;
  double dropout = 0.1;
  std::size_t max_epochs = 30;
  /// Optimizer-step budget across all epochs; 0 means no cap.
  std::size_t max_steps = 0;
  std::size_t patience = 3;
  std::uint64_t seed = 1;
  bool freeze_norm_and_bias = false;
  InputMode input_mode = InputMode::Both;
  /// Global gradient-norm cap applied before every optimizer step.
  double clip_norm = 1.0;

  /// Throws Error(BadConfig).
  void validate() const;
};

/// Everything a flat key=value config file can set.
struct RunConfig {
  TrainingConfig training;
  ModelConfig model;
};

/// Parses "key = value" lines ('#' starts a comment). Keys are the field
/// names of TrainingConfig and ModelConfig. The training section is
/// validated. Throws Error(BadConfig).
RunConfig parse_run_config(std::string_view text, RunConfig defaults = {});
RunConfig load_run_config(const std::filesystem::path& path, RunConfig defaults = {});

/// Encoder input for a triplet with the unused modality blanked out.
ModelInput model_input_for(const Vocabulary& vocab, const PostTriplet& triplet, InputMode mode,
                           std::size_t max_encoder_len);

/// One teacher-forced training pair.
struct Example {
  std::vector<TokenId> source;         // encoder ids
  std::vector<TokenId> decoder_input;  // BOS y1 .. yn
  std::vector<TokenId> target;         // y1 .. yn EOS
};

/// Title tokens are cut so that BOS-prefixed input and EOS-terminated target
/// fit max_decoder_len.
Example make_example(const Vocabulary& vocab, const PostTriplet& triplet, InputMode mode, const ModelConfig& config);
std::vector<Example> make_examples(const Vocabulary& vocab, std::span<const PostTriplet> triplets, InputMode mode,
                                   const ModelConfig& config);

/// Sequences are kept unpadded; padding is implicit because pad targets are
/// excluded from the loss and pad keys are masked.
struct TaskBatch {
  Language task = Language::Java;
  std::vector<Example> examples;
};

/// Mean over every target token in the batch of −log P(y_j | y_<j, x).
template <class T>
BasicTensor<T> task_loss(const BasicTransformer<T>& model, const TaskBatch& batch, const ForwardContext& ctx = {});

/// Arithmetic mean of exactly four task losses. Throws Error(WrongArity).
template <class T>
BasicTensor<T> multi_task_loss(std::span<const BasicTensor<T>> task_losses);
double multi_task_loss(std::span<const double> task_losses);

/// Biases and layer-norm parameters (gain and shift) form the frozen group.
bool is_frozen(ParamKind kind, bool freeze_norm_and_bias) noexcept;

/// Adam with bias correction. Moment buffers are keyed by position in the
/// parameter list, so every call must pass the same list.
class AdamOptimizer {
 public:
  struct Options {
    double learning_rate = 0.0005;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    bool freeze_norm_and_bias = false;
  };

  explicit AdamOptimizer(Options options);

  /// Throws Error(MissingGrad) if a trainable parameter has no gradient.
  void step(std::span<Parameter<float>> params);
  std::size_t steps_taken() const noexcept { return step_; }

 private:
  Options options_;
  std::size_t step_ = 0;
  std::vector<std::vector<float>> first_moment_;
  std::vector<std::vector<float>> second_moment_;
};

/// Rescales all gradients so their joint L2 norm is at most max_norm;
/// returns the norm before clipping.
double clip_grad_norm(std::span<Parameter<float>> params, double max_norm);
void zero_grads(std::span<Parameter<float>> params);

/// Tracks the best (lowest) validation metric and epochs since it improved.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience);

  /// Returns true when the metric improved on the best so far.
  bool observe(double metric);
  bool should_stop() const noexcept { return since_improvement_ >= patience_; }
  double best() const noexcept { return best_; }
  std::size_t best_epoch() const noexcept { return best_epoch_; }
  std::size_t epochs_since_improvement() const noexcept { return since_improvement_; }

 private:
  std::size_t patience_;
  double best_;
  std::size_t best_epoch_ = 0;
  std::size_t epochs_ = 0;
  std::size_t since_improvement_ = 0;
};

struct TaskCorpus {
  std::vector<Example> train;
  std::vector<Example> validation;
};
using TaskCorpora = std::array<TaskCorpus, kNumTasks>;

struct StepRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  std::array<double, kNumTasks> task_losses{};
  double combined = 0.0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double validation = 0.0;
  bool improved = false;
};

struct FitResult {
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_validation = 0.0;
  bool early_stopped = false;
  /// False when no validation signal was available; the model then keeps
  /// its final weights.
  bool validated = false;
};

struct FitHooks {
  /// Replaces the built-in validation loss (called after every epoch).
  std::function<double(const Transformer&, std::size_t epoch)> validation;
  std::function<void(const StepRecord&)> on_step;
  std::function<void(const EpochRecord&)> on_epoch;
};

/// Mean of the four per-task validation losses (evaluation mode).
double validation_loss(const Transformer& model, const TaskCorpora& tasks, std::size_t batch_size);

/// Multi-task training: each step takes one batch per task, averages the
/// four losses, backpropagates once and steps Adam. An epoch is one pass over
/// the smallest task corpus. Early stopping restores the best-validation
/// weights into `model`. Throws Error(MissingTask) if a training set is empty.
FitResult fit(Transformer& model, const TaskCorpora& tasks, const TrainingConfig& config, const FitHooks& hooks = {});

/// JSON line {step, epoch, losses{java,...}, combined}.
std::string step_record_line(const StepRecord& record);

}  // namespace title_forge
