#pragma once

// On-the-fly mixture batches, mask-approximation MSE, Adam with the warmup
// schedule, elementwise gradient clipping and the training loop.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lgse/dsp.hpp"
#include "lgse/model.hpp"
#include "lgse/objectives.hpp"

namespace lgse {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
};

struct TrainConfig {
  double clip_len_s = 1.0;
  int batch_utts = 10;
  int snr_min = -10;
  int snr_max = 20;
  int epochs = 150;
  long max_steps = 0;  // 0: no cap beyond epochs
  long w_steps = 40000;
  AdamConfig adam;
  double grad_clip = 1.0;
  std::uint64_t seed = 0;
  long checkpoint_every = 0;  // steps; 0 disables periodic checkpoints
  std::string checkpoint_path;
  long validate_every = 0;  // steps; 0 disables validation
};

/// lr = d_model^-0.5 * min(n * w^-1.5, n^-0.5).
double lr_schedule(long n_step, long w_steps, int d_model);

struct Example {
  Mat magnitude;  // |X|, frames x bins
  MaskGrid target;
  Spectrogram noisy;
  Waveform clean_wave;
  Waveform noise_wave;  // scaled noise actually mixed in
  Waveform noisy_wave;
  int snr_db = 0;
};

/// Builds one training example from a clean clip and a noise clip.
Example make_example(const Waveform& clean, const Waveform& noise, int snr_db, TargetKind kind,
                     const ObjectiveConfig& obj);

/// Clips every listed utterance into clip_len_s pieces (dropping the tail),
/// mixes each with a random noise segment from a random corpus entry at an
/// integer SNR drawn uniformly from [snr_min, snr_max].
std::vector<Example> make_batch(const std::vector<CorpusPair>& corpus, std::span<const std::size_t> utterances,
                                const TrainConfig& cfg, TargetKind kind, const ObjectiveConfig& obj, Rng& rng,
                                long* skipped = nullptr);

/// Mask-approximation loss: mean squared error over every output cell. For
/// cIRM the target is laid out [real | imag] to match the network output.
Var mse_loss(Tape& tape, Var prediction, const MaskGrid& target);
double mse_value(const MaskGrid& prediction, const MaskGrid& target);

/// Clamps every gradient component of trainable parameters to [-limit, limit].
void clip_gradients(std::span<Parameter* const> params, double limit);

class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  /// One bias-corrected update. Throws std::runtime_error naming the first
  /// parameter whose gradient is not finite.
  void step(std::span<Parameter* const> params, double lr);

  long steps() const { return step_; }
  const AdamConfig& config() const { return cfg_; }

  struct Moments {
    Mat m;
    Mat v;
  };
  /// Moments by parameter name, created lazily on the first step.
  std::map<std::string, Moments>& moments() { return moments_; }
  const std::map<std::string, Moments>& moments() const { return moments_; }
  void set_steps(long s) { step_ = s; }

 private:
  AdamConfig cfg_;
  long step_ = 0;
  std::map<std::string, Moments> moments_;
};

struct LossRecord {
  long step = 0;
  double lr = 0.0;
  double loss = 0.0;
};

std::string loss_trace_csv(const std::vector<LossRecord>& trace);

/// One optimizer step on a batch: forward/backward per example, gradients
/// averaged over the batch, clipped, then applied. Returns the mean loss.
double train_step(EnhancementModel& model, Adam& opt, std::span<const Example> batch, double lr, double clip);

/// Mean loss over examples without touching gradients.
double evaluate_loss(const EnhancementModel& model, std::span<const Example> examples);

struct TrainResult {
  std::vector<LossRecord> trace;
  std::vector<double> validation;  // one entry per validation pass
  long best_validation_step = -1;
  long skipped_clips = 0;
};

class Checkpoint;

struct TrainHooks {
  /// Called after every step; return false to stop early.
  std::function<bool(const LossRecord&)> on_step;
  /// Validation set evaluated every cfg.validate_every steps.
  const std::vector<Example>* validation = nullptr;
  /// Receives the best-validation checkpoint whenever it improves.
  std::function<void(const Checkpoint&)> on_best;
};

/// Trains `model` on `corpus` (per-epoch shuffled order, `batch_utts`
/// utterances per step). Every random draw derives from cfg.seed and the
/// global step index, so an optimizer restored from a checkpoint resumes
/// the exact same sequence of batches.
TrainResult train(EnhancementModel& model, const std::vector<CorpusPair>& corpus, const TrainConfig& cfg,
                  Adam& opt, const TrainHooks& hooks = {});

/// RNG used to synthesize the batch of global step `step` (1-based).
Rng batch_rng(const TrainConfig& cfg, long step);
/// Utterance indices of global step `step` (1-based) under per-epoch shuffling.
std::vector<std::size_t> batch_utterances(const TrainConfig& cfg, std::size_t corpus_size, long step);
long steps_per_epoch(const TrainConfig& cfg, std::size_t corpus_size);

}  // namespace lgse
