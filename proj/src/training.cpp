#include "lgse/training.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "lgse/checkpoint.hpp"

namespace lgse {

double lr_schedule(long n_step, long w_steps, int d_model) {
  if (n_step < 1) throw std::invalid_argument("lr_schedule: n_step must be >= 1");
  if (w_steps < 1) throw std::invalid_argument("lr_schedule: w_steps must be >= 1");
  const double n = static_cast<double>(n_step);
  const double w = static_cast<double>(w_steps);
  return std::pow(static_cast<double>(d_model), -0.5) * std::min(n * std::pow(w, -1.5), std::pow(n, -0.5));
}

Example make_example(const Waveform& clean, const Waveform& noise, int snr_db, TargetKind kind,
                     const ObjectiveConfig& obj) {
  Example ex;
  ex.clean_wave = clean;
  ex.noise_wave = scale_noise_to_snr(clean, noise, snr_db);
  ex.noisy_wave.samples = clean.samples + ex.noise_wave.samples;
  ex.snr_db = snr_db;
  const Spectrogram s = stft_padded(ex.clean_wave);
  const Spectrogram v = stft_padded(ex.noise_wave);
  ex.noisy.cfg = s.cfg;
  ex.noisy.values = s.values + v.values;
  ex.magnitude = ex.noisy.values.cwiseAbs();
  ex.target = make_target(kind, s, v, ex.noisy, obj);
  return ex;
}

std::vector<Example> make_batch(const std::vector<CorpusPair>& corpus, std::span<const std::size_t> utterances,
                                const TrainConfig& cfg, TargetKind kind, const ObjectiveConfig& obj, Rng& rng,
                                long* skipped) {
  if (corpus.empty()) throw std::invalid_argument("make_batch: empty corpus");
  const auto clip = static_cast<Eigen::Index>(std::llround(cfg.clip_len_s * kSampleRate));
  if (clip <= 0) throw std::invalid_argument("make_batch: clip length must be positive");
  std::vector<Example> batch;
  for (std::size_t u : utterances) {
    const Waveform& utt = corpus.at(u).clean;
    const Eigen::Index n_clips = utt.size() / clip;
    if (n_clips == 0) {
      if (skipped) ++*skipped;
      continue;
    }
    for (Eigen::Index c = 0; c < n_clips; ++c) {
      Waveform clean;
      clean.samples = utt.samples.segment(c * clip, clip);
      if (energy(clean.samples) <= 0.0) {
        if (skipped) ++*skipped;
        continue;
      }
      // random segment of a random noise recording long enough for the clip
      const CorpusPair* src = nullptr;
      for (int tries = 0; tries < 64 && !src; ++tries) {
        const auto& cand = corpus[static_cast<std::size_t>(rng.integer(0, static_cast<long>(corpus.size()) - 1))];
        if (cand.noise.size() >= clip) src = &cand;
      }
      if (!src) {
        if (skipped) ++*skipped;
        continue;
      }
      const Eigen::Index off = rng.integer(0, src->noise.size() - clip);
      Waveform noise;
      noise.samples = src->noise.samples.segment(off, clip);
      const int snr = static_cast<int>(rng.integer(cfg.snr_min, cfg.snr_max));
      batch.push_back(make_example(clean, noise, snr, kind, obj));
    }
  }
  return batch;
}

namespace {

Mat flatten_target(const MaskGrid& target) {
  if (!target.is_complex()) return target.real;
  Mat out(target.real.rows(), target.real.cols() * 2);
  out << target.real, target.imag;
  return out;
}

}  // namespace

Var mse_loss(Tape& tape, Var prediction, const MaskGrid& target) {
  Mat t = flatten_target(target);
  if (t.rows() != prediction.rows() || t.cols() != prediction.cols())
    throw DimensionError("mse_loss: prediction " + shape_str(prediction.value()) + " vs target " + shape_str(t));
  return mse(prediction, tape.constant(std::move(t)));
}

double mse_value(const MaskGrid& prediction, const MaskGrid& target) {
  const Mat p = flatten_target(prediction);
  const Mat t = flatten_target(target);
  if (p.rows() != t.rows() || p.cols() != t.cols())
    throw DimensionError("mse: prediction " + shape_str(p) + " vs target " + shape_str(t));
  return (p - t).squaredNorm() / static_cast<double>(p.size());
}

void clip_gradients(std::span<Parameter* const> params, double limit) {
  for (Parameter* p : params)
    if (p->trainable) p->grad = p->grad.cwiseMax(-limit).cwiseMin(limit);
}

void Adam::step(std::span<Parameter* const> params, double lr) {
  for (Parameter* p : params) {
    if (!p->trainable) continue;
    if (!p->grad.allFinite()) throw std::runtime_error("adam: non-finite gradient in parameter " + p->name);
  }
  ++step_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (Parameter* p : params) {
    if (!p->trainable) continue;
    auto [it, fresh] = moments_.try_emplace(p->name);
    Moments& mo = it->second;
    if (fresh) {
      mo.m = Mat::Zero(p->value.rows(), p->value.cols());
      mo.v = Mat::Zero(p->value.rows(), p->value.cols());
    }
    mo.m = cfg_.beta1 * mo.m + (1.0 - cfg_.beta1) * p->grad;
    mo.v = cfg_.beta2 * mo.v + (1.0 - cfg_.beta2) * p->grad.cwiseAbs2();
    p->value.array() -= lr * (mo.m.array() / c1) / ((mo.v.array() / c2).sqrt() + cfg_.eps);
  }
}

std::string loss_trace_csv(const std::vector<LossRecord>& trace) {
  std::ostringstream os;
  os << "step,lr,loss\n";
  char buf[96];
  for (const LossRecord& r : trace) {
    std::snprintf(buf, sizeof buf, "%ld,%.17g,%.17g\n", r.step, r.lr, r.loss);
    os << buf;
  }
  return os.str();
}

double train_step(EnhancementModel& model, Adam& opt, std::span<const Example> batch, double lr, double clip) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
  auto params = model.parameters();
  for (Parameter* p : params) p->zero_grad();
  const double inv = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (const Example& ex : batch) {
    Tape tape;
    Var out = model.forward(tape, tape.constant(ex.magnitude));
    Var loss = mse_loss(tape, out, ex.target);
    total += loss.scalar();
    tape.backward(scale(loss, inv));
  }
  clip_gradients(params, clip);
  opt.step(params, lr);
  return total * inv;
}

double evaluate_loss(const EnhancementModel& model, std::span<const Example> examples) {
  if (examples.empty()) return 0.0;
  double total = 0.0;
  for (const Example& ex : examples) total += mse_value(model.predict(ex.magnitude), ex.target);
  return total / static_cast<double>(examples.size());
}

long steps_per_epoch(const TrainConfig& cfg, std::size_t corpus_size) {
  const auto b = static_cast<std::size_t>(std::max(cfg.batch_utts, 1));
  return static_cast<long>((corpus_size + b - 1) / b);
}

std::vector<std::size_t> batch_utterances(const TrainConfig& cfg, std::size_t corpus_size, long step) {
  const long per_epoch = steps_per_epoch(cfg, corpus_size);
  const long epoch = (step - 1) / per_epoch;
  const long pos = (step - 1) % per_epoch;
  std::vector<std::size_t> order(corpus_size);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(sub_seed(cfg.seed, "epoch/" + std::to_string(epoch)));
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[static_cast<std::size_t>(rng.integer(0, static_cast<long>(i) - 1))]);
  const auto b = static_cast<std::size_t>(std::max(cfg.batch_utts, 1));
  const std::size_t begin = static_cast<std::size_t>(pos) * b;
  const std::size_t end = std::min(order.size(), begin + b);
  return {order.begin() + static_cast<std::ptrdiff_t>(begin), order.begin() + static_cast<std::ptrdiff_t>(end)};
}

Rng batch_rng(const TrainConfig& cfg, long step) {
  return Rng(sub_seed(cfg.seed, "batch/" + std::to_string(step)));
}

TrainResult train(EnhancementModel& model, const std::vector<CorpusPair>& corpus, const TrainConfig& cfg,
                  Adam& opt, const TrainHooks& hooks) {
  if (corpus.empty()) throw std::invalid_argument("train: empty corpus");
  if (cfg.snr_min > cfg.snr_max) throw std::invalid_argument("train: snr_min > snr_max");
  TrainResult result;
  const long per_epoch = steps_per_epoch(cfg, corpus.size());
  long last = static_cast<long>(cfg.epochs) * per_epoch;
  if (cfg.max_steps > 0) last = std::min(last, cfg.max_steps);
  const int d_model = model.config().d_model;
  double best = std::numeric_limits<double>::infinity();

  for (long step = opt.steps() + 1; step <= last; ++step) {
    const auto utts = batch_utterances(cfg, corpus.size(), step);
    Rng rng = batch_rng(cfg, step);
    const auto batch =
        make_batch(corpus, utts, cfg, model.config().target, model.config().objective, rng, &result.skipped_clips);
    if (batch.empty()) continue;
    const double lr = lr_schedule(step, cfg.w_steps, d_model);
    const double loss = train_step(model, opt, batch, lr, cfg.grad_clip);
    const LossRecord rec{step, lr, loss};
    result.trace.push_back(rec);

    if (cfg.validate_every > 0 && hooks.validation && step % cfg.validate_every == 0) {
      const double v = evaluate_loss(model, *hooks.validation);
      result.validation.push_back(v);
      if (v < best) {
        best = v;
        result.best_validation_step = step;
        if (hooks.on_best) hooks.on_best(Checkpoint::capture(model, &opt));
      }
    }
    if (cfg.checkpoint_every > 0 && !cfg.checkpoint_path.empty() && step % cfg.checkpoint_every == 0) {
      Rng next = batch_rng(cfg, step + 1);
      Checkpoint::capture(model, &opt, &next).save(cfg.checkpoint_path);
    }
    if (hooks.on_step && !hooks.on_step(rec)) break;
  }
  return result;
}

}  // namespace lgse
