#include "lgse/selftest.hpp"

#include <chrono>
#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <sstream>

#include "lgse/config.hpp"
#include "lgse/dsp.hpp"
#include "lgse/eval.hpp"
#include "lgse/objectives.hpp"
#include "lgse/posenc.hpp"
#include "lgse/training.hpp"

namespace lgse {

namespace {

std::string num(double v) {
  std::ostringstream os;
  os.precision(3);
  os << v;
  return os.str();
}

CheckResult make(std::string module, std::string name, bool ok, std::string detail = {}) {
  return {std::move(module), std::move(name), ok, std::move(detail)};
}

CheckResult guarded(const std::string& module, const std::string& name, const std::function<CheckResult()>& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    return make(module, name, false, std::string("threw: ") + e.what());
  }
}

Mat random_mat(Rng& rng, Eigen::Index r, Eigen::Index c, double lo = -1.0, double hi = 1.0) {
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
  return m;
}


void randomize(PositionalEncoding& pe, Rng& rng) {
  for (Parameter* p : pe.parameters())
    for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = rng.uniform(-1.0, 1.0);
}

std::vector<CheckResult> numerics_checks() {
  const std::string m = "numerics";
  std::vector<CheckResult> out;
  out.push_back(guarded(m, "matmul matches triple loop", [&] {
    Rng rng(1);
    const Mat a = random_mat(rng, 7, 5), b = random_mat(rng, 5, 6);
    Tape t;
    const Mat c = matmul(t.constant(a), t.constant(b)).value();
    double err = 0.0;
    for (int i = 0; i < 7; ++i)
      for (int j = 0; j < 6; ++j) {
        double s = 0.0;
        for (int k = 0; k < 5; ++k) s += a(i, k) * b(k, j);
        err = std::max(err, std::abs(s - c(i, j)));
      }
    return make(m, "matmul matches triple loop", err < 1e-12, "max err " + num(err));
  }));
  out.push_back(guarded(m, "softmax/layer-norm gradients", [&] {
    Rng rng(2);
    Parameter x("x", random_mat(rng, 4, 6));
    Parameter g("g", random_mat(rng, 1, 6));
    Parameter b("b", random_mat(rng, 1, 6));
    const Mat w = random_mat(rng, 4, 6);
    auto loss = [&](Tape& t) {
      Var y = softmax_rows(layer_norm_rows(t.parameter(x), t.parameter(g), t.parameter(b)));
      return sum(mul(y, t.constant(w)));
    };
    {
      Tape t;
      t.backward(loss(t));
    }
    double worst = 0.0;
    for (Parameter* p : {&x, &g, &b})
      for (Eigen::Index i = 0; i < p->value.size(); ++i) {
        const double keep = p->value.data()[i];
        p->value.data()[i] = keep + 1e-6;
        Tape t1(false);
        const double up = loss(t1).scalar();
        p->value.data()[i] = keep - 1e-6;
        Tape t2(false);
        const double down = loss(t2).scalar();
        p->value.data()[i] = keep;
        const double fd = (up - down) / 2e-6;
        worst = std::max(worst, std::abs(fd - p->grad.data()[i]) / std::max(1e-6, std::abs(fd)));
      }
    return make(m, "softmax/layer-norm gradients", worst < 1e-5, "max rel err " + num(worst));
  }));
  return out;
}

std::vector<CheckResult> dsp_checks() {
  const std::string m = "dsp";
  std::vector<CheckResult> out;
  out.push_back(guarded(m, "fft matches naive DFT", [&] {
    Rng rng(3);
    CVec x(64);
    for (auto& v : x) v = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
    CVec y = x;
    fft_inplace(y);
    double err = 0.0;
    for (int k = 0; k < 64; ++k) {
      std::complex<double> s = 0.0;
      for (int n = 0; n < 64; ++n) s += x[n] * std::polar(1.0, -2.0 * std::numbers::pi * k * n / 64.0);
      err = std::max(err, std::abs(s - y[k]));
    }
    return make(m, "fft matches naive DFT", err < 1e-12, "max err " + num(err));
  }));
  out.push_back(guarded(m, "stft/istft round trip", [&] {
    Rng rng(4);
    Waveform w;
    w.samples.resize(16000);
    for (auto& v : w.samples) v = rng.uniform(-1, 1);
    const Waveform y = istft_padded(stft_padded(w), {}, w.size());
    const double err = (y.samples - w.samples).cwiseAbs().maxCoeff();
    return make(m, "stft/istft round trip", err < 1e-10, "max err " + num(err));
  }));
  out.push_back(guarded(m, "mixture SNR", [&] {
    const auto c = synth_corpus(5, 1, 1.0);
    const Waveform v = scale_noise_to_snr(c[0].clean, c[0].noise, 7);
    const double snr = 10.0 * std::log10(energy(c[0].clean.samples) / energy(v.samples));
    return make(m, "mixture SNR", std::abs(snr - 7.0) < 1e-6, "measured " + num(snr) + " dB");
  }));
  return out;
}

std::vector<CheckResult> objectives_checks() {
  const std::string m = "objectives";
  std::vector<CheckResult> out;
  out.push_back(guarded(m, "cIRM compression inverse", [&] {
    double err = 0.0;
    for (double t = -50.0; t <= 50.0; t += 0.37)
      err = std::max(err, std::abs(decompress_value(compress_value(t, 10, 0.1), 10, 0.1) - t));
    return make(m, "cIRM compression inverse", err < 1e-8, "max err " + num(err));
  }));
  out.push_back(guarded(m, "oracle masks improve SI-SDR", [&] {
    const auto c = synth_corpus(6, 1, 1.0);
    const Waveform noise = scale_noise_to_snr(c[0].clean, c[0].noise, 0);
    Waveform noisy;
    noisy.samples = c[0].clean.samples + noise.samples;
    const Spectrogram s = stft_padded(c[0].clean), v = stft_padded(noise), x = stft_padded(noisy);
    const double in = si_sdr(noisy, c[0].clean);
    double worst = 1e9;
    for (TargetKind k : {TargetKind::IRM, TargetKind::PSM, TargetKind::CIRM}) {
      const Spectrogram y = apply_target(x, make_target(k, s, v, x), k);
      worst = std::min(worst, si_sdr(istft_padded(y, {}, noisy.size()), c[0].clean) - in);
    }
    return make(m, "oracle masks improve SI-SDR", worst > 5.0, "min gain " + num(worst) + " dB");
  }));
  return out;
}

std::vector<CheckResult> posenc_checks() {
  const std::string m = "posenc";
  std::vector<CheckResult> out;
  out.push_back(check_param_counts());
  out.push_back(guarded(m, "t5 bucket fixtures", [&] {
    const std::vector<std::pair<long, int>> fx = {{0, 0}, {7, 7}, {8, 8}, {128, 15}, {-3, 19}, {-8, 24}};
    std::string bad;
    for (auto [d, b] : fx)
      if (t5_bucket(d) != b) bad += " " + std::to_string(d) + "->" + std::to_string(t5_bucket(d));
    return make(m, "t5 bucket fixtures", bad.empty(), bad.empty() ? "" : "mismatch:" + bad);
  }));
  out.push_back(guarded(m, "bias matrices match per-pair oracle", [&] {
    Rng rng(7);
    long bad = 0;
    for (PeKind k : kAllPeKinds) {
      if (!uses_bias(k)) continue;
      PositionalEncoding pe(k, 2, 2, 8, {}, rng);
      randomize(pe, rng);
      for (int layer = 0; layer < 2; ++layer)
        for (int h = 0; h < 2; ++h)
          for (Eigen::Index L : {1, 5, 33}) {
            const BiasMatrix b = pe.bias_matrix(layer, h, L);
            for (long i = 0; i < L; ++i)
              for (long j = 0; j < L; ++j) bad += b.at(i, j) != naive_bias(pe, layer, h, i, j);
          }
    }
    return make(m, "bias matrices match per-pair oracle", bad == 0, std::to_string(bad) + " mismatches");
  }));
  return out;
}

std::vector<CheckResult> model_checks() {
  const std::string m = "model";
  std::vector<CheckResult> out;
  out.push_back(guarded(m, "gradients match finite differences", [&] {
    double worst = 0.0;
    std::string where;
    for (PeKind k : kAllPeKinds) {
      ModelConfig mc;
      mc.layers = 1;
      mc.heads = 2;
      mc.d_model = 8;
      mc.d_ff = 8;
      mc.bins = 9;
      mc.pe = k;
      mc.target = TargetKind::IRM;
      mc.pe_cfg.bert_max_len = 8;
      EnhancementModel model(mc, 11);
      Rng rng(12);
      for (Parameter* p : model.parameters())
        if (p->name.rfind("pe.", 0) == 0)
          for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = rng.uniform(0.3, 1.2);
      MaskGrid target{random_mat(rng, 5, 9, 0.0, 1.0), {}};
      const GradCheck g = gradient_check(model, random_mat(rng, 5, 9, 0.0, 2.0), target);
      if (g.max_rel_error > worst) {
        worst = g.max_rel_error;
        where = to_string(k) + "/" + g.worst;
      }
    }
    return make(m, "gradients match finite differences", worst < 1e-4, "max rel err " + num(worst) + " " + where);
  }));
  out.push_back(guarded(m, "output shape and range", [&] {
    ModelConfig mc;
    mc.layers = 1;
    mc.heads = 2;
    mc.d_model = 8;
    mc.d_ff = 8;
    mc.bins = 9;
    EnhancementModel model(mc, 3);
    Rng rng(4);
    const MaskGrid y = model.predict(random_mat(rng, 6, 9, 0.0, 1.0));
    const bool ok = y.frames() == 6 && y.bins() == 9 && y.real.minCoeff() >= 0.0 && y.real.maxCoeff() <= 1.0;
    return make(m, "output shape and range", ok);
  }));
  return out;
}

std::vector<CheckResult> training_checks() {
  const std::string m = "training";
  std::vector<CheckResult> out;
  out.push_back(guarded(m, "lr schedule continuity", [&] {
    const double at = lr_schedule(4000, 4000, 256);
    const double expect = std::pow(256.0, -0.5) * std::pow(4000.0, -0.5);
    const bool mono = lr_schedule(3999, 4000, 256) < at && lr_schedule(4001, 4000, 256) < at;
    const double rel = std::abs(at - expect) / expect;
    return make(m, "lr schedule continuity", rel < 1e-15 && mono, "rel err " + num(rel));
  }));
  out.push_back(guarded(m, "adam first step", [&] {
    Parameter p("p", Mat::Zero(1, 3));
    p.grad << 0.5, -2.0, 1e-3;
    Adam opt;
    std::vector<Parameter*> ps{&p};
    opt.step(ps, 0.01);
    const double err = (p.value - Mat(Eigen::RowVector3d(-0.01, 0.01, -0.01))).cwiseAbs().maxCoeff();
    return make(m, "adam first step", err < 1e-7, "max err " + num(err));
  }));
  return out;
}

std::vector<CheckResult> eval_checks() {
  const std::string m = "eval";
  std::vector<CheckResult> out;
  out.push_back(guarded(m, "chunk counts 20 / 39", [&] {
    const auto a = chunk_plan(20 * kSampleRate, kSampleRate, 0.0).size();
    const auto b = chunk_plan(20 * kSampleRate, kSampleRate, 0.5).size();
    return make(m, "chunk counts 20 / 39", a == 20 && b == 39, std::to_string(a) + " / " + std::to_string(b));
  }));
  out.push_back(guarded(m, "si-sdr scale invariance", [&] {
    Rng rng(9);
    Waveform ref, est, est3;
    ref.samples.resize(4000);
    est.samples.resize(4000);
    for (Eigen::Index i = 0; i < 4000; ++i) {
      ref.samples[i] = rng.uniform(-1, 1);
      est.samples[i] = ref.samples[i] + rng.uniform(-0.5, 0.5);
    }
    est3.samples = 3.0 * est.samples;
    const double d = std::abs(si_sdr(est, ref) - si_sdr(est3, ref));
    return make(m, "si-sdr scale invariance", d < 1e-9, "diff " + num(d));
  }));
  return out;
}

std::vector<CheckResult> cli_checks() {
  const std::string m = "cli";
  std::vector<CheckResult> out;
  out.push_back(guarded(m, "config round trip", [&] {
    RunConfig c;
    apply_override(c, "model.pe=t5");
    apply_override(c, "train.clip_len_s=2");
    const RunConfig back = from_json(to_json(c));
    return make(m, "config round trip", to_json(back) == to_json(c));
  }));
  out.push_back(guarded(m, "unknown keys rejected", [&] {
    bool rejected = false;
    try {
      from_json(nlohmann::json{{"model", {{"layerz", 3}}}});
    } catch (const ConfigError&) {
      rejected = true;
    }
    return make(m, "unknown keys rejected", rejected);
  }));
  return out;
}

}  // namespace

double naive_bias(const PositionalEncoding& pe, int layer, int head, long i, long j) {
  const PeKind kind = pe.kind();
  auto value = [&](const std::string& name, Eigen::Index r, Eigen::Index c) {
    for (const Parameter* p : pe.parameters())
      if (p->name == name) return p->value(r, c);
    throw std::logic_error("missing " + name);
  };
  const double dist = static_cast<double>(std::labs(i - j));
  switch (kind) {
    case PeKind::GaussBias: {
      const double s = value("pe.gauss.sigma", 0, head);
      return -static_cast<double>((i - j) * (i - j)) / (2.0 * s * s);
    }
    case PeKind::T5Bias: {
      const long d = i - j;
      int idx;
      if (d <= -8)
        idx = std::min(15, 8 + static_cast<int>(std::floor(std::log(-d / 8.0) / std::log(128.0 / 8.0) * 8))) + 16;
      else if (d < 0)
        idx = static_cast<int>(-d) + 16;
      else if (d < 8)
        idx = static_cast<int>(d);
      else
        idx = std::min(15, 8 + static_cast<int>(std::floor(std::log(d / 8.0) / std::log(128.0 / 8.0) * 8)));
      return value("pe.t5.buckets", head, idx);
    }
    case PeKind::TISA: {
      const std::string p = "pe.tisa.layer" + std::to_string(layer);
      double total = 0.0;
      for (int s = 0; s < pe.config().tisa_kernels; ++s) {
        const double u = static_cast<double>(j - i) - value(p + ".c", head, s);
        total += value(p + ".a", head, s) * std::exp(-std::abs(value(p + ".b", head, s)) * u * u);
      }
      return total;
    }
    case PeKind::DABias: {
      const double w = value("pe.dabias.w", 0, head);
      const double v = value("pe.dabias.v", 0, head);
      return (1.0 + std::exp(v)) / (1.0 + std::exp(v - w * dist));
    }
    case PeKind::KERPLE: {
      const double r1 = std::exp(value("pe.kerple.log_r1", 0, head));
      const double r2 = std::exp(value("pe.kerple.log_r2", 0, head));
      return -r1 * std::log(1.0 + r2 * dist);
    }
    case PeKind::LearnLin: return value("pe.learnlin.beta", 0, head) * dist;
    default: throw std::logic_error("no bias");
  }
}

CheckResult check_param_counts() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<std::pair<PeKind, long>> expected = {
      {PeKind::LearnLin, 8}, {PeKind::GaussBias, 8}, {PeKind::DABias, 16}, {PeKind::KERPLE, 16},
      {PeKind::T5Bias, 256}, {PeKind::TISA, 480},    {PeKind::Sinusoidal, 0}};
  std::string detail;
  bool ok = true;
  Rng rng(0);
  for (auto [k, n] : expected) {
    PeConfig pc;
    pc.tisa_kernels = 5;
    const long got = PositionalEncoding(k, 8, 4, 256, pc, rng).trainable_count();
    const long formula = param_count(k, 8, 4, 5, pc.bert_max_len, 256);
    ok = ok && got == n && formula == n;
    detail += to_string(k) + "=" + std::to_string(got) + " ";
  }
  const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  ok = ok && sec < 1.0;
  return {"posenc", "trainable parameter counts", ok, detail + "(" + num(sec) + " s)"};
}

GradCheck gradient_check(EnhancementModel& model, const Mat& magnitude, const MaskGrid& target, double h,
                         double floor) {
  auto params = model.parameters();
  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape;
    Var loss = mse_loss(tape, model.forward(tape, tape.constant(magnitude)), target);
    tape.backward(loss);
  }
  auto loss_value = [&] {
    Tape tape(false);
    return mse_loss(tape, model.forward(tape, tape.constant(magnitude)), target).scalar();
  };
  GradCheck result;
  for (Parameter* p : params) {
    if (!p->trainable) continue;
    Mat numeric(p->value.rows(), p->value.cols());
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      double& x = p->value.data()[i];
      const double keep = x;
      x = keep + h;
      const double up = loss_value();
      x = keep - h;
      const double down = loss_value();
      x = keep;
      numeric.data()[i] = (up - down) / (2.0 * h);
    }
    result.entries += p->value.size();
    const double na = p->grad.norm(), nn = numeric.norm();
    if (na < floor && nn < floor) continue;
    const double err = (p->grad - numeric).norm() / std::max(na, nn);
    if (err > result.max_rel_error) {
      result.max_rel_error = err;
      result.worst = p->name;
    }
  }
  return result;
}

std::vector<CheckResult> run_selftest() {
  std::vector<CheckResult> all;
  for (auto& group : {numerics_checks(), dsp_checks(), objectives_checks(), posenc_checks(), model_checks(),
                      training_checks(), eval_checks(), cli_checks()})
    all.insert(all.end(), group.begin(), group.end());
  return all;
}

}  // namespace lgse
