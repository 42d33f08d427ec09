// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <limits>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "lgse/config.hpp"
#include "lgse/eval.hpp"
#include "lgse/selftest.hpp"

using namespace lgse;
namespace fs = std::filesystem;

namespace {

// tolerances
constexpr double kParamCountSeconds = 1.0;
constexpr double kBiasOracleSeconds = 10.0;
constexpr double kStftInteriorError = 1e-10;
constexpr double kGradRelError = 1e-4;
constexpr double kGradCpuSeconds = 120.0;
constexpr double kOracleGainDb = 5.0;
constexpr double kOrderingMarginDb = 0.5;
constexpr double kTrainLenSpreadDb = 1.5;
constexpr double kExperimentCpuSeconds = 1800.0;
constexpr double kLrUlps = 4.0;

struct Outcome {
  bool passed = false;
  std::string detail;
};

double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

Outcome param_counts() {
  const double t0 = cpu_seconds();
  const CheckResult r = check_param_counts();
  const double dt = cpu_seconds() - t0;
  return {r.passed && dt < kParamCountSeconds, r.detail + fmt("; %.3f s", dt)};
}

Outcome bias_oracle() {
  const double t0 = cpu_seconds();
  Rng rng(2024);
  long compared = 0, mismatches = 0, structural = 0;
  for (PeKind kind : kAllPeKinds) {
    if (!uses_bias(kind)) continue;
    PositionalEncoding pe(kind, 3, 2, 16, {}, rng);
    for (Parameter* p : pe.parameters())
      for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = rng.uniform(-1.5, 1.5);
    for (int layer = 0; layer < 2; ++layer)
      for (int h = 0; h < 3; ++h)
        for (Eigen::Index L : {1, 2, 7, 16, 33, 64}) {
          const Mat b = pe.bias_matrix(layer, h, L).dense();
          const Mat ext = pe.bias_matrix(layer, h, L + 16).dense();
          for (Eigen::Index i = 0; i < L; ++i)
            for (Eigen::Index j = 0; j < L; ++j) {
              ++compared;
              mismatches += b(i, j) != naive_bias(pe, layer, h, i, j);
              structural += ext(i, j) != b(i, j);
              if (i > 0 && j > 0) structural += b(i, j) != b(i - 1, j - 1);
            }
        }
  }
  const double dt = cpu_seconds() - t0;
  return {mismatches == 0 && structural == 0 && dt < kBiasOracleSeconds,
          std::to_string(compared) + " entries, " + std::to_string(mismatches) + " oracle mismatches, " +
              std::to_string(structural) + " Toeplitz/extension violations" + fmt("; %.2f s", dt)};
}

Outcome t5_fixtures() {
  const std::vector<std::pair<long, int>> fx = {{0, 0}, {7, 7}, {8, 8}, {128, 15}, {-3, 19}, {-8, 24}};
  std::string got;
  bool ok = true;
  for (auto [d, b] : fx) {
    const int idx = t5_bucket(d);
    ok = ok && idx == b;
    got += " " + std::to_string(d) + "->" + std::to_string(idx);
  }
  return {ok, "buckets" + got};
}

Outcome stft_round_trip() {
  Rng rng(4);
  double worst = 0.0;
  for (double seconds : {1.0, 2.5, 7.3, 13.0, 20.0}) {
    Waveform w;
    w.samples.resize(static_cast<Eigen::Index>(seconds * 16000));
    for (auto& v : w.samples) v = rng.uniform(-1.0, 1.0);
    const Spectrogram s = stft(w);
    const Waveform y = istft(s, s.cfg, w.size());
    const Eigen::Index covered = (s.frames() - 1) * s.cfg.hop() + s.cfg.win_len();
    const Eigen::Index lo = s.cfg.win_len(), n = covered - 2 * s.cfg.win_len();
    worst = std::max(worst, (y.samples.segment(lo, n) - w.samples.segment(lo, n)).cwiseAbs().maxCoeff());
  }
  return {worst < kStftInteriorError, fmt("max interior error %.3g", worst)};
}

Outcome gradients() {
  const double t0 = cpu_seconds();
  Rng rng(5);
  double worst = 0.0;
  std::string where;
  for (PeKind kind : kAllPeKinds)
    for (TargetKind target : {TargetKind::MS, TargetKind::IRM, TargetKind::PSM, TargetKind::CIRM}) {
      ModelConfig c;
      c.layers = 2;
      c.heads = 2;
      c.d_model = 8;
      c.d_ff = 8;
      c.bins = 9;
      c.pe = kind;
      c.target = target;
      c.pe_cfg.bert_max_len = 8;
      EnhancementModel m(c, 11);
      for (Parameter* p : m.parameters())
        if (p->name.rfind("pe.", 0) == 0)
          for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = rng.uniform(0.3, 1.2);
      Mat mag(5, 9);
      for (Eigen::Index i = 0; i < mag.size(); ++i) mag.data()[i] = rng.uniform(0.0, 2.0);
      MaskGrid t;
      t.real.resize(5, 9);
      for (Eigen::Index i = 0; i < t.real.size(); ++i) t.real.data()[i] = rng.uniform(0.0, 1.0);
      if (target == TargetKind::CIRM) {
        t.imag.resize(5, 9);
        for (Eigen::Index i = 0; i < t.imag.size(); ++i) t.imag.data()[i] = rng.uniform(-1.0, 1.0);
      }
      const GradCheck g = gradient_check(m, mag, t);
      if (g.max_rel_error >= worst) {
        worst = g.max_rel_error;
        where = to_string(kind) + "/" + to_string(target) + " " + g.worst;
      }
    }
  const double dt = cpu_seconds() - t0;
  return {worst < kGradRelError && dt < kGradCpuSeconds,
          fmt("40 models, max relative error %.3g", worst) + " at " + where + fmt("; %.1f s CPU", dt)};
}

Outcome oracle_masks() {
  const auto mixtures = make_test_set(6, {1, 2, 5}, {0}, 5);
  double worst = 1e9;
  std::string where;
  for (const TestMixture& m : mixtures) {
    Waveform noise;
    noise.samples = m.noisy.samples - m.clean.samples;
    const Spectrogram s = stft_padded(m.clean), v = stft_padded(noise), x = stft_padded(m.noisy);
    const double in = si_sdr(m.noisy, m.clean);
    for (TargetKind k : {TargetKind::IRM, TargetKind::PSM, TargetKind::CIRM}) {
      const Spectrogram y = apply_target(x, make_target(k, s, v, x), k);
      const double gain = si_sdr(istft_padded(y, x.cfg, m.noisy.size()), m.clean) - in;
      if (gain < worst) {
        worst = gain;
        where = m.utt_id + " " + to_string(k);
      }
    }
  }
  return {worst > kOracleGainDb,
          std::to_string(mixtures.size()) + " utterances x 3 masks, smallest gain " + fmt("%.2f dB", worst) + " (" +
              where + ")"};
}

struct DeskRun {
  ExperimentResult result;
  double cpu = 0.0;
  double wall = 0.0;
  std::string error;
};

DeskRun desk_experiment() {
  DeskRun d;
  try {
    RunConfig cfg = load_config(fs::path(LGSE_SOURCE_DIR) / "configs" / "desk.json");
    cfg.paths.out_dir = (fs::temp_directory_path() / "lgse_acceptance_desk").string();
    fs::remove_all(cfg.paths.out_dir);
    ExperimentOptions opt;
    opt.log = [](const std::string& s) { std::cerr << "  " << s << "\n"; };
    const double c0 = cpu_seconds();
    const auto w0 = std::chrono::steady_clock::now();
    d.result = run_lengen_experiment(cfg, opt);
    d.cpu = cpu_seconds() - c0;
    d.wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - w0).count();
    std::cerr << markdown_report(d.result.rows);
    fs::remove_all(cfg.paths.out_dir);
  } catch (const std::exception& e) {
    d.error = e.what();
  }
  return d;
}

double mean_sdr(const DeskRun& d, const std::string& kind, double len, const std::string& mode) {
  const MetricSummary* s = find_summary(d.result.summary, kind, len, mode);
  if (!s) throw std::runtime_error("no result for " + kind + " " + mode + fmt(" at %g s", len));
  return s->si_sdr_out;
}

Outcome length_generalization(const DeskRun& d) {
  if (!d.error.empty()) return {false, "experiment failed: " + d.error};
  const double ll = mean_sdr(d, "learnlin", 4, "full"), np = mean_sdr(d, "nopos", 4, "full"),
               sn = mean_sdr(d, "sinusoidal", 4, "full");
  double lo = 1e9, hi = -1e9;
  std::string lo_kind, hi_kind;
  for (const MetricSummary& s : d.result.summary) {
    if (s.kind == "noisy" || s.mode != "full" || s.test_len_s != 0.5) continue;
    if (s.si_sdr_out < lo) lo = s.si_sdr_out, lo_kind = s.kind;
    if (s.si_sdr_out > hi) hi = s.si_sdr_out, hi_kind = s.kind;
  }
  const bool ok = ll - np >= kOrderingMarginDb && np - sn >= kOrderingMarginDb && hi - lo <= kTrainLenSpreadDb &&
                  d.cpu <= kExperimentCpuSeconds;
  std::ostringstream os;
  os << fmt("4 s: LearnLin %.2f", ll) << fmt(" NoPos %.2f", np) << fmt(" Sinusoidal %.2f dB", sn)
     << fmt("; margins %+.2f", ll - np) << fmt(" / %+.2f", np - sn) << fmt("; 0.5 s spread %.2f dB", hi - lo) << " ("
     << lo_kind << ".." << hi_kind << ")" << fmt("; %.0f s CPU", d.cpu);
  return {ok, os.str()};
}

Outcome chunking(const DeskRun& d) {
  const auto a = chunk_plan(20 * 16000, 16000, 0.0), b = chunk_plan(20 * 16000, 16000, 0.5);
  bool ok = a.size() == 20 && b.size() == 39;
  std::string detail = "20 s at 1 s: " + std::to_string(a.size()) + " / " + std::to_string(b.size()) + " chunks";
  if (!d.error.empty()) return {false, detail + "; experiment failed: " + d.error};
  const double sf = mean_sdr(d, "sinusoidal", 4, "full"), ss = mean_sdr(d, "sinusoidal", 4, "seg");
  const double lf = mean_sdr(d, "learnlin", 4, "full"), ls = mean_sdr(d, "learnlin", 4, "seg");
  ok = ok && ss > sf && lf > ls;
  detail += fmt("; Sinusoidal Seg %.2f", ss) + fmt(" vs full %.2f", sf) + fmt("; LearnLin full %.3f", lf) +
            fmt(" vs Seg %.3f dB", ls);
  return {ok, detail};
}

Outcome lr_schedule_check() {
  bool ok = true;
  double worst_ulps = 0.0;
  for (auto [w, dm] : {std::pair<long, int>{4000, 256}, {40000, 256}, {300, 32}}) {
    const double expect = std::pow(static_cast<double>(dm), -0.5) * std::pow(static_cast<double>(w), -0.5);
    const double got = lr_schedule(w, w, dm);
    const double ulps = std::abs(got - expect) / (expect * std::numeric_limits<double>::epsilon());
    worst_ulps = std::max(worst_ulps, ulps);
    ok = ok && ulps <= kLrUlps;
    for (long n = 1; n < w; ++n) ok = ok && lr_schedule(n + 1, w, dm) > lr_schedule(n, w, dm);
    for (long n = w; n < 4 * w; ++n) ok = ok && lr_schedule(n + 1, w, dm) < lr_schedule(n, w, dm);
  }
  return {ok, fmt("peak within %.1f ulp; strictly rising before and falling after warmup", worst_ulps)};
}

int shell(const std::string& cmd) {
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "lgse_acceptance_determinism";
  fs::remove_all(root);
  const std::string sets =
      " --set seed=21 --set test.kinds='[\"nopos\",\"learnlin\",\"t5\"]' --set train.max_steps=15"
      " --set corpus.n_utts=20 --set test.durations='[0.5,2]' --set test.snrs='[0,5]'"
      " --set test.utts_per_condition=2";
  std::string csv[2];
  for (int run = 0; run < 2; ++run) {
    const fs::path out = root / ("run" + std::to_string(run));
    const std::string cmd = std::string(LGSE_CLI) + " experiment -c " +
                            (fs::path(LGSE_SOURCE_DIR) / "configs" / "desk.json").string() + sets +
                            " --set paths.out_dir=" + out.string() + " > " + (root.string() + ".log") + " 2>&1";
    fs::create_directories(root);
    if (const int rc = shell(cmd); rc != 0) return {false, "experiment run exited with " + std::to_string(rc)};
    csv[run] = slurp(out / "metrics.csv");
  }
  fs::remove_all(root);
  fs::remove(root.string() + ".log");
  const bool ok = !csv[0].empty() && csv[0] == csv[1];
  return {ok, std::to_string(csv[0].size()) + " bytes, " + (ok ? "identical" : "different")};
}

}  // namespace

int main() {
  int failed = 0;
  auto report = [&](int n, const std::string& title, const std::function<Outcome()>& f) {
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.passed;
    std::cout << (o.passed ? "PASS" : "FAIL") << " criterion " << n << ": " << title << " (" << o.detail << ")"
              << std::endl;
  };

  report(1, "trainable PE parameter counts", param_counts);
  report(2, "bias matrices equal the per-pair oracle", bias_oracle);
  report(3, "T5 bucket fixtures", t5_fixtures);
  report(4, "STFT/ISTFT interior reconstruction", stft_round_trip);
  report(5, "model gradients match finite differences", gradients);
  report(6, "oracle masks improve SI-SDR", oracle_masks);
  const DeskRun desk = desk_experiment();
  report(7, "desk-scale length generalization", [&] { return length_generalization(desk); });
  report(8, "chunk counts and chunked-inference pattern", [&] { return chunking(desk); });
  report(9, "learning-rate schedule", lr_schedule_check);
  report(10, "experiment determinism", determinism);
  return failed;
}
