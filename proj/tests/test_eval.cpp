#include "doctest.h"
#include "support.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <numbers>

#include "lgse/config.hpp"
#include "lgse/eval.hpp"

using namespace lgse;

namespace {

Waveform tone(Eigen::Index n, double f) {
  Waveform w;
  w.samples.resize(n);
  for (Eigen::Index t = 0; t < n; ++t) w.samples[t] = std::sin(2 * std::numbers::pi * f * t / 16000.0);
  return w;
}

Waveform noise(std::uint64_t seed, Eigen::Index n) {
  Rng rng(seed);
  Waveform w;
  w.samples = testing::random_mat(rng, n, 1).col(0);
  return w;
}

// IRM head saturated at 1: the network passes the mixture through unchanged
EnhancementModel identity_model() {
  ModelConfig c;
  c.layers = 1;
  c.heads = 2;
  c.d_model = 8;
  c.d_ff = 8;
  c.pe = PeKind::LearnLin;
  EnhancementModel m(c, 1);
  m.parameter("head.w").value.setZero();
  m.parameter("head.b").value.setConstant(40.0);
  return m;
}

RunConfig tiny_run(const std::filesystem::path& out) {
  RunConfig c;
  c.seed = 3;
  c.model.layers = 1;
  c.model.heads = 2;
  c.model.d_model = 8;
  c.model.d_ff = 8;
  c.train.seed = 3;
  c.train.clip_len_s = 0.25;
  c.train.batch_utts = 2;
  c.train.max_steps = 2;
  c.train.w_steps = 10;
  c.corpus.n_utts = 4;
  c.corpus.dur_s = 0.5;
  c.corpus.valid_utts = 1;
  c.test.durations = {0.5, 1.0};
  c.test.snrs = {0};
  c.test.utts_per_condition = 1;
  c.test.kinds = {"nopos", "learnlin"};
  c.paths.out_dir = out.string();
  return c;
}

}  // namespace

TEST_CASE("SI-SDR reference cases") {
  const Waveform s = tone(4000, 440);
  CHECK(si_sdr(s, s) == 100.0);
  Waveform scaled;
  scaled.samples = -3.5 * s.samples;
  CHECK(si_sdr(scaled, s) == 100.0);

  Waveform n = noise(1, 4000);
  n.samples -= n.samples.dot(s.samples) / s.samples.squaredNorm() * s.samples;  // orthogonal to s
  n.samples *= std::sqrt(s.samples.squaredNorm() / n.samples.squaredNorm() / 10.0);
  Waveform est;
  est.samples = s.samples + n.samples;
  CHECK(si_sdr(est, s) == doctest::Approx(10.0).epsilon(1e-9));
  est.samples *= 0.01;
  CHECK(si_sdr(est, s) == doctest::Approx(10.0).epsilon(1e-9));
  CHECK(si_sdr(n, s) == -100.0);

  CHECK_THROWS_AS(si_sdr(s, tone(10, 1)), LengthError);
  Waveform silent;
  silent.samples = Eigen::VectorXd::Zero(4000);
  CHECK_THROWS(si_sdr(s, silent));
}

TEST_CASE("segmental SNR clamps and skips silence") {
  Waveform s = tone(4096, 300);
  s.samples.head(1024).setZero();
  CHECK(seg_snr(s, s) == 35.0);
  Waveform zero;
  zero.samples = Eigen::VectorXd::Zero(4096);
  CHECK(seg_snr(zero, s) == doctest::Approx(0.0));
  Waveform bad;
  bad.samples = -10 * s.samples;
  CHECK(seg_snr(bad, s) == -10.0);
  CHECK_THROWS(seg_snr(s, zero));
}

TEST_CASE("chunk plans") {
  auto check_cover = [](const std::vector<Chunk>& p, Eigen::Index n) {
    CHECK(p.front().start == 0);
    CHECK(p.back().start + p.back().length == n);
  };
  const auto a = chunk_plan(160000, 8000, 0.0), b = chunk_plan(160000, 8000, 0.5);
  CHECK(a.size() == 20);
  CHECK(b.size() == 39);
  check_cover(a, 160000);
  check_cover(b, 160000);
  CHECK(b[1].start == 4000);

  const auto r = chunk_plan(8500, 2000, 0.0);
  REQUIRE(r.size() == 4);
  CHECK(r[3].start == 6000);
  CHECK(r[3].length == 2500);
  const auto ro = chunk_plan(8500, 2000, 0.5);
  REQUIRE(ro.size() == 7);
  CHECK(ro[6].start == 6000);
  CHECK(ro[6].length == 2500);

  CHECK(chunk_plan(1500, 2000, 0.0).size() == 1);
  CHECK(chunk_plan(1500, 2000, 0.5).size() == 1);
  CHECK_THROWS(chunk_plan(100, 0, 0.0));
  CHECK_THROWS(chunk_plan(100, 10, 0.3));
}

TEST_CASE("enhancement paths") {
  const EnhancementModel id = identity_model();
  const Waveform x = noise(2, 20000);

  SUBCASE("identity mask returns the input in every mode") {
    const Waveform full = enhance_full(id, x);
    CHECK(full.size() == x.size());
    CHECK((full.samples - x.samples).cwiseAbs().maxCoeff() < 1e-12);
    int n = 0;
    CHECK((enhance_chunked(id, x, 0.25, 0.0, &n).samples - x.samples).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(n == 5);
    CHECK((enhance_chunked(id, x, 0.25, 0.5, &n).samples - x.samples).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(n == 9);
  }

  SUBCASE("a single chunk equals full-utterance processing") {
    EnhancementModel m(id.config(), 4);
    CHECK(enhance_chunked(m, x, 1.25, 0.0).samples == enhance_full(m, x).samples);
    CHECK(enhance_chunked(m, x, 2.0, 0.5).samples == enhance_full(m, x).samples);
    CHECK(enhance_chunked(m, x, 0.5, 0.0).size() == x.size());
    CHECK(enhance_chunked(m, x, 0.5, 0.5).size() == x.size());
  }
}

TEST_CASE("test set") {
  const auto a = make_test_set(5, {0.5, 1.0}, {-5, 5}, 2), b = make_test_set(5, {0.5, 1.0}, {-5, 5}, 2);
  REQUIRE(a.size() == 8);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].noisy.samples == b[i].noisy.samples);
    CHECK(a[i].clean.size() == static_cast<Eigen::Index>(std::lround(a[i].duration_s * 16000)));
    Waveform v;
    v.samples = a[i].noisy.samples - a[i].clean.samples;
    CHECK(10 * std::log10(energy(a[i].clean.samples) / energy(v.samples)) == doctest::Approx(a[i].snr_db));
  }
  CHECK(a[0].utt_id != a[1].utt_id);
}

TEST_CASE("metrics files and report") {
  std::vector<MetricRow> rows;
  rows.push_back({"noisy", "irm", 0, 1, 0, "d1_s0_0", 0.1, 0.1, -1.5, "noisy"});
  rows.push_back({"learnlin", "irm", 0.5, 1, 0, "d1_s0_0", 0.1, 7.123456789012345, 4.5, "full"});
  rows.push_back({"learnlin", "irm", 0.5, 1, 0, "d1_s0_0", 0.1, 6.0, 4.0, "seg"});
  rows.push_back({"nopos", "irm", 0.5, 1, 0, "d1_s0_0", 0.1, 5.0, 3.0, "full"});
  const std::string csv = metrics_csv(rows);
  CHECK(csv.rfind("kind,target,train_len_s,test_len_s,snr_db,utt_id,si_sdr_in,si_sdr_out,seg_snr_out,mode\n", 0) ==
        0);
  CHECK(parse_metrics_csv(csv) == rows);
  CHECK_THROWS(parse_metrics_csv("a,b\n"));
  CHECK_THROWS(parse_metrics_csv(csv + "learnlin,irm,x\n"));

  const auto s = summarize(rows);
  const MetricSummary* ll = find_summary(s, "learnlin", 1, "full");
  REQUIRE(ll);
  CHECK(ll->si_sdri == doctest::Approx(7.023456789012345));
  CHECK(find_summary(s, "learnlin", 2, "full") == nullptr);

  const std::string md = markdown_report(rows);
  CHECK(md.find("| Noisy | 0.10 / -1.50 |") != std::string::npos);
  CHECK(md.find("| learnlin | 7.12 / 4.50 |") != std::string::npos);
  CHECK(md.find("| learnlin-Seg | 6.00 / 4.00 |") != std::string::npos);
  CHECK(md.find("Trained on 0.5 s") != std::string::npos);
}

TEST_CASE("worker threads follow LGSE_THREADS") {
  ::setenv("LGSE_THREADS", "3", 1);
  CHECK(worker_threads() == 3);
  ::setenv("LGSE_THREADS", "0", 1);
  CHECK_THROWS(worker_threads());
  ::setenv("LGSE_THREADS", "two", 1);
  CHECK_THROWS(worker_threads());
  ::unsetenv("LGSE_THREADS");
  CHECK(worker_threads() >= 1);

  std::vector<int> hits(50, 0);
  parallel_for(50, 4, [&](int i) { hits[i] += 1; });
  for (int h : hits) CHECK(h == 1);
  CHECK_THROWS(parallel_for(3, 2, [](int i) {
    if (i == 1) throw std::runtime_error("boom");
  }));
}

TEST_CASE("length-generalization experiment end to end") {
  const auto dir = std::filesystem::temp_directory_path() / "lgse_test_experiment";
  std::filesystem::remove_all(dir);
  const RunConfig cfg = tiny_run(dir);
  ExperimentOptions opt;
  opt.threads = 2;
  const ExperimentResult r = run_lengen_experiment(cfg, opt);
  // noisy: 2 mixtures; each kind: full, seg, seg-o on both mixtures
  CHECK(r.rows.size() == 2 + 2 * 6);
  CHECK(r.rows.front().mode == "noisy");
  CHECK(r.checkpoints.size() == 2);
  for (const auto& p : r.checkpoints) CHECK(std::filesystem::exists(p));
  for (const MetricRow& row : r.rows) {
    CHECK(std::isfinite(row.si_sdr_out));
    if (row.mode != "noisy") CHECK(row.train_len_s == 0.25);
  }

  ExperimentOptions reuse;
  reuse.train_missing = false;
  reuse.threads = 1;
  CHECK(metrics_csv(run_lengen_experiment(cfg, reuse).rows) == metrics_csv(r.rows));

  std::filesystem::remove(r.checkpoints[0]);
  CHECK_THROWS(run_lengen_experiment(cfg, reuse));
  std::filesystem::remove_all(dir);
}
