#include "lgse/eval.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "lgse/checkpoint.hpp"

namespace lgse {

namespace {

constexpr double kSdrCap = 100.0;

void check_pair(const Waveform& est, const Waveform& ref, const char* what) {
  if (est.size() != ref.size())
    throw LengthError(std::string(what) + ": estimate has " + std::to_string(est.size()) + " samples, reference " +
                      std::to_string(ref.size()));
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string short_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace

double si_sdr(const Waveform& est, const Waveform& ref) {
  check_pair(est, ref, "si_sdr");
  const double rr = ref.samples.squaredNorm();
  if (rr <= 0.0) throw std::invalid_argument("si_sdr: reference has zero energy");
  const double alpha = est.samples.dot(ref.samples) / rr;
  const Eigen::VectorXd target = alpha * ref.samples;
  const double num = target.squaredNorm();
  const double den = (est.samples - target).squaredNorm();
  if (den <= num * 1e-10) return kSdrCap;
  if (num <= 0.0) return -kSdrCap;
  return std::clamp(10.0 * std::log10(num / den), -kSdrCap, kSdrCap);
}

double seg_snr(const Waveform& est, const Waveform& ref) {
  check_pair(est, ref, "seg_snr");
  constexpr Eigen::Index frame = 512;
  constexpr Eigen::Index hop = 256;
  double total = 0.0;
  int count = 0;
  const Eigen::Index n = ref.size();
  for (Eigen::Index s = 0; s + frame <= std::max(n, frame); s += hop) {
    const Eigen::Index len = std::min(frame, n - s);
    if (len <= 0) break;
    const double sig = ref.samples.segment(s, len).squaredNorm();
    if (sig <= 0.0) continue;
    const double err = (ref.samples.segment(s, len) - est.samples.segment(s, len)).squaredNorm();
    const double snr = err <= 0.0 ? 35.0 : 10.0 * std::log10(sig / err);
    total += std::clamp(snr, -10.0, 35.0);
    ++count;
  }
  if (count == 0) throw std::invalid_argument("seg_snr: reference is silent");
  return total / count;
}

Waveform enhance_full(const EnhancementModel& model, const Waveform& noisy) {
  const Spectrogram x = stft_padded(noisy);
  if (x.bins() != model.config().bins)
    throw DimensionError("enhance: model expects " + std::to_string(model.config().bins) + " bins, STFT has " +
                         std::to_string(x.bins()));
  const MaskGrid pred = model.predict(x.values.cwiseAbs());
  const Spectrogram y = apply_target(x, pred, model.config().target, model.config().objective);
  return istft_padded(y, x.cfg, noisy.size());
}

std::vector<Chunk> chunk_plan(Eigen::Index n, Eigen::Index chunk_len, double overlap) {
  if (chunk_len <= 0) throw std::invalid_argument("chunk_plan: chunk length must be positive");
  if (overlap != 0.0 && overlap != 0.5)
    throw std::invalid_argument("chunk_plan: overlap must be 0 or 0.5, got " + short_num(overlap));
  if (n <= 0) throw LengthError("chunk_plan: empty utterance");
  if (n < chunk_len) return {Chunk{0, n}};
  const Eigen::Index whole = n / chunk_len;
  std::vector<Chunk> plan;
  if (overlap == 0.0) {
    for (Eigen::Index k = 0; k < whole; ++k) plan.push_back({k * chunk_len, chunk_len});
  } else {
    const Eigen::Index hop = chunk_len / 2;
    if (hop == 0) throw std::invalid_argument("chunk_plan: chunk too short for 50% overlap");
    for (Eigen::Index k = 0; k < 2 * whole - 1; ++k) plan.push_back({k * hop, chunk_len});
  }
  plan.back().length = n - plan.back().start;
  return plan;
}

Waveform enhance_chunked(const EnhancementModel& model, const Waveform& noisy, double chunk_s, double overlap,
                         int* n_chunks) {
  const auto c = static_cast<Eigen::Index>(std::llround(chunk_s * noisy.sample_rate));
  const auto plan = chunk_plan(noisy.size(), c, overlap);
  if (n_chunks) *n_chunks = static_cast<int>(plan.size());

  Waveform out;
  out.samples = Eigen::VectorXd::Zero(noisy.size());
  Eigen::VectorXd weight = Eigen::VectorXd::Zero(noisy.size());
  const double half = static_cast<double>(c) / 2.0;
  for (std::size_t k = 0; k < plan.size(); ++k) {
    const Chunk& ch = plan[k];
    Waveform piece;
    piece.samples = noisy.samples.segment(ch.start, ch.length);
    const Waveform y = enhance_full(model, piece);
    for (Eigen::Index t = 0; t < ch.length; ++t) {
      double w = 1.0;
      if (overlap > 0.0) {
        const double rise = k == 0 ? 1.0 : (static_cast<double>(t) + 0.5) / half;
        const double fall = k + 1 == plan.size() ? 1.0 : (static_cast<double>(ch.length - t) - 0.5) / half;
        w = std::clamp(std::min(rise, fall), 0.0, 1.0);
      }
      out.samples(ch.start + t) += w * y.samples(t);
      weight(ch.start + t) += w;
    }
  }
  out.samples = out.samples.cwiseQuotient(weight);
  return out;
}

std::vector<TestMixture> make_test_set(std::uint64_t seed, const std::vector<double>& durations,
                                       const std::vector<int>& snrs, int per_condition) {
  if (per_condition < 1) throw std::invalid_argument("make_test_set: per_condition must be >= 1");
  std::vector<TestMixture> set;
  for (double dur : durations) {
    const int n = per_condition * static_cast<int>(snrs.size());
    const auto corpus = synth_corpus(sub_seed(seed, "test/" + short_num(dur)), n, dur);
    for (std::size_t s = 0; s < snrs.size(); ++s) {
      for (int i = 0; i < per_condition; ++i) {
        const CorpusPair& pair = corpus[s * static_cast<std::size_t>(per_condition) + static_cast<std::size_t>(i)];
        TestMixture m;
        m.utt_id = "d" + short_num(dur) + "_s" + std::to_string(snrs[s]) + "_" + std::to_string(i);
        m.duration_s = dur;
        m.snr_db = snrs[s];
        m.clean = pair.clean;
        m.noisy = mix_at_snr(pair.clean, pair.noise, snrs[s]);
        set.push_back(std::move(m));
      }
    }
  }
  return set;
}

std::string metrics_csv(const std::vector<MetricRow>& rows) {
  std::ostringstream os;
  os << "kind,target,train_len_s,test_len_s,snr_db,utt_id,si_sdr_in,si_sdr_out,seg_snr_out,mode\n";
  for (const MetricRow& r : rows)
    os << r.kind << ',' << r.target << ',' << fmt(r.train_len_s) << ',' << fmt(r.test_len_s) << ',' << r.snr_db
       << ',' << r.utt_id << ',' << fmt(r.si_sdr_in) << ',' << fmt(r.si_sdr_out) << ',' << fmt(r.seg_snr_out) << ','
       << r.mode << '\n';
  return os.str();
}

std::vector<MetricRow> parse_metrics_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("kind,target,", 0) != 0)
    throw std::invalid_argument("metrics csv: missing header");
  std::vector<MetricRow> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 10)
      throw std::invalid_argument("metrics csv line " + std::to_string(line_no) + ": expected 10 fields");
    MetricRow r;
    r.kind = f[0];
    r.target = f[1];
    r.train_len_s = std::strtod(f[2].c_str(), nullptr);
    r.test_len_s = std::strtod(f[3].c_str(), nullptr);
    r.snr_db = std::stoi(f[4]);
    r.utt_id = f[5];
    r.si_sdr_in = std::strtod(f[6].c_str(), nullptr);
    r.si_sdr_out = std::strtod(f[7].c_str(), nullptr);
    r.seg_snr_out = std::strtod(f[8].c_str(), nullptr);
    r.mode = f[9];
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<MetricSummary> summarize(const std::vector<MetricRow>& rows) {
  std::vector<MetricSummary> out;
  std::map<std::tuple<std::string, std::string, double, double, std::string>, std::size_t> index;
  for (const MetricRow& r : rows) {
    const auto key = std::make_tuple(r.kind, r.target, r.train_len_s, r.test_len_s, r.mode);
    auto [it, fresh] = index.try_emplace(key, out.size());
    if (fresh) out.push_back({r.kind, r.target, r.train_len_s, r.test_len_s, r.mode});
    MetricSummary& s = out[it->second];
    ++s.count;
    s.si_sdr_out += r.si_sdr_out;
    s.si_sdri += r.si_sdr_out - r.si_sdr_in;
    s.seg_snr_out += r.seg_snr_out;
  }
  for (MetricSummary& s : out) {
    s.si_sdr_out /= s.count;
    s.si_sdri /= s.count;
    s.seg_snr_out /= s.count;
  }
  return out;
}

const MetricSummary* find_summary(const std::vector<MetricSummary>& s, const std::string& kind, double test_len,
                                  const std::string& mode) {
  for (const MetricSummary& m : s)
    if (m.kind == kind && m.mode == mode && std::abs(m.test_len_s - test_len) < 1e-9) return &m;
  return nullptr;
}

std::string markdown_report(const std::vector<MetricRow>& rows) {
  const auto summary = summarize(rows);
  std::vector<double> train_lens;
  std::vector<double> test_lens;
  std::vector<std::pair<std::string, std::string>> labels;  // (kind, mode)
  auto add_unique = [](auto& v, const auto& x) {
    if (std::find(v.begin(), v.end(), x) == v.end()) v.push_back(x);
  };
  for (const MetricSummary& s : summary) {
    if (s.kind != "noisy") add_unique(train_lens, s.train_len_s);
    add_unique(test_lens, s.test_len_s);
    add_unique(labels, std::make_pair(s.kind, s.mode));
  }
  std::sort(test_lens.begin(), test_lens.end());

  std::ostringstream os;
  for (double tl : train_lens) {
    std::string target;
    for (const MetricSummary& s : summary)
      if (s.kind != "noisy" && s.train_len_s == tl) target = s.target;
    os << "### Trained on " << short_num(tl) << " s clips (" << target << ")\n\n";
    os << "| Method |";
    for (double t : test_lens) os << ' ' << short_num(t) << " s |";
    os << "\n|---|";
    for (std::size_t i = 0; i < test_lens.size(); ++i) os << "---|";
    os << '\n';
    for (const auto& [kind, mode] : labels) {
      std::string name = kind == "noisy" ? "Noisy" : kind;
      if (mode == "seg") name += "-Seg";
      if (mode == "seg-o") name += "-Seg-O";
      os << "| " << name << " |";
      for (double t : test_lens) {
        const MetricSummary* m = nullptr;
        for (const MetricSummary& s : summary)
          if (s.kind == kind && s.mode == mode && s.test_len_s == t && (kind == "noisy" || s.train_len_s == tl))
            m = &s;
        if (m) {
          char buf[64];
          std::snprintf(buf, sizeof buf, " %.2f / %.2f |", m->si_sdr_out, m->seg_snr_out);
          os << buf;
        } else {
          os << " - |";
        }
      }
      os << '\n';
    }
    os << "\nCells: mean SI-SDR / segmental SNR (dB).\n\n";
  }
  return os.str();
}

int worker_threads() {
  if (const char* env = std::getenv("LGSE_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1)
      throw std::invalid_argument(std::string("LGSE_THREADS must be a positive integer, got '") + env + "'");
    return static_cast<int>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

std::vector<CorpusPair> training_corpus(const RunConfig& cfg) {
  return synth_corpus(sub_seed(cfg.seed, "train"), cfg.corpus.n_utts, cfg.corpus.dur_s);
}

std::vector<Example> validation_set(const RunConfig& cfg) {
  if (cfg.corpus.valid_utts < 1) return {};
  const auto corpus = synth_corpus(sub_seed(cfg.seed, "valid"), cfg.corpus.valid_utts, cfg.corpus.dur_s);
  std::vector<std::size_t> all(corpus.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  Rng rng(sub_seed(cfg.seed, "valid/mix"));
  return make_batch(corpus, all, cfg.train, cfg.model.target, cfg.model.objective, rng);
}

std::filesystem::path experiment_checkpoint(const RunConfig& cfg, PeKind kind) {
  return std::filesystem::path(cfg.paths.out_dir) /
         ("model_" + to_string(kind) + "_" + to_string(cfg.model.target) + "_" + short_num(cfg.train.clip_len_s) +
          "s.lgse");
}

ExperimentResult run_lengen_experiment(const RunConfig& cfg, const ExperimentOptions& opt) {
  auto log = [&](const std::string& msg) {
    if (opt.log) opt.log(msg);
  };
  const int threads = opt.threads > 0 ? opt.threads : worker_threads();
  std::vector<PeKind> kinds;
  for (const auto& k : cfg.test.kinds) kinds.push_back(parse_pe(k));
  if (kinds.empty()) throw std::invalid_argument("experiment: no encodings listed in test.kinds");
  std::filesystem::create_directories(cfg.paths.out_dir);

  ExperimentResult result;
  for (PeKind k : kinds) result.checkpoints.push_back(experiment_checkpoint(cfg, k));
  if (!opt.train_missing)
    for (const auto& p : result.checkpoints)
      if (!std::filesystem::exists(p)) throw CheckpointError("experiment: missing checkpoint " + p.string());

  // models
  std::vector<std::optional<EnhancementModel>> models(kinds.size());
  std::vector<CorpusPair> corpus;
  bool need_training = false;
  for (const auto& p : result.checkpoints) need_training = need_training || !std::filesystem::exists(p);
  if (need_training) corpus = training_corpus(cfg);
  std::mutex log_mutex;
  parallel_for(static_cast<int>(kinds.size()), threads, [&](int i) {
    const auto& path = result.checkpoints[static_cast<std::size_t>(i)];
    if (std::filesystem::exists(path)) {
      models[static_cast<std::size_t>(i)].emplace(Checkpoint::load(path).restore_model());
      std::lock_guard lock(log_mutex);
      log("loaded " + path.string());
      return;
    }
    ModelConfig mc = cfg.model;
    mc.pe = kinds[static_cast<std::size_t>(i)];
    EnhancementModel m(mc, cfg.seed);
    Adam adam(cfg.train.adam);
    TrainConfig tc = cfg.train;
    tc.checkpoint_every = 0;
    const TrainResult tr = train(m, corpus, tc, adam);
    Checkpoint::capture(m, &adam).save(path);
    {
      std::lock_guard lock(log_mutex);
      log("trained " + to_string(mc.pe) + ": " + std::to_string(tr.trace.size()) + " steps, final loss " +
          (tr.trace.empty() ? std::string("-") : short_num(tr.trace.back().loss)));
    }
    models[static_cast<std::size_t>(i)].emplace(std::move(m));
  });

  // evaluation
  const auto tests = make_test_set(sub_seed(cfg.seed, "test"), cfg.test.durations, cfg.test.snrs,
                                   cfg.test.utts_per_condition);
  const double chunk_s = cfg.test.chunk_s > 0 ? cfg.test.chunk_s : cfg.train.clip_len_s;
  const auto chunk_len = static_cast<Eigen::Index>(std::llround(chunk_s * kSampleRate));
  const std::string target = to_string(cfg.model.target);

  for (const TestMixture& t : tests) {
    const double in = si_sdr(t.noisy, t.clean);
    result.rows.push_back({"noisy", target, 0.0, t.duration_s, t.snr_db, t.utt_id, in, in, seg_snr(t.noisy, t.clean),
                           "noisy"});
  }

  const int jobs = static_cast<int>(kinds.size() * tests.size());
  std::vector<std::vector<MetricRow>> slots(static_cast<std::size_t>(jobs));
  parallel_for(jobs, threads, [&](int j) {
    const std::size_t ki = static_cast<std::size_t>(j) / tests.size();
    const TestMixture& t = tests[static_cast<std::size_t>(j) % tests.size()];
    const EnhancementModel& m = *models[ki];
    const double in = si_sdr(t.noisy, t.clean);
    auto row = [&](const Waveform& y, const char* mode) {
      return MetricRow{to_string(kinds[ki]), target, cfg.train.clip_len_s, t.duration_s, t.snr_db, t.utt_id, in,
                       si_sdr(y, t.clean), seg_snr(y, t.clean), mode};
    };
    auto& out = slots[static_cast<std::size_t>(j)];
    out.push_back(row(enhance_full(m, t.noisy), "full"));
    if (t.noisy.size() > chunk_len) {
      out.push_back(row(enhance_chunked(m, t.noisy, chunk_s, 0.0), "seg"));
      out.push_back(row(enhance_chunked(m, t.noisy, chunk_s, 0.5), "seg-o"));
    }
  });
  for (auto& s : slots)
    for (auto& r : s) result.rows.push_back(std::move(r));
  result.summary = summarize(result.rows);
  return result;
}

}  // namespace lgse
