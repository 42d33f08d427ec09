#pragma once

// Length-generalization evaluation: fixed-length test mixtures, full-length
// and chunked enhancement, SI-SDR / segmental SNR and report assembly.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "lgse/config.hpp"
#include "lgse/dsp.hpp"
#include "lgse/model.hpp"

namespace lgse {

/// Scale-invariant SDR in dB, capped at 100 dB for (near) perfect estimates.
double si_sdr(const Waveform& est, const Waveform& ref);

/// Mean frame SNR over 512-sample frames with 50% overlap, each frame
/// clamped to [-10, 35] dB; frames of silent reference are skipped.
double seg_snr(const Waveform& est, const Waveform& ref);

Waveform enhance_full(const EnhancementModel& model, const Waveform& noisy);

struct Chunk {
  Eigen::Index start = 0;
  Eigen::Index length = 0;
};

/// Waveform-domain chunks. overlap 0: floor(n / c) back-to-back chunks, the
/// remainder joins the last one. overlap 0.5: hop c/2, 2 floor(n / c) - 1
/// chunks, again with the remainder on the last one. Shorter utterances form
/// a single chunk.
std::vector<Chunk> chunk_plan(Eigen::Index n, Eigen::Index chunk_len, double overlap);

/// Enhances each chunk independently and recombines them (concatenation, or
/// triangular cross-fade for 50% overlap). Writes the chunk count if asked.
Waveform enhance_chunked(const EnhancementModel& model, const Waveform& noisy, double chunk_s, double overlap,
                         int* n_chunks = nullptr);

struct TestMixture {
  std::string utt_id;
  double duration_s = 0;
  int snr_db = 0;
  Waveform clean;
  Waveform noisy;
};

/// `per_condition` mixtures for every (duration, SNR) pair, each exactly
/// duration_s long at exactly snr_db.
std::vector<TestMixture> make_test_set(std::uint64_t seed, const std::vector<double>& durations,
                                       const std::vector<int>& snrs, int per_condition);

struct MetricRow {
  std::string kind;
  std::string target;
  double train_len_s = 0;
  double test_len_s = 0;
  int snr_db = 0;
  std::string utt_id;
  double si_sdr_in = 0;
  double si_sdr_out = 0;
  double seg_snr_out = 0;
  std::string mode;  // full | seg | seg-o | noisy

  bool operator==(const MetricRow&) const = default;
};

std::string metrics_csv(const std::vector<MetricRow>& rows);
std::vector<MetricRow> parse_metrics_csv(const std::string& text);

struct MetricSummary {
  std::string kind;
  std::string target;
  double train_len_s = 0;
  double test_len_s = 0;
  std::string mode;
  int count = 0;
  double si_sdr_out = 0;   // mean
  double si_sdri = 0;      // mean improvement
  double seg_snr_out = 0;  // mean
};

/// Means per (kind, target, train_len, test_len, mode), in first-seen order.
std::vector<MetricSummary> summarize(const std::vector<MetricRow>& rows);
const MetricSummary* find_summary(const std::vector<MetricSummary>& s, const std::string& kind, double test_len,
                                  const std::string& mode);

/// One table per training length; one row per kind and mode, one column per
/// test length, cells "SI-SDR / SegSNR" in dB.
std::string markdown_report(const std::vector<MetricRow>& rows);

/// Worker count: LGSE_THREADS if set (>= 1), else hardware concurrency.
int worker_threads();
/// Runs fn(i) for i in [0, n) on up to `threads` workers.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

struct ExperimentOptions {
  bool train_missing = true;  // train a model when its checkpoint is absent
  int threads = 0;            // 0: worker_threads()
  std::function<void(const std::string&)> log;
};

struct ExperimentResult {
  std::vector<MetricRow> rows;
  std::vector<MetricSummary> summary;
  std::vector<std::filesystem::path> checkpoints;
};

std::filesystem::path experiment_checkpoint(const RunConfig& cfg, PeKind kind);

/// Trains (or loads) one model per cfg.test.kinds at cfg.train.clip_len_s and
/// evaluates every (duration, SNR) mixture full-length and, for mixtures
/// longer than the chunk length, chunked with and without overlap. Noisy
/// baseline rows come first, then rows ordered by kind, duration, SNR,
/// utterance and mode.
ExperimentResult run_lengen_experiment(const RunConfig& cfg, const ExperimentOptions& opt = {});

/// Training corpus and validation examples used by the experiment and the
/// train command.
std::vector<CorpusPair> training_corpus(const RunConfig& cfg);
std::vector<Example> validation_set(const RunConfig& cfg);

}  // namespace lgse
