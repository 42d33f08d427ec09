#pragma once

// Waveform <-> STFT conversion, noisy mixture synthesis and the synthetic
// corpus generator.

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "lgse/random.hpp"

namespace lgse {

using CMat = Eigen::Matrix<std::complex<double>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CVec = Eigen::VectorXcd;

inline constexpr int kSampleRate = 16000;

struct LengthError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct Waveform {
  Eigen::VectorXd samples;
  int sample_rate = kSampleRate;

  Eigen::Index size() const { return samples.size(); }
  double duration_s() const { return static_cast<double>(samples.size()) / sample_rate; }
};

struct StftConfig {
  double win_ms = 32.0;
  double hop_ms = 16.0;
  int fft_size = 512;

  int win_len() const { return static_cast<int>(win_ms * kSampleRate / 1000.0 + 0.5); }
  int hop() const { return static_cast<int>(hop_ms * kSampleRate / 1000.0 + 0.5); }
  int bins() const { return fft_size / 2 + 1; }
  bool operator==(const StftConfig&) const = default;
};

struct Spectrogram {
  CMat values;  // frames x bins
  StftConfig cfg;

  Eigen::Index frames() const { return values.rows(); }
  Eigen::Index bins() const { return values.cols(); }
  Eigen::MatrixXd magnitude() const { return values.cwiseAbs(); }
};

/// In-place radix-2 FFT; size must be a power of two. `inverse` applies the
/// conjugate transform scaled by 1/n.
void fft_inplace(CVec& data, bool inverse = false);

/// Periodic square-root Hann window of length n.
Eigen::VectorXd sqrt_hann(int n);

/// Number of full frames for `n` samples (the partial tail frame is dropped).
Eigen::Index frame_count(Eigen::Index n, const StftConfig& cfg = {});

Spectrogram stft(const Waveform& w, const StftConfig& cfg = {});
/// Weighted overlap-add with the synthesis sqrt-Hann window.
Waveform istft(const Spectrogram& s, const StftConfig& cfg, Eigen::Index out_len);

/// Pads the signal so every input sample lies under two frames, then runs
/// stft. istft_padded undoes the padding; the round trip is exact up to
/// rounding on every sample.
Spectrogram stft_padded(const Waveform& w, const StftConfig& cfg = {});
Waveform istft_padded(const Spectrogram& s, const StftConfig& cfg, Eigen::Index out_len);
Eigen::Index padded_frame_count(Eigen::Index n, const StftConfig& cfg = {});

double energy(const Eigen::VectorXd& x);

/// clean + g * noise with g chosen so the clean-to-scaled-noise energy ratio
/// is exactly snr_db.
Waveform mix_at_snr(const Waveform& clean, const Waveform& noise, int snr_db);
/// The scaled noise component used by mix_at_snr.
Waveform scale_noise_to_snr(const Waveform& clean, const Waveform& noise, int snr_db);

enum class NoiseColor { White, Pink };

struct ToneSegment {
  Eigen::Index start = 0;   // sample index
  Eigen::Index length = 0;  // samples
  std::vector<int> bins;    // FFT bins of the sinusoids (512-point grid)
};

struct CorpusPair {
  Waveform clean;
  Waveform noise;
  NoiseColor color = NoiseColor::White;
  std::vector<ToneSegment> segments;
};

/// Deterministic synthetic speech/noise pairs. Clean signals are a run of
/// syllable-like tone segments, each a sum of 2-4 sinusoids under a random
/// amplitude envelope; noise is white or pink.
std::vector<CorpusPair> synth_corpus(std::uint64_t seed, int n_utts, double dur_s);

/// White or pink noise of n samples with unit-ish RMS.
Eigen::VectorXd make_noise(Rng& rng, Eigen::Index n, NoiseColor color);

}  // namespace lgse
