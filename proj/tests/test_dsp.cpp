#include "doctest.h"

#include <cmath>
#include <complex>
#include <numbers>

#include "lgse/dsp.hpp"

using namespace lgse;

namespace {

std::complex<double> naive_dft_bin(const Eigen::VectorXd& frame, int k, int n) {
  std::complex<double> s = 0;
  for (int t = 0; t < frame.size(); ++t) s += frame[t] * std::polar(1.0, -2.0 * std::numbers::pi * k * t / n);
  return s;
}

Waveform noise_wave(std::uint64_t seed, Eigen::Index n) {
  Rng rng(seed);
  Waveform w;
  w.samples.resize(n);
  for (auto& v : w.samples) v = rng.uniform(-1.0, 1.0);
  return w;
}

}  // namespace

TEST_CASE("configuration matches 32 ms / 16 ms / 512 at 16 kHz") {
  StftConfig c;
  CHECK(c.win_len() == 512);
  CHECK(c.hop() == 256);
  CHECK(c.bins() == 257);
}

TEST_CASE("fft agrees with the naive DFT, forward and inverse") {
  Rng rng(1);
  for (int n : {1, 2, 8, 512}) {
    CVec x(n);
    for (auto& v : x) v = {rng.normal(), rng.normal()};
    CVec y = x;
    fft_inplace(y);
    for (int k = 0; k < n; ++k) {
      std::complex<double> s = 0;
      for (int t = 0; t < n; ++t) s += x[t] * std::polar(1.0, -2.0 * std::numbers::pi * k * t / n);
      CHECK(std::abs(s - y[k]) < 1e-10);
    }
    fft_inplace(y, true);
    CHECK((y - x).cwiseAbs().maxCoeff() < 1e-13);
  }
  CVec bad(6);
  CHECK_THROWS(fft_inplace(bad));
}

TEST_CASE("sqrt-Hann squared satisfies constant overlap-add at 50%") {
  const Eigen::VectorXd w = sqrt_hann(512);
  for (int i = 0; i < 256; ++i) CHECK(std::abs(w[i] * w[i] + w[i + 256] * w[i + 256] - 1.0) < 1e-14);
}

TEST_CASE("stft frames equal the windowed naive DFT") {
  const Waveform w = noise_wave(2, 2000);
  const Spectrogram s = stft(w);
  CHECK(s.frames() == frame_count(2000));
  CHECK(s.frames() == 1 + (2000 - 512) / 256);
  const Eigen::VectorXd win = sqrt_hann(512);
  for (Eigen::Index l : {Eigen::Index{0}, s.frames() - 1}) {
    const Eigen::VectorXd frame = w.samples.segment(l * 256, 512).cwiseProduct(win);
    for (int k : {0, 1, 100, 256}) CHECK(std::abs(s.values(l, k) - naive_dft_bin(frame, k, 512)) < 1e-10);
  }
}

TEST_CASE("stft/istft reconstruct the interior") {
  const Waveform w = noise_wave(3, 16000);
  const Spectrogram s = stft(w);
  const Waveform y = istft(s, s.cfg, w.size());
  const Eigen::Index covered = (s.frames() - 1) * 256 + 512;
  CHECK((y.samples.segment(512, covered - 1024) - w.samples.segment(512, covered - 1024)).cwiseAbs().maxCoeff() <
        1e-12);
}

TEST_CASE("padded framing reconstructs every sample") {
  for (Eigen::Index n : {Eigen::Index{1}, Eigen::Index{255}, Eigen::Index{8000}, Eigen::Index{64000}}) {
    const Waveform w = noise_wave(4 + n, n);
    const Spectrogram s = stft_padded(w);
    CHECK(s.frames() == padded_frame_count(n));
    CHECK((istft_padded(s, s.cfg, n).samples - w.samples).cwiseAbs().maxCoeff() < 1e-12);
  }
  CHECK(padded_frame_count(8000) == 33);
  CHECK(padded_frame_count(64000) == 251);
}

TEST_CASE("length and config errors") {
  CHECK_THROWS_AS(stft(noise_wave(5, 100)), LengthError);
  const Spectrogram s = stft(noise_wave(6, 1024));
  StftConfig other;
  other.hop_ms = 8;
  CHECK_THROWS(istft(s, other, 1024));
  CHECK_THROWS_AS(mix_at_snr(noise_wave(7, 10), noise_wave(8, 11), 0), LengthError);
  Waveform silent;
  silent.samples = Eigen::VectorXd::Zero(10);
  CHECK_THROWS(mix_at_snr(noise_wave(7, 10), silent, 0));
}

TEST_CASE("mixing hits the requested SNR") {
  const Waveform c = noise_wave(9, 4000), v = noise_wave(10, 4000);
  for (int snr = -10; snr <= 20; snr += 5) {
    const Waveform x = mix_at_snr(c, v, snr);
    const double measured = 10 * std::log10(energy(c.samples) / energy(x.samples - c.samples));
    CHECK(std::abs(measured - snr) < 1e-9);
  }
}

TEST_CASE("synthetic corpus is deterministic and well formed") {
  const auto a = synth_corpus(11, 4, 1.5), b = synth_corpus(11, 4, 1.5), c = synth_corpus(12, 4, 1.5);
  REQUIRE(a.size() == 4);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].clean.size() == 24000);
    CHECK(a[i].noise.size() == 24000);
    CHECK(a[i].clean.samples == b[i].clean.samples);
    CHECK(a[i].noise.samples == b[i].noise.samples);
    CHECK(std::abs(a[i].clean.samples.cwiseAbs().maxCoeff() - 0.8) < 1e-12);
    for (const auto& seg : a[i].segments) {
      CHECK(seg.bins.size() >= 2);
      CHECK(seg.bins.size() <= 4);
      CHECK(seg.start + seg.length <= 24000);
    }
  }
  CHECK(a[0].clean.samples != c[0].clean.samples);
}

TEST_CASE("pink noise has more low-frequency energy than white") {
  Rng r1(13), r2(13);
  const Eigen::VectorXd white = make_noise(r1, 32768, NoiseColor::White);
  const Eigen::VectorXd pink = make_noise(r2, 32768, NoiseColor::Pink);
  auto low_ratio = [](const Eigen::VectorXd& x) {
    Waveform w;
    w.samples = x;
    const Eigen::MatrixXd m = stft(w).magnitude();
    return m.leftCols(16).squaredNorm() / m.squaredNorm();
  };
  CHECK(low_ratio(pink) > 2 * low_ratio(white));
}
