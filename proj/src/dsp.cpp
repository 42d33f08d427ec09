#include "lgse/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

namespace lgse {

void fft_inplace(CVec& data, bool inverse) {
  const Eigen::Index n = data.size();
  if (n == 0 || (n & (n - 1)) != 0)
    throw std::invalid_argument("fft: size must be a power of two, got " + std::to_string(n));

  for (Eigen::Index i = 1, j = 0; i < n; ++i) {
    Eigen::Index bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(data[i], data[j]);
  }
  thread_local std::vector<std::complex<double>> twiddle;
  if (static_cast<Eigen::Index>(twiddle.size()) != n / 2) {
    twiddle.resize(static_cast<std::size_t>(n / 2));
    for (Eigen::Index k = 0; k < n / 2; ++k) {
      const double ang = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
      twiddle[static_cast<std::size_t>(k)] = {std::cos(ang), std::sin(ang)};
    }
  }
  for (Eigen::Index len = 2; len <= n; len <<= 1) {
    const Eigen::Index half = len / 2;
    const Eigen::Index stride = n / len;
    for (Eigen::Index i = 0; i < n; i += len) {
      for (Eigen::Index k = 0; k < half; ++k) {
        const std::complex<double> w = twiddle[static_cast<std::size_t>(k * stride)];
        const double wr = w.real();
        const double wi = inverse ? -w.imag() : w.imag();
        const std::complex<double> u = data[i + k];
        const std::complex<double> b = data[i + k + half];
        const std::complex<double> v(b.real() * wr - b.imag() * wi, b.real() * wi + b.imag() * wr);
        data[i + k] = u + v;
        data[i + k + half] = u - v;
      }
    }
  }
  if (inverse) data /= static_cast<double>(n);
}

Eigen::VectorXd sqrt_hann(int n) {
  Eigen::VectorXd w(n);
  for (int i = 0; i < n; ++i)
    w[i] = std::sqrt(0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n));
  return w;
}

Eigen::Index frame_count(Eigen::Index n, const StftConfig& cfg) {
  if (n < cfg.win_len()) return 0;
  return 1 + (n - cfg.win_len()) / cfg.hop();
}

namespace {

void check_config(const StftConfig& cfg) {
  if (cfg.fft_size <= 0 || (cfg.fft_size & (cfg.fft_size - 1)) != 0)
    throw std::invalid_argument("stft: fft_size must be a power of two");
  if (cfg.win_len() > cfg.fft_size)
    throw std::invalid_argument("stft: window longer than fft_size");
  if (cfg.hop() <= 0) throw std::invalid_argument("stft: hop must be positive");
}

}  // namespace

Spectrogram stft(const Waveform& w, const StftConfig& cfg) {
  check_config(cfg);
  const int win = cfg.win_len();
  const int hop = cfg.hop();
  if (w.size() < win)
    throw LengthError("stft: input has " + std::to_string(w.size()) +
                      " samples, need at least " + std::to_string(win));
  const Eigen::Index frames = frame_count(w.size(), cfg);
  const Eigen::VectorXd window = sqrt_hann(win);
  Spectrogram out;
  out.cfg = cfg;
  out.values.resize(frames, cfg.bins());
  // two real frames per complex transform: frame l in the real part, l + 1
  // in the imaginary part, separated by conjugate symmetry
  const int n_fft = cfg.fft_size;
  const int bins = cfg.bins();
  CVec buf(n_fft);
  for (Eigen::Index l = 0; l < frames; l += 2) {
    const bool pair = l + 1 < frames;
    buf.setZero();
    for (int i = 0; i < win; ++i)
      buf[i] = {w.samples[l * hop + i] * window[i], pair ? w.samples[(l + 1) * hop + i] * window[i] : 0.0};
    fft_inplace(buf);
    for (int k = 0; k < bins; ++k) {
      const std::complex<double> z = buf[k];
      const std::complex<double> zc = std::conj(buf[(n_fft - k) % n_fft]);
      out.values(l, k) = 0.5 * (z + zc);
      if (pair) {
        const std::complex<double> d = z - zc;
        out.values(l + 1, k) = {0.5 * d.imag(), -0.5 * d.real()};
      }
    }
  }
  return out;
}

Waveform istft(const Spectrogram& s, const StftConfig& cfg, Eigen::Index out_len) {
  check_config(cfg);
  if (!(s.cfg == cfg) || s.bins() != cfg.bins())
    throw std::invalid_argument("istft: spectrogram was produced under a different StftConfig");
  const int win = cfg.win_len();
  const int hop = cfg.hop();
  const int n_fft = cfg.fft_size;
  const Eigen::VectorXd window = sqrt_hann(win);
  Waveform out;
  out.samples = Eigen::VectorXd::Zero(out_len);
  CVec buf(n_fft);
  for (Eigen::Index l = 0; l < s.frames(); ++l) {
    for (int k = 0; k < cfg.bins(); ++k) buf[k] = s.values(l, k);
    for (int k = cfg.bins(); k < n_fft; ++k) buf[k] = std::conj(buf[n_fft - k]);
    fft_inplace(buf, true);
    for (int i = 0; i < win; ++i) {
      const Eigen::Index at = l * hop + i;
      if (at >= out_len) break;
      out.samples[at] += buf[i].real() * window[i];
    }
  }
  return out;
}

Eigen::Index padded_frame_count(Eigen::Index n, const StftConfig& cfg) {
  if (n <= 0) return 0;
  return (n - 1) / cfg.hop() + 2;
}

Spectrogram stft_padded(const Waveform& w, const StftConfig& cfg) {
  check_config(cfg);
  if (w.size() == 0) throw LengthError("stft_padded: empty input");
  const int hop = cfg.hop();
  const int front = cfg.win_len() - hop;
  const Eigen::Index frames = padded_frame_count(w.size(), cfg);
  Waveform padded;
  padded.samples = Eigen::VectorXd::Zero((frames - 1) * hop + cfg.win_len());
  padded.samples.segment(front, w.size()) = w.samples;
  return stft(padded, cfg);
}

Waveform istft_padded(const Spectrogram& s, const StftConfig& cfg, Eigen::Index out_len) {
  const int hop = cfg.hop();
  const int front = cfg.win_len() - hop;
  const Eigen::Index full = (s.frames() - 1) * hop + cfg.win_len();
  if (front + out_len > full)
    throw LengthError("istft_padded: " + std::to_string(s.frames()) + " frames cannot cover " +
                      std::to_string(out_len) + " samples");
  Waveform w = istft(s, cfg, full);
  Waveform out;
  out.samples = w.samples.segment(front, out_len);
  return out;
}

double energy(const Eigen::VectorXd& x) { return x.squaredNorm(); }

Waveform scale_noise_to_snr(const Waveform& clean, const Waveform& noise, int snr_db) {
  if (clean.size() != noise.size())
    throw LengthError("mix_at_snr: clean has " + std::to_string(clean.size()) +
                      " samples, noise has " + std::to_string(noise.size()));
  const double ec = energy(clean.samples);
  const double en = energy(noise.samples);
  if (ec <= 0.0) throw std::invalid_argument("mix_at_snr: clean signal has zero energy");
  if (en <= 0.0) throw std::invalid_argument("mix_at_snr: noise signal has zero energy");
  const double gain = std::sqrt(ec / (en * std::pow(10.0, snr_db / 10.0)));
  Waveform out;
  out.samples = noise.samples * gain;
  return out;
}

Waveform mix_at_snr(const Waveform& clean, const Waveform& noise, int snr_db) {
  Waveform out;
  out.samples = clean.samples + scale_noise_to_snr(clean, noise, snr_db).samples;
  return out;
}

Eigen::VectorXd make_noise(Rng& rng, Eigen::Index n, NoiseColor color) {
  Eigen::VectorXd x(n);
  if (color == NoiseColor::White) {
    for (Eigen::Index i = 0; i < n; ++i) x[i] = rng.normal();
    return x;
  }
  // Paul Kellet's refined pink filter.
  double b0 = 0, b1 = 0, b2 = 0, b3 = 0, b4 = 0, b5 = 0, b6 = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double white = rng.normal();
    b0 = 0.99886 * b0 + white * 0.0555179;
    b1 = 0.99332 * b1 + white * 0.0750759;
    b2 = 0.96900 * b2 + white * 0.1538520;
    b3 = 0.86650 * b3 + white * 0.3104856;
    b4 = 0.55000 * b4 + white * 0.5329522;
    b5 = -0.7616 * b5 - white * 0.0168980;
    x[i] = b0 + b1 + b2 + b3 + b4 + b5 + b6 + white * 0.5362;
    b6 = white * 0.115926;
  }
  const double rms = std::sqrt(x.squaredNorm() / static_cast<double>(std::max<Eigen::Index>(n, 1)));
  if (rms > 0) x /= rms;
  return x;
}

std::vector<CorpusPair> synth_corpus(std::uint64_t seed, int n_utts, double dur_s) {
  if (!(dur_s > 0)) throw std::invalid_argument("synth_corpus: duration must be positive");
  constexpr double kBinHz = static_cast<double>(kSampleRate) / 512.0;
  const auto n = static_cast<Eigen::Index>(std::llround(dur_s * kSampleRate));
  std::vector<CorpusPair> corpus;
  corpus.reserve(static_cast<std::size_t>(std::max(n_utts, 0)));
  for (int u = 0; u < n_utts; ++u) {
    Rng rng(sub_seed(seed, "corpus/" + std::to_string(u)));
    CorpusPair pair;
    pair.clean.samples = Eigen::VectorXd::Zero(n);

    Eigen::Index t = 0;
    while (t < n) {
      const auto gap = static_cast<Eigen::Index>(rng.uniform(0.0, 0.06) * kSampleRate);
      if (!pair.segments.empty()) t += gap;
      if (t >= n) break;
      ToneSegment seg;
      seg.start = t;
      seg.length = std::min<Eigen::Index>(
          n - t, static_cast<Eigen::Index>(rng.uniform(0.12, 0.40) * kSampleRate));
      const int tones = static_cast<int>(rng.integer(2, 4));
      while (static_cast<int>(seg.bins.size()) < tones) {
        const int b = static_cast<int>(rng.integer(6, 128));
        if (std::none_of(seg.bins.begin(), seg.bins.end(), [b](int o) { return std::abs(o - b) < 3; }))
          seg.bins.push_back(b);
      }
      const double gain = rng.uniform(0.4, 1.0);
      const double shape = rng.uniform(0.3, 1.0);
      std::vector<double> amp, phase;
      for (std::size_t k = 0; k < seg.bins.size(); ++k) {
        amp.push_back(rng.uniform(0.3, 1.0));
        phase.push_back(rng.uniform(0.0, 2.0 * std::numbers::pi));
      }
      for (Eigen::Index i = 0; i < seg.length; ++i) {
        const double env =
            gain * std::pow(std::sin(std::numbers::pi * (i + 0.5) / static_cast<double>(seg.length)), shape);
        double v = 0.0;
        for (std::size_t k = 0; k < seg.bins.size(); ++k)
          v += amp[k] * std::sin(2.0 * std::numbers::pi * seg.bins[k] * kBinHz * (t + i) / kSampleRate +
                                 phase[k]);
        pair.clean.samples[t + i] = env * v;
      }
      t += seg.length;
      pair.segments.push_back(std::move(seg));
    }
    const double peak = pair.clean.samples.cwiseAbs().maxCoeff();
    if (peak > 0) pair.clean.samples *= 0.8 / peak;

    pair.color = rng.uniform() < 0.5 ? NoiseColor::White : NoiseColor::Pink;
    pair.noise.samples = 0.1 * make_noise(rng, n, pair.color);
    corpus.push_back(std::move(pair));
  }
  return corpus;
}

}  // namespace lgse
