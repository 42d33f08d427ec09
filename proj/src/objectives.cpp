#include "lgse/objectives.hpp"

#include <algorithm>
#include <cmath>

namespace lgse {

std::string to_string(TargetKind k) {
  switch (k) {
    case TargetKind::MS: return "ms";
    case TargetKind::IRM: return "irm";
    case TargetKind::PSM: return "psm";
    case TargetKind::CIRM: return "cirm";
  }
  return "?";
}

TargetKind parse_target(std::string_view s) {
  if (s == "ms") return TargetKind::MS;
  if (s == "irm") return TargetKind::IRM;
  if (s == "psm") return TargetKind::PSM;
  if (s == "cirm") return TargetKind::CIRM;
  throw std::invalid_argument("unknown target '" + std::string(s) + "' (expected ms|irm|psm|cirm)");
}

namespace {

void require_same(const char* op, const Spectrogram& a, const Spectrogram& b) {
  if (a.frames() != b.frames() || a.bins() != b.bins())
    throw DimensionError(std::string(op) + ": spectrogram shapes differ [" +
                         std::to_string(a.frames()) + "x" + std::to_string(a.bins()) + "] vs [" +
                         std::to_string(b.frames()) + "x" + std::to_string(b.bins()) + "]");
}

constexpr double kTiny = 1e-12;

}  // namespace

MaskGrid irm(const Spectrogram& clean, const Spectrogram& noise, double gamma) {
  require_same("irm", clean, noise);
  MaskGrid m;
  m.real.resize(clean.frames(), clean.bins());
  for (Eigen::Index l = 0; l < clean.frames(); ++l)
    for (Eigen::Index k = 0; k < clean.bins(); ++k) {
      const double s2 = std::norm(clean.values(l, k));
      const double v2 = std::norm(noise.values(l, k));
      m.real(l, k) = (s2 + v2 > 0.0) ? std::pow(s2 / (s2 + v2), gamma) : 0.0;
    }
  return m;
}

MaskGrid psm(const Spectrogram& clean, const Spectrogram& noisy) {
  require_same("psm", clean, noisy);
  MaskGrid m;
  m.real.resize(clean.frames(), clean.bins());
  for (Eigen::Index l = 0; l < clean.frames(); ++l)
    for (Eigen::Index k = 0; k < clean.bins(); ++k) {
      const std::complex<double> s = clean.values(l, k);
      const std::complex<double> x = noisy.values(l, k);
      const double xm = std::abs(x);
      if (xm <= kTiny) {
        m.real(l, k) = 0.0;
        continue;
      }
      // |S|/|X| cos(theta_S - theta_X) == Re(S conj(X)) / |X|^2
      const double raw = (s * std::conj(x)).real() / (xm * xm);
      m.real(l, k) = std::clamp(raw, 0.0, 1.0);
    }
  return m;
}

MaskGrid cirm(const Spectrogram& clean, const Spectrogram& noisy) {
  require_same("cirm", clean, noisy);
  MaskGrid m;
  m.real.resize(clean.frames(), clean.bins());
  m.imag.resize(clean.frames(), clean.bins());
  for (Eigen::Index l = 0; l < clean.frames(); ++l)
    for (Eigen::Index k = 0; k < clean.bins(); ++k) {
      const double xr = noisy.values(l, k).real(), xi = noisy.values(l, k).imag();
      const double sr = clean.values(l, k).real(), si = clean.values(l, k).imag();
      const double den = xr * xr + xi * xi;
      if (den < kTiny) {
        m.real(l, k) = 0.0;
        m.imag(l, k) = 0.0;
      } else {
        m.real(l, k) = (xr * sr + xi * si) / den;
        m.imag(l, k) = (xr * si - xi * sr) / den;
      }
    }
  return m;
}

double compress_value(double t, double k, double c) {
  const double e = std::exp(-c * t);
  if (!std::isfinite(e)) return -k;  // t -> -inf
  return k * (1.0 - e) / (1.0 + e);
}

double decompress_value(double y, double k, double c, bool* was_clamped) {
  const double bound = k * (1.0 - 1e-9);
  bool clamped = false;
  if (y > bound) {
    y = bound;
    clamped = true;
  } else if (y < -bound) {
    y = -bound;
    clamped = true;
  }
  if (was_clamped) *was_clamped = clamped;
  return -std::log((k - y) / (k + y)) / c;
}

MaskGrid compress_cirm(const MaskGrid& m, double k, double c) {
  if (!(k > 0) || !(c > 0)) throw std::invalid_argument("compress_cirm: K and C must be positive");
  MaskGrid out;
  out.real = m.real.unaryExpr([k, c](double t) { return compress_value(t, k, c); });
  out.imag = m.imag.unaryExpr([k, c](double t) { return compress_value(t, k, c); });
  return out;
}

MaskGrid decompress_cirm(const MaskGrid& m, double k, double c, long* clamped) {
  if (!(k > 0) || !(c > 0)) throw std::invalid_argument("decompress_cirm: K and C must be positive");
  long count = 0;
  auto f = [&](double y) {
    bool hit = false;
    const double t = decompress_value(y, k, c, &hit);
    count += hit;
    return t;
  };
  MaskGrid out;
  out.real = m.real.unaryExpr(f);
  out.imag = m.imag.unaryExpr(f);
  if (clamped) *clamped += count;
  return out;
}

MaskGrid ms_target(const Spectrogram& clean, double power) {
  if (!(power > 0.0 && power <= 1.0)) throw std::invalid_argument("ms_target: power must be in (0, 1]");
  MaskGrid m;
  m.real = clean.values.cwiseAbs().array().pow(power).matrix();
  return m;
}

Mat ms_uncompress(const Mat& compressed, double power) {
  return compressed.cwiseMax(0.0).array().pow(1.0 / power).matrix();
}

MaskGrid make_target(TargetKind kind, const Spectrogram& clean, const Spectrogram& noise,
                     const Spectrogram& noisy, const ObjectiveConfig& cfg) {
  switch (kind) {
    case TargetKind::MS: return ms_target(clean, cfg.ms_power);
    case TargetKind::IRM: return irm(clean, noise, cfg.irm_gamma);
    case TargetKind::PSM: return psm(clean, noisy);
    case TargetKind::CIRM: return compress_cirm(cirm(clean, noisy), cfg.cirm_k, cfg.cirm_c);
  }
  throw std::invalid_argument("make_target: unknown kind");
}

Spectrogram apply_target(const Spectrogram& noisy, const MaskGrid& prediction, TargetKind kind,
                         const ObjectiveConfig& cfg) {
  if (prediction.frames() != noisy.frames() || prediction.bins() != noisy.bins())
    throw DimensionError("apply_target: prediction " + shape_str(prediction.real) +
                         " does not match noisy [" + std::to_string(noisy.frames()) + "x" +
                         std::to_string(noisy.bins()) + "]");
  if ((kind == TargetKind::CIRM) != prediction.is_complex())
    throw std::invalid_argument("apply_target: " + to_string(kind) +
                                (prediction.is_complex() ? " expects a real mask" : " expects a complex mask"));
  Spectrogram out;
  out.cfg = noisy.cfg;
  out.values.resize(noisy.frames(), noisy.bins());
  switch (kind) {
    case TargetKind::IRM:
    case TargetKind::PSM:
      out.values = noisy.values.cwiseProduct(prediction.real.cast<std::complex<double>>());
      break;
    case TargetKind::MS: {
      const Mat mag = ms_uncompress(prediction.real, cfg.ms_power);
      for (Eigen::Index l = 0; l < noisy.frames(); ++l)
        for (Eigen::Index k = 0; k < noisy.bins(); ++k) {
          const std::complex<double> x = noisy.values(l, k);
          const double xm = std::abs(x);
          out.values(l, k) = xm > kTiny ? x * (mag(l, k) / xm) : std::complex<double>(mag(l, k), 0.0);
        }
      break;
    }
    case TargetKind::CIRM: {
      const MaskGrid m = decompress_cirm(prediction, cfg.cirm_k, cfg.cirm_c);
      for (Eigen::Index l = 0; l < noisy.frames(); ++l)
        for (Eigen::Index k = 0; k < noisy.bins(); ++k)
          out.values(l, k) = noisy.values(l, k) * std::complex<double>(m.real(l, k), m.imag(l, k));
      break;
    }
  }
  return out;
}

}  // namespace lgse
