#pragma once

// Training targets (MS, IRM, PSM, cIRM) and how each is applied to a noisy
// spectrogram at enhancement time.

#include <string>
#include <string_view>

#include "lgse/dsp.hpp"
#include "lgse/tensor.hpp"

namespace lgse {

enum class TargetKind { MS, IRM, PSM, CIRM };

std::string to_string(TargetKind k);
TargetKind parse_target(std::string_view s);

struct ObjectiveConfig {
  double irm_gamma = 0.5;
  double cirm_k = 10.0;   // compression bound
  double cirm_c = 0.1;    // compression steepness
  double ms_power = 0.3;  // power-law exponent on |S|
};

/// Real grid for IRM/PSM/MS; `imag` is populated only for cIRM.
struct MaskGrid {
  Mat real;
  Mat imag;

  bool is_complex() const { return imag.size() != 0; }
  Eigen::Index frames() const { return real.rows(); }
  Eigen::Index bins() const { return real.cols(); }
};

MaskGrid irm(const Spectrogram& clean, const Spectrogram& noise, double gamma = 0.5);
MaskGrid psm(const Spectrogram& clean, const Spectrogram& noisy);
MaskGrid cirm(const Spectrogram& clean, const Spectrogram& noisy);

/// Per-component K(1 - e^{-Ct}) / (1 + e^{-Ct}).
MaskGrid compress_cirm(const MaskGrid& m, double k, double c);
/// Exact inverse on (-K, K). Out-of-range inputs are clamped just inside the
/// bound; the number of clamped components is added to *clamped when given.
MaskGrid decompress_cirm(const MaskGrid& m, double k, double c, long* clamped = nullptr);
double compress_value(double t, double k, double c);
double decompress_value(double y, double k, double c, bool* was_clamped = nullptr);

MaskGrid ms_target(const Spectrogram& clean, double power);
Mat ms_uncompress(const Mat& compressed, double power);

/// The loss-space target for `kind`: compressed magnitude for MS, compressed
/// cIRM for CIRM, the mask itself for IRM and PSM.
MaskGrid make_target(TargetKind kind, const Spectrogram& clean, const Spectrogram& noise,
                     const Spectrogram& noisy, const ObjectiveConfig& cfg = {});

/// Turns a loss-space prediction into an enhanced spectrogram.
Spectrogram apply_target(const Spectrogram& noisy, const MaskGrid& prediction, TargetKind kind,
                         const ObjectiveConfig& cfg = {});

}  // namespace lgse
