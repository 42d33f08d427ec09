#pragma once

// Position-aware Transformer for T-F mask / magnitude estimation.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "lgse/objectives.hpp"
#include "lgse/posenc.hpp"
#include "lgse/tensor.hpp"

namespace lgse {

struct ModelConfig {
  int layers = 4;
  int heads = 8;
  int d_model = 256;
  int d_ff = 1024;
  int bins = 257;
  PeKind pe = PeKind::LearnLin;
  TargetKind target = TargetKind::IRM;
  bool causal = false;
  bool post_ln = true;
  double ln_eps = 1e-5;
  PeConfig pe_cfg;
  ObjectiveConfig objective;

  int d_k() const { return d_model / heads; }
  int out_width() const { return target == TargetKind::CIRM ? 2 * bins : bins; }
  /// Throws std::invalid_argument on an inconsistent configuration.
  void validate() const;
};

/// Masks entries above the diagonal with a large negative constant.
inline constexpr double kMaskedScore = -1e9;

/// One scaled dot-product attention head. `bias` may be empty (Var with no
/// tape) for kinds without an attention bias.
Var attention_head(Var q, Var k, Var v, std::optional<Var> bias, Injection mode, bool causal);

class EnhancementModel {
 public:
  EnhancementModel(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }

  /// Canonical parameter order (used for checkpoints and the optimizer).
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  Parameter& parameter(const std::string& name);
  const PositionalEncoding& pe() const { return *pe_; }
  long parameter_count() const;

  /// Raw network output, L x bins (or L x 2*bins for cIRM) after the head
  /// activation. `magnitude` is L x bins.
  Var forward(Tape& tape, Var magnitude) const;
  /// Embedding-stream output of the last layer, before the output head.
  Var encode(Tape& tape, Var magnitude) const;

  Var embed(Tape& tape, PositionalEncoding::Binding& pe, Var magnitude, bool with_pe = true) const;
  Var mhsa(Tape& tape, PositionalEncoding::Binding& pe, int layer, Var x) const;
  Var ffn(Tape& tape, int layer, Var y) const;

  /// Inference without gradient bookkeeping.
  MaskGrid predict(const Mat& magnitude) const;

  /// Splits a raw L x out_width output into a MaskGrid.
  MaskGrid to_mask(const Mat& raw) const;

 private:
  ModelConfig cfg_;
  std::unique_ptr<PositionalEncoding> pe_;
  // mutable: binding a parameter to a tape records where gradients go
  mutable std::vector<Parameter> params_;

  Parameter& p(const std::string& name) const;
};

}  // namespace lgse
