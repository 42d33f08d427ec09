#include "lgse/model.hpp"

#include <cmath>
#include <map>

namespace lgse {

void ModelConfig::validate() const {
  if (layers < 1) throw std::invalid_argument("model: layers must be >= 1");
  if (heads < 1) throw std::invalid_argument("model: heads must be >= 1");
  if (d_model % heads != 0)
    throw std::invalid_argument("model: d_model " + std::to_string(d_model) + " not divisible by heads " +
                                std::to_string(heads));
  if (d_ff < 1 || bins < 1) throw std::invalid_argument("model: d_ff and bins must be positive");
  if (pe == PeKind::RoPE && d_k() % 2 != 0)
    throw std::invalid_argument("model: rope needs an even head dimension, got " + std::to_string(d_k()));
  if (pe == PeKind::Sinusoidal && d_model % 2 != 0)
    throw std::invalid_argument("model: sinusoidal encoding needs an even d_model");
}

Var attention_head(Var q, Var k, Var v, std::optional<Var> bias, Injection mode, bool causal) {
  if (q.cols() != k.cols() || q.rows() != k.rows() || v.rows() != k.rows())
    throw DimensionError("attention_head: q " + shape_str(q.value()) + ", k " + shape_str(k.value()) + ", v " +
                         shape_str(v.value()));
  Tape& t = *q.tape();
  const Eigen::Index L = q.rows();
  if (mode == Injection::Rotation) {
    q = rope_rotate(q);
    k = rope_rotate(k);
  }
  Var scores = scale(matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(q.cols())));
  if (mode == Injection::AdditiveBias || mode == Injection::MultiplicativeBias) {
    if (!bias) throw std::invalid_argument("attention_head: bias required for this injection mode");
    if (bias->rows() != L || bias->cols() != L)
      throw DimensionError("attention_head: bias " + shape_str(bias->value()) + " for L=" + std::to_string(L));
    scores = mode == Injection::AdditiveBias ? add(scores, *bias) : mul(relu(scores), *bias);
  }
  if (causal) {
    Mat mask = Mat::Zero(L, L);
    for (Eigen::Index i = 0; i < L; ++i)
      for (Eigen::Index j = i + 1; j < L; ++j) mask(i, j) = kMaskedScore;
    scores = add(scores, t.constant(std::move(mask)));
  }
  return matmul(softmax_rows(scores), v);
}

namespace {

Mat xavier(Rng& rng, Eigen::Index fan_in, Eigen::Index fan_out) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Mat m(fan_in, fan_out);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-a, a);
  return m;
}

}  // namespace

EnhancementModel::EnhancementModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(sub_seed(seed, "model"));
  Rng pe_rng(sub_seed(seed, "pe"));
  const Eigen::Index d = cfg.d_model;
  auto add = [&](std::string name, Mat v) { params_.emplace_back(std::move(name), std::move(v)); };

  add("embed.w", xavier(rng, cfg.bins, d));
  add("embed.b", Mat::Zero(1, d));
  add("embed.ln.gain", Mat::Ones(1, d));
  add("embed.ln.bias", Mat::Zero(1, d));
  for (int n = 0; n < cfg.layers; ++n) {
    const std::string l = "layer" + std::to_string(n);
    add(l + ".attn.w_q", xavier(rng, d, d));
    add(l + ".attn.w_k", xavier(rng, d, d));
    add(l + ".attn.w_v", xavier(rng, d, d));
    add(l + ".attn.w_o", xavier(rng, d, d));
    add(l + ".ln1.gain", Mat::Ones(1, d));
    add(l + ".ln1.bias", Mat::Zero(1, d));
    add(l + ".ffn.w1", xavier(rng, d, cfg.d_ff));
    add(l + ".ffn.b1", Mat::Zero(1, cfg.d_ff));
    add(l + ".ffn.w2", xavier(rng, cfg.d_ff, d));
    add(l + ".ffn.b2", Mat::Zero(1, d));
    add(l + ".ln2.gain", Mat::Ones(1, d));
    add(l + ".ln2.bias", Mat::Zero(1, d));
  }
  add("head.w", xavier(rng, d, cfg_.out_width()));
  add("head.b", Mat::Zero(1, cfg_.out_width()));

  pe_ = std::make_unique<PositionalEncoding>(cfg.pe, cfg.heads, cfg.layers, cfg.d_model, cfg.pe_cfg, pe_rng);
}

std::vector<Parameter*> EnhancementModel::parameters() {
  std::vector<Parameter*> out;
  for (std::size_t i = 0; i < 4; ++i) out.push_back(&params_[i]);
  for (Parameter* q : pe_->parameters()) out.push_back(q);
  for (std::size_t i = 4; i < params_.size(); ++i) out.push_back(&params_[i]);
  return out;
}

std::vector<const Parameter*> EnhancementModel::parameters() const {
  std::vector<const Parameter*> out;
  for (Parameter* q : const_cast<EnhancementModel*>(this)->parameters()) out.push_back(q);
  return out;
}

Parameter& EnhancementModel::p(const std::string& name) const {
  for (Parameter& q : params_)
    if (q.name == name) return q;
  throw std::invalid_argument("model has no parameter " + name);
}

Parameter& EnhancementModel::parameter(const std::string& name) {
  for (Parameter* q : parameters())
    if (q->name == name) return *q;
  throw std::invalid_argument("model has no parameter " + name);
}

long EnhancementModel::parameter_count() const {
  long n = 0;
  for (const Parameter* q : parameters()) n += static_cast<long>(q->value.size());
  return n;
}

Var EnhancementModel::embed(Tape& tape, PositionalEncoding::Binding& pe, Var magnitude, bool with_pe) const {
  if (magnitude.cols() != cfg_.bins)
    throw DimensionError("embed: expected " + std::to_string(cfg_.bins) + " bins, got " +
                         shape_str(magnitude.value()));
  Var z = add_row(matmul(magnitude, tape.parameter(p("embed.w"))), tape.parameter(p("embed.b")));
  z = layer_norm_rows(z, tape.parameter(p("embed.ln.gain")), tape.parameter(p("embed.ln.bias")), cfg_.ln_eps);
  z = relu(z);
  if (with_pe && pe_->injection() == Injection::InputEmbedding) z = add(z, pe.embedding(magnitude.rows()));
  return z;
}

Var EnhancementModel::mhsa(Tape& tape, PositionalEncoding::Binding& pe, int layer, Var x) const {
  const std::string l = "layer" + std::to_string(layer);
  const Eigen::Index L = x.rows();
  const int dk = cfg_.d_k();
  Var q = matmul(x, tape.parameter(p(l + ".attn.w_q")));
  Var k = matmul(x, tape.parameter(p(l + ".attn.w_k")));
  Var v = matmul(x, tape.parameter(p(l + ".attn.w_v")));
  const Injection mode = pe_->injection();
  std::vector<Var> heads;
  heads.reserve(static_cast<std::size_t>(cfg_.heads));
  for (int h = 0; h < cfg_.heads; ++h) {
    std::optional<Var> bias;
    if (uses_bias(cfg_.pe)) bias = pe.bias(layer, h, L);
    heads.push_back(attention_head(slice_cols(q, h * dk, dk), slice_cols(k, h * dk, dk),
                                   slice_cols(v, h * dk, dk), bias, mode, cfg_.causal));
  }
  Var cat = heads.size() == 1 ? heads.front() : concat_cols(heads);
  return matmul(cat, tape.parameter(p(l + ".attn.w_o")));
}

Var EnhancementModel::ffn(Tape& tape, int layer, Var y) const {
  const std::string l = "layer" + std::to_string(layer);
  Var h = relu(add_row(matmul(y, tape.parameter(p(l + ".ffn.w1"))), tape.parameter(p(l + ".ffn.b1"))));
  return add_row(matmul(h, tape.parameter(p(l + ".ffn.w2"))), tape.parameter(p(l + ".ffn.b2")));
}

Var EnhancementModel::encode(Tape& tape, Var magnitude) const {
  if (magnitude.rows() < 1) throw DimensionError("forward: need at least one frame");
  auto pe = pe_->bind(tape);
  Var x = embed(tape, pe, magnitude);
  for (int n = 0; n < cfg_.layers; ++n) {
    const std::string l = "layer" + std::to_string(n);
    Var y = add(x, mhsa(tape, pe, n, x));
    if (cfg_.post_ln)
      y = layer_norm_rows(y, tape.parameter(p(l + ".ln1.gain")), tape.parameter(p(l + ".ln1.bias")), cfg_.ln_eps);
    Var z = add(y, ffn(tape, n, y));
    if (cfg_.post_ln)
      z = layer_norm_rows(z, tape.parameter(p(l + ".ln2.gain")), tape.parameter(p(l + ".ln2.bias")), cfg_.ln_eps);
    x = z;
  }
  return x;
}

Var EnhancementModel::forward(Tape& tape, Var magnitude) const {
  Var x = encode(tape, magnitude);
  Var out = add_row(matmul(x, tape.parameter(p("head.w"))), tape.parameter(p("head.b")));
  switch (cfg_.target) {
    case TargetKind::MS: return relu(out);
    case TargetKind::IRM:
    case TargetKind::PSM: return sigmoid(out);
    case TargetKind::CIRM: return out;
  }
  return out;
}

MaskGrid EnhancementModel::to_mask(const Mat& raw) const {
  MaskGrid m;
  if (cfg_.target == TargetKind::CIRM) {
    m.real = raw.leftCols(cfg_.bins);
    m.imag = raw.rightCols(cfg_.bins);
  } else {
    m.real = raw;
  }
  return m;
}

MaskGrid EnhancementModel::predict(const Mat& magnitude) const {
  Tape tape(false);
  Var out = forward(tape, tape.constant(magnitude));
  return to_mask(out.value());
}

}  // namespace lgse
