#include "lgse/posenc.hpp"

#include <cmath>
#include <tuple>

namespace lgse {

std::string to_string(PeKind k) {
  switch (k) {
    case PeKind::NoPos: return "nopos";
    case PeKind::Sinusoidal: return "sinusoidal";
    case PeKind::BertPos: return "bertpos";
    case PeKind::GaussBias: return "gauss";
    case PeKind::T5Bias: return "t5";
    case PeKind::TISA: return "tisa";
    case PeKind::DABias: return "dabias";
    case PeKind::KERPLE: return "kerple";
    case PeKind::RoPE: return "rope";
    case PeKind::LearnLin: return "learnlin";
  }
  return "?";
}

PeKind parse_pe(std::string_view s) {
  for (PeKind k : kAllPeKinds)
    if (to_string(k) == s) return k;
  throw std::invalid_argument("unknown positional encoding '" + std::string(s) +
                              "' (expected nopos|sinusoidal|bertpos|gauss|t5|tisa|dabias|kerple|rope|learnlin)");
}

Injection injection_of(PeKind k) {
  switch (k) {
    case PeKind::NoPos: return Injection::None;
    case PeKind::Sinusoidal:
    case PeKind::BertPos: return Injection::InputEmbedding;
    case PeKind::GaussBias:
    case PeKind::T5Bias:
    case PeKind::TISA:
    case PeKind::KERPLE:
    case PeKind::LearnLin: return Injection::AdditiveBias;
    case PeKind::DABias: return Injection::MultiplicativeBias;
    case PeKind::RoPE: return Injection::Rotation;
  }
  return Injection::None;
}

long param_count(PeKind kind, int heads, int layers, int kernels, int max_len, int d_model) {
  switch (kind) {
    case PeKind::NoPos:
    case PeKind::Sinusoidal:
    case PeKind::RoPE: return 0;
    case PeKind::BertPos: return static_cast<long>(max_len) * d_model;
    case PeKind::GaussBias: return heads;
    case PeKind::TISA: return 3L * kernels * heads * layers;
    case PeKind::T5Bias: return static_cast<long>(kT5Buckets) * heads;
    case PeKind::DABias:
    case PeKind::KERPLE: return 2L * heads;
    case PeKind::LearnLin: return heads;
  }
  return 0;
}

Mat sinusoidal_embedding(Eigen::Index L, Eigen::Index d_model) {
  if (d_model % 2 != 0)
    throw std::invalid_argument("sinusoidal_embedding: d_model must be even, got " + std::to_string(d_model));
  Mat e(L, d_model);
  for (Eigen::Index l = 0; l < L; ++l)
    for (Eigen::Index d = 0; d < d_model; ++d) {
      const double even = static_cast<double>(d - d % 2);
      const double angle = static_cast<double>(l) * std::pow(10000.0, -even / static_cast<double>(d_model));
      e(l, d) = (d % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  return e;
}

int t5_bucket(long offset) {
  const long dist = offset < 0 ? -offset : offset;
  int idx;
  if (dist < 8) {
    idx = static_cast<int>(dist);
  } else {
    const double scaled = std::log(static_cast<double>(dist) / 8.0) / std::log(128.0 / 8.0) * 8.0;
    idx = std::min(15, 8 + static_cast<int>(std::floor(scaled)));
  }
  // offset 0 lives on the non-negative side
  return offset < 0 ? idx + 16 : idx;
}

Mat BiasMatrix::dense() const {
  Mat out(L, L);
  for (Eigen::Index i = 0; i < L; ++i)
    for (Eigen::Index j = 0; j < L; ++j) out(i, j) = at(i, j);
  return out;
}

namespace {

template <typename F>
BiasMatrix from_offset(Eigen::Index L, F f, bool multiplicative = false) {
  BiasMatrix b;
  b.L = L;
  b.multiplicative = multiplicative;
  b.offsets.resize(2 * L - 1);
  for (Eigen::Index d = -(L - 1); d <= L - 1; ++d) b.offsets(d + L - 1) = f(static_cast<double>(d));
  return b;
}

}  // namespace

BiasMatrix gauss_bias(Eigen::Index L, double sigma) {
  if (sigma == 0.0) throw std::invalid_argument("gauss_bias: sigma must be nonzero");
  return from_offset(L, [sigma](double d) { return -(d * d) / (2.0 * sigma * sigma); });
}

BiasMatrix t5_bias(Eigen::Index L, const Eigen::RowVectorXd& buckets) {
  if (buckets.size() != kT5Buckets)
    throw std::invalid_argument("t5_bias: bucket table must have 32 entries, got " +
                                std::to_string(buckets.size()));
  return from_offset(L, [&](double d) { return buckets(t5_bucket(static_cast<long>(d))); });
}

BiasMatrix tisa_bias(Eigen::Index L, const Mat& kernels) {
  if (kernels.cols() != 3) throw std::invalid_argument("tisa_bias: kernels must be S x 3 (a, b, c)");
  return from_offset(L, [&](double d) {
    // d = i - j, so j - i - c = -d - c
    double v = 0.0;
    for (Eigen::Index s = 0; s < kernels.rows(); ++s) {
      const double u = -d - kernels(s, 2);
      v += kernels(s, 0) * std::exp(-std::abs(kernels(s, 1)) * u * u);
    }
    return v;
  });
}

BiasMatrix da_bias(Eigen::Index L, double w, double v) {
  return from_offset(
      L, [w, v](double d) { return (1.0 + std::exp(v)) / (1.0 + std::exp(v - w * std::abs(d))); }, true);
}

BiasMatrix kerple_bias(Eigen::Index L, double r1, double r2) {
  if (!(r1 > 0) || !(r2 > 0)) throw std::invalid_argument("kerple_bias: r1 and r2 must be positive");
  return from_offset(L, [r1, r2](double d) { return -r1 * std::log(1.0 + r2 * std::abs(d)); });
}

BiasMatrix learnlin_bias(Eigen::Index L, double beta) {
  return from_offset(L, [beta](double d) { return beta * std::abs(d); });
}

std::pair<Mat, Mat> rope_rotate(const Mat& q, const Mat& k) {
  Tape tape;
  Var rq = rope_rotate(tape.constant(q));
  Var rk = rope_rotate(tape.constant(k));
  return {rq.value(), rk.value()};
}

// ---- PositionalEncoding -----------------------------------------------------

PositionalEncoding::PositionalEncoding(PeKind kind, int heads, int layers, int d_model, PeConfig cfg,
                                       Rng& rng)
    : kind_(kind), heads_(heads), layers_(layers), d_model_(d_model), cfg_(cfg) {
  const Eigen::Index H = heads;
  switch (kind) {
    case PeKind::NoPos:
    case PeKind::Sinusoidal:
    case PeKind::RoPE: break;
    case PeKind::BertPos: {
      Mat table(cfg.bert_max_len, d_model);
      for (Eigen::Index i = 0; i < table.size(); ++i) table.data()[i] = rng.normal(0.0, 0.02);
      params_.emplace_back("pe.bert.table", std::move(table));
      break;
    }
    case PeKind::GaussBias:
      params_.emplace_back("pe.gauss.sigma", Mat::Constant(1, H, 10.0));
      break;
    case PeKind::T5Bias:
      params_.emplace_back("pe.t5.buckets", Mat::Zero(H, kT5Buckets));
      break;
    case PeKind::TISA: {
      const Eigen::Index S = cfg.tisa_kernels;
      for (int n = 0; n < layers; ++n) {
        Mat a(H, S), b(H, S), c(H, S);
        for (Eigen::Index h = 0; h < H; ++h)
          for (Eigen::Index s = 0; s < S; ++s) {
            a(h, s) = rng.normal(0.0, 0.1);
            b(h, s) = 0.5;
            c(h, s) = S > 1 ? -8.0 + 16.0 * static_cast<double>(s) / static_cast<double>(S - 1) : 0.0;
          }
        const std::string p = "pe.tisa.layer" + std::to_string(n);
        params_.emplace_back(p + ".a", std::move(a));
        params_.emplace_back(p + ".b", std::move(b));
        params_.emplace_back(p + ".c", std::move(c));
      }
      break;
    }
    case PeKind::DABias:
      params_.emplace_back("pe.dabias.w", Mat::Constant(1, H, 0.01));
      params_.emplace_back("pe.dabias.v", Mat::Zero(1, H));
      break;
    case PeKind::KERPLE:
      params_.emplace_back("pe.kerple.log_r1", Mat::Zero(1, H));
      params_.emplace_back("pe.kerple.log_r2", Mat::Zero(1, H));
      break;
    case PeKind::LearnLin: {
      Mat beta(1, H);
      for (Eigen::Index h = 0; h < H; ++h) beta(0, h) = rng.uniform(-0.2, 0.0);
      params_.emplace_back("pe.learnlin.beta", std::move(beta));
      break;
    }
  }
}

std::vector<Parameter*> PositionalEncoding::parameters() {
  std::vector<Parameter*> out;
  for (Parameter& p : params_) out.push_back(&p);
  return out;
}

std::vector<const Parameter*> PositionalEncoding::parameters() const {
  std::vector<const Parameter*> out;
  for (const Parameter& p : params_) out.push_back(&p);
  return out;
}

long PositionalEncoding::trainable_count() const {
  long n = 0;
  for (const Parameter& p : params_)
    if (p.trainable) n += static_cast<long>(p.value.size());
  return n;
}

const Parameter& PositionalEncoding::param(const std::string& name) const {
  for (const Parameter& p : params_)
    if (p.name == name) return p;
  throw std::logic_error("positional encoding has no parameter " + name);
}

BiasMatrix PositionalEncoding::bias_matrix(int layer, int head, Eigen::Index L) const {
  switch (kind_) {
    case PeKind::GaussBias: return gauss_bias(L, param("pe.gauss.sigma").value(0, head));
    case PeKind::T5Bias: return t5_bias(L, param("pe.t5.buckets").value.row(head));
    case PeKind::TISA: {
      const std::string p = "pe.tisa.layer" + std::to_string(layer);
      Mat k(cfg_.tisa_kernels, 3);
      k.col(0) = param(p + ".a").value.row(head).transpose();
      k.col(1) = param(p + ".b").value.row(head).transpose();
      k.col(2) = param(p + ".c").value.row(head).transpose();
      return tisa_bias(L, k);
    }
    case PeKind::DABias:
      return da_bias(L, param("pe.dabias.w").value(0, head), param("pe.dabias.v").value(0, head));
    case PeKind::KERPLE:
      return kerple_bias(L, std::exp(param("pe.kerple.log_r1").value(0, head)),
                         std::exp(param("pe.kerple.log_r2").value(0, head)));
    case PeKind::LearnLin: return learnlin_bias(L, param("pe.learnlin.beta").value(0, head));
    default: throw std::logic_error("bias_matrix: " + to_string(kind_) + " has no attention bias");
  }
}

PositionalEncoding::Binding PositionalEncoding::bind(Tape& tape) const { return Binding(*this, tape); }

PositionalEncoding::Binding::Binding(const PositionalEncoding& pe, Tape& tape) : pe_(&pe), tape_(&tape) {
  for (Parameter& p : pe.params_) vars_.emplace(p.name, tape.parameter(p));
}

Var PositionalEncoding::Binding::embedding(Eigen::Index L) {
  switch (pe_->kind_) {
    case PeKind::Sinusoidal: return tape_->constant(sinusoidal_embedding(L, pe_->d_model_));
    case PeKind::BertPos: {
      if (L > pe_->cfg_.bert_max_len)
        throw CapabilityError("bertpos: " + std::to_string(L) + " frames exceed the position table of " +
                              std::to_string(pe_->cfg_.bert_max_len));
      return slice_rows(vars_.at("pe.bert.table"), 0, L);
    }
    default: throw std::logic_error("embedding: " + to_string(pe_->kind_) + " is not an absolute encoding");
  }
}

Var PositionalEncoding::Binding::bias(int layer, int head, Eigen::Index L) {
  const int key_layer = pe_->kind_ == PeKind::TISA ? layer : -1;
  const auto key = std::make_tuple(key_layer, head, L);
  auto it = cache_.find(key);
  if (it != cache_.end()) return it->second;
  Var b = toeplitz(build_offsets(layer, head, L), L);
  cache_.emplace(key, b);
  return b;
}

Var PositionalEncoding::Binding::build_offsets(int layer, int head, Eigen::Index L) {
  Tape& t = *tape_;
  Mat signed_d(1, 2 * L - 1);
  for (Eigen::Index d = -(L - 1); d <= L - 1; ++d) signed_d(0, d + L - 1) = static_cast<double>(d);
  const Mat abs_d = signed_d.cwiseAbs();

  switch (pe_->kind_) {
    case PeKind::GaussBias: {
      Var sigma = pick(vars_.at("pe.gauss.sigma"), 0, head);
      Var inv_var = div(t.constant(Mat::Ones(1, 1)), square(sigma));
      return mul_by(t.constant(-0.5 * signed_d.cwiseAbs2()), inv_var);
    }
    case PeKind::T5Bias: {
      std::vector<Eigen::Index> idx(static_cast<std::size_t>(2 * L - 1));
      for (Eigen::Index d = -(L - 1); d <= L - 1; ++d) idx[static_cast<std::size_t>(d + L - 1)] = t5_bucket(d);
      return gather(slice_rows(vars_.at("pe.t5.buckets"), head, 1), idx);
    }
    case PeKind::TISA: {
      const std::string p = "pe.tisa.layer" + std::to_string(layer);
      Var a = vars_.at(p + ".a"), b = vars_.at(p + ".b"), c = vars_.at(p + ".c");
      Var neg_d = t.constant(-signed_d);
      Var total;
      for (int s = 0; s < pe_->cfg_.tisa_kernels; ++s) {
        Var u = add_by(neg_d, scale(pick(c, head, s), -1.0));
        Var k = exp(mul_by(square(u), scale(abs(pick(b, head, s)), -1.0)));
        Var term = mul_by(k, pick(a, head, s));
        total = s == 0 ? term : add(total, term);
      }
      return total;
    }
    case PeKind::DABias: {
      Var w = pick(vars_.at("pe.dabias.w"), 0, head);
      Var v = pick(vars_.at("pe.dabias.v"), 0, head);
      Var numer = add_scalar(exp(v), 1.0);
      Var denom = add_scalar(exp(add_by(mul_by(t.constant(-abs_d), w), v)), 1.0);
      return mul_by(div(t.constant(Mat::Ones(1, 2 * L - 1)), denom), numer);
    }
    case PeKind::KERPLE: {
      Var r1 = exp(pick(vars_.at("pe.kerple.log_r1"), 0, head));
      Var r2 = exp(pick(vars_.at("pe.kerple.log_r2"), 0, head));
      return mul_by(log(add_scalar(mul_by(t.constant(abs_d), r2), 1.0)), scale(r1, -1.0));
    }
    case PeKind::LearnLin:
      return mul_by(t.constant(abs_d), pick(vars_.at("pe.learnlin.beta"), 0, head));
    default: throw std::logic_error("bias: " + to_string(pe_->kind_) + " has no attention bias");
  }
}

}  // namespace lgse
