#pragma once

// Positional-encoding schemes: absolute input embeddings (Sinusoidal,
// BertPos), relative attention biases (GaussBias, T5Bias, TISA, DABias,
// KERPLE, LearnLin) and query/key rotation (RoPE).

#include <array>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "lgse/random.hpp"
#include "lgse/tensor.hpp"

namespace lgse {

enum class PeKind { NoPos, Sinusoidal, BertPos, GaussBias, T5Bias, TISA, DABias, KERPLE, RoPE, LearnLin };

inline constexpr std::array<PeKind, 10> kAllPeKinds = {
    PeKind::NoPos,  PeKind::Sinusoidal, PeKind::BertPos, PeKind::GaussBias, PeKind::T5Bias,
    PeKind::TISA,   PeKind::DABias,     PeKind::KERPLE,  PeKind::RoPE,      PeKind::LearnLin};

enum class Injection { None, InputEmbedding, AdditiveBias, MultiplicativeBias, Rotation };

std::string to_string(PeKind k);
PeKind parse_pe(std::string_view s);
Injection injection_of(PeKind k);
inline bool uses_bias(PeKind k) {
  const Injection i = injection_of(k);
  return i == Injection::AdditiveBias || i == Injection::MultiplicativeBias;
}

/// Raised when an absolute scheme is asked for positions past its table.
struct CapabilityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr int kT5Buckets = 32;

/// Trainable PE parameter count for a configuration.
long param_count(PeKind kind, int heads, int layers, int kernels, int max_len, int d_model);

// ---- closed-form constructions ----------------------------------------------

Mat sinusoidal_embedding(Eigen::Index L, Eigen::Index d_model);

/// Bucket index into the 32-entry table for relative offset i - j.
int t5_bucket(long offset);

/// Toeplitz-compressed L x L bias: offsets(0, i - j + L - 1) holds P[i][j].
struct BiasMatrix {
  Eigen::RowVectorXd offsets;
  Eigen::Index L = 0;
  bool multiplicative = false;

  double at(Eigen::Index i, Eigen::Index j) const { return offsets(i - j + L - 1); }
  Mat dense() const;
};

BiasMatrix gauss_bias(Eigen::Index L, double sigma);
BiasMatrix t5_bias(Eigen::Index L, const Eigen::RowVectorXd& buckets);
/// kernels: S x 3 rows of (a, b, c).
BiasMatrix tisa_bias(Eigen::Index L, const Mat& kernels);
BiasMatrix da_bias(Eigen::Index L, double w, double v);
BiasMatrix kerple_bias(Eigen::Index L, double r1, double r2);
BiasMatrix learnlin_bias(Eigen::Index L, double beta);

std::pair<Mat, Mat> rope_rotate(const Mat& q, const Mat& k);

// ---- trainable parameter set ------------------------------------------------

struct PeConfig {
  int tisa_kernels = 5;
  int bert_max_len = 1250;  // table rows; 20 s of padded frames fits
};

class PositionalEncoding {
 public:
  PositionalEncoding(PeKind kind, int heads, int layers, int d_model, PeConfig cfg, Rng& rng);

  PeKind kind() const { return kind_; }
  Injection injection() const { return injection_of(kind_); }
  const PeConfig& config() const { return cfg_; }

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  long trainable_count() const;

  /// Per-forward view of the parameters on a tape.
  class Binding {
   public:
    /// L x d_model embedding for APE kinds.
    Var embedding(Eigen::Index L);
    /// L x L bias for head `h` in layer `layer`; shared kinds reuse one node.
    Var bias(int layer, int head, Eigen::Index L);

   private:
    friend class PositionalEncoding;
    Binding(const PositionalEncoding& pe, Tape& tape);
    Var build_offsets(int layer, int head, Eigen::Index L);

    const PositionalEncoding* pe_;
    Tape* tape_;
    std::map<std::string, Var> vars_;
    std::map<std::tuple<int, int, Eigen::Index>, Var> cache_;
  };

  Binding bind(Tape& tape) const;

  /// Plain bias for head `h` of `layer` from the current parameter values.
  BiasMatrix bias_matrix(int layer, int head, Eigen::Index L) const;

 private:
  PeKind kind_;
  int heads_;
  int layers_;
  int d_model_;
  PeConfig cfg_;
  // Mutable storage so Binding can hand out Parameter& to the tape.
  mutable std::vector<Parameter> params_;

  const Parameter& param(const std::string& name) const;
};

}  // namespace lgse
