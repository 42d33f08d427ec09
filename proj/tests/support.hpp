#pragma once

#include <functional>
#include <vector>

#include "lgse/random.hpp"
#include "lgse/tensor.hpp"

namespace testing {

inline lgse::Mat random_mat(lgse::Rng& rng, Eigen::Index r, Eigen::Index c, double lo = -1.0, double hi = 1.0) {
  lgse::Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
  return m;
}

// Worst normwise relative error between backward() and central differences
// for a scalar function of the given parameters.
inline double fd_error(std::vector<lgse::Parameter*> params,
                       const std::function<lgse::Var(lgse::Tape&, std::vector<lgse::Var>&)>& f,
                       double h = 1e-6) {
  using namespace lgse;
  for (Parameter* p : params) p->zero_grad();
  {
    Tape t;
    std::vector<Var> in;
    for (Parameter* p : params) in.push_back(t.parameter(*p));
    t.backward(f(t, in));
  }
  auto value = [&] {
    Tape t(false);
    std::vector<Var> in;
    for (Parameter* p : params) in.push_back(t.parameter(*p));
    return f(t, in).scalar();
  };
  double worst = 0.0;
  for (Parameter* p : params) {
    Mat num(p->value.rows(), p->value.cols());
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      const double keep = p->value.data()[i];
      p->value.data()[i] = keep + h;
      const double up = value();
      p->value.data()[i] = keep - h;
      const double down = value();
      p->value.data()[i] = keep;
      num.data()[i] = (up - down) / (2 * h);
    }
    const double scale = std::max(num.norm(), p->grad.norm());
    if (scale < 1e-12) continue;
    worst = std::max(worst, (num - p->grad).norm() / scale);
  }
  return worst;
}

}  // namespace testing
