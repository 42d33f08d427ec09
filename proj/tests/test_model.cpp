#include "doctest.h"
#include "support.hpp"

#include <set>

#include "lgse/model.hpp"
#include "lgse/selftest.hpp"

using namespace lgse;

namespace {

ModelConfig tiny(PeKind pe, TargetKind target = TargetKind::IRM) {
  ModelConfig c;
  c.layers = 2;
  c.heads = 2;
  c.d_model = 8;
  c.d_ff = 8;
  c.bins = 9;
  c.pe = pe;
  c.target = target;
  c.pe_cfg.bert_max_len = 16;
  return c;
}

Mat magnitude(std::uint64_t seed, Eigen::Index L, Eigen::Index K) {
  Rng rng(seed);
  return testing::random_mat(rng, L, K, 0.0, 2.0);
}

}  // namespace

TEST_CASE("config validation") {
  ModelConfig c = tiny(PeKind::NoPos);
  c.heads = 3;
  CHECK_THROWS(c.validate());
  c = tiny(PeKind::RoPE);
  c.d_model = 6;
  c.heads = 2;  // d_k = 3 is odd
  CHECK_THROWS(c.validate());
  CHECK_NOTHROW(tiny(PeKind::TISA).validate());
}

TEST_CASE("output shape and range per target") {
  const Mat x = magnitude(1, 7, 9);
  for (TargetKind t : {TargetKind::MS, TargetKind::IRM, TargetKind::PSM, TargetKind::CIRM}) {
    CAPTURE(to_string(t));
    const MaskGrid m = EnhancementModel(tiny(PeKind::LearnLin, t), 3).predict(x);
    CHECK(m.real.rows() == 7);
    CHECK(m.real.cols() == 9);
    CHECK(m.is_complex() == (t == TargetKind::CIRM));
    if (t == TargetKind::IRM || t == TargetKind::PSM) {
      CHECK(m.real.minCoeff() >= 0.0);
      CHECK(m.real.maxCoeff() <= 1.0);
    }
    if (t == TargetKind::MS) CHECK(m.real.minCoeff() >= 0.0);
    if (t == TargetKind::CIRM) {
      CHECK(m.real.cwiseAbs().maxCoeff() <= 10.0);
      CHECK(m.imag.cwiseAbs().maxCoeff() <= 10.0);
    }
  }
}

TEST_CASE("same seed gives the same model") {
  EnhancementModel a(tiny(PeKind::T5Bias), 5), b(tiny(PeKind::T5Bias), 5), c(tiny(PeKind::T5Bias), 6);
  const Mat x = magnitude(2, 6, 9);
  CHECK(a.predict(x).real == b.predict(x).real);
  CHECK(a.predict(x).real != c.predict(x).real);
}

TEST_CASE("gradients of the whole network match finite differences") {
  Rng rng(4);
  const Mat x = magnitude(4, 5, 9);
  for (PeKind kind : kAllPeKinds) {
    for (TargetKind t : {TargetKind::IRM, TargetKind::CIRM}) {
      CAPTURE(to_string(kind));
      CAPTURE(to_string(t));
      EnhancementModel m(tiny(kind, t), 7);
      for (Parameter* p : m.parameters())
        if (p->name.rfind("pe.", 0) == 0)
          for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = rng.uniform(0.3, 1.2);
      MaskGrid target{testing::random_mat(rng, 5, 9, 0.0, 1.0), {}};
      if (t == TargetKind::CIRM) target.imag = testing::random_mat(rng, 5, 9, -1.0, 1.0);
      const GradCheck g = gradient_check(m, x, target);
      CHECK(g.max_rel_error < 1e-5);
    }
  }
}

TEST_CASE("causal attention ignores the future") {
  for (PeKind kind : {PeKind::NoPos, PeKind::LearnLin, PeKind::DABias, PeKind::RoPE, PeKind::TISA}) {
    CAPTURE(to_string(kind));
    ModelConfig c = tiny(kind);
    c.causal = true;
    EnhancementModel m(c, 8);
    Mat x = magnitude(5, 8, 9);
    const Mat before = m.predict(x).real;
    x.bottomRows(3).setRandom();
    const Mat after = m.predict(x).real;
    CHECK((before.topRows(5) - after.topRows(5)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((before.bottomRows(3) - after.bottomRows(3)).cwiseAbs().maxCoeff() > 1e-9);
  }
}

TEST_CASE("without positional information the network is permutation equivariant") {
  EnhancementModel m(tiny(PeKind::NoPos), 9);
  const Mat x = magnitude(6, 6, 9);
  const std::vector<int> perm = {3, 0, 5, 1, 4, 2};
  Mat xp(6, 9);
  for (int i = 0; i < 6; ++i) xp.row(i) = x.row(perm[i]);
  const Mat y = m.predict(x).real, yp = m.predict(xp).real;
  for (int i = 0; i < 6; ++i) CHECK((yp.row(i) - y.row(perm[i])).cwiseAbs().maxCoeff() < 1e-12);

  EnhancementModel s(tiny(PeKind::Sinusoidal), 9);
  const Mat z = s.predict(x).real, zp = s.predict(xp).real;
  CHECK((zp.row(0) - z.row(perm[0])).cwiseAbs().maxCoeff() > 1e-9);
}

TEST_CASE("LearnLin with zero slopes reduces to NoPos") {
  EnhancementModel a(tiny(PeKind::LearnLin), 10), b(tiny(PeKind::NoPos), 10);
  a.parameter("pe.learnlin.beta").value.setZero();
  const Mat x = magnitude(7, 9, 9);
  CHECK((a.predict(x).real - b.predict(x).real).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("parameter order is canonical and names are unique") {
  EnhancementModel m(tiny(PeKind::KERPLE), 11);
  const auto ps = m.parameters();
  CHECK(ps.front()->name == "embed.w");
  CHECK(ps.back()->name == "head.b");
  std::set<std::string> names;
  for (const Parameter* p : ps) names.insert(p->name);
  CHECK(names.size() == ps.size());
  CHECK_THROWS(m.parameter("nope"));
}
