#include <gtest/gtest.h>

#include <cmath>

#include "freejac/errors.hpp"
#include "freejac/mlp.hpp"

namespace freejac {
namespace {

// Independent forward pass from x0 through the sampled weights, returning x^L.
Vector forward_output(const NetworkState& s, const Vector& x0) {
  Vector x = x0;
  for (int l = 1; l <= s.depth(); ++l) {
    Vector h = s.W(l) * x;
    for (Eigen::Index i = 0; i < h.size(); ++i) h(i) = s.config.activation(l).eval(h(i));
    x = h;
  }
  return x;
}

std::vector<double> sorted(Vector v) {
  std::vector<double> out(v.begin(), v.end());
  std::sort(out.begin(), out.end());
  return out;
}

TEST(Config, Validation) {
  MlpConfig cfg = MlpConfig::uniform(2, 8, 1.0, Activation::tanh());
  EXPECT_NO_THROW(cfg.validate());
  cfg.sigma_w[1] = -1.0;
  EXPECT_THROW(cfg.validate(), PreconditionError);
  EXPECT_THROW(MlpConfig::uniform(0, 8, 1.0, Activation::tanh()).validate(), PreconditionError);
  EXPECT_THROW(MlpConfig::uniform(1, 1, 1.0, Activation::tanh()).validate(), PreconditionError);
}

TEST(SampleNetwork, Invariants) {
  const MlpConfig cfg = MlpConfig::uniform(3, 32, 1.3, Activation::tanh());
  const NetworkState s = sample_network(cfg, SeededRng(1));
  const double n = cfg.width;
  EXPECT_NEAR(s.signals.x(0).norm() / std::sqrt(n), 1.0, 1e-14);
  for (int l = 1; l <= 3; ++l) {
    const Matrix o = s.W(l) / cfg.sigma(l);
    EXPECT_LT((o.transpose() * o - Matrix::Identity(32, 32)).norm(), 1e-12 * n);
    EXPECT_LT((s.signals.h(l) - s.W(l) * s.signals.x(l - 1)).norm(), 1e-13 * s.signals.h(l).norm());
    for (int i = 0; i < 32; ++i) {
      EXPECT_EQ(s.signals.x(l)(i), std::tanh(s.signals.h(l)(i)));
      EXPECT_EQ(s.signals.d(l)(i), cfg.activation(l).deriv(s.signals.h(l)(i)));
    }
  }
  for (int l = 0; l <= 3; ++l) {
    EXPECT_GE(s.signals.q_hat(l), 0.0);
    EXPECT_DOUBLE_EQ(s.signals.q_hat(l), s.signals.x(l).squaredNorm() / n);
  }
}

TEST(SampleNetwork, SingleLayerIsometry) {
  MlpConfig cfg = MlpConfig::uniform(1, 50, 1.7, Activation::relu());
  cfg.input_radius = 2.0;
  const NetworkState s = sample_network(cfg, SeededRng(2));
  EXPECT_NEAR(s.signals.h(1).norm(), 1.7 * s.signals.x(0).norm(), 1e-10);
}

TEST(SampleNetwork, ReluJacobianIsProjection) {
  const NetworkState s = sample_network(MlpConfig::uniform(3, 40, std::sqrt(2.0), Activation::relu()), SeededRng(3));
  for (int l = 1; l <= 3; ++l)
    for (int i = 0; i < 40; ++i) EXPECT_TRUE(s.signals.d(l)(i) == 0.0 || s.signals.d(l)(i) == 1.0);
}

TEST(SampleNetwork, FixedVectorInput) {
  MlpConfig cfg = MlpConfig::uniform(1, 4, 1.0, Activation::tanh());
  cfg.input_mode = InputMode::fixed_vector;
  cfg.fixed_direction = {1.0, 0.0, 0.0, 0.0};
  cfg.input_radius = 0.5;
  const NetworkState s = sample_network(cfg, SeededRng(4));
  EXPECT_NEAR(s.signals.x(0)(0), 0.5 * 2.0, 1e-15);
  EXPECT_EQ(s.signals.x(0)(1), 0.0);
}

TEST(SampleNetwork, ForwardOnlyMatchesDense) {
  const MlpConfig cfg = MlpConfig::uniform(3, 64, 1.1, Activation::tanh());
  const NetworkState s = sample_network(cfg, SeededRng(5));
  const LayerSignals f = sample_forward(cfg, SeededRng(5));
  for (int l = 1; l <= 3; ++l) EXPECT_LT((s.signals.h(l) - f.h(l)).norm(), 1e-12 * s.signals.h(l).norm());
}

TEST(SampleNetwork, QhatConvergesToTheory) {
  const MlpConfig cfg = MlpConfig::uniform(4, 2048, std::sqrt(2.0), Activation::relu());
  const LayerSignals f = sample_forward(cfg, SeededRng(6));
  const TheoryProfile p = theory_profile(cfg);
  for (int l = 1; l <= 4; ++l) {
    EXPECT_NEAR(p.r(l) * p.r(l), 1.0, 1e-12);
    EXPECT_NEAR(f.q_hat(l), p.r(l) * p.r(l), 0.1);
  }
}

TEST(TheoryProfile, ReluFixedPoint) {
  const TheoryProfile p = theory_profile(MlpConfig::uniform(5, 10, std::sqrt(2.0), Activation::relu()));
  EXPECT_EQ(p.r(0), 1.0);
  for (int l = 1; l <= 5; ++l) {
    EXPECT_NEAR(p.q(l), 2.0, 1e-12);
    EXPECT_NEAR(p.r(l), 1.0, 1e-12);
  }
}

TEST(TheoryProfile, TanhContracts) {
  MlpConfig cfg = MlpConfig::uniform(4, 10, 1.0, Activation::tanh());
  cfg.input_radius = 0.8;
  const TheoryProfile p = theory_profile(cfg);
  EXPECT_EQ(p.r(0), 0.8);
  EXPECT_NEAR(p.q(1), 0.64, 1e-15);
  for (int l = 2; l <= 4; ++l) {
    EXPECT_LT(p.q(l), p.q(l - 1));
    EXPECT_NEAR(p.q(l), p.r(l - 1) * p.r(l - 1), 1e-15);
  }
}

TEST(InputJacobian, HardTanhLinearRegionIsW1) {
  MlpConfig cfg = MlpConfig::uniform(1, 16, 1.0, Activation::hard_tanh());
  cfg.input_radius = 0.01;
  const NetworkState s = sample_network(cfg, SeededRng(7));
  EXPECT_LT((input_jacobian_chain(s, 1) - s.W(1)).norm(), 1e-15);
}

TEST(InputJacobian, ReluRankEqualsActiveUnits) {
  const NetworkState s = sample_network(MlpConfig::uniform(1, 40, std::sqrt(2.0), Activation::relu()), SeededRng(8));
  const Matrix j = input_jacobian_chain(s, 1);
  const long active = (s.signals.h(1).array() >= 0.0).count();
  Eigen::ColPivHouseholderQR<Matrix> qr(j);
  EXPECT_EQ(qr.rank(), active);
}

TEST(InputJacobian, FiniteDifferenceOracle) {
  const MlpConfig cfg = MlpConfig::uniform(3, 32, 1.2, Activation::tanh());
  const NetworkState s = sample_network(cfg, SeededRng(9));
  const Matrix j = input_jacobian_chain(s, 3);
  const double eps = 1e-5;
  for (int i = 0; i < 32; ++i) {
    Vector xp = s.signals.x(0), xm = s.signals.x(0);
    xp(i) += eps;
    xm(i) -= eps;
    const Vector fd = (forward_output(s, xp) - forward_output(s, xm)) / (2 * eps);
    EXPECT_LT((fd - j.col(i)).cwiseAbs().maxCoeff(), 1e-5) << i;
  }
}

TEST(FimRecursion, H2SpectrumAndSymmetry) {
  const MlpConfig cfg = MlpConfig::uniform(4, 48, 1.4, Activation::tanh());
  const NetworkState s = sample_network(cfg, SeededRng(10));
  const auto hs = fim_recursion(s);
  ASSERT_EQ(hs.size(), 4u);
  EXPECT_EQ(hs[0], Matrix::Identity(48, 48));
  Vector expected = (s.signals.q_hat(1) + 1.4 * 1.4 * s.signals.d(1).array().square()).matrix();
  const auto got = sorted(symmetric_eigenvalues(hs[1]));
  const auto want = sorted(expected);
  for (int i = 0; i < 48; ++i) EXPECT_NEAR(got[i], want[i], 1e-10);
  for (const Matrix& h : hs) {
    EXPECT_LT((h - h.transpose()).norm(), 1e-12 * 48);
    EXPECT_GE(symmetric_eigenvalues(h).minCoeff(), -1e-12);
  }
}

TEST(FimRecursion, ConjugationScalesSpectrum) {
  const MlpConfig cfg = MlpConfig::uniform(2, 30, 0.7, Activation::tanh());
  const NetworkState s = sample_network(cfg, SeededRng(11));
  const Matrix m = s.signals.d(1).asDiagonal() * s.W(1) * s.W(1).transpose() * s.signals.d(1).asDiagonal();
  const auto a = sorted(symmetric_eigenvalues(0.5 * (s.W(2) * m * s.W(2).transpose() + (s.W(2) * m * s.W(2).transpose()).transpose())));
  const auto b = sorted(symmetric_eigenvalues(m));
  for (int i = 0; i < 30; ++i) EXPECT_NEAR(a[i], 0.49 * b[i], 1e-9);
}

TEST(DeltaChains, Identities) {
  const MlpConfig cfg = MlpConfig::uniform(2, 20, 1.1, Activation::tanh());
  const NetworkState s = sample_network(cfg, SeededRng(12));
  const auto d = delta_chains(s);
  EXPECT_EQ(d[1], Matrix::Identity(20, 20));
  EXPECT_LT((d[0] - s.W(2) * s.signals.d(1).asDiagonal().toDenseMatrix()).norm(), 1e-14);
}

TEST(DeltaChains, ReproduceJacobian) {
  const MlpConfig cfg = MlpConfig::uniform(4, 24, 1.2, Activation::tanh());
  const NetworkState s = sample_network(cfg, SeededRng(13));
  const auto d = delta_chains(s);
  // D_L delta_{L->1} W_1 = J_L
  EXPECT_LT((s.signals.d(4).asDiagonal() * d[0] * s.W(1) - input_jacobian_chain(s, 4)).norm(), 1e-10);
  // delta_{L->l} is dh^L/dh^l: finite differences on h^1 through the remaining layers.
  const double eps = 1e-6;
  for (int i = 0; i < 24; i += 5) {
    Vector h1p = s.signals.h(1), h1m = s.signals.h(1);
    h1p(i) += eps;
    h1m(i) -= eps;
    const auto run = [&](Vector h) {
      for (int l = 2; l <= 4; ++l) h = s.W(l) * h.unaryExpr([](double v) { return std::tanh(v); });
      return h;
    };
    const Vector fd = (run(h1p) - run(h1m)) / (2 * eps);
    EXPECT_LT((fd - d[0].col(i)).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(DeltaChains, SumEqualsRecursion) {
  for (const auto& act : {Activation::relu(), Activation::tanh()}) {
    for (int depth : {1, 2, 4, 5}) {
      const MlpConfig cfg = MlpConfig::uniform(depth, 64, act.kind == ActivationKind::relu ? std::sqrt(2.0) : 1.3, act);
      const NetworkState s = sample_network(cfg, SeededRng(14 + depth));
      EXPECT_LT((fim_recursion(s).back() - delta_chain_sum(s)).norm(), 1e-9 * 64);
    }
  }
}

TEST(ParameterJacobian, FiniteDifferenceColumns) {
  const MlpConfig cfg = MlpConfig::uniform(2, 6, 1.1, Activation::tanh());
  NetworkState s = sample_network(cfg, SeededRng(20));
  const Matrix jac = parameter_jacobian_oracle(s);
  ASSERT_EQ(jac.rows(), 6);
  ASSERT_EQ(jac.cols(), 2 * 36);
  const double eps = 1e-6;
  for (int l = 1; l <= 2; ++l)
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j) {
        NetworkState p = s, m = s;
        p.weights[l - 1](i, j) += eps;
        m.weights[l - 1](i, j) -= eps;
        const Vector fd = (forward_output(p, s.signals.x(0)) - forward_output(m, s.signals.x(0))) / (2 * eps);
        EXPECT_LT((fd - jac.col((l - 1) * 36 + i * 6 + j)).cwiseAbs().maxCoeff(), 1e-7);
      }
}

TEST(ParameterJacobian, EnvelopeEnforced) {
  const NetworkState s = sample_network(MlpConfig::uniform(1, 130, 1.0, Activation::tanh()), SeededRng(21));
  EXPECT_THROW(parameter_jacobian_oracle(s), PreconditionError);
}

TEST(ParameterJacobian, DualFormula) {
  const MlpConfig cfg = MlpConfig::uniform(3, 32, std::sqrt(2.0), Activation::relu());
  const NetworkState s = sample_network(cfg, SeededRng(22));
  const Matrix jac = parameter_jacobian_oracle(s);
  EXPECT_LT((jac * jac.transpose() / 32.0 - conditional_fim_dual(s)).norm(), 1e-9 * 32);
}

TEST(ParameterJacobian, SpectrumBookkeeping) {
  for (const auto& act : {Activation::tanh(), Activation::relu()}) {
    const MlpConfig cfg = MlpConfig::uniform(2, 12, 1.3, act);
    const NetworkState s = sample_network(cfg, SeededRng(23));
    const DualSpectrumCheck c = fim_dual_spectrum_check(s);
    EXPECT_LT(c.max_abs_diff, 1e-9 * std::max(c.scale, 1.0));
    EXPECT_EQ(c.zero_count, c.expected_zero_count);
    const long dual_zeros = (s.signals.d(2).array() == 0.0).count();
    EXPECT_EQ(c.expected_zero_count, static_cast<std::size_t>(2 * 144 - 12 + dual_zeros));
  }
}

}  // namespace
}  // namespace freejac
