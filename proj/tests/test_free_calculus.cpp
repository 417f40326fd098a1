#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "freejac/errors.hpp"
#include "freejac/free_calculus.hpp"
#include "freejac/parallel.hpp"
#include "freejac/spectral.hpp"

namespace freejac {
namespace {

MlpConfig relu_critical(int depth, int width) {
  return MlpConfig::uniform(depth, width, std::sqrt(2.0), Activation::relu());
}

// Closed-form E[hard_tanh(h)^2], h ~ N(0, q).
double hard_tanh_r2(double q) {
  const double t = 1.0 / std::sqrt(q);
  const double pdf = std::exp(-0.5 * t * t) / std::sqrt(2.0 * std::numbers::pi);
  return q * (std::erf(t / std::numbers::sqrt2) - 2.0 * t * pdf) + std::erfc(t / std::numbers::sqrt2);
}

// sigma^2 erf(1 / sqrt(2 sigma^2 r^2)) = 1, solved by bisection in sigma^2.
double critical_sigma2(double r2) {
  double lo = 1.0, hi = 1e6;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (mid * std::erf(1.0 / std::sqrt(2.0 * mid * r2)) < 1.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

TEST(PredictXi, FirstLayerIsScaledBernoulli) {
  const auto xi = predict_xi(relu_critical(3, 8), 1, 6);
  EXPECT_NEAR(xi[1], 1.0, 1e-14);
  EXPECT_NEAR(xi[2], 2.0, 1e-14);
  for (int k = 1; k <= 6; ++k) EXPECT_NEAR(xi[k], std::pow(2.0, k - 1), 1e-12);
}

TEST(PredictXi, SecondLayerMeanIsOne) {
  const auto xi = predict_xi(relu_critical(3, 8), 2, 6);
  EXPECT_NEAR(xi[1], 1.0, 1e-14);
  // (2 b) boxtimes (2 b) with b = Bernoulli(1/2): m2 = 16 * 3/16
  EXPECT_NEAR(xi[2], 3.0, 1e-12);
}

TEST(PredictXi, SecondLayerAgainstRandomMatrices) {
  const int n = 1024, trials = 6;
  const MlpConfig cfg = relu_critical(2, n);
  std::vector<double> m2(trials);
  parallel_for(trials, 1, [&](std::size_t t) {
    const NetworkState s = sample_network(cfg, SeededRng(100).child(t));
    const Matrix j = input_jacobian_chain(s, 2);
    m2[t] = trace_moments(j * j.transpose(), 2)[2];
  });
  RunningStats stats;
  for (double v : m2) stats.add(v);
  const double theory = predict_xi(cfg, 2, 4)[2];
  EXPECT_LT(std::abs(stats.mean() - theory), std::max(3.0 * stats.standard_error(), 0.05 * theory));
}

TEST(PredictXi, MeanIsProductOfLayerMeans) {
  MlpConfig cfg = MlpConfig::uniform(4, 8, 1.3, Activation::tanh());
  cfg.sigma_w = {1.1, 0.9, 1.4, 1.2};
  const auto nu = derivative_laws(cfg, 4);
  double prod = 1.0;
  for (int l = 1; l <= 4; ++l) {
    prod *= cfg.sigma(l) * cfg.sigma(l) * nu[l - 1][1];
    EXPECT_NEAR(predict_xi(cfg, l, 4)[1], prod, 1e-13 * prod);
  }
}

TEST(PredictXi, HardTanhCriticalityLine) {
  MlpConfig cfg = MlpConfig::uniform(4, 8, 1.0, Activation::hard_tanh());
  double r2 = 1.0;
  for (int l = 1; l <= 4; ++l) {
    const double s2 = critical_sigma2(r2);
    cfg.sigma_w[l - 1] = std::sqrt(s2);
    r2 = hard_tanh_r2(s2 * r2);
  }
  const TheoryProfile p = theory_profile(cfg);
  EXPECT_NEAR(p.r(4) * p.r(4), r2, 1e-12);
  for (int l = 1; l <= 4; ++l) EXPECT_NEAR(predict_xi(cfg, l, 4)[1], 1.0, 1e-10) << l;
}

TEST(PredictXi, Determinism) {
  const MlpConfig cfg = MlpConfig::uniform(3, 8, 1.2, Activation::silu());
  EXPECT_EQ(predict_xi(cfg, 3).moments, predict_xi(cfg, 3).moments);
  EXPECT_EQ(predict_mu(cfg, 3).moments, predict_mu(cfg, 3).moments);
}

TEST(PredictXi, LayerOutOfRange) {
  EXPECT_THROW(predict_xi(relu_critical(2, 8), 3), PreconditionError);
  EXPECT_THROW(predict_mu(relu_critical(2, 8), 0), PreconditionError);
}

TEST(PredictMu, FirstTwoLayers) {
  const MlpConfig cfg = MlpConfig::uniform(3, 8, 1.3, Activation::tanh());
  const auto mu1 = predict_mu(cfg, 1, 6);
  for (int k = 1; k <= 6; ++k) EXPECT_EQ(mu1[k], 1.0);
  const TheoryProfile p = theory_profile(cfg);
  const auto nu1 = derivative_laws(cfg, 6)[0];
  const auto expected = affine_pushforward(nu1, p.r(1) * p.r(1), 1.69);
  const auto mu2 = predict_mu(cfg, 2, 6);
  for (int k = 1; k <= 6; ++k) EXPECT_NEAR(mu2[k], expected[k], 1e-12 * expected[k]);
}

TEST(PredictMu, ReluSecondLayerIsTwoPointLaw) {
  // H_2 = qhat_1 I + W_2 D_1^2 W_2^T -> (1/2) delta_1 + (1/2) delta_3 for relu with sigma^2 = 2.
  const auto mu2 = predict_mu(relu_critical(2, 8), 2, 5);
  for (int k = 1; k <= 5; ++k) EXPECT_NEAR(mu2[k], 0.5 + 0.5 * std::pow(3.0, k), 1e-11);
}

TEST(PredictMu, ThirdLayerAgainstRecursion) {
  // qhat fluctuates by O(1/sqrt(N)) per realization, so compare a trial mean.
  const int n = 1024, trials = 8;
  const MlpConfig cfg = relu_critical(3, n);
  std::vector<MomentSeries> emp(trials);
  parallel_for(trials, 1, [&](std::size_t t) {
    emp[t] = trace_moments(fim_recursion(sample_network(cfg, SeededRng(7).child(t))).back(), 4);
  });
  const auto theory = predict_mu(cfg, 3, 4);
  for (int k = 1; k <= 4; ++k) {
    RunningStats stats;
    for (const auto& m : emp) stats.add(m[k]);
    EXPECT_LT(std::abs(stats.mean() - theory[k]), std::max(0.05 * theory[k], 3.0 * stats.standard_error())) << k;
  }
}

// Haar-conjugated diagonals are asymptotically free: tr((A Q B Q^T)^k) -> moments of mu boxtimes nu.
struct Pair {
  std::vector<double> a_atoms, b_atoms;
};

MomentSeries atom_moments(const std::vector<double>& atoms, int order) {
  MomentSeries m;
  for (int k = 1; k <= order; ++k) {
    double s = 0.0;
    for (double x : atoms) s += std::pow(x, k);
    m.moments.push_back(s / atoms.size());
  }
  return m;
}

// Mean of tr((sqrt(A) Q B Q^T sqrt(A))^k), k <= 4, over Haar Q at width n.
std::vector<RunningStats> conjugated_moments(const Pair& pr, int n, int trials, std::uint64_t seed) {
  Vector a(n), b(n);
  for (int i = 0; i < n; ++i) {
    a(i) = pr.a_atoms[i * pr.a_atoms.size() / n];
    b(i) = pr.b_atoms[i * pr.b_atoms.size() / n];
  }
  std::vector<RunningStats> stats(4);
  for (int t = 0; t < trials; ++t) {
    SeededRng rng = SeededRng(seed).child(n).child(t);
    const Matrix q = sample_haar_orthogonal(rng, n);
    const Vector sa = a.cwiseSqrt();
    const Matrix prod = sa.asDiagonal() * (q * b.asDiagonal() * q.transpose()) * sa.asDiagonal();
    const auto m = trace_moments(0.5 * (prod + prod.transpose()), 4);
    for (int k = 1; k <= 4; ++k) stats[k - 1].add(m[k]);
  }
  return stats;
}

TEST(Convolution, AgreesWithHaarConjugatedDiagonals) {
  // Widths divisible by 12 keep the atom weights exactly uniform. The O(1/N)
  // bias of real orthogonal conjugation is about a fifth of the per-trial spread.
  const int n = 1152, trials = 8;
  const std::vector<Pair> pairs{
      {{0.0, 1.0}, {0.0, 1.0}},
      {{1.0, 3.0}, {0.0, 2.0}},
      {{0.5, 1.0, 2.0}, {1.0, 4.0}},
      {{0.2, 0.7, 1.1, 1.9}, {0.0, 0.5, 3.0}},
  };
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const auto& pr = pairs[p];
    const auto stats = conjugated_moments(pr, n, trials, 200 + p);
    const auto theory = free_multiplicative_convolution(atom_moments(pr.a_atoms, 4), atom_moments(pr.b_atoms, 4));
    for (int k = 1; k <= 4; ++k)
      EXPECT_NEAR(stats[k - 1].mean(), theory[k], 3.0 * stats[k - 1].standard_error()) << "pair " << p << " k=" << k;
  }
}

}  // namespace
}  // namespace freejac
