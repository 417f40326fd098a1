#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "freejac/activations.hpp"
#include "freejac/errors.hpp"
#include "freejac/rng.hpp"

namespace freejac {
namespace {

std::vector<Activation> catalog() {
  return {Activation::relu(),    Activation::shifted_relu(0.5), Activation::shifted_relu(-0.3),
          Activation::hard_tanh(), Activation::tanh(),          Activation::sigmoid(),
          Activation::silu(),    Activation::erf()};
}

TEST(Eval, ClosedForms) {
  EXPECT_EQ(Activation::relu().eval(-1.0), 0.0);
  EXPECT_EQ(Activation::relu().eval(2.0), 2.0);
  EXPECT_EQ(Activation::hard_tanh().eval(5.0), 1.0);
  EXPECT_EQ(Activation::hard_tanh().eval(-5.0), -1.0);
  EXPECT_EQ(Activation::hard_tanh().eval(0.3), 0.3);
  EXPECT_EQ(Activation::tanh().eval(0.0), 0.0);
  EXPECT_EQ(Activation::sigmoid().eval(0.0), 0.5);
  EXPECT_EQ(Activation::shifted_relu(0.5).eval(-2.0), 0.5);
  EXPECT_EQ(Activation::shifted_relu(0.5).eval(2.0), 2.0);
  EXPECT_NEAR(Activation::silu().eval(1.0), 1.0 / (1.0 + std::exp(-1.0)), 1e-15);
  EXPECT_NEAR(Activation::erf().eval(0.7), std::erf(0.7), 1e-15);
}

TEST(Deriv, RightLimitAtKinks) {
  EXPECT_EQ(Activation::relu().deriv(-1.0), 0.0);
  EXPECT_EQ(Activation::relu().deriv(2.0), 1.0);
  EXPECT_EQ(Activation::relu().deriv(0.0), 1.0);
  EXPECT_EQ(Activation::hard_tanh().deriv(-1.0), 1.0);
  EXPECT_EQ(Activation::hard_tanh().deriv(1.0), 0.0);
  EXPECT_EQ(Activation::shifted_relu(0.5).deriv(0.5), 1.0);
}

TEST(Deriv, KinkConventionIsMeasureIrrelevant) {
  // Left-limit relu' differs only at 0, which a Gaussian sample never hits.
  SeededRng rng(3);
  const Activation relu = Activation::relu();
  double right = 0.0, left = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double h = rng.normal();
    right += relu.deriv(h);
    left += h > 0.0 ? 1.0 : 0.0;
  }
  EXPECT_LT(std::abs(right - left) / n, 3.0 * 0.5 / std::sqrt(double(n)));
}

TEST(Deriv, MatchesFiniteDifferences) {
  const double eps = 1e-6;
  for (const auto& a : catalog()) {
    const auto kinks = a.kinks();
    for (int i = 0; i <= 1000; ++i) {
      const double x = -5.0 + 10.0 * i / 1000.0;
      bool near_kink = false;
      for (double k : kinks) near_kink = near_kink || std::abs(x - k) < 1e-3;
      if (near_kink) continue;
      const double fd = (a.eval(x + eps) - a.eval(x - eps)) / (2 * eps);
      EXPECT_LT(std::abs(a.deriv(x) - fd), 1e-6) << a.name() << " at " << x;
    }
  }
}

TEST(Deriv, TanhIdentity) {
  const Activation t = Activation::tanh();
  for (int i = 0; i <= 200; ++i) {
    const double x = -4.0 + 8.0 * i / 200.0;
    EXPECT_NEAR(t.deriv(x), 1.0 - std::tanh(x) * std::tanh(x), 1e-15);
    const double fd = (t.eval(x + 1e-5) - t.eval(x - 1e-5)) / 2e-5;
    EXPECT_LT(std::abs(t.deriv(x) - fd), 1e-8);
  }
}

TEST(Deriv, BoundedBySupremum) {
  for (const auto& a : catalog())
    for (int i = 0; i <= 2000; ++i) {
      const double x = -10.0 + 20.0 * i / 2000.0;
      EXPECT_LE(std::abs(a.deriv(x)), a.deriv_bound() + 1e-12) << a.name();
    }
}

TEST(Parse, NamesRoundTrip) {
  for (const auto& a : catalog()) EXPECT_EQ(parse_activation(a.name(), a.alpha).kind, a.kind);
  EXPECT_THROW(parse_activation("softplus"), PreconditionError);
}

TEST(GaussHermite, WeightsAndPolynomialExactness) {
  for (int order : {5, 20, kDefaultQuadratureOrder}) {
    const auto rule = gauss_hermite(order);
    ASSERT_EQ(rule.order(), order);
    double sum = 0.0;
    for (double w : rule.weights) {
      EXPECT_GT(w, 0.0);
      sum += w;
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
    // E[x^(2k)] = (2k-1)!!, odd moments vanish; check degrees up to min(2 order - 1, 30).
    double dfact = 1.0;
    for (int deg = 1; deg <= std::min(2 * order - 1, 30); ++deg) {
      double m = 0.0;
      for (int i = 0; i < order; ++i) m += rule.weights[i] * std::pow(rule.nodes[i], deg);
      if (deg % 2 == 1) {
        EXPECT_NEAR(m, 0.0, 1e-10 * dfact * deg) << order << " " << deg;
      } else {
        dfact *= deg - 1;
        EXPECT_NEAR(m / dfact, 1.0, 1e-10) << order << " " << deg;
      }
    }
  }
}

TEST(GaussianExpectation, Examples) {
  const auto& rule = default_rule();
  EXPECT_NEAR(gaussian_expectation([](double x) { return x * x; }, 3.0, rule), 3.0, 1e-10);
  EXPECT_NEAR(activation_second_moment(Activation::relu(), 2.0, rule), 1.0, 1e-9);
  EXPECT_THROW(gaussian_expectation([](double x) { return x; }, 0.0, rule), PreconditionError);
}

// Monte-Carlo oracle: mean and 3 standard errors from n normal draws of variance q.
struct McEstimate {
  double mean, se;
};
template <typename F>
McEstimate monte_carlo(F f, double q, int n, std::uint64_t seed) {
  SeededRng rng(seed);
  const double s = std::sqrt(q);
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = f(s * rng.normal());
    sum += v;
    sq += v * v;
  }
  const double mean = sum / n;
  return {mean, std::sqrt((sq / n - mean * mean) / n)};
}

TEST(GaussianExpectation, TanhSquareAgainstMonteCarlo) {
  const double quad = activation_second_moment(Activation::tanh(), 1.0, default_rule());
  const auto mc = monte_carlo([](double h) { return std::tanh(h) * std::tanh(h); }, 1.0, 10'000'000, 77);
  EXPECT_LT(std::abs(quad - mc.mean), 3.0 * mc.se);
}

// Composite trapezoid against the N(0, q) density; kinks only cost O(h^2).
template <typename F>
double trapezoid_gaussian(F f, double q) {
  const double s = std::sqrt(q), lo = -12.0 * s, hi = 12.0 * s;
  const int n = 2'000'000;
  const double h = (hi - lo) / n;
  double acc = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double x = lo + i * h;
    const double v = f(x) * std::exp(-0.5 * x * x / q);
    acc += (i == 0 || i == n) ? 0.5 * v : v;
  }
  return acc * h / std::sqrt(2.0 * std::numbers::pi * q);
}

TEST(GaussianExpectation, PiecewiseExactMatchesTrapezoid) {
  for (const auto& a : {Activation::relu(), Activation::hard_tanh(), Activation::shifted_relu(0.5)}) {
    for (double q : {0.3, 1.0, 2.5}) {
      const double exact = activation_second_moment(a, q, default_rule());
      const double oracle = trapezoid_gaussian([&](double x) { return a.eval(x) * a.eval(x); }, q);
      EXPECT_NEAR(exact, oracle, 1e-8) << a.name() << " q=" << q;
      const auto m = derivative_square_moments(a, q, 3, default_rule());
      const double d_oracle = trapezoid_gaussian([&](double x) { return a.deriv(x) * a.deriv(x); }, q);
      // the derivative jumps, which costs the trapezoid O(h) ~ 3e-6
      EXPECT_NEAR(m[1], d_oracle, 1e-5) << a.name() << " q=" << q;
    }
  }
  // relu: E[relu(h)^2] = q / 2 exactly.
  EXPECT_NEAR(activation_second_moment(Activation::relu(), 0.37, default_rule()), 0.185, 1e-14);
}

TEST(GaussianExpectation, SmoothActivationsMatchTrapezoid) {
  for (const auto& a : {Activation::tanh(), Activation::sigmoid(), Activation::silu(), Activation::erf()}) {
    for (double q : {0.3, 2.5}) {
      const double quad = activation_second_moment(a, q, default_rule());
      EXPECT_NEAR(quad, trapezoid_gaussian([&](double x) { return a.eval(x) * a.eval(x); }, q), 1e-9) << a.name();
    }
  }
}

TEST(DerivativeSquareMoments, Relu) {
  for (double q : {0.1, 1.0, 7.0}) {
    const auto m = derivative_square_moments(Activation::relu(), q, 6, default_rule());
    for (int k = 1; k <= 6; ++k) EXPECT_NEAR(m[k], 0.5, 1e-14);
  }
}

TEST(DerivativeSquareMoments, HardTanhIsErf) {
  const auto m = derivative_square_moments(Activation::hard_tanh(), 1.0, 5, default_rule());
  const double oracle = std::erf(1.0 / std::numbers::sqrt2);
  EXPECT_NEAR(oracle, 0.682689, 1e-6);
  for (int k = 1; k <= 5; ++k) EXPECT_NEAR(m[k], oracle, 1e-6);
}

TEST(DerivativeSquareMoments, TanhAgainstMonteCarlo) {
  const auto m = derivative_square_moments(Activation::tanh(), 1.0, 2, default_rule());
  const auto mc = monte_carlo(
      [](double h) {
        const double d = 1.0 - std::tanh(h) * std::tanh(h);
        return d * d;
      },
      1.0, 2'000'000, 78);
  EXPECT_LT(std::abs(m[1] - mc.mean), 3.0 * mc.se);
}

TEST(DerivativeSquareMoments, WithinBounds) {
  for (const auto& a : catalog()) {
    const auto m = derivative_square_moments(a, 1.3, 6, default_rule());
    for (int k = 1; k <= 6; ++k) {
      EXPECT_GE(m[k], -1e-15) << a.name();
      EXPECT_LE(m[k], std::pow(a.deriv_bound(), 2 * k) + 1e-12) << a.name();
    }
  }
}

}  // namespace
}  // namespace freejac
