#include "freejac/series.hpp"

#include <algorithm>
#include <cmath>

#include "freejac/errors.hpp"

namespace freejac {
namespace {

// Dense coefficient vectors indexed by degree, index 0 = constant term.
using Poly = std::vector<double>;

Poly truncated_product(const Poly& a, const Poly& b, int max_degree) {
  Poly out(max_degree + 1, 0.0);
  for (int i = 0; i < static_cast<int>(a.size()) && i <= max_degree; ++i) {
    if (a[i] == 0.0) continue;
    for (int j = 0; j < static_cast<int>(b.size()) && i + j <= max_degree; ++j)
      out[i + j] += a[i] * b[j];
  }
  return out;
}

Poly to_poly(const PowerSeries& p) {
  Poly out(p.coeffs.size() + 1, 0.0);
  std::copy(p.coeffs.begin(), p.coeffs.end(), out.begin() + 1);
  return out;
}

void check_finite(const std::vector<double>& v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x)) throw PreconditionError(std::string(what) + ": non-finite coefficient");
}

}  // namespace

MomentSeries MomentSeries::point_mass(double gamma, int order) {
  MomentSeries m;
  double p = 1.0;
  for (int k = 1; k <= order; ++k) m.moments.push_back(p *= gamma);
  return m;
}

MomentSeries MomentSeries::bernoulli(double weight_zero, double gamma, int order) {
  require(weight_zero >= 0.0 && weight_zero <= 1.0, "bernoulli: weight must lie in [0, 1]");
  MomentSeries m = point_mass(gamma, order);
  for (double& v : m.moments) v *= 1.0 - weight_zero;
  return m;
}

PowerSeries compose(const PowerSeries& p, const PowerSeries& q) {
  const int order = std::min(p.order(), q.order());
  require(order >= 1, "compose: series must have order >= 1");
  const Poly inner = to_poly(q);
  Poly power = inner;  // q^1
  Poly acc(order + 1, 0.0);
  for (int n = 1; n <= order; ++n) {
    if (n > 1) power = truncated_product(power, inner, order);
    const double c = p.coeffs[n - 1];
    if (c == 0.0) continue;
    for (int d = n; d <= order; ++d) acc[d] += c * power[d];
  }
  return {std::vector<double>(acc.begin() + 1, acc.end())};
}

PowerSeries series_reversion(const PowerSeries& p) {
  const int order = p.order();
  require(order >= 1, "series_reversion: series must have order >= 1");
  check_finite(p.coeffs, "series_reversion");
  const double c1 = p.coeffs[0];
  if (c1 == 0.0) throw PreconditionError("series_reversion: linear coefficient is zero");

  PowerSeries r{std::vector<double>(order, 0.0)};
  r.coeffs[0] = 1.0 / c1;
  for (int n = 2; n <= order; ++n) {
    // With r_n = 0 the z^n coefficient of p(r(z)) collects every term except
    // c_1 r_n, so r_n is fixed by making that coefficient vanish.
    PowerSeries head{std::vector<double>(r.coeffs.begin(), r.coeffs.begin() + n)};
    PowerSeries p_head{std::vector<double>(p.coeffs.begin(), p.coeffs.begin() + n)};
    const double coeff = compose(p_head, head).coeffs[n - 1];
    r.coeffs[n - 1] = -coeff / c1;
  }
  return r;
}

STransform s_transform(const MomentSeries& m) {
  require(m.order() >= 1, "s_transform: need at least one moment");
  check_finite(m.moments, "s_transform");
  if (m.moments[0] == 0.0)
    throw UndefinedTransformError("s_transform: first moment is zero, S-transform undefined");
  const PowerSeries inverse = series_reversion(PowerSeries{m.moments});
  // (1 + z)/z * (a_1 z + ... + a_K z^K) = sum_j (a_{j+1} + a_j) z^j
  STransform s;
  s.coeffs.resize(m.order());
  for (int j = 0; j < m.order(); ++j)
    s.coeffs[j] = inverse.coeffs[j] + (j > 0 ? inverse.coeffs[j - 1] : 0.0);
  return s;
}

MomentSeries moments_from_s(const STransform& s) {
  require(s.order() >= 1, "moments_from_s: empty S-transform");
  check_finite(s.coeffs, "moments_from_s");
  if (s.coeffs[0] == 0.0) throw PreconditionError("moments_from_s: constant term is zero");
  // z/(1 + z) * S(z): coefficient of z^{j+1} is sum_{i<=j} (-1)^{j-i} s_i.
  PowerSeries inverse{std::vector<double>(s.order())};
  double running = 0.0;
  for (int j = 0; j < s.order(); ++j) {
    running = s.coeffs[j] - running;
    inverse.coeffs[j] = running;
  }
  return {series_reversion(inverse).coeffs};
}

MomentSeries free_multiplicative_convolution(const MomentSeries& mu, const MomentSeries& nu) {
  const int order = std::min(mu.order(), nu.order());
  require(order >= 1, "free_multiplicative_convolution: need at least one moment");
  const STransform a = s_transform(MomentSeries{{mu.moments.begin(), mu.moments.begin() + order}});
  const STransform b = s_transform(MomentSeries{{nu.moments.begin(), nu.moments.begin() + order}});
  STransform prod;
  prod.coeffs.assign(order, 0.0);
  for (int i = 0; i < order; ++i)
    for (int j = 0; i + j < order; ++j) prod.coeffs[i + j] += a.coeffs[i] * b.coeffs[j];
  return moments_from_s(prod);
}

MomentSeries affine_pushforward(const MomentSeries& m, double shift, double scale) {
  const int order = m.order();
  MomentSeries out;
  out.moments.resize(order);
  for (int k = 1; k <= order; ++k) {
    double binom = 1.0;  // C(k, j)
    double acc = 0.0;
    for (int j = 0; j <= k; ++j) {
      if (j > 0) binom = binom * (k - j + 1) / j;
      acc += binom * std::pow(shift, k - j) * std::pow(scale, j) * m[j];
    }
    out.moments[k - 1] = acc;
  }
  return out;
}

MomentSeries dilate(const MomentSeries& m, double c) {
  MomentSeries out = m;
  double p = 1.0;
  for (double& v : out.moments) v *= (p *= c);
  return out;
}

double hankel_det2(const MomentSeries& m) {
  require(m.order() >= 2, "hankel_det2: need two moments");
  return m[2] - m[1] * m[1];
}

}  // namespace freejac
