#pragma once

#include <vector>

namespace freejac {

/// Truncated formal power series c_1 z + c_2 z^2 + ... + c_K z^K (no
/// constant term). coeffs[i] holds c_{i+1}.
struct PowerSeries {
  std::vector<double> coeffs;

  int order() const { return static_cast<int>(coeffs.size()); }
  double operator[](int degree) const { return coeffs.at(degree - 1); }
};

/// Moments m_1..m_K of a compactly supported probability measure (m_0 = 1
/// implicit). moments[i] holds m_{i+1}.
struct MomentSeries {
  std::vector<double> moments;

  int order() const { return static_cast<int>(moments.size()); }
  double operator[](int k) const { return k == 0 ? 1.0 : moments.at(k - 1); }

  /// Point mass at gamma: m_k = gamma^k.
  static MomentSeries point_mass(double gamma, int order);
  /// Two-atom law weight_zero * delta_0 + (1 - weight_zero) * delta_gamma.
  static MomentSeries bernoulli(double weight_zero, double gamma, int order);
};

/// S(z) = s_0 + s_1 z + ... + s_{K-1} z^{K-1}. coeffs[j] holds s_j.
struct STransform {
  std::vector<double> coeffs;

  int order() const { return static_cast<int>(coeffs.size()); }
};

/// Truncated composition p(q(z)) to order min(p.order(), q.order()).
PowerSeries compose(const PowerSeries& p, const PowerSeries& q);

/// Compositional inverse: r with p(r(z)) = z + O(z^{K+1}). Requires c_1 != 0.
PowerSeries series_reversion(const PowerSeries& p);

/// S(z) = (1 + z)/z * M^{<-1>}(z) where M(z) = sum m_n z^n. Throws
/// UndefinedTransformError when m_1 == 0.
STransform s_transform(const MomentSeries& m);

/// Inverse of s_transform: M^{<-1>}(z) = z/(1 + z) * S(z), then revert.
MomentSeries moments_from_s(const STransform& s);

/// Moments of mu [x] nu via S_{mu [x] nu} = S_mu S_nu, truncated to the
/// shorter of the two inputs.
MomentSeries free_multiplicative_convolution(const MomentSeries& mu, const MomentSeries& nu);

/// Moments of shift + scale * X for X ~ m.
MomentSeries affine_pushforward(const MomentSeries& m, double shift, double scale);

/// Moments of c * X.
MomentSeries dilate(const MomentSeries& m, double c);

/// det of the 2x2 Hankel matrix [[1, m1], [m1, m2]] (>= 0 for a positive measure).
double hankel_det2(const MomentSeries& m);

}  // namespace freejac
