#include "freejac/spectral.hpp"

#include <algorithm>
#include <cmath>

#include "freejac/activations.hpp"
#include "freejac/errors.hpp"

namespace freejac {

EmpiricalSpectrum EmpiricalSpectrum::from_values(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  return {std::move(values)};
}

EmpiricalSpectrum spectrum_of(const Matrix& a) {
  const Vector ev = symmetric_eigenvalues(a);
  return EmpiricalSpectrum::from_values(std::vector<double>(ev.begin(), ev.end()));
}

MomentSeries empirical_moments(const EmpiricalSpectrum& s, int max_order) {
  require(max_order >= 1, "empirical_moments: max_order must be >= 1");
  require(s.size() > 0, "empirical_moments: empty spectrum");
  MomentSeries m;
  m.moments.assign(max_order, 0.0);
  for (double lambda : s.eigenvalues) {
    double p = 1.0;
    for (int k = 0; k < max_order; ++k) m.moments[k] += (p *= lambda);
  }
  for (double& v : m.moments) v /= static_cast<double>(s.size());
  return m;
}

MomentSeries trace_moments(const Matrix& a, int max_order) {
  require(max_order >= 1, "trace_moments: max_order must be >= 1");
  require(a.rows() == a.cols(), "trace_moments: matrix must be square");
  const double n = static_cast<double>(a.rows());
  MomentSeries m;
  m.moments.push_back(a.trace() / n);
  if (max_order == 1) return m;
  Matrix power = a;
  for (int k = 2; k <= max_order; ++k) {
    if (k == max_order) {
      // last order only needs the trace of the product
      m.moments.push_back((power.transpose().cwiseProduct(a)).sum() / n);
      break;
    }
    Matrix next = power * a;
    power = std::move(next);
    m.moments.push_back(power.trace() / n);
  }
  return m;
}

double ks_distance_to_gaussian(std::span<const double> samples, double mean, double variance) {
  require(!samples.empty(), "ks_distance_to_gaussian: no samples");
  require(variance > 0.0 && std::isfinite(variance), "ks_distance_to_gaussian: variance must be positive");
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  const double sd = std::sqrt(variance);
  double d = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double f = normal_cdf((sorted[i] - mean) / sd);
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

Histogram histogram(const EmpiricalSpectrum& s, int bins) {
  require(bins >= 1, "histogram: bins must be >= 1");
  require(s.size() > 0, "histogram: empty spectrum");
  double lo = s.eigenvalues.front();
  double hi = s.eigenvalues.back();
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  Histogram h;
  h.edges.resize(bins + 1);
  const double width = (hi - lo) / bins;
  for (int b = 0; b <= bins; ++b) h.edges[b] = lo + width * b;
  h.edges.back() = hi;
  h.counts.assign(bins, 0);
  for (double v : s.eigenvalues) {
    // upper_bound puts a value sitting on an edge into the bin that starts there.
    auto it = std::upper_bound(h.edges.begin(), h.edges.end(), v);
    int bin = static_cast<int>(it - h.edges.begin()) - 1;
    bin = std::clamp(bin, 0, bins - 1);
    ++h.counts[bin];
  }
  h.total = s.size();
  return h;
}

}  // namespace freejac
