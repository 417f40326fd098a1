#pragma once

#include <span>
#include <vector>

#include "freejac/linalg.hpp"
#include "freejac/series.hpp"

namespace freejac {

/// Eigenvalues of a symmetric N x N matrix, ascending: the measure
/// N^-1 sum delta_{lambda_i}.
struct EmpiricalSpectrum {
  std::vector<double> eigenvalues;

  std::size_t size() const { return eigenvalues.size(); }
  /// Sorts a copy of `values`.
  static EmpiricalSpectrum from_values(std::vector<double> values);
};

struct Histogram {
  std::vector<double> edges;  // bins + 1 strictly increasing
  std::vector<std::size_t> counts;
  std::size_t total = 0;
};

EmpiricalSpectrum spectrum_of(const Matrix& a);

/// m_k = N^-1 sum lambda_i^k, k = 1..max_order.
MomentSeries empirical_moments(const EmpiricalSpectrum& s, int max_order);

/// m_k = tr(A^k) by repeated multiplication. Cheaper than spectrum_of for
/// low orders; agrees with empirical_moments(spectrum_of(a)).
MomentSeries trace_moments(const Matrix& a, int max_order);

/// Two-sided Kolmogorov-Smirnov distance between the empirical CDF of
/// `samples` and the N(mean, variance) CDF.
double ks_distance_to_gaussian(std::span<const double> samples, double mean, double variance);

/// Equal-width bins over [min, max]. A value on an interior edge goes to the
/// upper bin; the maximum goes to the last bin. A degenerate range is widened
/// to [v - 0.5, v + 0.5].
Histogram histogram(const EmpiricalSpectrum& s, int bins);

}  // namespace freejac
