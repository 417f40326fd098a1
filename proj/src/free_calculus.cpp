#include "freejac/free_calculus.hpp"

#include <string>

#include "freejac/errors.hpp"

namespace freejac {
namespace {

void require_nonzero_mean(const MomentSeries& nu, int layer) {
  if (nu.moments.at(0) == 0.0)
    throw UndefinedTransformError("derivative law at layer " + std::to_string(layer) +
                                  " has zero mean (phi' vanishes almost surely); "
                                  "its S-transform is undefined");
}

}  // namespace

std::vector<MomentSeries> derivative_laws(const MlpConfig& cfg, int order,
                                          const GaussHermiteRule& rule) {
  const TheoryProfile profile = theory_profile(cfg, rule);
  std::vector<MomentSeries> laws;
  for (int layer = 1; layer <= cfg.depth; ++layer)
    laws.push_back(derivative_square_moments(cfg.activation(layer), profile.q(layer), order, rule));
  return laws;
}

MomentSeries predict_xi(const MlpConfig& cfg, int layer, int order, const GaussHermiteRule& rule) {
  require(layer >= 1 && layer <= cfg.depth, "predict_xi: layer out of range");
  require(order >= 1, "predict_xi: order must be >= 1");
  const std::vector<MomentSeries> nu = derivative_laws(cfg, order, rule);
  for (int k = 1; k <= layer; ++k) require_nonzero_mean(nu[k - 1], k);
  const auto scaled = [&](int k) { return dilate(nu[k - 1], cfg.sigma(k) * cfg.sigma(k)); };
  MomentSeries xi = scaled(1);
  for (int k = 2; k <= layer; ++k) xi = free_multiplicative_convolution(xi, scaled(k));
  return xi;
}

MomentSeries predict_mu(const MlpConfig& cfg, int layer, int order, const GaussHermiteRule& rule) {
  require(layer >= 1 && layer <= cfg.depth, "predict_mu: layer out of range");
  require(order >= 1, "predict_mu: order must be >= 1");
  const TheoryProfile profile = theory_profile(cfg, rule);
  const std::vector<MomentSeries> nu = derivative_laws(cfg, order, rule);
  MomentSeries mu = MomentSeries::point_mass(1.0, order);
  for (int k = 1; k < layer; ++k) {
    require_nonzero_mean(nu[k - 1], k);
    const double r = profile.r(k);
    const double s = cfg.sigma(k + 1);
    mu = affine_pushforward(free_multiplicative_convolution(mu, nu[k - 1]), r * r, s * s);
  }
  return mu;
}

}  // namespace freejac
