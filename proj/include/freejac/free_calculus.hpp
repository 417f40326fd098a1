#pragma once

#include <vector>

#include "freejac/activations.hpp"
#include "freejac/mlp.hpp"
#include "freejac/series.hpp"

namespace freejac {

inline constexpr int kDefaultMomentOrder = 12;

/// Moments of nu_l, the law of phi_l'(h)^2 with h ~ N(0, q_l), for l = 1..L.
std::vector<MomentSeries> derivative_laws(const MlpConfig& cfg, int order,
                                          const GaussHermiteRule& rule = default_rule());

/// Large-width limit of the spectral distribution of J_l J_l^T:
/// xi_1 = sigma_1^2 nu_1, xi_l = xi_{l-1} [x] (sigma_l^2 nu_l). The 1/sigma^2
/// factor on the S-transform is realized as a dilation of the measure.
/// Throws UndefinedTransformError naming the layer when some nu_k has zero
/// mean.
MomentSeries predict_xi(const MlpConfig& cfg, int layer, int order = kDefaultMomentOrder,
                        const GaussHermiteRule& rule = default_rule());

/// Large-width limit of the spectral distribution of H_l:
/// mu_1 = delta_1, mu_{l+1} = (r_l^2 + sigma_{l+1}^2 .)_* (mu_l [x] nu_l),
/// where r_l^2 = lim qhat_l comes from theory_profile.
MomentSeries predict_mu(const MlpConfig& cfg, int layer, int order = kDefaultMomentOrder,
                        const GaussHermiteRule& rule = default_rule());

}  // namespace freejac
