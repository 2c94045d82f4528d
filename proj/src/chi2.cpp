#include "splatcone/chi2.hpp"

#include <cmath>
#include <string>

#include <boost/math/special_functions/gamma.hpp>

#include "splatcone/types.hpp"

namespace splatcone {

double chi2_cdf(double x, int dof) {
  if (dof < 1) throw ConfigError("chi2_cdf: dof must be >= 1");
  if (!(x > 0.0)) return 0.0;
  if (std::isinf(x)) return 1.0;
  return boost::math::gamma_p(0.5 * dof, 0.5 * x);
}

double chi2_confidence(int dof, double quantile) {
  if (dof < 1) {
    throw ConfigError("chi2_confidence: unsupported dof " + std::to_string(dof));
  }
  if (!(quantile > 0.0 && quantile < 1.0)) {
    throw ConfigError("chi2_confidence: quantile must lie in (0, 1)");
  }
  return 2.0 * boost::math::gamma_p_inv(0.5 * dof, quantile);
}

double default_confidence() {
  static const double value = chi2_confidence(3, 0.99);
  return value;
}

}  // namespace splatcone
