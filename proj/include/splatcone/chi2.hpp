#pragma once

namespace splatcone {

// CDF of the chi-squared distribution with `dof` degrees of freedom.
double chi2_cdf(double x, int dof);

// Inverse CDF. Throws ConfigError for dof < 1 or quantile outside (0, 1).
double chi2_confidence(int dof, double quantile);

// c^2 used for splat confidence ellipsoids unless overridden.
double default_confidence();

}  // namespace splatcone
