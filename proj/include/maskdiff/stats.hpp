#pragma once

#include <cstdint>
#include <vector>

#include "maskdiff/rng.hpp"

namespace maskdiff::stats {

// Upper regularized incomplete gamma Q(a, x).
double gamma_q(double a, double x);

// Survival function of the chi-squared distribution with dof degrees of
// freedom: P(X >= statistic).
double chi2_sf(double statistic, double dof);

// Pearson chi-squared goodness-of-fit statistic of observed counts against
// expected probabilities. Cells with expected probability 0 must have zero
// observations.
double chi2_statistic(const std::vector<std::uint64_t>& observed,
                      const std::vector<double>& expected_probs);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};
LinearFit linear_fit(const std::vector<double>& xs, const std::vector<double>& ys);

double mean(const std::vector<double>& xs);
double sample_std(const std::vector<double>& xs);

// Percentile bootstrap confidence interval for the mean of paired
// differences.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};
Interval bootstrap_mean_ci(const std::vector<double>& values,
                           std::size_t n_resamples, double level, Rng& rng);

// Total variation distance between an empirical distribution (counts / n)
// and reference probabilities over the same index space.
double tv_distance(const std::vector<std::uint64_t>& counts,
                   const std::vector<double>& reference);

}  // namespace maskdiff::stats
