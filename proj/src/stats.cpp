#include "maskdiff/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace maskdiff::stats {

namespace {

// Lower regularized incomplete gamma P(a, x) by power series.
double gamma_p_series(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  double ap = a;
  for (int n = 0; n < 1000; ++n) {
    ap += 1.0;
    term *= x / ap;
    sum += term;
    if (std::abs(term) < std::abs(sum) * 1e-16) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Upper regularized incomplete gamma by modified Lentz continued fraction.
double gamma_q_cf(double a, double x) {
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 1000; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

}  // namespace

double gamma_q(double a, double x) {
  if (!(a > 0.0) || x < 0.0)
    throw std::invalid_argument("gamma_q: need a > 0, x >= 0");
  if (x == 0.0) return 1.0;
  if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
  return gamma_q_cf(a, x);
}

double chi2_sf(double statistic, double dof) {
  if (statistic < 0.0) return 1.0;
  return gamma_q(dof / 2.0, statistic / 2.0);
}

double chi2_statistic(const std::vector<std::uint64_t>& observed,
                      const std::vector<double>& expected_probs) {
  if (observed.size() != expected_probs.size())
    throw std::invalid_argument("chi2_statistic: size mismatch");
  std::uint64_t n = 0;
  for (std::uint64_t c : observed) n += c;
  double stat = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    const double expected = expected_probs[i] * static_cast<double>(n);
    if (expected <= 0.0) {
      if (observed[i] != 0)
        throw std::invalid_argument("chi2_statistic: observation in a zero cell");
      continue;
    }
    const double d = static_cast<double>(observed[i]) - expected;
    stat += d * d / expected;
  }
  return stat;
}

LinearFit linear_fit(const std::vector<double>& xs,
                     const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 2)
    throw std::invalid_argument("linear_fit: need >= 2 paired points");
  const double n = static_cast<double>(xs.size());
  const double mx = mean(xs);
  const double my = mean(ys);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx == 0.0) throw std::invalid_argument("linear_fit: degenerate xs");
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double r = ys[i] - (fit.intercept + fit.slope * xs[i]);
    ss_res += r * r;
  }
  fit.r_squared = syy == 0.0 ? 1.0 : 1.0 - ss_res / syy;
  (void)n;
  return fit;
}

double mean(const std::vector<double>& xs) {
  if (xs.empty()) throw std::invalid_argument("mean: empty input");
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double sample_std(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

Interval bootstrap_mean_ci(const std::vector<double>& values,
                           std::size_t n_resamples, double level, Rng& rng) {
  if (values.empty())
    throw std::invalid_argument("bootstrap_mean_ci: empty sample");
  if (!(level > 0.0 && level < 1.0))
    throw std::invalid_argument("bootstrap_mean_ci: level outside (0,1)");
  std::vector<double> means(n_resamples);
  for (std::size_t b = 0; b < n_resamples; ++b) {
    double s = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i)
      s += values[rng.uniform_below(values.size())];
    means[b] = s / static_cast<double>(values.size());
  }
  std::sort(means.begin(), means.end());
  const double tail = (1.0 - level) / 2.0;
  const auto idx = [&](double q) {
    const auto i = static_cast<std::size_t>(
        q * static_cast<double>(n_resamples - 1) + 0.5);
    return std::min(i, n_resamples - 1);
  };
  return {means[idx(tail)], means[idx(1.0 - tail)]};
}

double tv_distance(const std::vector<std::uint64_t>& counts,
                   const std::vector<double>& reference) {
  if (counts.size() != reference.size())
    throw std::invalid_argument("tv_distance: size mismatch");
  std::uint64_t n = 0;
  for (std::uint64_t c : counts) n += c;
  if (n == 0) throw std::invalid_argument("tv_distance: empty sample");
  double tv = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i)
    tv += std::abs(static_cast<double>(counts[i]) / static_cast<double>(n) -
                   reference[i]);
  return 0.5 * tv;
}

}  // namespace maskdiff::stats
