#pragma once

// Small statistics toolbox for the evaluation reports: summary moments,
// significance tests, and slope fits.

#include <cstdint>
#include <vector>

namespace ehd::stats {

double mean(const std::vector<double>& v);
// population standard deviation (divides by n)
double stddev_pop(const std::vector<double>& v);

double normal_cdf(double z);

// Regularized incomplete beta I_x(a, b), used by the t distribution.
double incomplete_beta(double a, double b, double x);

// One-sided Welch t-test p-value for H1: mean(a) > mean(b).
double t_test_greater(const std::vector<double>& a,
                      const std::vector<double>& b);

// One-sided paired t-test p-value for H1: mean(a - b) > 0.
double paired_t_test_greater(const std::vector<double>& a,
                             const std::vector<double>& b);

// Exact binomial sign test p-value for H1: x tends to be less than y.
// Ties are dropped; returns 1.0 if no informative pairs remain.
double sign_test_less(const std::vector<double>& x,
                      const std::vector<double>& y);

// Two-proportion z-test. Returns the one-sided p-value for
// H1: k1/n1 > k2/n2. Returns 1.0 on empty samples.
double two_proportion_greater(std::int64_t k1, std::int64_t n1,
                              std::int64_t k2, std::int64_t n2);

double spearman_rho(const std::vector<double>& a,
                    const std::vector<double>& b);

// Least-squares slope of log(y) against log(x); all entries must be > 0.
double loglog_slope(const std::vector<double>& x,
                    const std::vector<double>& y);

}  // namespace ehd::stats
