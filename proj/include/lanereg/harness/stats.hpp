#pragma once

#include <span>
#include <vector>

namespace lanereg::harness {

/// NaN entries are skipped by every helper below.
double mean(std::span<const double> xs);
/// Sample standard deviation (n - 1); 0 for fewer than two values.
double stddev(std::span<const double> xs);
double median(std::vector<double> xs);

/// Median of pairwise slopes over pairs with distinct x.
double theil_sen_slope(std::span<const double> x, std::span<const double> y);

/// Regularised incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);
/// Two-sided p-value of Student's t with `df` degrees of freedom.
double t_two_sided_p(double t, double df);

struct TTest {
  int n = 0;
  double mean = 0.0;  // mean difference
  double sd = 0.0;
  double t = 0.0;
  double p = 1.0;  // two-sided
};

/// One-sample t-test of mean(xs) against 0.
TTest one_sample_t(std::span<const double> xs);
/// Paired t-test on after - before, element by element (pairs with a NaN are skipped).
TTest paired_t(std::span<const double> before, std::span<const double> after);

}  // namespace lanereg::harness
