#include "lanereg/harness/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace lanereg::harness {

namespace {

std::vector<double> finite(std::span<const double> xs) {
  std::vector<double> out;
  for (double x : xs) {
    if (!std::isnan(x)) out.push_back(x);
  }
  return out;
}

// Continued fraction of the incomplete beta (modified Lentz).
double beta_fraction(double a, double b, double x) {
  constexpr double tiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 500; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-15) break;
  }
  return h;
}

}  // namespace

double mean(std::span<const double> xs) {
  const auto v = finite(xs);
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double stddev(std::span<const double> xs) {
  const auto v = finite(xs);
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

double median(std::vector<double> xs) {
  std::erase_if(xs, [](double x) { return std::isnan(x); });
  if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

double theil_sen_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("theil_sen_slope: size mismatch");
  std::vector<double> slopes;
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      if (x[i] == x[j] || std::isnan(y[i]) || std::isnan(y[j])) continue;
      slopes.push_back((y[j] - y[i]) / (x[j] - x[i]));
    }
  }
  return median(std::move(slopes));
}

double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double front =
      std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x));
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_fraction(a, b, x) / a;
  return 1.0 - front * beta_fraction(b, a, 1.0 - x) / b;
}

double t_two_sided_p(double t, double df) {
  if (std::isnan(t)) return std::numeric_limits<double>::quiet_NaN();
  if (std::isinf(t)) return 0.0;
  return incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
}

TTest one_sample_t(std::span<const double> xs) {
  const auto v = finite(xs);
  TTest out;
  out.n = static_cast<int>(v.size());
  if (v.empty()) {
    out.mean = out.t = out.p = std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  out.mean = mean(v);
  out.sd = stddev(v);
  if (v.size() < 2) {
    out.t = out.p = std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  if (out.sd == 0.0) {
    // Degenerate sample: a constant nonzero shift is certain, a constant zero is no evidence.
    out.t = out.mean == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), out.mean);
    out.p = out.mean == 0.0 ? 1.0 : 0.0;
    return out;
  }
  out.t = out.mean / (out.sd / std::sqrt(static_cast<double>(v.size())));
  out.p = t_two_sided_p(out.t, static_cast<double>(v.size() - 1));
  return out;
}

TTest paired_t(std::span<const double> before, std::span<const double> after) {
  if (before.size() != after.size()) throw std::invalid_argument("paired_t: unpaired samples");
  std::vector<double> d;
  for (std::size_t i = 0; i < before.size(); ++i) {
    if (std::isnan(before[i]) || std::isnan(after[i])) continue;
    d.push_back(after[i] - before[i]);
  }
  return one_sample_t(d);
}

}  // namespace lanereg::harness
