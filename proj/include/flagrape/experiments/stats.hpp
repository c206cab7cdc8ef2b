#pragma once

// Small statistics toolbox for the experiment harness: moments, linear and
// quantile fits, and the paired one-sided t test used by the trend checks.

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace flagrape::stats {

inline double mean(const std::vector<double>& v) {
  if (v.empty()) throw std::invalid_argument("mean of empty sample");
  double s = 0.0;
  for (double x : v) s += x;
  return s / double(v.size());
}

inline double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / double(v.size() - 1));
}

inline double standard_error(const std::vector<double>& v) {
  return sample_std(v) / std::sqrt(double(v.size()));
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median of empty sample");
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct FitResult {
  double slope = 0.0;
  double intercept = 0.0;
  double residual_norm = 0.0;
  double r2 = 0.0;
};

inline FitResult linear_fit(const std::vector<double>& x,
                            const std::vector<double>& y) {
  const size_t n = x.size();
  if (n != y.size() || n < 2) throw std::invalid_argument("linear_fit: bad input");
  const double mx = mean(x), my = mean(y);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  FitResult fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ss_res = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double r = y[i] - (fit.intercept + fit.slope * x[i]);
    ss_res += r * r;
  }
  fit.residual_norm = std::sqrt(ss_res);
  fit.r2 = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
  return fit;
}

inline double pinball_loss(const std::vector<double>& x,
                           const std::vector<double>& y, double slope,
                           double intercept, double tau) {
  double loss = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (intercept + slope * x[i]);
    loss += r >= 0.0 ? tau * r : (tau - 1.0) * r;
  }
  return loss;
}

inline double quantile(std::vector<double> v, double tau) {
  std::sort(v.begin(), v.end());
  const double pos = tau * double(v.size() - 1);
  const size_t lo = size_t(std::floor(pos));
  const size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - double(lo)) * (v[hi] - v[lo]);
}

/// Quantile regression y ~ intercept + slope * x at level tau. For a fixed
/// slope the optimal intercept is the tau-quantile of the residuals, so a
/// refined scan over slopes minimizes the pinball loss exactly enough for the
/// two-parameter frontier fits used here.
inline FitResult quantile_regression(const std::vector<double>& x,
                                     const std::vector<double>& y, double tau) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("quantile_regression: bad input");
  const FitResult ls = linear_fit(x, y);
  double span = 5.0 * (std::abs(ls.slope) + ls.residual_norm /
                                                std::max(1e-300, sample_std(x)));
  double center = ls.slope;
  FitResult best;
  double best_loss = std::numeric_limits<double>::infinity();
  for (int round = 0; round < 4; ++round) {
    for (int i = -100; i <= 100; ++i) {
      const double slope = center + span * double(i) / 100.0;
      std::vector<double> res(x.size());
      for (size_t k = 0; k < x.size(); ++k) res[k] = y[k] - slope * x[k];
      const double intercept = quantile(res, tau);
      const double loss = pinball_loss(x, y, slope, intercept, tau);
      if (loss < best_loss) {
        best_loss = loss;
        best.slope = slope;
        best.intercept = intercept;
      }
    }
    center = best.slope;
    span /= 25.0;
  }
  best.residual_norm = best_loss;
  return best;
}

/// Lower edge of the convex hull of (x, y), fitted linearly; alternative
/// frontier estimator.
inline FitResult lower_hull_fit(std::vector<double> x, std::vector<double> y) {
  std::vector<std::pair<double, double>> pts(x.size());
  for (size_t i = 0; i < x.size(); ++i) pts[i] = {x[i], y[i]};
  std::sort(pts.begin(), pts.end());
  std::vector<std::pair<double, double>> hull;
  for (const auto& p : pts) {
    while (hull.size() >= 2) {
      const auto& a = hull[hull.size() - 2];
      const auto& b = hull[hull.size() - 1];
      if ((b.first - a.first) * (p.second - a.second) -
              (p.first - a.first) * (b.second - a.second) <= 0.0)
        hull.pop_back();
      else
        break;
    }
    hull.push_back(p);
  }
  std::vector<double> hx, hy;
  for (const auto& p : hull) {
    hx.push_back(p.first);
    hy.push_back(p.second);
  }
  if (hx.size() < 2) return {0.0, hy.empty() ? 0.0 : hy[0], 0.0, 1.0};
  return linear_fit(hx, hy);
}

// Regularized incomplete beta via Lentz continued fraction; backs the
// Student-t tail probability below.
inline double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log1p(-x);
  auto cf = [](double a, double b, double x) {
    const double tiny = 1e-300;
    double c = 1.0, d = 1.0 - (a + b) * x / (a + 1.0);
    if (std::abs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 300; ++m) {
      const double m2 = 2.0 * m;
      double num = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
      d = 1.0 + num * d;
      if (std::abs(d) < tiny) d = tiny;
      c = 1.0 + num / c;
      if (std::abs(c) < tiny) c = tiny;
      d = 1.0 / d;
      h *= d * c;
      num = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
      d = 1.0 + num * d;
      if (std::abs(d) < tiny) d = tiny;
      c = 1.0 + num / c;
      if (std::abs(c) < tiny) c = tiny;
      d = 1.0 / d;
      const double del = d * c;
      h *= del;
      if (std::abs(del - 1.0) < 1e-14) break;
    }
    return h;
  };
  if (x < (a + 1.0) / (a + b + 2.0))
    return std::exp(ln_front) * cf(a, b, x) / a;
  return 1.0 - std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                        b * std::log1p(-x) + a * std::log(x)) *
                   cf(b, a, 1.0 - x) / b;
}

/// P(T_nu > t) for Student's t.
inline double student_t_sf(double t, double nu) {
  const double x = nu / (nu + t * t);
  const double p = 0.5 * incomplete_beta(0.5 * nu, 0.5, x);
  return t >= 0.0 ? p : 1.0 - p;
}

/// One-sided paired t test of H1: mean(a - b) > 0; returns the p-value.
inline double paired_t_test_one_sided(const std::vector<double>& a,
                                      const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2)
    throw std::invalid_argument("paired_t_test_one_sided: bad input");
  std::vector<double> d(a.size());
  for (size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  const double se = standard_error(d);
  if (se == 0.0) return mean(d) > 0.0 ? 0.0 : 1.0;
  const double t = mean(d) / se;
  return student_t_sf(t, double(d.size() - 1));
}

}  // namespace flagrape::stats
