#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace gwtrace {

/// Running mean/variance (Welford), mergeable in a fixed order.
class RunningStats {
 public:
  void add(double x) noexcept {
    ++count_;
    const double delta = x - mean_;
    mean_ += delta / static_cast<double>(count_);
    m2_ += delta * (x - mean_);
  }

  void merge(const RunningStats& other) noexcept;

  [[nodiscard]] std::size_t count() const noexcept { return count_; }
  [[nodiscard]] double mean() const noexcept { return mean_; }
  [[nodiscard]] double variance() const noexcept {
    return count_ > 1 ? m2_ / static_cast<double>(count_ - 1) : 0.0;
  }
  [[nodiscard]] double stddev() const noexcept { return std::sqrt(variance()); }
  /// Standard error of the mean.
  [[nodiscard]] double se() const noexcept {
    return count_ > 0 ? std::sqrt(variance() / static_cast<double>(count_)) : 0.0;
  }

 private:
  std::size_t count_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

/// Running covariance of a pair, for delta-method standard errors.
class RunningCovariance {
 public:
  void add(double x, double y) noexcept;
  void merge(const RunningCovariance& other) noexcept;
  [[nodiscard]] std::size_t count() const noexcept { return count_; }
  [[nodiscard]] double mean_x() const noexcept { return mean_x_; }
  [[nodiscard]] double mean_y() const noexcept { return mean_y_; }
  [[nodiscard]] double var_x() const noexcept;
  [[nodiscard]] double var_y() const noexcept;
  [[nodiscard]] double cov() const noexcept;

 private:
  std::size_t count_ = 0;
  double mean_x_ = 0.0, mean_y_ = 0.0;
  double m2x_ = 0.0, m2y_ = 0.0, cxy_ = 0.0;
};

double normal_cdf(double x) noexcept;

/// CDF of |Z|, Z standard normal: 2 Phi(x) - 1.
double half_normal_cdf(double x) noexcept;

/// Kolmogorov-Smirnov distance between the empirical law of `sample`
/// and a continuous CDF.  `sample` is copied and sorted.
double ks_distance(std::vector<double> sample, const std::function<double(double)>& cdf);

/// Total variation distance between two count histograms over the same cells.
double total_variation(std::span<const double> p, std::span<const double> q);

/// Least-squares slope of y against x.
double ols_slope(std::span<const double> x, std::span<const double> y);

/// E|B_s||B_t| for standard Brownian motion, s <= t.
double abs_bm_cross_moment(double s, double t) noexcept;

}  // namespace gwtrace
