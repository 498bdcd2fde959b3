#include "gwtrace/stats.hpp"

#include <algorithm>
#include <numbers>
#include <stdexcept>

namespace gwtrace {

void RunningStats::merge(const RunningStats& other) noexcept {
  if (other.count_ == 0) return;
  if (count_ == 0) {
    *this = other;
    return;
  }
  const double n1 = static_cast<double>(count_);
  const double n2 = static_cast<double>(other.count_);
  const double delta = other.mean_ - mean_;
  const double total = n1 + n2;
  mean_ += delta * n2 / total;
  m2_ += other.m2_ + delta * delta * n1 * n2 / total;
  count_ += other.count_;
}

void RunningCovariance::add(double x, double y) noexcept {
  ++count_;
  const double n = static_cast<double>(count_);
  const double dx = x - mean_x_;
  const double dy = y - mean_y_;
  mean_x_ += dx / n;
  mean_y_ += dy / n;
  m2x_ += dx * (x - mean_x_);
  m2y_ += dy * (y - mean_y_);
  cxy_ += dx * (y - mean_y_);
}

void RunningCovariance::merge(const RunningCovariance& other) noexcept {
  if (other.count_ == 0) return;
  if (count_ == 0) {
    *this = other;
    return;
  }
  const double n1 = static_cast<double>(count_);
  const double n2 = static_cast<double>(other.count_);
  const double total = n1 + n2;
  const double dx = other.mean_x_ - mean_x_;
  const double dy = other.mean_y_ - mean_y_;
  mean_x_ += dx * n2 / total;
  mean_y_ += dy * n2 / total;
  m2x_ += other.m2x_ + dx * dx * n1 * n2 / total;
  m2y_ += other.m2y_ + dy * dy * n1 * n2 / total;
  cxy_ += other.cxy_ + dx * dy * n1 * n2 / total;
  count_ += other.count_;
}

double RunningCovariance::var_x() const noexcept {
  return count_ > 1 ? m2x_ / static_cast<double>(count_ - 1) : 0.0;
}
double RunningCovariance::var_y() const noexcept {
  return count_ > 1 ? m2y_ / static_cast<double>(count_ - 1) : 0.0;
}
double RunningCovariance::cov() const noexcept {
  return count_ > 1 ? cxy_ / static_cast<double>(count_ - 1) : 0.0;
}

double normal_cdf(double x) noexcept { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double half_normal_cdf(double x) noexcept { return x <= 0.0 ? 0.0 : std::erf(x / std::numbers::sqrt2); }

double ks_distance(std::vector<double> sample, const std::function<double(double)>& cdf) {
  if (sample.empty()) throw std::invalid_argument("ks_distance: empty sample");
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  std::size_t i = 0;
  while (i < sample.size()) {
    // Treat ties as one jump of the empirical CDF.
    std::size_t j = i;
    while (j < sample.size() && sample[j] == sample[i]) ++j;
    const double f = cdf(sample[i]);
    d = std::max({d, std::abs(f - static_cast<double>(i) / n), std::abs(static_cast<double>(j) / n - f)});
    i = j;
  }
  return d;
}

double total_variation(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw std::invalid_argument("total_variation: size mismatch");
  double sp = 0.0, sq = 0.0;
  for (double x : p) sp += x;
  for (double x : q) sq += x;
  if (sp <= 0.0 || sq <= 0.0) throw std::invalid_argument("total_variation: empty histogram");
  double tv = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) tv += std::abs(p[i] / sp - q[i] / sq);
  return 0.5 * tv;
}

double ols_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("ols_slope: need >= 2 paired points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(y.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

double abs_bm_cross_moment(double s, double t) noexcept {
  if (s > t) std::swap(s, t);
  if (t <= 0.0) return 0.0;
  return (2.0 / std::numbers::pi) * (std::sqrt(s * (t - s)) + s * std::asin(std::sqrt(s / t)));
}

}  // namespace gwtrace
