#include "gwtrace/local_time_tree.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <random>

#include "gwtrace/errors.hpp"

namespace gwtrace {

namespace {

struct SeriesTail {
  double sum = 0;
  double bound = 0;
};

// Sums term(idx) for idx = start, start+1, ... until the terms are
// decreasing and below 1e-18 of the running total (or vanish).
template <class Term>
SeriesTail sum_tail(unsigned start, double base, Term term) {
  SeriesTail out;
  double prev = 0.0;
  const unsigned limit = start * 100 + 100000;
  for (unsigned idx = start; idx < limit; ++idx) {
    const double t = term(idx);
    out.sum += t;
    const double scale = std::abs(base + out.sum);
    if (idx > start && t <= prev && (t == 0.0 || t < 1e-18 * scale)) {
      const double r = prev > 0.0 ? t / prev : 0.0;
      out.bound = r < 1.0 ? t * r / (1.0 - r) : t;
      return out;
    }
    prev = t;
  }
  throw std::runtime_error("series did not settle");
}

double log_mean_entry(unsigned i, unsigned j, double m) noexcept {
  const double n = static_cast<double>(i) + j;
  return log_binomial(n - 1, j) + (i + 1.0) * std::log(m) - n * std::log1p(m);
}

double log_nhat(unsigned i, unsigned j, double m) noexcept {
  const double n = static_cast<double>(i) + j;
  return log_binomial(n - 1, i) + (i + 1.0) * std::log(m) - n * std::log1p(m);
}

void require_m(double m) {
  if (!(m > 1.0) || !std::isfinite(m)) throw RegimeError(fmt::format("m = {} must be a finite value above 1", m));
}

}  // namespace

double log_binomial(double n, double k) noexcept {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

double mean_matrix_entry(unsigned i, unsigned j, double m) {
  require_m(m);
  if (i < 1 || j < 1) throw std::invalid_argument("mean matrix indices start at 1");
  return std::exp(log_mean_entry(i, j, m));
}

double nhat_probability(unsigned i, unsigned j, double m) {
  require_m(m);
  if (i < 1 || j < 1) throw std::invalid_argument("chain states start at 1");
  return std::exp(log_nhat(i, j, m));
}

double negbin_probability(unsigned i, unsigned j, double m) {
  // size r = i + 1, success p = m / (m + 1), failures f = j - 1:
  // C(f + r - 1, f) p^r (1 - p)^f
  const double r = i + 1.0, f = j - 1.0, p = m / (m + 1.0);
  return std::exp(log_binomial(f + r - 1.0, f) + r * std::log(p) + f * std::log1p(-p));
}

SpectralData spectral_data(double m, unsigned K) {
  require_m(m);
  if (K < 1) throw std::invalid_argument("K must be >= 1");
  SpectralData s;
  s.m = m;
  s.K = K;
  for (unsigned i = 1; i <= K; ++i) {
    s.a.push_back((m - 1.0) * std::pow(m, -static_cast<double>(i)));
    s.b.push_back((1.0 - 1.0 / m) * i);
    s.pi.push_back(s.a.back() * s.b.back());
  }
  return s;
}

SpectralResiduals spectral_residuals(double m, unsigned K) {
  const auto s = spectral_data(m, K);
  SpectralResiduals r;
  r.m = m;
  r.K = K;
  const double log_m = std::log(m), log_m1 = std::log(m - 1.0);
  for (unsigned j = 1; j <= K; ++j) {
    double raw = 0.0;
    for (unsigned i = 1; i <= K; ++i) raw += s.a[i - 1] * mean_matrix_entry(i, j, m);
    const auto tail = sum_tail(K + 1, raw, [&](unsigned i) { return std::exp(log_m1 - i * log_m + log_mean_entry(i, j, m)); });
    r.raw_left += std::abs(raw - s.a[j - 1]);
    r.residual_left += std::abs(raw + tail.sum - s.a[j - 1]);
    r.tail_left += tail.bound;
  }
  const double c = 1.0 - 1.0 / m;
  for (unsigned i = 1; i <= K; ++i) {
    double raw = 0.0;
    for (unsigned j = 1; j <= K; ++j) raw += mean_matrix_entry(i, j, m) * s.b[j - 1];
    const auto tail = sum_tail(K + 1, raw, [&](unsigned j) { return c * j * std::exp(log_mean_entry(i, j, m)); });
    r.raw_right = std::max(r.raw_right, std::abs(raw - s.b[i - 1]));
    r.residual_right = std::max(r.residual_right, std::abs(raw + tail.sum - s.b[i - 1]));
    r.tail_right = std::max(r.tail_right, tail.bound);
  }
  for (unsigned i = 0; i < K; ++i) {
    r.a_mass += s.a[i];
    r.pi_mass += s.pi[i];
  }
  return r;
}

BalanceError detailed_balance_error(double m, unsigned n) {
  const auto s = spectral_data(m, n);
  BalanceError e;
  for (unsigned i = 1; i <= n; ++i)
    for (unsigned j = 1; j <= n; ++j) {
      const double lhs = s.pi[i - 1] * nhat_probability(i, j, m);
      const double rhs = s.pi[j - 1] * nhat_probability(j, i, m);
      const double diff = std::abs(lhs - rhs);
      e.absolute = std::max(e.absolute, diff);
      const double scale = std::max(lhs, rhs);
      if (scale > 0.0) e.relative = std::max(e.relative, diff / scale);
    }
  return e;
}

double negbin_reduction_error(double m, unsigned imax, unsigned jmax) {
  double worst = 0.0;
  for (unsigned i = 1; i <= imax; ++i)
    for (unsigned j = 1; j <= jmax; ++j)
      worst = std::max(worst, std::abs(nhat_probability(i, j, m) - negbin_probability(i, j, m)));
  return worst;
}

double chain_mean(unsigned i, double m) {
  require_m(m);
  const auto t = sum_tail(1, 0.0, [&](unsigned j) { return j * std::exp(log_nhat(i, j, m)); });
  return t.sum;
}

double q_constant(unsigned i, unsigned j, unsigned k, const OffspringLaw& law) {
  if (i < 1 || j < 1 || k < 1) throw std::invalid_argument("indices start at 1");
  const double m = law.mean();
  const double n = static_cast<double>(i) + j + k;
  const double log_multinomial = std::lgamma(n) - std::lgamma(static_cast<double>(i)) -
                                 std::lgamma(j + 1.0) - std::lgamma(k + 1.0);
  return law.second_factorial_moment() * std::exp(log_multinomial + i * std::log(m) - n * std::log(m + 2.0));
}

// ---------------------------------------------------------------------------

void sample_children_local_times(unsigned i, const LocalTimeOffspringSampler& sampler, Stream& rng,
                                 std::vector<std::uint32_t>& counts) {
  const unsigned d = sampler.law->sample(rng);
  counts.assign(d, 0);
  if (d == 0) return;
  const double total = sampler.lambda + d;
  unsigned parents = 0;
  while (parents < i) {
    const double x = rng.uniform() * total;
    if (x < sampler.lambda) {
      ++parents;
    } else {
      const auto c = std::min<unsigned>(static_cast<unsigned>(x - sampler.lambda), d - 1);
      ++counts[c];
    }
  }
}

void sample_local_time_tree(unsigned k, const LocalTimeOffspringSampler& sampler, Stream& rng, std::size_t size_cap,
                            unsigned generation_cap, LocalTimeTree& out) {
  if (k < 1) throw std::invalid_argument("initial type must be >= 1");
  out.tree.reset(0);
  out.tree.set_tags({k});
  out.truncated = false;
  std::vector<std::uint32_t> counts;
  for (VertexId v = 0; v < out.tree.size(); ++v) {
    if (out.tree.depth(v) >= generation_cap) continue;
    sample_children_local_times(out.tree.tag(v), sampler, rng, counts);
    const auto positive = static_cast<std::uint32_t>(std::count_if(counts.begin(), counts.end(), [](auto c) { return c > 0; }));
    if (out.tree.size() + positive > size_cap) {
      out.truncated = true;
      return;
    }
    const auto kids = out.tree.expand(v, positive);
    std::size_t next = 0;
    for (auto c : counts)
      if (c > 0) out.tree.set_tag(kids[next++], c);
  }
}

LocalTimeTree sample_local_time_tree(unsigned k, const LocalTimeOffspringSampler& sampler, Stream& rng,
                                     std::size_t size_cap, unsigned generation_cap) {
  LocalTimeTree out;
  sample_local_time_tree(k, sampler, rng, size_cap, generation_cap, out);
  return out;
}

unsigned nhat_step(unsigned i, double m, Stream& rng) {
  std::negative_binomial_distribution<unsigned> nb(i + 1, m / (m + 1.0));
  return nb(rng) + 1;
}

std::optional<std::uint64_t> return_time_sample(double m, Stream& rng, std::uint64_t cap) {
  unsigned state = 1;
  for (std::uint64_t n = 1; n <= cap; ++n) {
    state = nhat_step(state, m, rng);
    if (state == 1) return n;
  }
  return std::nullopt;
}

std::vector<double> occupation_counts(double m, std::uint64_t steps, unsigned max_state, Stream& rng) {
  std::vector<double> counts(max_state + 1, 0.0);
  unsigned state = 1;
  for (std::uint64_t n = 0; n < steps; ++n) {
    state = nhat_step(state, m, rng);
    counts[std::min(state, max_state + 1) - 1] += 1;
  }
  return counts;
}

std::string chain_trace_csv(double m, std::uint64_t steps, Stream& rng) {
  std::string out = "step,state\n0,1\n";
  unsigned state = 1;
  for (std::uint64_t n = 1; n <= steps; ++n) {
    state = nhat_step(state, m, rng);
    out += fmt::format("{},{}\n", n, state);
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<std::vector<ManyToOneEstimate>> many_to_one_batch(const std::vector<PathFunction>& fs, unsigned n_max,
                                                              unsigned k, const LocalTimeOffspringSampler& sampler,
                                                              std::uint64_t reps, std::uint64_t seed,
                                                              std::uint64_t first_replica) {
  if (n_max < 1) throw std::invalid_argument("n must be >= 1");
  const double m = sampler.law->mean();
  if (sampler.lambda != m) throw RegimeError("the many-to-one identity needs lambda = m");
  std::vector<std::vector<ManyToOneEstimate>> out(fs.size(), std::vector<ManyToOneEstimate>(n_max));
  LocalTimeTree lt;
  std::vector<unsigned> types(n_max);
  std::vector<std::vector<double>> lhs(fs.size(), std::vector<double>(n_max));
  for (std::uint64_t r = first_replica; r < first_replica + reps; ++r) {
    Stream tree_rng = Stream::for_replica(seed, r, substream::sampler);
    sample_local_time_tree(k, sampler, tree_rng, std::size_t{1} << 24, n_max, lt);
    if (lt.truncated) throw ResourceError("local-time tree exceeded its size cap");
    for (auto& row : lhs) std::fill(row.begin(), row.end(), 0.0);
    const auto& t = lt.tree;
    for (VertexId v = 1; v < t.size(); ++v) {
      const unsigned n = t.depth(v);
      for (VertexId x = v; x != GrownTree::root(); x = t.parent(x)) types[t.depth(x) - 1] = t.tag(x);
      const std::span<const unsigned> path(types.data(), n);
      for (std::size_t f = 0; f < fs.size(); ++f) lhs[f][n - 1] += fs[f](path);
    }
    Stream chain_rng = Stream::for_replica(seed, r, substream::walk);
    unsigned state = k;
    for (unsigned n = 1; n <= n_max; ++n) {
      state = nhat_step(state, m, chain_rng);
      types[n - 1] = state;
      const std::span<const unsigned> path(types.data(), n);
      for (std::size_t f = 0; f < fs.size(); ++f) {
        out[f][n - 1].lhs.add(lhs[f][n - 1]);
        out[f][n - 1].rhs.add(k * fs[f](path) / state);
      }
    }
  }
  return out;
}

ManyToOneEstimate many_to_one_pair(const PathFunction& f, unsigned n, unsigned k,
                                   const LocalTimeOffspringSampler& sampler, std::uint64_t reps, std::uint64_t seed) {
  return many_to_one_batch({f}, n, k, sampler, reps, seed)[0][n - 1];
}

}  // namespace gwtrace
