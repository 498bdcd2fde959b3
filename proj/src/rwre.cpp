#include "gwtrace/rwre.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fmt/format.h>
#include <json.hpp>
#include <numbers>
#include <random>

#include "gwtrace/errors.hpp"
#include "gwtrace/local_time_tree.hpp"
#include "gwtrace/parallel.hpp"
#include "gwtrace/reduction.hpp"
#include "gwtrace/stats.hpp"
#include "key_value.hpp"

namespace gwtrace {

EnvironmentLaw EnvironmentLaw::biased(const OffspringLaw& law, double lambda) {
  if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be positive");
  return {Kind::biased, law, lambda, 0.0};
}

EnvironmentLaw EnvironmentLaw::lognormal(const OffspringLaw& law, double s2) {
  if (!(s2 > 0.0) || !std::isfinite(s2)) throw std::invalid_argument("s2 must be positive");
  if (!(law.mean() > 0.0)) throw std::invalid_argument("the offspring law needs a positive mean");
  return {Kind::lognormal, law, 0.0, s2};
}

EnvironmentLaw EnvironmentLaw::parse(std::string_view descriptor, const OffspringLaw& law, double lambda) {
  if (descriptor == "biased") return biased(law, lambda);
  constexpr std::string_view prefix = "lognormal:";
  if (descriptor.substr(0, prefix.size()) == prefix)
    return lognormal(law, detail::parse_number<double>("lognormal", descriptor.substr(prefix.size())));
  throw std::invalid_argument(fmt::format("unknown environment '{}' (expected biased or lognormal:<s2>)", descriptor));
}

std::string EnvironmentLaw::descriptor() const {
  if (kind_ == Kind::biased) return fmt::format("biased(law={}, lambda={})", law_.descriptor(), lambda_);
  return fmt::format("lognormal(law={}, s2={})", law_.descriptor(), s2_);
}

namespace {

// mean of a lognormal increment
double increment_mean(const EnvironmentLaw& e) { return std::log(e.offspring().mean()) + e.s2() / 2; }

}  // namespace

double EnvironmentLaw::psi(double t) const {
  const double m = law_.mean();
  if (kind_ == Kind::biased) return m * std::pow(lambda_, -t);
  return m * std::exp(-t * increment_mean(*this) + t * t * s2_ / 2);
}

double EnvironmentLaw::pair_moment() const {
  const double f2 = law_.second_factorial_moment();
  if (kind_ == Kind::biased) return f2 / (lambda_ * lambda_);
  const double m = law_.mean();
  return f2 / (m * m);
}

double EnvironmentLaw::spine_mean() const {
  if (kind_ == Kind::biased) return std::log(lambda_);
  return std::log(law_.mean()) - s2_ / 2;
}

double EnvironmentLaw::spine_variance() const { return kind_ == Kind::biased ? 0.0 : s2_; }

WalkKernel EnvironmentLaw::kernel() const {
  return kind_ == Kind::biased ? WalkKernel::biased(lambda_) : WalkKernel::potential();
}

void EnvironmentLaw::draw(Stream& rng, std::vector<double>& increments) const {
  const unsigned nu = law_.sample(rng);
  if (kind_ == Kind::biased) {
    increments.assign(nu, std::log(lambda_));
    return;
  }
  std::normal_distribution<double> normal(increment_mean(*this), std::sqrt(s2_));
  increments.resize(nu);
  for (auto& x : increments) x = normal(rng);
}

double EnvironmentLaw::spine_step(Stream& rng) const {
  if (kind_ == Kind::biased) return std::log(lambda_);
  // exp(-v) tilts Normal(mu, s2) to Normal(mu - s2, s2) with total mass psi(1) = 1
  std::normal_distribution<double> normal(spine_mean(), std::sqrt(s2_));
  return normal(rng);
}

void EnvironmentGrowth::expand(GrownTree& tree, VertexId v) {
  Stream s(tree.growth_key(), tree.label(v));
  law_->draw(s, increments_);
  const auto kids = tree.expand_with_potential(v, increments_);
  if (law_->kind() == EnvironmentLaw::Kind::biased) {
    const double step = std::log(law_->lambda());
    for (auto c : kids) tree.set_potential(c, tree.depth(c) * step);
  }
}

BranchingEnvironment sample_environment(const EnvironmentLaw& law, unsigned cap, const Stream& rng,
                                        std::size_t max_vertices) {
  BranchingEnvironment env;
  env.tree.reset(growth_key_of(rng));
  env.tree.set_max_vertices(max_vertices);
  env.tree.enable_potential();
  EnvironmentGrowth growth(law);
  for (VertexId v = 0; v < env.tree.size(); ++v)
    if (env.tree.depth(v) < cap) growth.expand(env.tree, v);
  return env;
}

std::vector<double> rwre_step_probabilities(const BranchingEnvironment& env, VertexId v) {
  const auto kids = env.tree.children(v);
  std::vector<double> p(kids.size() + 1);
  p[0] = std::exp(-env.V(v));
  double total = p[0];
  for (std::size_t i = 0; i < kids.size(); ++i) total += p[i + 1] = std::exp(-env.V(kids[i]));
  for (auto& x : p) x /= total;
  return p;
}

VertexId rwre_step(BranchingEnvironment& env, const EnvironmentLaw& law, VertexId current, Stream& rng) {
  EnvironmentGrowth growth(law);
  return walk_step(env.tree, growth, current, law.kernel(), rng);
}

double kernel_reduction_error(const BranchingEnvironment& env, double lambda) {
  double worst = 0;
  for (VertexId v = 0; v < env.tree.size(); ++v) {
    if (!env.tree.expanded(v)) continue;
    const auto p = rwre_step_probabilities(env, v);
    const auto q = step_probabilities(env.tree, v, WalkKernel::biased(lambda));
    for (std::size_t i = 0; i < p.size(); ++i) worst = std::max(worst, std::abs(p[i] - q[i]));
  }
  return worst;
}

// ---------------------------------------------------------------------------

PsiProfile psi_profile(const EnvironmentLaw& law, std::uint64_t reps, std::uint64_t seed, unsigned threads) {
  PsiProfile out;
  out.reps = reps;
  out.psi1.exact = law.psi(1);
  out.psi2.exact = law.psi(2);
  out.pair_moment.exact = law.pair_moment();
  if (out.psi2.exact >= 1.0)
    throw RegimeError(fmt::format("psi(2) = {} >= 1 for {}; sigma^2 needs psi(2) < 1", out.psi2.exact,
                                  law.descriptor()));
  if (!(out.pair_moment.exact > 0.0))
    throw RegimeError(fmt::format("no two siblings ever coexist under {}; sigma^2 is undefined", law.descriptor()));
  out.sigma2.exact = (1 - out.psi2.exact) / out.pair_moment.exact;
  if (reps < 2) return out;

  std::vector<RunningStats> s1(kChunks);
  std::vector<RunningCovariance> s2p(kChunks);  // (sum e^-2V, pair sum)
  parallel_chunks(reps, threads, [&](std::uint64_t a, std::uint64_t b, std::size_t slot) {
    std::vector<double> inc;
    for (std::uint64_t r = a; r < b; ++r) {
      Stream rng = Stream::for_replica(seed, r, substream::environment);
      law.draw(rng, inc);
      double x1 = 0, x2 = 0;
      for (double v : inc) {
        const double w = std::exp(-v);
        x1 += w;
        x2 += w * w;
      }
      s1[slot].add(x1);
      s2p[slot].add(x2, x1 * x1 - x2);
    }
  });
  RunningStats a;
  RunningCovariance c;
  for (std::size_t i = 0; i < kChunks; ++i) {
    a.merge(s1[i]);
    c.merge(s2p[i]);
  }
  const double n = static_cast<double>(c.count());
  out.psi1.empirical = a.mean();
  out.psi1.se = a.se();
  out.psi2.empirical = c.mean_x();
  out.psi2.se = std::sqrt(c.var_x() / n);
  out.pair_moment.empirical = c.mean_y();
  out.pair_moment.se = std::sqrt(c.var_y() / n);
  const double P = c.mean_y(), Q = 1 - c.mean_x();
  out.sigma2.empirical = Q / P;
  const double dx = -1 / P, dy = -Q / (P * P);
  out.sigma2.se = std::sqrt(std::max(0.0, dx * dx * c.var_x() + dy * dy * c.var_y() + 2 * dx * dy * c.cov()) / n);
  return out;
}

std::string psi_json(const PsiProfile& p) {
  nlohmann::ordered_json j;
  j["schema"] = 1;
  auto put = [&](const char* name, const Estimate& e) {
    j[name] = {{"exact", e.exact}, {"empirical", e.empirical}, {"se", e.se}};
  };
  put("psi1", p.psi1);
  put("psi2", p.psi2);
  put("pair_moment", p.pair_moment);
  put("sigma2", p.sigma2);
  j["reps"] = p.reps;
  return j.dump(2) + "\n";
}

namespace {

void require_critical(const EnvironmentLaw& law) {
  if (std::abs(law.psi(1) - 1.0) > 1e-12)
    throw RegimeError(fmt::format("psi(1) = {} for {}; the walk is critical only at psi(1) = 1", law.psi(1),
                                  law.descriptor()));
}

}  // namespace

SpineConstants spine_constants(const EnvironmentLaw& law, std::uint64_t reps, unsigned series_cap, std::uint64_t seed,
                               unsigned threads) {
  if (series_cap < 50) throw std::invalid_argument("series_cap must be at least 50");
  require_critical(law);
  SpineConstants out;
  const double psi2 = law.psi(2);
  out.tail_bound = psi2 < 1 ? std::pow(psi2, series_cap + 1.0) / (1 - psi2) : INFINITY;

  if (law.kind() == EnvironmentLaw::Kind::biased) {
    const double step = std::log(law.lambda());
    if (!(step > 0)) throw RegimeError("the spine has no positive drift");
    double sum = 0;
    for (unsigned l = 1; l <= series_cap; ++l) sum += std::exp(-step * l);
    out.b1 = 1 / (1 + sum);
    out.a1 = out.b1;
    out.drift = step;
    out.reps = 1;
    return out;
  }

  if (reps < 2) throw std::invalid_argument("spine constants need at least two replicas");
  std::vector<RunningCovariance> parts(kChunks);  // ((1+S)^-2, (1+S)^-1)
  std::vector<RunningStats> drift(kChunks);
  parallel_chunks(reps, threads, [&](std::uint64_t a, std::uint64_t b, std::size_t slot) {
    for (std::uint64_t r = a; r < b; ++r) {
      Stream rng = Stream::for_replica(seed, r, substream::environment);
      double s = 0, sum = 0;
      for (unsigned l = 1; l <= series_cap; ++l) {
        const double step = law.spine_step(rng);
        if (l == 1) drift[slot].add(step);
        s += step;
        sum += std::exp(-s);
      }
      const double inv = 1 / (1 + sum);
      parts[slot].add(inv * inv, inv);
    }
  });
  RunningCovariance c;
  RunningStats d;
  for (std::size_t i = 0; i < kChunks; ++i) {
    c.merge(parts[i]);
    d.merge(drift[i]);
  }
  out.reps = reps;
  out.drift = d.mean();
  out.drift_se = d.se();
  if (!(out.drift > 0))
    throw RegimeError(fmt::format("estimated spine drift {} is not positive; the series may diverge", out.drift));
  const double n = static_cast<double>(c.count());
  const double A = c.mean_x(), B = c.mean_y();
  out.b1 = B;
  out.b1_se = std::sqrt(c.var_y() / n);
  out.a1 = A / B;
  const double da = 1 / B, db = -A / (B * B);
  out.a1_se = std::sqrt(std::max(0.0, da * da * c.var_x() + db * db * c.var_y() + 2 * da * db * c.cov()) / n);
  return out;
}

Estimate rwre_mean_entry(const EnvironmentLaw& law, unsigned i, unsigned j, std::uint64_t reps, std::uint64_t seed) {
  if (i < 1 || j < 1) throw std::invalid_argument("i, j >= 1");
  const double log_c = log_binomial(i + j - 1.0, j);
  RunningStats s;
  std::vector<double> inc;
  for (std::uint64_t r = 0; r < reps; ++r) {
    Stream rng = Stream::for_replica(seed, r, substream::environment);
    law.draw(rng, inc);
    double x = 0;
    for (double v : inc) x += std::exp(log_c - j * v - (i + j) * std::log1p(std::exp(-v)));
    s.add(x);
  }
  return {s.mean(), NAN, s.se()};
}

namespace {

// Grows the first-child line down to depth ell, conditioning on its existence.
VertexId first_child_line(GrownTree& tree, EnvironmentGrowth& growth, const Stream& rng, unsigned ell) {
  for (std::uint64_t attempt = 0;; ++attempt) {
    if (attempt >= 10000) throw RetryExhausted("could not grow a vertex at the requested depth");
    tree.reset(growth_key_of(attempt == 0 ? rng : rng.split(attempt)));
    tree.enable_potential();
    VertexId v = GrownTree::root();
    bool ok = true;
    for (unsigned d = 0; d < ell && ok; ++d) {
      growth.expand(tree, v);
      if (tree.child_count(v) == 0) ok = false;
      else v = tree.children(v)[0];
    }
    if (ok) return v;
  }
}

// Per environment: crossings of `target` from its parent over k excursions
// (censored below depth ell), and the exact value returned by `oracle`.
template <class Oracle, class Score>
Estimate identity_estimate(const EnvironmentLaw& law, unsigned k, unsigned ell, std::uint64_t reps,
                           std::uint64_t seed, unsigned threads, Oracle&& oracle, Score&& score) {
  std::vector<RunningCovariance> parts(kChunks);  // (empirical, exact)
  std::vector<RunningStats> diff(kChunks);
  parallel_chunks(reps, threads, [&](std::uint64_t a, std::uint64_t b, std::size_t slot) {
    GrownTree tree;
    EnvironmentGrowth growth(law);
    std::vector<VertexId> ex;
    for (std::uint64_t r = a; r < b; ++r) {
      const VertexId target = first_child_line(tree, growth, Stream::for_replica(seed, r, substream::growth), ell);
      const double exact = oracle(tree, target);
      Walker w(tree, growth, law.kernel(), Stream::for_replica(seed, r, substream::walk));
      w.set_censor_depth(ell);
      const VertexId up = tree.parent(target);
      std::uint64_t count = 0;
      for (unsigned e = 0; e < k; ++e) {
        ex.clear();
        if (!run_excursion(w, std::uint64_t{1} << 40, ex)) throw ResourceError("censored excursion did not end");
        count += target == GrownTree::root() ? 1 : 0;
        for (std::size_t n = 1; n < ex.size(); ++n) count += ex[n] == target && ex[n - 1] == up;
      }
      const double emp = score(count);
      parts[slot].add(emp, exact);
      diff[slot].add(emp - exact);
    }
  });
  RunningCovariance c;
  RunningStats d;
  for (std::size_t i = 0; i < kChunks; ++i) {
    c.merge(parts[i]);
    d.merge(diff[i]);
  }
  return {c.mean_x(), c.mean_y(), d.se()};
}

}  // namespace

Estimate rwre_hit_probability(const EnvironmentLaw& law, unsigned ell, std::uint64_t reps, std::uint64_t seed,
                              unsigned threads) {
  auto oracle = [](const GrownTree& tree, VertexId x) {
    double denom = 1;
    for (VertexId y = x; y != GrownTree::root(); y = tree.parent(y)) denom += std::exp(tree.potential(y));
    return 1 / denom;
  };
  return identity_estimate(law, 1, ell, reps, seed, threads, oracle,
                           [](std::uint64_t count) { return count >= 1 ? 1.0 : 0.0; });
}

Estimate rwre_expected_crossings(const EnvironmentLaw& law, unsigned k, unsigned ell, std::uint64_t reps,
                                 std::uint64_t seed, unsigned threads) {
  auto oracle = [k](const GrownTree& tree, VertexId x) { return k * std::exp(-tree.potential(x)); };
  return identity_estimate(law, k, ell, reps, seed, threads, oracle,
                           [](std::uint64_t count) { return static_cast<double>(count); });
}

Estimate rwre_row_identity(const EnvironmentLaw& law, unsigned i, std::uint64_t reps, std::uint64_t seed,
                           unsigned threads) {
  if (i < 1) throw std::invalid_argument("i >= 1");
  std::vector<RunningStats> parts(kChunks);
  parallel_chunks(reps, threads, [&](std::uint64_t a, std::uint64_t b, std::size_t slot) {
    GrownTree tree;
    EnvironmentGrowth growth(law);
    std::vector<VertexId> ex;
    std::vector<std::uint64_t> counts;
    for (std::uint64_t r = a; r < b; ++r) {
      tree.reset(growth_key_of(Stream::for_replica(seed, r, substream::growth)));
      tree.enable_potential();
      Walker w(tree, growth, law.kernel(), Stream::for_replica(seed, r, substream::walk));
      w.set_censor_depth(1);
      counts.clear();
      for (unsigned e = 0; e < i; ++e) {
        ex.clear();
        if (!run_excursion(w, std::uint64_t{1} << 40, ex)) throw ResourceError("censored excursion did not end");
        const auto kids = tree.children(GrownTree::root());
        counts.resize(kids.size(), 0);
        for (auto v : ex)
          if (v != GrownTree::root()) ++counts[v - kids[0]];
      }
      double sq = 0;
      for (auto n : counts) sq += static_cast<double>(n) * static_cast<double>(n);
      parts[slot].add(sq / i);
    }
  });
  RunningStats s;
  for (const auto& p : parts) s.merge(p);
  return {s.mean(), law.psi(1) + law.psi(2) * (i + 1.0), s.se()};
}

// ---------------------------------------------------------------------------
// configuration

namespace {

template <class Visit>
void for_each_field(RwreConfig& c, Visit&& v) {
  v("law", c.law);
  v("lambda", c.lambda);
  v("env", c.env);
  v("seed", c.seed);
  v("threads", c.threads);
  v("psi_reps", c.psi_reps);
  v("spine_reps", c.spine_reps);
  v("series_cap", c.series_cap);
  v("kernel_depth", c.kernel_depth);
  v("kernel_trees", c.kernel_trees);
  v("identity_reps", c.identity_reps);
  v("row_reps", c.row_reps);
  v("row_imax", c.row_imax);
  v("clt_n", c.clt_n);
  v("clt_reps", c.clt_reps);
  v("range_n", c.range_n);
  v("range_reps", c.range_reps);
  v("range_overrun", c.range_overrun);
  v("se_mult", c.se_mult);
  v("ks_max", c.ks_max);
  v("range_rel", c.range_rel);
  v("spine_se_max", c.spine_se_max);
}

}  // namespace

void RwreConfig::set(std::string_view key, std::string_view value) {
  detail::set_field([&](auto&& visit) { for_each_field(*this, visit); }, key, value);
  if (threads < 1) threads = 1;
}

void RwreConfig::apply_text(std::string_view text) {
  detail::apply_lines(text, [&](std::string_view k, std::string_view v) { set(k, v); });
}

void RwreConfig::make_quick() {
  psi_reps = 20'000;
  spine_reps = 20'000;
  kernel_trees = 4;
  identity_reps = 20'000;
  row_reps = 5'000;
  clt_n = 5'000;
  clt_reps = 500;
  range_n = 20'000;
  range_reps = 10;
}

std::vector<std::pair<std::string, std::string>> RwreConfig::entries() const {
  std::vector<std::pair<std::string, std::string>> out;
  auto copy = *this;
  for_each_field(copy, [&](std::string_view name, const auto& field) {
    if (name == "threads") return;
    using T = std::decay_t<decltype(field)>;
    if constexpr (std::is_same_v<T, std::string>) out.emplace_back(name, field);
    else out.emplace_back(name, fmt::format("{}", field));
  });
  return out;
}

// ---------------------------------------------------------------------------
// the suite

void rwre_scaling_gates(const EnvironmentLaw& law, double sigma2, double b1, const RwreConfig& config,
                        Report& report, const std::string& prefix) {
  require_critical(law);
  const unsigned threads = config.threads;
  // same group seeds as the biased-walk suite
  {
    const auto seed = group_seed(config.seed, 90);
    const std::uint64_t reps = config.clt_reps, n = config.clt_n;
    std::vector<double> last(reps);
    const double scale = 1.0 / std::sqrt(sigma2 * static_cast<double>(n));
    parallel_chunks(reps, threads, [&](std::uint64_t a, std::uint64_t b, std::size_t) {
      GrownTree tree;
      EnvironmentGrowth growth(law);
      for (std::uint64_t r = a; r < b; ++r) {
        tree.reset(growth_key_of(Stream::for_replica(seed, r, substream::growth)));
        Walker w(tree, growth, law.kernel(), Stream::for_replica(seed, r, substream::walk));
        for (std::uint64_t t = 0; t < n; ++t) w.step();
        last[r] = w.height() * scale;
      }
    });
    RunningStats mean;
    for (double x : last) mean.add(x);
    report.gates.push_back(at_most_gate(prefix + "clt.ks", ks_distance(last, half_normal_cdf), config.ks_max));
    report.gates.push_back(abs_gate(prefix + "clt.mean", mean.mean(), std::sqrt(2.0 / std::numbers::pi),
                                    config.se_mult * mean.se()));
  }
  {
    const auto seed = group_seed(config.seed, 80);
    const std::uint64_t reps = config.range_reps;
    std::vector<RangeStats> out(reps);
    parallel_chunks(reps, threads, [&](std::uint64_t a, std::uint64_t b, std::size_t) {
      GrownTree tree;
      EnvironmentGrowth growth(law);
      for (std::uint64_t r = a; r < b; ++r) {
        tree.reset(growth_key_of(Stream::for_replica(seed, r, substream::growth)));
        out[r] = range_statistics_run(tree, growth, law.kernel(), config.range_n, config.range_overrun,
                                      Stream::for_replica(seed, r, substream::walk));
      }
    });
    RunningStats R;
    for (const auto& s : out) R.add(s.range_density());
    report.gates.push_back(abs_gate(prefix + "range.R_density", R.mean(), b1 / 2, config.range_rel * b1 / 2));
    report.diagnostics.emplace_back(prefix + "range.R_density_se", R.se());
  }
}

Report run_rwre_verify(const RwreConfig& cfg) {
  const auto law = OffspringLaw::parse(cfg.law);
  const auto env = EnvironmentLaw::parse(cfg.env, law, cfg.lambda);
  require_critical(env);
  Report report;
  report.suite = "rwre-verify";
  report.config = cfg.entries();
  auto gate = [&](Gate g) { report.gates.push_back(std::move(g)); };
  auto note = [&](std::string k, double v) { report.diagnostics.emplace_back(std::move(k), v); };

  // the biased potential V(x) = |x| ln m reduces to the biased walk
  {
    const auto biased = EnvironmentLaw::biased(law, law.mean());
    double worst = 0;
    for (std::uint64_t t = 0; t < cfg.kernel_trees; ++t) {
      const auto e = sample_environment(biased, cfg.kernel_depth,
                                        Stream::for_replica(group_seed(cfg.seed, 200), t, substream::growth));
      worst = std::max(worst, kernel_reduction_error(e, law.mean()));
    }
    gate(at_most_gate("rwre.kernel_reduction", worst, 1e-12));
    for (const char* name : {"pmf:0,0.5,0.5", "binary", "point:3"}) {
      const auto l = OffspringLaw::parse(name);
      const auto lc = limit_constants(l);
      const auto p = psi_profile(EnvironmentLaw::biased(l, l.mean()), 0, 0);
      gate(abs_gate(fmt::format("rwre.sigma2_reduction.m={}", l.mean()), p.sigma2.exact, lc.sigma2,
                    1e-12 * lc.sigma2));
    }
    const auto lc = limit_constants(law);
    const auto sc = spine_constants(biased, 1, cfg.series_cap, 0);
    gate(abs_gate("rwre.spine_reduction.a1", sc.a1, lc.a1, 1e-12));
    gate(abs_gate("rwre.spine_reduction.b1", sc.b1, lc.b1, 1e-12));
  }

  // the environment under test
  const auto prof = psi_profile(env, cfg.psi_reps, group_seed(cfg.seed, 210), cfg.threads);
  const std::array<std::pair<const char*, const Estimate*>, 4> ps{{{"psi1", &prof.psi1},
                                                                    {"psi2", &prof.psi2},
                                                                    {"pair_moment", &prof.pair_moment},
                                                                    {"sigma2", &prof.sigma2}}};
  for (const auto& [name, e] : ps) gate(abs_gate(fmt::format("rwre.{}", name), e->empirical, e->exact, cfg.se_mult * e->se));

  const auto sc = spine_constants(env, cfg.spine_reps, cfg.series_cap, group_seed(cfg.seed, 220), cfg.threads);
  if (env.kind() == EnvironmentLaw::Kind::lognormal) {
    gate(at_most_gate("rwre.spine.a1_se", sc.a1_se, cfg.spine_se_max));
    gate(at_most_gate("rwre.spine.b1_se", sc.b1_se, cfg.spine_se_max));
    gate(abs_gate("rwre.spine.drift", sc.drift, env.spine_mean(), cfg.se_mult * sc.drift_se));
  }
  note("rwre.spine.a1", sc.a1);
  note("rwre.spine.b1", sc.b1);
  note("rwre.spine.tail_bound", sc.tail_bound);
  note("rwre.eta2", 2 * sc.b1 / prof.sigma2.exact);

  for (unsigned ell : {1u, 2u}) {
    const auto e = rwre_hit_probability(env, ell, cfg.identity_reps, group_seed(cfg.seed, 230 + ell), cfg.threads);
    gate(abs_gate(fmt::format("rwre.hit.ell={}", ell), e.empirical, e.exact, cfg.se_mult * e.se));
  }
  const std::vector<std::pair<unsigned, unsigned>> cases{{2, 0}, {4, 1}, {2, 2}};
  for (auto [k, ell] : cases) {
    const auto e = rwre_expected_crossings(env, k, ell, cfg.identity_reps, group_seed(cfg.seed, 240 + 4 * k + ell),
                                           cfg.threads);
    gate(abs_gate(fmt::format("rwre.crossings.k={}.ell={}", k, ell), e.empirical, e.exact, cfg.se_mult * e.se));
  }
  for (unsigned i = 1; i <= cfg.row_imax; ++i) {
    const auto e = rwre_row_identity(env, i, cfg.row_reps, group_seed(cfg.seed, 300 + i), cfg.threads);
    gate(abs_gate(fmt::format("rwre.row.i={}", i), e.empirical, e.exact, cfg.se_mult * e.se));
  }

  rwre_scaling_gates(env, prof.sigma2.exact, sc.b1, cfg, report, "rwre.");
  return report;
}

}  // namespace gwtrace
