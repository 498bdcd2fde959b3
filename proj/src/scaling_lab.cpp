#include "gwtrace/scaling_lab.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fmt/format.h>
#include <map>
#include <numbers>

#include "gwtrace/errors.hpp"
#include "gwtrace/local_time_tree.hpp"
#include "gwtrace/parallel.hpp"
#include "gwtrace/reduction.hpp"
#include "gwtrace/stats.hpp"
#include "key_value.hpp"

namespace gwtrace {

std::vector<double> rescaled_height(const WalkPath& path, double sigma2, std::uint64_t n,
                                    std::span<const double> grid) {
  if (n < 1 || path.heights.size() <= n) throw std::invalid_argument("path shorter than n");
  const double scale = 1.0 / std::sqrt(sigma2 * static_cast<double>(n));
  std::vector<double> out;
  out.reserve(grid.size());
  for (double t : grid) {
    if (t < 0.0 || t > 1.0) throw std::invalid_argument("grid times lie in [0, 1]");
    const auto k = static_cast<std::uint64_t>(std::floor(t * static_cast<double>(n)));
    out.push_back(path.heights[k] * scale);
  }
  return out;
}

CodedTreeSample coded_tree(std::span<const double> times, std::span<const double> g) {
  if (times.size() != g.size()) throw std::invalid_argument("one value per time");
  for (std::size_t i = 1; i < times.size(); ++i)
    if (times[i] < times[i - 1]) throw std::invalid_argument("times must be sorted");
  CodedTreeSample out;
  out.times.assign(times.begin(), times.end());
  out.g.assign(g.begin(), g.end());
  const std::size_t n = g.size();
  out.metric.size = n;
  out.metric.d.assign(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double low = g[i];
    for (std::size_t j = i + 1; j < n; ++j) {
      low = std::min(low, g[j]);
      const double d = g[i] + g[j] - 2.0 * low;
      out.metric.d[i * n + j] = out.metric.d[j * n + i] = d;
    }
  }
  return out;
}

DistortionReport gh_upper_bound(const FiniteMetric& a, const FiniteMetric& b, std::span<const std::size_t> phi) {
  if (phi.size() != a.size) throw std::invalid_argument("phi needs one image per point of A");
  if (a.size == 0 || b.size == 0 || phi[0] != 0) throw std::invalid_argument("roots must be matched");
  std::vector<bool> hit(b.size, false);
  for (auto y : phi) {
    if (y >= b.size) throw std::invalid_argument("phi leaves B");
    hit[y] = true;
  }
  if (std::find(hit.begin(), hit.end(), false) != hit.end()) throw std::invalid_argument("phi is not onto B");
  DistortionReport r;
  for (std::size_t i = 0; i < a.size; ++i)
    for (std::size_t j = i + 1; j < a.size; ++j) {
      r.max_distortion = std::max(r.max_distortion, std::abs(a(i, j) - b(phi[i], phi[j])));
      ++r.pairs_sampled;
    }
  r.gh_upper = r.max_distortion / 2.0;
  return r;
}

namespace {

int height_of(const GrownTree& tree, VertexId v) {
  return v == kArtificialParent ? -1 : static_cast<int>(tree.depth(v));
}

// Minimum over [i, j] of a sequence, with block minima of width 512.
class BlockMin {
 public:
  explicit BlockMin(std::span<const int> values) : v_(values) {
    for (std::size_t b = 0; b * kWidth < v_.size(); ++b) {
      const auto end = std::min(v_.size(), (b + 1) * kWidth);
      blocks_.push_back(*std::min_element(v_.begin() + static_cast<std::ptrdiff_t>(b * kWidth),
                                          v_.begin() + static_cast<std::ptrdiff_t>(end)));
    }
  }
  int operator()(std::size_t i, std::size_t j) const {
    if (i > j) std::swap(i, j);
    int low = v_[i];
    const std::size_t bi = i / kWidth, bj = j / kWidth;
    if (bi == bj) {
      for (std::size_t k = i; k <= j; ++k) low = std::min(low, v_[k]);
      return low;
    }
    for (std::size_t k = i; k < (bi + 1) * kWidth; ++k) low = std::min(low, v_[k]);
    for (std::size_t b = bi + 1; b < bj; ++b) low = std::min(low, blocks_[b]);
    for (std::size_t k = bj * kWidth; k <= j; ++k) low = std::min(low, v_[k]);
    return low;
  }

 private:
  static constexpr std::size_t kWidth = 512;
  std::span<const int> v_;
  std::vector<int> blocks_;
};

std::uint64_t uniform_index(Stream& rng, std::uint64_t bound) {
  return std::min(bound - 1, static_cast<std::uint64_t>(rng.uniform() * static_cast<double>(bound)));
}

}  // namespace

std::uint32_t tree_distance(const GrownTree& tree, VertexId x, VertexId y) {
  int hx = height_of(tree, x), hy = height_of(tree, y);
  std::uint32_t d = 0;
  while (hx > hy) {
    x = tree.parent(x);
    --hx;
    ++d;
  }
  while (hy > hx) {
    y = tree.parent(y);
    --hy;
    ++d;
  }
  while (x != y) {
    x = tree.parent(x);
    y = tree.parent(y);
    d += 2;
  }
  return d;
}

DistortionReport trace_vs_code_distortion(const GrownTree& tree, const WalkPath& path, std::uint64_t n,
                                          std::uint64_t pairs, double sigma2, Stream rng) {
  if (path.heights.size() <= n) throw std::invalid_argument("path shorter than n");
  const std::span<const int> h(path.heights.data(), n + 1);
  const BlockMin low(h);
  DistortionReport r;
  int worst = 0;
  for (std::uint64_t p = 0; p < pairs; ++p) {
    const auto s = uniform_index(rng, n + 1), t = uniform_index(rng, n + 1);
    const int dg = h[s] + h[t] - 2 * low(s, t);
    const int dt = static_cast<int>(tree_distance(tree, path.vertices[s], path.vertices[t]));
    if (dg < dt) throw ConsistencyError(fmt::format("d_g {} below the tree distance {} at times {}, {}", dg, dt, s, t));
    worst = std::max(worst, dg - dt);
    ++r.pairs_sampled;
  }
  r.max_distortion = worst / std::sqrt(sigma2 * static_cast<double>(std::max<std::uint64_t>(n, 1)));
  r.gh_upper = r.max_distortion / 2.0;
  return r;
}

OneSidedness check_one_sidedness(const GrownTree& tree, unsigned max_len) {
  OneSidedness out;
  std::vector<VertexId> path{GrownTree::root()};
  std::vector<int> h{0};
  auto visit = [&](auto&& self) -> void {
    ++out.paths;
    const std::size_t t = path.size() - 1;
    int low = h[t];
    for (std::size_t s = t; s-- > 0;) {
      low = std::min(low, h[s]);
      const int dg = h[s] + h[t] - 2 * low;
      const int dt = static_cast<int>(tree_distance(tree, path[s], path[t]));
      ++out.pairs;
      out.violations += dg < dt;
      out.equalities += dg == dt;
    }
    if (t == max_len) return;
    const VertexId x = path.back();
    std::vector<VertexId> next;
    if (x == kArtificialParent) {
      next.push_back(GrownTree::root());
    } else {
      next.push_back(tree.parent(x));
      for (auto c : tree.children(x)) next.push_back(c);
    }
    for (auto y : next) {
      path.push_back(y);
      h.push_back(height_of(tree, y));
      self(self);
      path.pop_back();
      h.pop_back();
    }
  };
  visit(visit);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

// Grows the first-child line down to depth ell, conditioning on its existence.
VertexId first_child_line(GrownTree& tree, const OffspringLaw& law, const Stream& growth, unsigned ell) {
  for (std::uint64_t attempt = 0;; ++attempt) {
    if (attempt >= 10000) throw RetryExhausted("could not grow a vertex at the requested depth");
    tree.reset(growth_key_of(attempt == 0 ? growth : growth.split(attempt)));
    VertexId v = GrownTree::root();
    bool ok = true;
    for (unsigned d = 0; d < ell && ok; ++d) {
      expand_gw(tree, v, law);
      if (tree.child_count(v) == 0) ok = false;
      else v = tree.children(v)[0];
    }
    if (ok) return v;
  }
}

// per-replica local-time counts of `target` over k excursions, censored below its depth
std::vector<double> crossings_sample(const OffspringLaw& law, double lambda, unsigned k, unsigned ell,
                                     std::uint64_t reps, std::uint64_t seed, unsigned threads) {
  std::vector<double> out(reps);
  GwGrowth growth(law);
  parallel_chunks(reps, threads, [&](std::uint64_t a, std::uint64_t b, std::size_t) {
    GrownTree tree;
    std::vector<VertexId> ex;
    for (std::uint64_t r = a; r < b; ++r) {
      const VertexId target = first_child_line(tree, law, Stream::for_replica(seed, r, substream::growth), ell);
      if (target == GrownTree::root()) {
        out[r] = k;
        continue;
      }
      Walker w(tree, growth, WalkKernel::biased(lambda), Stream::for_replica(seed, r, substream::walk));
      w.set_censor_depth(ell);
      const VertexId up = tree.parent(target);
      std::uint64_t count = 0;
      for (unsigned e = 0; e < k; ++e) {
        ex.clear();
        if (!run_excursion(w, std::uint64_t{1} << 40, ex)) throw ResourceError("censored excursion did not end");
        for (std::size_t n = 1; n < ex.size(); ++n) count += ex[n] == target && ex[n - 1] == up;
      }
      out[r] = static_cast<double>(count);
    }
  });
  return out;
}

Estimate summarize(const std::vector<double>& xs, double exact) {
  RunningStats s;
  for (double x : xs) s.add(x);
  return {s.mean(), exact, s.se()};
}

}  // namespace

Estimate verify_hit_probability(const OffspringLaw& law, double lambda, unsigned ell, std::uint64_t reps,
                                std::uint64_t seed, unsigned threads) {
  auto xs = crossings_sample(law, lambda, 1, ell, reps, seed, threads);
  for (auto& x : xs) x = x >= 1 ? 1.0 : 0.0;
  const double exact = (lambda - 1.0) / (std::pow(lambda, ell + 1.0) - 1.0);
  return summarize(xs, ell == 0 ? 1.0 : exact);
}

Estimate verify_expected_crossings(const OffspringLaw& law, double lambda, unsigned k, unsigned ell,
                                   std::uint64_t reps, std::uint64_t seed, unsigned threads) {
  const auto xs = crossings_sample(law, lambda, k, ell, reps, seed, threads);
  return summarize(xs, k * std::pow(lambda, -static_cast<double>(ell)));
}

namespace {

// Streaming bookkeeping for R_n and i_n.
class RangeCounter {
 public:
  explicit RangeCounter(std::uint64_t n) : n_(n) { stats_.n = n; }

  void resize(std::size_t size) {
    if (seen_.size() < size) {
      seen_.resize(size, 0);
      stamp_.resize(size, 0);
      count_.resize(size, 0);
    }
  }

  // X_t = x; prev is X_{t-1} (kArtificialParent at the start of an excursion).
  void visit(std::uint64_t t, VertexId x, VertexId prev, const GrownTree& tree) {
    if (t <= n_ && !seen_[x]) {
      seen_[x] = 1;
      ++stats_.range;
    }
    if (prev != tree.parent(x)) return;  // a step down
    if (stamp_[x] != excursion_) {
      stamp_[x] = excursion_;
      count_[x] = 1;
      if (t <= n_) fresh_.push_back(x);
    } else {
      ++count_[x];
    }
  }

  void close_excursion() {
    for (auto x : fresh_) stats_.type1 += count_[x] == 1;
    fresh_.clear();
    ++excursion_;
  }

  RangeStats finish(bool complete) {
    close_excursion();
    stats_.complete = complete;
    return stats_;
  }

 private:
  std::uint64_t n_;
  RangeStats stats_;
  std::vector<std::uint8_t> seen_;
  std::vector<std::uint32_t> stamp_, count_;
  std::vector<VertexId> fresh_;
  std::uint32_t excursion_ = 1;
};

}  // namespace

RangeStats range_statistics(const GrownTree& tree, const WalkPath& path, std::uint64_t n) {
  if (n < 1) throw std::invalid_argument("n must be at least 1");
  if (path.vertices.size() <= n) throw std::invalid_argument("path shorter than n");
  RangeCounter c(n);
  c.resize(tree.size());
  VertexId prev = kArtificialParent;
  for (std::uint64_t t = 0; t < path.vertices.size(); ++t) {
    const VertexId x = path.vertices[t];
    if (x == kArtificialParent) {
      if (t > n) return c.finish(true);
      c.close_excursion();
    } else {
      c.visit(t, x, prev, tree);
    }
    prev = x;
  }
  return c.finish(false);
}

RangeStats range_statistics_run(GrownTree& tree, GrowthHook& growth, const WalkKernel& kernel, std::uint64_t n,
                                std::uint64_t overrun, Stream rng) {
  if (n < 1) throw std::invalid_argument("n must be at least 1");
  Walker w(tree, growth, kernel, rng);
  RangeCounter c(n);
  c.resize(tree.size());
  c.visit(0, GrownTree::root(), kArtificialParent, tree);
  VertexId prev = GrownTree::root();
  const std::uint64_t limit = n + overrun * n;
  for (std::uint64_t t = 1; t <= limit; ++t) {
    const VertexId x = w.step();
    if (x == kArtificialParent) {
      if (t > n) return c.finish(true);
      c.close_excursion();
    } else {
      c.resize(tree.size());
      c.visit(t, x, prev, tree);
    }
    prev = x;
  }
  return c.finish(false);
}

// ---------------------------------------------------------------------------
// configuration

namespace {

template <class Visit>
void for_each_field(VerifyConfig& c, Visit&& v) {
  v("law", c.law);
  v("lambda", c.lambda);
  v("seed", c.seed);
  v("threads", c.threads);
  v("spectral_K", c.spectral_K);
  v("balance_n", c.balance_n);
  v("chain_imax", c.chain_imax);
  v("mto_reps", c.mto_reps);
  v("mto_nmax", c.mto_nmax);
  v("sampler_samples", c.sampler_samples);
  v("hit_reps", c.hit_reps);
  v("identity_excursions", c.identity_excursions);
  v("identity_budget", c.identity_budget);
  v("range_n", c.range_n);
  v("range_reps", c.range_reps);
  v("range_overrun", c.range_overrun);
  v("clt_n", c.clt_n);
  v("clt_reps", c.clt_reps);
  v("distortion_n0", c.distortion_n0);
  v("distortion_levels", c.distortion_levels);
  v("distortion_reps", c.distortion_reps);
  v("distortion_pairs", c.distortion_pairs);
  v("forest_k", c.forest_k);
  v("forest_reps", c.forest_reps);
  v("forest_budget", c.forest_budget);
  v("heights_n", c.heights_n);
  v("heights_reps", c.heights_reps);
  v("se_mult", c.se_mult);
  v("tv_max", c.tv_max);
  v("range_rel", c.range_rel);
  v("ks_max", c.ks_max);
  v("joint_rel", c.joint_rel);
  v("distortion_max", c.distortion_max);
  v("lbar_max", c.lbar_max);
  v("index_rel", c.index_rel);
  v("heights_rel", c.heights_rel);
}

}  // namespace

void VerifyConfig::set(std::string_view key, std::string_view value) {
  detail::set_field([&](auto&& visit) { for_each_field(*this, visit); }, key, value);
  if (threads < 1) threads = 1;
}

void VerifyConfig::apply_text(std::string_view text) {
  detail::apply_lines(text, [&](std::string_view k, std::string_view v) { set(k, v); });
}

void VerifyConfig::make_quick() {
  mto_reps = 20'000;
  sampler_samples = 20'000;
  hit_reps = 20'000;
  identity_excursions = 500;
  range_n = 20'000;
  range_reps = 10;
  clt_n = 5'000;
  clt_reps = 500;
  distortion_n0 = 1'000;
  distortion_reps = 4;
  distortion_pairs = 1'000;
  forest_k = 5'000;
  forest_reps = 4;
  forest_budget = 1'000'000;
  heights_n = 2'000;
  heights_reps = 100;
}

std::vector<std::pair<std::string, std::string>> VerifyConfig::entries() const {
  std::vector<std::pair<std::string, std::string>> out;
  auto copy = *this;
  for_each_field(copy, [&](std::string_view name, const auto& field) {
    if (name == "threads") return;  // must not change the report
    using T = std::decay_t<decltype(field)>;
    if constexpr (std::is_same_v<T, std::string>) out.emplace_back(name, field);
    else out.emplace_back(name, fmt::format("{}", field));
  });
  return out;
}

// ---------------------------------------------------------------------------
// the suite

namespace {

struct Context {
  const VerifyConfig& cfg;
  const OffspringLaw& law;
  LimitConstants lc;
  Report& report;

  std::uint64_t seed(std::uint64_t group) const { return group_seed(cfg.seed, group); }
  void gate(Gate g) { report.gates.push_back(std::move(g)); }
  void note(std::string key, double value) { report.diagnostics.emplace_back(std::move(key), value); }
};

void spectral_group(Context& c) {
  for (double m : {1.5, 2.0, 3.0}) {
    const auto r = spectral_residuals(m, c.cfg.spectral_K);
    c.gate(at_most_gate(fmt::format("spectral.left.m={}", m), r.residual_left, 1e-8));
    c.gate(at_most_gate(fmt::format("spectral.right.m={}", m), r.residual_right, 1e-8));
    const auto e = detailed_balance_error(m, c.cfg.balance_n);
    c.gate(at_most_gate(fmt::format("spectral.balance.m={}", m), e.relative, 1e-12));
    c.note(fmt::format("spectral.tail_left.m={}", m), r.tail_left);
    c.note(fmt::format("spectral.tail_right.m={}", m), r.tail_right);
    c.note(fmt::format("spectral.pi_mass.m={}", m), r.pi_mass);
    c.note(fmt::format("spectral.balance_abs.m={}", m), e.absolute);
  }
}

void chain_group(Context& c) {
  for (double m : {1.5, 2.0, 3.0}) {
    double worst = 0;
    for (unsigned i = 1; i <= c.cfg.chain_imax; ++i)
      worst = std::max(worst, std::abs(chain_mean(i, m) - (1.0 + (i + 1.0) / m)));
    c.gate(at_most_gate(fmt::format("chain.mean.m={}", m), worst, 1e-10));
    c.note(fmt::format("chain.negbin_error.m={}", m), negbin_reduction_error(m, 60, 400));
  }
}

void many_to_one_group(Context& c) {
  const std::vector<std::pair<std::string, PathFunction>> fs{
      {"one", [](std::span<const unsigned>) { return 1.0; }},
      {"last_is_1", [](std::span<const unsigned> p) { return p.back() == 1 ? 1.0 : 0.0; }},
      {"inv_first", [](std::span<const unsigned> p) { return 1.0 / (1.0 + p.front()); }},
  };
  std::vector<PathFunction> fns;
  for (const auto& f : fs) fns.push_back(f.second);
  const LocalTimeOffspringSampler sampler{c.cfg.lambda, &c.law};
  for (unsigned k : {1u, 2u}) {
    const auto seed = c.seed(30 + k);
    std::vector<std::vector<std::vector<ManyToOneEstimate>>> parts(kChunks);
    parallel_chunks(c.cfg.mto_reps, c.cfg.threads, [&](std::uint64_t a, std::uint64_t b, std::size_t slot) {
      parts[slot] = many_to_one_batch(fns, c.cfg.mto_nmax, k, sampler, b - a, seed, a);
    });
    for (std::size_t f = 0; f < fs.size(); ++f)
      for (unsigned n = 1; n <= c.cfg.mto_nmax; ++n) {
        ManyToOneEstimate e;
        for (const auto& p : parts) {
          if (p.empty()) continue;
          e.lhs.merge(p[f][n - 1].lhs);
          e.rhs.merge(p[f][n - 1].rhs);
        }
        c.gate(abs_gate(fmt::format("many_to_one.{}.n={}.k={}", fs[f].first, n, k), e.lhs.mean() - e.rhs.mean(), 0.0,
                        c.cfg.se_mult * e.joint_se()));
      }
  }
}

double tv_of(const std::map<std::vector<std::uint32_t>, std::uint64_t>& p,
             const std::map<std::vector<std::uint32_t>, std::uint64_t>& q, double np, double nq) {
  double tv = 0;
  for (const auto& [key, count] : p) {
    const auto it = q.find(key);
    tv += std::abs(count / np - (it == q.end() ? 0.0 : it->second / nq));
  }
  for (const auto& [key, count] : q)
    if (!p.count(key)) tv += count / nq;
  return tv / 2;
}

void sampler_group(Context& c) {
  using Hist = std::map<std::vector<std::uint32_t>, std::uint64_t>;
  constexpr std::uint32_t cut = 12;
  const auto seed = c.seed(40);
  const std::uint64_t total = c.cfg.sampler_samples;
  std::vector<Hist> direct(kChunks), walk(kChunks), gen_direct(kChunks), gen_walk(kChunks);
  const LocalTimeOffspringSampler sampler{c.cfg.lambda, &c.law};
  GwGrowth growth(c.law);
  auto add = [&](Hist& joint, Hist& gen, std::vector<std::uint32_t>& counts) {
    for (auto& x : counts) {
      x = std::min(x, cut);
      ++gen[{x}];
    }
    ++joint[counts];
  };
  parallel_chunks(total, c.cfg.threads, [&](std::uint64_t a, std::uint64_t b, std::size_t slot) {
    GrownTree tree;
    std::vector<VertexId> ex;
    std::vector<std::uint32_t> counts;
    for (std::uint64_t s = a; s < b; ++s) {
      Stream rng = Stream::for_replica(seed, s, substream::sampler);
      sample_children_local_times(1, sampler, rng, counts);
      add(direct[slot], gen_direct[slot], counts);

      tree.reset(growth_key_of(Stream::for_replica(seed, s, substream::growth)));
      Walker w(tree, growth, WalkKernel::biased(c.cfg.lambda), Stream::for_replica(seed, s, substream::walk));
      w.set_censor_depth(1);
      ex.clear();
      if (!run_excursion(w, std::uint64_t{1} << 40, ex)) throw ResourceError("censored excursion did not end");
      const auto kids = tree.children(GrownTree::root());
      counts.assign(kids.size(), 0);
      for (auto v : ex)
        if (v != GrownTree::root()) ++counts[v - kids[0]];
      add(walk[slot], gen_walk[slot], counts);
    }
  });
  auto merge = [](std::vector<Hist>& parts) {
    Hist out;
    for (const auto& p : parts)
      for (const auto& [k, v] : p) out[k] += v;
    return out;
  };
  const auto d = merge(direct), w = merge(walk), gd = merge(gen_direct), gw = merge(gen_walk);
  double nd = 0, nw = 0;
  for (const auto& [k, v] : gd) nd += v;
  for (const auto& [k, v] : gw) nw += v;
  const double n = static_cast<double>(total);
  c.gate(at_most_gate("sampler.root_children_tv", tv_of(d, w, n, n), c.cfg.tv_max));
  c.gate(at_most_gate("sampler.generation1_tv", tv_of(gd, gw, nd, nw), c.cfg.tv_max));
}

void hit_group(Context& c) {
  const double lambda = c.cfg.lambda;
  for (unsigned ell : {1u, 2u, 3u}) {
    const auto e = verify_hit_probability(c.law, lambda, ell, c.cfg.hit_reps, c.seed(50 + ell), c.cfg.threads);
    c.gate(abs_gate(fmt::format("hit.ell={}", ell), e.empirical, e.exact, c.cfg.se_mult * e.se));
  }
  const std::vector<std::pair<unsigned, unsigned>> cases{{1, 0}, {2, 1}, {4, 2}, {8, 3}};
  for (auto [k, ell] : cases) {
    const auto e =
        verify_expected_crossings(c.law, lambda, k, ell, c.cfg.hit_reps, c.seed(60 + 4 * k + ell), c.cfg.threads);
    c.gate(abs_gate(fmt::format("crossings.k={}.ell={}", k, ell), e.empirical, e.exact, c.cfg.se_mult * e.se));
  }
}

void identity_group(Context& c) {
  const auto seed = c.seed(70);
  const std::uint64_t want = c.cfg.identity_excursions;
  struct Tally {
    std::uint64_t checked = 0, skipped = 0, height_bad = 0, restricted_bad = 0, steps = 0;
  };
  auto run = [&](std::uint64_t e, Tally& t, GrownTree& tree, std::vector<VertexId>& ex) {
    GwGrowth growth(c.law);
    tree.reset(growth_key_of(Stream::for_replica(seed, e, substream::growth)));
    Walker w(tree, growth, WalkKernel::biased(c.cfg.lambda), Stream::for_replica(seed, e, substream::walk));
    ex.clear();
    if (!run_excursion(w, c.cfg.identity_budget, ex)) {
      ++t.skipped;
      return;
    }
    ++t.checked;
    t.steps += ex.size();
    try {
      const auto T = build_T(tree, ex);
      const auto r = build_reduced_r(T, first_hit_ranks(T, ex));
      const auto wt = build_reduced_w(r, T, ex);
      const auto hw = restricted_height(std::span(&wt, 1));
      const auto hr = restricted_height(std::span(&r, 1));
      bool same = hw.H.size() == ex.size();
      for (std::size_t n = 0; same && n < ex.size(); ++n) same = hw.H[n] == static_cast<double>(tree.depth(ex[n]));
      t.height_bad += !same;
      t.restricted_bad += hw.H_f != hr.H_f;
    } catch (const ConsistencyError&) {
      ++t.height_bad;
      ++t.restricted_bad;
    }
  };
  std::vector<Tally> parts(kChunks);
  parallel_chunks(want, c.cfg.threads, [&](std::uint64_t a, std::uint64_t b, std::size_t slot) {
    GrownTree tree;
    std::vector<VertexId> ex;
    for (std::uint64_t e = a; e < b; ++e) run(e, parts[slot], tree, ex);
  });
  Tally t;
  for (const auto& p : parts) {
    t.checked += p.checked;
    t.skipped += p.skipped;
    t.height_bad += p.height_bad;
    t.restricted_bad += p.restricted_bad;
    t.steps += p.steps;
  }
  // top up the excursions dropped for their length
  GrownTree tree;
  std::vector<VertexId> ex;
  for (std::uint64_t e = want; t.checked < want; ++e) run(e, t, tree, ex);
  c.gate(abs_gate("identity.height_w", static_cast<double>(t.height_bad), 0.0, 0.0));
  c.gate(abs_gate("identity.restricted_f", static_cast<double>(t.restricted_bad), 0.0, 0.0));
  c.note("identity.excursions", static_cast<double>(t.checked));
  c.note("identity.skipped_over_budget", static_cast<double>(t.skipped));
  c.note("identity.steps", static_cast<double>(t.steps));
}

void range_group(Context& c) {
  const auto seed = c.seed(80);
  const std::uint64_t reps = c.cfg.range_reps;
  std::vector<RangeStats> out(reps);
  GwGrowth growth(c.law);
  parallel_chunks(reps, c.cfg.threads, [&](std::uint64_t a, std::uint64_t b, std::size_t) {
    GrownTree tree;
    for (std::uint64_t r = a; r < b; ++r) {
      tree.reset(growth_key_of(Stream::for_replica(seed, r, substream::growth)));
      out[r] = range_statistics_run(tree, growth, WalkKernel::biased(c.cfg.lambda), c.cfg.range_n,
                                    c.cfg.range_overrun, Stream::for_replica(seed, r, substream::walk));
    }
  });
  RunningStats R, I;
  double incomplete = 0;
  for (const auto& s : out) {
    R.add(s.range_density());
    I.add(s.type1_density());
    incomplete += !s.complete;
  }
  const double rt = c.lc.b1 / 2, it = c.lc.a1 * c.lc.b1 / 2;
  c.gate(abs_gate("range.R_density", R.mean(), rt, c.cfg.range_rel * rt));
  c.gate(abs_gate("range.type1_density", I.mean(), it, c.cfg.range_rel * it));
  c.note("range.R_density_se", R.se());
  c.note("range.type1_density_se", I.se());
  c.note("range.unfinished_excursions", incomplete);
}

void clt_group(Context& c) {
  const auto seed = c.seed(90);
  c.note("clt.sigma2", c.lc.sigma2);
  const std::uint64_t reps = c.cfg.clt_reps, n = c.cfg.clt_n;
  const std::array<double, 3> ts{0.25, 0.5, 1.0};
  std::vector<std::array<double, 3>> h(reps);
  GwGrowth growth(c.law);
  const double scale = 1.0 / std::sqrt(c.lc.sigma2 * static_cast<double>(n));
  parallel_chunks(reps, c.cfg.threads, [&](std::uint64_t a, std::uint64_t b, std::size_t) {
    GrownTree tree;
    for (std::uint64_t r = a; r < b; ++r) {
      tree.reset(growth_key_of(Stream::for_replica(seed, r, substream::growth)));
      Walker w(tree, growth, WalkKernel::biased(c.cfg.lambda), Stream::for_replica(seed, r, substream::walk));
      std::size_t next = 0;
      for (std::uint64_t t = 1; t <= n; ++t) {
        w.step();
        while (next < ts.size() && t == static_cast<std::uint64_t>(ts[next] * n)) h[r][next++] = w.height() * scale;
      }
    }
  });
  std::vector<double> last(reps);
  RunningStats mean;
  for (std::uint64_t r = 0; r < reps; ++r) {
    last[r] = h[r][2];
    mean.add(h[r][2]);
  }
  const double ks = ks_distance(last, half_normal_cdf);
  c.gate(at_most_gate("clt.ks", ks, c.cfg.ks_max));
  c.gate(abs_gate("clt.mean", mean.mean(), std::sqrt(2.0 / std::numbers::pi), c.cfg.se_mult * mean.se()));
  const std::vector<std::pair<int, int>> pairs{{0, 1}, {1, 2}, {0, 2}};
  for (auto [i, j] : pairs) {
    RunningStats m;
    for (const auto& x : h) m.add(x[i] * x[j]);
    const double target = abs_bm_cross_moment(ts[i], ts[j]);
    c.gate(abs_gate(fmt::format("clt.joint.s={}.t={}", ts[i], ts[j]), m.mean(), target, c.cfg.joint_rel * target));
  }
}

void trace_group(Context& c) {
  const auto seed = c.seed(100);
  std::vector<double> levels;
  std::uint64_t n = c.cfg.distortion_n0;
  for (unsigned l = 0; l < c.cfg.distortion_levels; ++l, n *= 10) {
    std::vector<double> worst(c.cfg.distortion_reps);
    parallel_chunks(c.cfg.distortion_reps, c.cfg.threads, [&](std::uint64_t a, std::uint64_t b, std::size_t) {
      for (std::uint64_t r = a; r < b; ++r) {
        WalkOptions opt;
        opt.replica = r;
        const auto run = run_walk(c.law, c.cfg.lambda, n, seed + l, opt);
        worst[r] = trace_vs_code_distortion(run.tree, run.path, n, c.cfg.distortion_pairs, c.lc.sigma2,
                                            Stream::for_replica(seed + l, r, substream::pairs))
                       .max_distortion;
      }
    });
    RunningStats s;
    for (double x : worst) s.add(x);
    levels.push_back(s.mean());
    c.note(fmt::format("trace.distortion.n={}", n), s.mean());
    c.note(fmt::format("trace.distortion_se.n={}", n), s.se());
  }
  double ratio = 0;
  for (std::size_t l = 1; l < levels.size(); ++l) ratio = std::max(ratio, levels[l] / levels[l - 1]);
  if (levels.size() > 1) c.gate(at_most_gate("trace.distortion_decreasing", ratio, 1.0));
  c.gate(at_most_gate("trace.distortion_final", levels.back(), c.cfg.distortion_max));
}

// Distortion between the T and T^(r) metrics on the explored part of a
// forest, roots identified.
double forest_distortion(const ForestRecord& f, std::uint64_t last, std::uint64_t pairs, Stream rng) {
  auto dist = [&](std::uint32_t x, std::uint32_t y, const std::vector<std::uint32_t>& up) {
    const std::uint32_t hx = f.depth[x], hy = f.depth[y];
    while (x != kNoVertex && y != kNoVertex && x != y) {
      if (f.depth[x] >= f.depth[y]) x = up[x];
      else y = up[y];
    }
    const std::uint32_t meet = x == y && x != kNoVertex ? f.depth[x] : 0;
    return hx + hy - 2 * meet;
  };
  std::uint32_t worst = 0;
  for (std::uint64_t p = 0; p < pairs; ++p) {
    const auto x = static_cast<std::uint32_t>(uniform_index(rng, last + 1));
    const auto y = static_cast<std::uint32_t>(uniform_index(rng, last + 1));
    const auto dt = dist(x, y, f.t_parent), dr = dist(x, y, f.r_parent);
    if (dr < dt) throw ConsistencyError("the reduced distance is below the tree distance");
    worst = std::max(worst, dr - dt);
  }
  return worst;
}

void forest_group(Context& c) {
  const auto seed = c.seed(110);
  const std::uint64_t reps = c.cfg.forest_reps, k = c.cfg.forest_k;
  struct Out {
    double ur = 0, uw = 0, lbar = 0, gh = 0;
    std::uint64_t skipped = 0, trees = 0;
  };
  std::vector<Out> out(reps);
  parallel_chunks(reps, c.cfg.threads, [&](std::uint64_t a, std::uint64_t b, std::size_t) {
    for (std::uint64_t r = a; r < b; ++r) {
      ForestOptions opt;
      opt.min_fertile = k;
      opt.budget = c.cfg.forest_budget;
      const auto rec = scan_forest(c.law, c.cfg.lambda, seed, r, opt);
      const auto rs = r_sequence(rec);
      const auto ws = w_sequence(rec);
      const auto last = type1_index(rs, k);
      out[r].ur = static_cast<double>(last) / k;
      out[r].uw = static_cast<double>(type1_index(ws, k)) / k;
      out[r].lbar = max_explored_edge(rs, k);
      out[r].gh = forest_distortion(rec, last, c.cfg.distortion_pairs, Stream::for_replica(seed, r, substream::pairs)) / 2;
      out[r].skipped = rec.skipped;
      out[r].trees = rec.trees;
    }
  });
  RunningStats ur, uw, lbar;
  double worst_ratio = 0, skipped = 0, trees = 0;
  const double root_k = std::sqrt(static_cast<double>(k));
  for (const auto& o : out) {
    ur.add(o.ur);
    uw.add(o.uw);
    lbar.add(o.lbar / root_k);
    worst_ratio = std::max(worst_ratio, o.gh / o.lbar);
    skipped += o.skipped;
    trees += o.trees;
  }
  c.gate(abs_gate("forest.u_r", ur.mean(), 1 / c.lc.c1_r, c.cfg.index_rel / c.lc.c1_r));
  c.gate(abs_gate("forest.u_w", uw.mean(), 1 / c.lc.c1_w, c.cfg.index_rel / c.lc.c1_w));
  c.gate(at_most_gate("forest.gh_within_lbar", worst_ratio, 1.0));
  c.gate(at_most_gate("forest.lbar", lbar.mean(), c.cfg.lbar_max));
  c.note("forest.u_r_se", ur.se());
  c.note("forest.u_w_se", uw.se());
  c.note("forest.lbar_se", lbar.se());
  c.note("forest.trees", trees);
  c.note("forest.skipped_over_budget", skipped);

  // height of the T^(r) forest at index n
  const auto hseed = c.seed(120);
  std::vector<double> hs(c.cfg.heights_reps);
  const std::uint64_t n = c.cfg.heights_n;
  parallel_chunks(hs.size(), c.cfg.threads, [&](std::uint64_t a, std::uint64_t b, std::size_t) {
    for (std::uint64_t r = a; r < b; ++r)
      hs[r] = first_hit_depth(c.law, c.cfg.lambda, n, hseed, r) / std::sqrt(static_cast<double>(n));
  });
  RunningStats h;
  for (double x : hs) h.add(x);
  const double target = 2 * c.lc.c2 / c.lc.sigma_f * std::sqrt(c.lc.c1_r) * std::sqrt(2 / std::numbers::pi);
  c.gate(abs_gate("forest.height_marginal", h.mean(), target, c.cfg.heights_rel * target));
  c.note("forest.height_marginal_se", h.se());
}

using GroupFn = void (*)(Context&);
const std::vector<std::pair<std::string, GroupFn>>& groups() {
  static const std::vector<std::pair<std::string, GroupFn>> g{
      {"spectral", spectral_group}, {"chain", chain_group},   {"many_to_one", many_to_one_group},
      {"sampler", sampler_group},   {"hit", hit_group},       {"identity", identity_group},
      {"range", range_group},       {"clt", clt_group},       {"trace", trace_group},
      {"forest", forest_group},
  };
  return g;
}

}  // namespace

std::vector<std::string> verify_groups() {
  std::vector<std::string> out;
  for (const auto& g : groups()) out.push_back(g.first);
  return out;
}

Report run_verify(const VerifyConfig& config, std::span<const std::string> only) {
  const auto law = OffspringLaw::parse(config.law);
  check_bias(law, config.lambda, false);
  Report report;
  report.suite = "verify";
  report.config = config.entries();
  Context c{config, law, limit_constants(law), report};
  for (const auto& [name, fn] : groups())
    if (only.empty() || std::find(only.begin(), only.end(), name) != only.end()) fn(c);
  return report;
}

}  // namespace gwtrace
