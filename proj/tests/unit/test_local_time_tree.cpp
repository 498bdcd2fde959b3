#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "gwtrace/biased_walk.hpp"
#include "gwtrace/errors.hpp"
#include "gwtrace/local_time_tree.hpp"

using namespace gwtrace;

namespace {

const OffspringLaw kBinary = OffspringLaw::point_mass(2);

// Exact binomial by multiplication, for comparisons against lgamma.
double binom(unsigned n, unsigned k) {
  double r = 1;
  for (unsigned i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

}  // namespace

TEST_CASE("mean matrix entries") {
  CHECK(mean_matrix_entry(1, 1, 2) == doctest::Approx(4.0 / 9).epsilon(1e-14));
  CHECK(mean_matrix_entry(2, 1, 2) == doctest::Approx(16.0 / 27).epsilon(1e-14));
  double prev = 0;
  for (double m : {2.0, 5.0, 50.0, 1e4}) {
    const double v = mean_matrix_entry(1, 1, m);
    CHECK(v == doctest::Approx(m * m / ((m + 1) * (m + 1))).epsilon(1e-12));
    CHECK(v > prev);
    prev = v;
  }
  CHECK(prev > 0.999);
  for (unsigned i = 1; i <= 12; ++i)
    for (unsigned j = 1; j <= 12; ++j) {
      const double direct = binom(i + j - 1, j) * std::pow(1.5, i + 1) / std::pow(2.5, i + j);
      CHECK(mean_matrix_entry(i, j, 1.5) == doctest::Approx(direct).epsilon(1e-12));
    }
  // large indices stay finite
  CHECK(std::isfinite(mean_matrix_entry(400, 500, 2)));
  CHECK_THROWS_AS(mean_matrix_entry(1, 1, 1.0), RegimeError);
  CHECK_THROWS(mean_matrix_entry(0, 1, 2.0));
}

TEST_CASE("spectral data") {
  const auto s = spectral_data(2, 4);
  CHECK(s.a == std::vector<double>{0.5, 0.25, 0.125, 0.0625});
  CHECK(s.b == std::vector<double>{0.5, 1.0, 1.5, 2.0});
  CHECK(s.pi[0] == 0.25);
  const auto t = spectral_data(3, 1);
  CHECK(t.a[0] == doctest::Approx(2.0 / 3));
  CHECK(t.b[0] == doctest::Approx(2.0 / 3));
  CHECK(t.pi[0] == doctest::Approx(4.0 / 9));

  for (double m : {1.5, 2.0, 3.0}) {
    for (unsigned K : {10u, 40u, 200u}) {
      const auto r = spectral_residuals(m, K);
      CHECK(r.a_mass >= 1 - std::pow(m, -double(K)) - 1e-12);
      CHECK(r.pi_mass <= 1 + 1e-12);
    }
    const auto r = spectral_residuals(m, 200);
    CHECK(r.a_mass == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.pi_mass == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.residual_left <= 1e-8);
    CHECK(r.residual_right <= 1e-8);
    CHECK(r.tail_left <= 1e-12);
    CHECK(r.tail_right <= 1e-12);
    CHECK(r.raw_right >= r.residual_right);

    const auto r50 = spectral_residuals(m, 50);
    CHECK(r50.residual_left <= 1e-9);
    CHECK(r50.residual_right <= 1e-9);
  }
  // the pi mass converges geometrically
  const double e10 = 1 - spectral_residuals(2, 10).pi_mass;
  const double e20 = 1 - spectral_residuals(2, 20).pi_mass;
  CHECK(e20 < e10 * 0.01);
}

TEST_CASE("spine chain law") {
  CHECK(nhat_probability(1, 1, 2) == doctest::Approx(4.0 / 9).epsilon(1e-14));
  for (double m : {1.5, 2.0, 3.0}) {
    CHECK(negbin_reduction_error(m, 60, 400) <= 1e-14);
    CHECK(chain_mean(1, m) == doctest::Approx(1 + 2 / m).epsilon(1e-12));
    for (unsigned i = 1; i <= 30; ++i) CHECK(std::abs(chain_mean(i, m) - (1 + (i + 1) / m)) <= 1e-10 * (1 + i));
    double total = 0;
    for (unsigned j = 1; j <= 2000; ++j) total += nhat_probability(7, j, m);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));

    const auto e = detailed_balance_error(m, 50);
    CHECK(e.relative <= 1e-12);
    CHECK(e.absolute <= 1e-12);
  }
  CHECK(chain_mean(1, 2) == doctest::Approx(2.0));
}

TEST_CASE("spine chain sampling") {
  Stream rng(21, 0);
  const int n = 400000;
  std::map<unsigned, double> hist;
  for (int k = 0; k < n; ++k) hist[nhat_step(3, 2.0, rng)] += 1;
  for (unsigned j = 1; j <= 12; ++j) {
    const double p = nhat_probability(3, j, 2.0);
    CHECK(std::abs(hist[j] / n - p) <= 4 * std::sqrt(p * (1 - p) / n));
  }

  RunningStats gamma;
  double first = 0;
  Stream r2(22, 0);
  const int reps = 1000000;
  std::vector<double> tail(61, 0.0);
  for (int k = 0; k < reps; ++k) {
    const auto g = return_time_sample(2.0, r2, 1 << 20);
    REQUIRE(g.has_value());
    gamma.add(static_cast<double>(*g));
    first += *g == 1;
    for (std::uint64_t t = 0; t <= 60 && t < *g; ++t) tail[t] += 1;
  }
  CHECK(std::abs(gamma.mean() - 4.0) <= 3 * gamma.se());
  const double p11 = 4.0 / 9;
  CHECK(std::abs(first / reps - p11) <= 3 * std::sqrt(p11 * (1 - p11) / reps));
  // log P(gamma > t) falls at least linearly: its slope over [10, 40] is negative
  // and the later half drops at least as fast as a fixed fraction of the earlier
  const double l10 = std::log(tail[10] / reps), l25 = std::log(tail[25] / reps), l40 = std::log(tail[40] / reps);
  CHECK(l25 < l10);
  CHECK(l40 - l25 <= 0.5 * (l25 - l10));

  Stream cap_rng(5, 5);
  int censored = 0;
  for (int k = 0; k < 1000; ++k) censored += !return_time_sample(2.0, cap_rng, 1).has_value();
  CHECK(censored > 450);
  CHECK(censored < 660);
}

TEST_CASE("occupation law matches pi") {
  Stream rng(23, 0);
  const std::uint64_t steps = 10'000'000;
  const auto counts = occupation_counts(2.0, steps, 30, rng);
  const auto s = spectral_data(2.0, 30);
  std::vector<double> emp(30), pi(30);
  for (unsigned i = 0; i < 30; ++i) {
    emp[i] = counts[i] / double(steps);
    pi[i] = s.pi[i];
  }
  CHECK(total_variation(emp, pi) <= 0.01);
  CHECK(counts[30] < 10);
}

TEST_CASE("chain trace csv") {
  Stream rng(1, 1);
  const auto csv = chain_trace_csv(2.0, 3, rng);
  CHECK(csv.rfind("step,state\n0,1\n1,", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
}

TEST_CASE("children local times") {
  const auto leaf = OffspringLaw::point_mass(0);
  LocalTimeOffspringSampler none{2.0, &leaf};
  Stream rng(3, 0);
  std::vector<std::uint32_t> counts{9};
  sample_children_local_times(1, none, rng, counts);
  CHECK(counts.empty());

  LocalTimeOffspringSampler s{2.0, &kBinary};
  double zero = 0;
  const int n = 200000;
  RunningStats total;
  for (int k = 0; k < n; ++k) {
    sample_children_local_times(1, s, rng, counts);
    REQUIRE(counts.size() == 2);
    zero += counts[0] == 0 && counts[1] == 0;
    total.add(counts[0]);
  }
  CHECK(std::abs(zero / n - 0.5) <= 3 * std::sqrt(0.25 / n));
  // each child: geometric number of failures before the parent, mean 1 / lambda
  CHECK(std::abs(total.mean() - 0.5) <= 3 * total.se());
}

TEST_CASE("direct sampler agrees with the walk") {
  // Joint law of the root's children local times over one excursion, from the
  // categorical scheme and from the walk itself (censored at depth 1, which
  // leaves depth-one local times untouched).
  LocalTimeOffspringSampler s{2.0, &kBinary};
  const int n = 1000000;
  const unsigned cut = 12;
  auto cell = [&](unsigned a, unsigned b) { return std::min(a, cut) * (cut + 1) + std::min(b, cut); };
  std::vector<double> direct((cut + 1) * (cut + 1)), walk(direct.size());
  std::vector<double> gen1_direct(cut + 1), gen1_walk(cut + 1);
  Stream rng(31, 0);
  std::vector<std::uint32_t> counts;
  for (int k = 0; k < n; ++k) {
    sample_children_local_times(1, s, rng, counts);
    direct[cell(counts[0], counts[1])] += 1.0 / n;
    for (auto c : counts) gen1_direct[std::min(c, cut)] += 0.5 / n;
  }
  GrownTree tree;
  GwGrowth growth(kBinary);
  std::vector<VertexId> ex;
  for (int k = 0; k < n; ++k) {
    tree.reset(0);
    Walker w(tree, growth, WalkKernel::biased(2.0), Stream::for_replica(32, k, substream::walk));
    w.set_censor_depth(1);
    ex.clear();
    REQUIRE(run_excursion(w, 1 << 20, ex));
    unsigned a = 0, b = 0;
    if (tree.expanded(0)) {
      const auto kids = tree.children(0);
      for (auto v : ex) {
        a += v == kids[0];
        b += v == kids[1];
      }
    }
    walk[cell(a, b)] += 1.0 / n;
    gen1_walk[std::min(a, cut)] += 0.5 / n;
    gen1_walk[std::min(b, cut)] += 0.5 / n;
  }
  CHECK(total_variation(direct, walk) <= 0.01);
  CHECK(total_variation(gen1_direct, gen1_walk) <= 0.01);
}

TEST_CASE("local-time trees") {
  LocalTimeOffspringSampler s{2.0, &kBinary};
  // find a seed whose first draw is the parent: the tree is the root alone
  bool found = false;
  for (std::uint64_t seed = 0; seed < 50 && !found; ++seed) {
    Stream a(seed, 0), b(seed, 0);
    std::vector<std::uint32_t> counts;
    sample_children_local_times(1, s, a, counts);
    if (counts[0] + counts[1] != 0) continue;
    found = true;
    const auto t = sample_local_time_tree(1, s, b, 1000);
    CHECK(t.tree.size() == 1);
    CHECK(t.tree.tag(0) == 1);
    CHECK_FALSE(t.truncated);
  }
  CHECK(found);

  Stream rng(40, 0);
  auto t = sample_local_time_tree(4, s, rng, 100000);
  CHECK(t.tree.tag(0) == 4);
  for (VertexId v = 1; v < t.tree.size(); ++v) CHECK(t.tree.tag(v) >= 1);

  // the size cap sets the truncated flag
  bool truncated = false;
  for (std::uint64_t r = 0; r < 200 && !truncated; ++r) {
    Stream q = Stream::for_replica(41, r, substream::sampler);
    truncated = sample_local_time_tree(5, s, q, 3).truncated;
  }
  CHECK(truncated);
  CHECK_THROWS(sample_local_time_tree(0, s, rng, 10));
}

TEST_CASE("generation-one means equal the mean matrix") {
  const auto law = OffspringLaw::parse("pmf:0.2,0.3,0.5");
  const double m = law.mean();
  LocalTimeOffspringSampler s{m, &law};
  const unsigned jmax = 6;
  for (unsigned i : {1u, 3u}) {
    std::vector<RunningStats> gen(jmax + 1);
    LocalTimeTree t;
    for (std::uint64_t r = 0; r < 1000000; ++r) {
      Stream q = Stream::for_replica(50 + i, r, substream::sampler);
      sample_local_time_tree(i, s, q, 1000, 1, t);
      std::vector<double> c(jmax + 1, 0.0);
      if (t.tree.expanded(0))
        for (auto v : t.tree.children(0))
          if (t.tree.tag(v) <= jmax) c[t.tree.tag(v)] += 1;
      for (unsigned j = 1; j <= jmax; ++j) gen[j].add(c[j]);
    }
    for (unsigned j = 1; j <= jmax; ++j)
      CHECK(std::abs(gen[j].mean() - mean_matrix_entry(i, j, m)) <= 3 * gen[j].se() + 1e-12);
  }
}

TEST_CASE("critical local-time trees are finite with a heavy size tail") {
  LocalTimeOffspringSampler s{2.0, &kBinary};
  const int reps = 20000;
  std::vector<double> above(4, 0.0);
  const std::vector<std::size_t> levels{10, 100, 1000, 10000};
  LocalTimeTree t;
  for (int r = 0; r < reps; ++r) {
    Stream q = Stream::for_replica(60, r, substream::sampler);
    sample_local_time_tree(1, s, q, 10001, std::numeric_limits<unsigned>::max(), t);
    const auto size = t.truncated ? std::size_t{10001} : t.tree.size();
    for (std::size_t l = 0; l < levels.size(); ++l) above[l] += size > levels[l];
  }
  // decreasing, and roughly a factor sqrt(10) per decade
  for (std::size_t l = 0; l + 1 < levels.size(); ++l) {
    CHECK(above[l + 1] < above[l]);
    const double ratio = above[l] / std::max(above[l + 1], 1.0);
    CHECK(ratio > 1.5);
    CHECK(ratio < 8.0);
  }
}

TEST_CASE("many-to-one") {
  LocalTimeOffspringSampler s{2.0, &kBinary};
  const PathFunction one = [](std::span<const unsigned>) { return 1.0; };
  const PathFunction last_is_one = [](std::span<const unsigned> p) { return p.back() == 1 ? 1.0 : 0.0; };
  const PathFunction zero = [](std::span<const unsigned>) { return 0.0; };

  const auto e1 = many_to_one_pair(one, 1, 1, s, 400000, 70);
  CHECK(std::abs(e1.lhs.mean() - e1.rhs.mean()) <= 3 * e1.joint_se());
  double row = 0;
  for (unsigned j = 1; j <= 400; ++j) row += mean_matrix_entry(1, j, 2.0);
  CHECK(std::abs(e1.lhs.mean() - row) <= 3 * e1.lhs.se());

  const auto e2 = many_to_one_pair(last_is_one, 2, 1, s, 400000, 71);
  CHECK(std::abs(e2.lhs.mean() - e2.rhs.mean()) <= 3 * e2.joint_se());

  const auto e0 = many_to_one_pair(zero, 3, 2, s, 1000, 72);
  CHECK(e0.lhs.mean() == 0.0);
  CHECK(e0.rhs.mean() == 0.0);

  const auto law = OffspringLaw::point_mass(3);
  LocalTimeOffspringSampler off{2.0, &law};
  CHECK_THROWS_AS(many_to_one_pair(one, 1, 1, off, 10, 1), RegimeError);
}

TEST_CASE("the reduction constant is finite and positive") {
  const auto q = q_constant(1, 1, 1, kBinary);
  // multinomial(2; 0, 1, 1) * 2 * 2 / 4^3
  CHECK(q == doctest::Approx(2.0 * 2 * 2 / 64));
}
