#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <array>
#include <map>

#include "gwtrace/biased_walk.hpp"
#include "gwtrace/errors.hpp"
#include "gwtrace/stats.hpp"

using namespace gwtrace;

namespace {

const OffspringLaw kBinary = OffspringLaw::point_mass(2);

// Root with `d` children, each a leaf.
GrownTree star(int d) {
  TreeBuilder b;
  const auto r = b.add_root();
  for (int i = 0; i < d; ++i) b.add_child(r);
  return std::move(b).build();
}

}  // namespace

TEST_CASE("kernel probabilities") {
  auto t = star(2);
  const auto p = step_probabilities(t, 0, WalkKernel::biased(2.0));
  CHECK(p == std::vector<double>{0.5, 0.25, 0.25});
  CHECK(step_probabilities(t, 1, WalkKernel::biased(3.7)) == std::vector<double>{1.0});

  NoGrowth none;
  Stream s(1, 1);
  CHECK(walk_step(t, none, kArtificialParent, WalkKernel::biased(2.0), s) == GrownTree::root());
  for (int i = 0; i < 20; ++i) CHECK(walk_step(t, none, 1, WalkKernel::biased(2.0), s) == 0);
}

TEST_CASE("walk of zero steps") {
  const auto run = run_walk(kBinary, 2.0, 0, 1);
  CHECK(run.path.vertices == std::vector<VertexId>{0});
  CHECK(run.path.heights == std::vector<int>{0});
  CHECK(path_csv(run.path) == "step,vertex_id,height\n0,0,0\n");
}

TEST_CASE("non-critical bias needs an explicit flag") {
  CHECK_THROWS_AS(run_walk(kBinary, 3.0, 10, 1), RegimeError);
  WalkOptions opt;
  opt.allow_noncritical = true;
  const auto run = run_walk(kBinary, 3.0, 10, 1, opt);
  CHECK_FALSE(run.path.critical);
}

TEST_CASE("one-step frequencies match the kernel") {
  const auto run = run_walk(kBinary, 2.0, 1'000'000, 42);
  const auto& x = run.path.vertices;
  REQUIRE_FALSE(run.path.tau.empty());
  // Every departure from a vertex of T: parent 1/2, first child 1/4, second child 1/4.
  std::array<double, 3> hits{};
  double visits = 0;
  for (std::size_t k = 0; k + 1 < x.size(); ++k) {
    if (x[k] == kArtificialParent) continue;
    visits += 1;
    const auto next = x[k + 1];
    const auto kids = run.tree.children(x[k]);
    hits[next == kids[0] ? 1 : next == kids[1] ? 2 : 0] += 1;
  }
  const std::array<double, 3> p{0.5, 0.25, 0.25};
  for (int i = 0; i < 3; ++i) CHECK(std::abs(hits[i] / visits - p[i]) <= 3 * std::sqrt(p[i] * (1 - p[i]) / visits));
}

TEST_CASE("path invariants") {
  const auto run = run_walk(OffspringLaw::parse("geometric:2"), 2.0, 200000, 9);
  const auto& p = run.path;
  for (std::size_t k = 1; k < p.vertices.size(); ++k) {
    CHECK(std::abs(p.heights[k] - p.heights[k - 1]) == 1);
    CHECK((p.heights[k] + static_cast<int>(k)) % 2 == 0);
    const auto a = p.vertices[k - 1], b = p.vertices[k];
    if (a == kArtificialParent) {
      CHECK(b == GrownTree::root());
    } else if (b == kArtificialParent) {
      CHECK(a == GrownTree::root());
    } else {
      CHECK((run.tree.parent(a) == b || run.tree.parent(b) == a));
    }
  }
  CHECK(excursion_times(p) == p.tau);
  for (auto t : p.tau) CHECK(p.vertices[t] == kArtificialParent);
}

TEST_CASE("unary walk matches the reflected simple walk") {
  // Exact law of |X_n| for the walk on {-1, 0, 1, ...} reflected at -1.
  const int N = 12;
  std::vector<std::vector<double>> exact(N + 1, std::vector<double>(N + 2, 0.0));
  exact[0][1] = 1.0;  // index = height + 1
  for (int n = 0; n < N; ++n)
    for (int h = 0; h <= N; ++h) {
      const double q = exact[n][h];
      if (q == 0) continue;
      if (h == 0) {
        exact[n + 1][1] += q;
      } else {
        exact[n + 1][h - 1] += q / 2;
        exact[n + 1][h + 1] += q / 2;
      }
    }
  const auto unary = OffspringLaw::point_mass(1);
  const int reps = 200000;
  std::vector<std::vector<double>> emp(N + 1, std::vector<double>(N + 2, 0.0));
  for (int r = 0; r < reps; ++r) {
    WalkOptions opt;
    opt.replica = static_cast<std::uint64_t>(r);
    const auto run = run_walk(unary, 1.0, N, 3, opt);
    for (int n = 0; n <= N; ++n) emp[n][run.path.heights[n] + 1] += 1.0 / reps;
  }
  for (int n = 0; n <= N; ++n)
    for (int h = 0; h <= N + 1; ++h) {
      const double p = exact[n][h];
      CHECK(std::abs(emp[n][h] - p) <= 4 * std::sqrt(p * (1 - p) / reps) + 1e-9);
    }
}

TEST_CASE("excursion times and local times by hand") {
  WalkPath p;
  p.vertices = {0, kArtificialParent, 0, kArtificialParent};
  CHECK(excursion_times(p) == std::vector<std::uint64_t>{1, 3});
  WalkPath q;
  q.vertices = {0, 1, 0, 0};
  CHECK(excursion_times(q).empty());

  const auto t = star(2);
  WalkPath w;
  w.vertices = {0, 1, 0, kArtificialParent};
  const auto f = local_time_field(t, w, 1);
  CHECK(f.counts == std::vector<std::uint32_t>{1, 1, 0});
  CHECK_THROWS(local_time_field(t, w, 2));
}

TEST_CASE("local-time fields are consistent") {
  const auto run = run_walk(kBinary, 2.0, 100000, 5);
  const auto k = static_cast<std::uint32_t>(std::min<std::size_t>(run.path.tau.size(), 25));
  REQUIRE(k >= 1);
  const auto f = local_time_field(run.tree, run.path, k);
  CHECK(f.counts[0] == k);
  for (VertexId v = 1; v < run.tree.size(); ++v)
    if (f.counts[v] > 0) CHECK(f.counts[run.tree.parent(v)] > 0);
}

TEST_CASE("depth-one hit probability is 1/3") {
  GrownTree tree;
  GwGrowth growth(kBinary);
  double hits = 0;
  const int reps = 200000;
  for (int r = 0; r < reps; ++r) {
    tree.reset(0);
    Walker w(tree, growth, WalkKernel::biased(2.0), Stream::for_replica(4, r, substream::walk));
    w.set_censor_depth(1);
    std::vector<VertexId> ex;
    REQUIRE(run_excursion(w, 1 << 20, ex));
    const auto first = tree.expanded(0) ? tree.children(0)[0] : kNoVertex;
    bool hit = false;
    for (auto v : ex) hit |= v == first;
    hits += hit;
  }
  const double p = 1.0 / 3;
  CHECK(std::abs(hits / reps - p) <= 3 * std::sqrt(p * (1 - p) / reps));
}

TEST_CASE("trace tree") {
  auto t = star(2);
  WalkPath w;
  w.vertices = {0, 1, 0, 2};
  CHECK(trace_tree(t, w, 0).tree.size() == 1);
  const auto tr = trace_tree(t, w, 3);
  CHECK(tr.tree.size() == 3);
  CHECK(tr.origin == std::vector<VertexId>{0, 1, 2});

  const auto run = run_walk(kBinary, 2.0, 3000, 8);
  std::size_t prev = 1;
  for (std::uint64_t n = 0; n <= 3000; n += 7) {
    const auto r = trace_tree(run.tree, run.path, n).tree.size();
    CHECK(r >= prev);
    prev = r;
  }
  std::size_t last = trace_tree(run.tree, run.path, 0).tree.size();
  for (std::uint64_t n = 1; n <= 200; ++n) {
    const auto r = trace_tree(run.tree, run.path, n).tree.size();
    CHECK(r - last <= 1);
    last = r;
  }
}

TEST_CASE("lazy and eager growth give the same path") {
  const auto law = OffspringLaw::parse("pmf:0.2,0.3,0.5");
  const std::uint64_t seed = 77;
  const auto lazy = run_walk(law, law.mean(), 20000, seed);

  auto eager = grow_tree(law, Stream::for_replica(seed, 0, substream::growth), 12);
  const auto eager_size = eager.size();
  GwGrowth growth(law);  // only the frontier beyond depth 12 is grown lazily
  const auto path = run_walk_on(eager, growth, WalkKernel::biased(law.mean()), 20000,
                                Stream::for_replica(seed, 0, substream::walk));
  CHECK(eager_size > 50);
  REQUIRE(path.vertices.size() == lazy.path.vertices.size());
  bool same = true;
  for (std::size_t k = 0; k < path.vertices.size(); ++k) {
    const auto a = lazy.path.vertices[k], b = path.vertices[k];
    if (a == kArtificialParent || b == kArtificialParent) {
      same &= a == b;
    } else {
      same &= lazy.tree.label(a) == eager.label(b);
    }
  }
  CHECK(same);
  CHECK(path.heights == lazy.path.heights);
}

TEST_CASE("subtrees entered once evolve independently") {
  // Condition on each depth-one child being entered exactly once; the local
  // times of their first children should then be uncorrelated.
  GrownTree tree;
  GwGrowth growth(kBinary);
  RunningCovariance cov;
  for (int r = 0; r < 300000; ++r) {
    tree.reset(0);
    Walker w(tree, growth, WalkKernel::biased(2.0), Stream::for_replica(6, r, substream::walk));
    w.set_censor_depth(3);
    std::vector<VertexId> ex;
    REQUIRE(run_excursion(w, 1 << 20, ex));
    WalkPath p;
    p.vertices = ex;
    p.vertices.push_back(kArtificialParent);
    const auto f = local_time_field(tree, p, 1);
    if (!tree.expanded(0)) continue;
    const auto l = tree.children(0)[0], rr = tree.children(0)[1];
    if (f.counts[l] != 1 || f.counts[rr] != 1) continue;
    cov.add(f.counts[tree.children(l)[0]], f.counts[tree.children(rr)[0]]);
  }
  REQUIRE(cov.count() > 10000);
  // SE of the sample covariance of independent variables ~ sd_x sd_y / sqrt(n)
  const double se = std::sqrt(cov.var_x() * cov.var_y() / static_cast<double>(cov.count()));
  CHECK(std::abs(cov.cov()) <= 3 * se);
}
