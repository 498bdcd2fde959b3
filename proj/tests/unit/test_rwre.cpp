#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <json.hpp>

#include "gwtrace/errors.hpp"
#include "gwtrace/local_time_tree.hpp"
#include "gwtrace/reduction.hpp"
#include "gwtrace/rwre.hpp"

using namespace gwtrace;

namespace {

const OffspringLaw kBinary = OffspringLaw::point_mass(2);

double lognormal_sigma2(double s2) { return (1 - std::exp(s2) / 2) / 0.5; }

}  // namespace

TEST_CASE("environment laws") {
  const auto b = EnvironmentLaw::parse("biased", kBinary, 2.0);
  CHECK(b.kind() == EnvironmentLaw::Kind::biased);
  CHECK(b.psi(1) == 1.0);
  CHECK(b.psi(2) == 0.5);
  CHECK(b.pair_moment() == 0.5);
  const auto l = EnvironmentLaw::parse("lognormal:0.25", kBinary, 2.0);
  CHECK(l.s2() == 0.25);
  CHECK(l.psi(1) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(l.psi(2) == doctest::Approx(std::exp(0.25) / 2).epsilon(1e-14));
  CHECK(l.pair_moment() == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(l.spine_mean() == doctest::Approx(std::log(2.0) - 0.125));
  CHECK_THROWS_AS(EnvironmentLaw::parse("lognormal:x", kBinary, 2.0), std::invalid_argument);
  CHECK_THROWS_AS(EnvironmentLaw::parse("gaussian", kBinary, 2.0), std::invalid_argument);
  CHECK_THROWS_AS(EnvironmentLaw::lognormal(kBinary, 0.0), std::invalid_argument);
}

TEST_CASE("sampled environments") {
  const auto b = EnvironmentLaw::biased(OffspringLaw::geometric(2.0), 2.0);
  const auto env = sample_environment(b, 6, Stream(1, 0));
  for (VertexId v = 0; v < env.tree.size(); ++v) CHECK(env.V(v) == env.tree.depth(v) * std::log(2.0));
  CHECK(env.V(kArtificialParent) == 0.0);

  const auto zero = sample_environment(b, 0, Stream(1, 0));
  CHECK(zero.tree.size() == 1);
  CHECK(zero.V(0) == 0.0);

  // same shape as the plain GW tree on the same stream
  const auto gw = grow_tree(OffspringLaw::geometric(2.0), Stream(1, 0), 6);
  REQUIRE(gw.size() == env.tree.size());
  for (VertexId v = 1; v < gw.size(); ++v) CHECK(gw.parent(v) == env.tree.parent(v));

  // generation 1 of the lognormal law: E[sum e^-V] = 1
  const auto l = EnvironmentLaw::lognormal(kBinary, 0.25);
  const auto p = psi_profile(l, 200000, 3);
  CHECK(std::abs(p.psi1.empirical - 1.0) <= 3 * p.psi1.se);
  CHECK_THROWS_AS(sample_environment(EnvironmentLaw::biased(kBinary, 2.0), 40, Stream(2, 0), 1000), ResourceError);
}

TEST_CASE("kernel") {
  const auto b = EnvironmentLaw::biased(kBinary, 2.0);
  auto env = sample_environment(b, 3, Stream(4, 0));
  for (VertexId v = 0; v < env.tree.size(); ++v) {
    if (!env.tree.expanded(v)) continue;
    const auto p = rwre_step_probabilities(env, v);
    CHECK(p[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(p[1] == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(p[2] == doctest::Approx(0.25).epsilon(1e-15));
  }
  CHECK(kernel_reduction_error(env, 2.0) <= 1e-15);

  const auto geo = EnvironmentLaw::biased(OffspringLaw::geometric(3.0), 3.0);
  const auto g = sample_environment(geo, 5, Stream(5, 0));
  CHECK(kernel_reduction_error(g, 3.0) <= 1e-12);

  // leaf and equal potentials
  BranchingEnvironment flat;
  const std::vector<double> none{0.0, 0.0, 0.0};
  flat.tree.expand_with_potential(0, none);
  const auto pf = rwre_step_probabilities(flat, 0);
  CHECK(pf[0] == doctest::Approx(0.25));
  CHECK(rwre_step_probabilities(flat, 1) == std::vector<double>{1.0});

  // rwre_step walks and reflects at e_*
  const auto l = EnvironmentLaw::lognormal(kBinary, 0.25);
  auto le = sample_environment(l, 0, Stream(6, 0));
  Stream rng(7, 0);
  VertexId x = GrownTree::root();
  bool reflected = false;
  for (int t = 0; t < 2000; ++t) {
    const VertexId y = rwre_step(le, l, x, rng);
    if (x == kArtificialParent) {
      CHECK(y == GrownTree::root());
      reflected = true;
    } else if (y != kArtificialParent) {
      CHECK((le.tree.parent(y) == x || le.tree.parent(x) == y));
    }
    x = y;
  }
  CHECK(reflected);
}

TEST_CASE("psi profiles") {
  const auto b = psi_profile(EnvironmentLaw::biased(kBinary, 2.0), 0, 0);
  CHECK(b.psi2.exact == 0.5);
  CHECK(b.pair_moment.exact == 0.5);
  CHECK(b.sigma2.exact == 1.0);

  for (const char* name : {"pmf:0,0.5,0.5", "binary", "point:3", "geometric:2", "pmf:0.2,0.3,0.5"}) {
    const auto law = OffspringLaw::parse(name);
    const auto p = psi_profile(EnvironmentLaw::biased(law, law.mean()), 0, 0);
    CHECK(std::abs(p.sigma2.exact - limit_constants(law).sigma2) <= 1e-12 * p.sigma2.exact);
  }

  const auto l = psi_profile(EnvironmentLaw::lognormal(kBinary, 0.25), 200000, 8);
  CHECK(l.psi2.exact == doctest::Approx(0.6420127083).epsilon(1e-9));
  CHECK(l.sigma2.exact == doctest::Approx(0.7159745834).epsilon(1e-9));
  CHECK(l.sigma2.exact == doctest::Approx(lognormal_sigma2(0.25)));
  CHECK(std::abs(l.psi2.empirical - l.psi2.exact) <= 3 * l.psi2.se);
  CHECK(std::abs(l.pair_moment.empirical - 0.5) <= 3 * l.pair_moment.se);
  CHECK(std::abs(l.sigma2.empirical - l.sigma2.exact) <= 3 * l.sigma2.se);
  CHECK(l.sigma2.se > 0);

  CHECK_THROWS_AS(psi_profile(EnvironmentLaw::lognormal(kBinary, std::log(2.0)), 0, 0), RegimeError);
  CHECK_THROWS_AS(psi_profile(EnvironmentLaw::biased(OffspringLaw::point_mass(1), 1.0), 0, 0), RegimeError);

  const auto j = nlohmann::json::parse(psi_json(l));
  CHECK(j["schema"] == 1);
  CHECK(j["sigma2"]["exact"].get<double>() == l.sigma2.exact);
}

TEST_CASE("spine constants") {
  const auto b = spine_constants(EnvironmentLaw::biased(kBinary, 2.0), 1, 200, 0);
  CHECK(b.a1 == 0.5);
  CHECK(b.b1 == 0.5);
  CHECK(b.drift == doctest::Approx(std::log(2.0)));
  const auto three = spine_constants(EnvironmentLaw::biased(OffspringLaw::point_mass(3), 3.0), 1, 200, 0);
  CHECK(three.b1 == doctest::Approx(2.0 / 3).epsilon(1e-14));

  const auto l = EnvironmentLaw::lognormal(kBinary, 0.25);
  const auto s = spine_constants(l, 200000, 200, 9);
  CHECK(s.a1 > 0);
  CHECK(s.a1 < 1);
  CHECK(s.b1 > 0);
  CHECK(s.b1 < 1);
  CHECK(s.b1_se <= 0.005);
  CHECK(s.a1_se <= 0.005);
  CHECK(std::abs(s.drift - l.spine_mean()) <= 3 * s.drift_se);
  CHECK(s.tail_bound < 1e-30);

  // the spine step is the size-biased increment: E[S_1] = E[sum V e^-V]
  RunningStats direct;
  std::vector<double> inc;
  for (std::uint64_t r = 0; r < 200000; ++r) {
    Stream rng = Stream::for_replica(10, r, substream::environment);
    l.draw(rng, inc);
    double x = 0;
    for (double v : inc) x += v * std::exp(-v);
    direct.add(x);
  }
  CHECK(std::abs(direct.mean() - l.spine_mean()) <= 3 * direct.se());

  CHECK_THROWS_AS(spine_constants(l, 100, 10, 0), std::invalid_argument);
  CHECK_THROWS_AS(spine_constants(EnvironmentLaw::biased(kBinary, 3.0), 1, 200, 0), RegimeError);
  // drift ln 2 - s2/2 < 0 beyond s2 = 2 ln 2; psi(1) is still 1
  CHECK_THROWS_AS(spine_constants(EnvironmentLaw::lognormal(kBinary, 1.6), 2000, 60, 0), RegimeError);
}

TEST_CASE("mean matrix entries") {
  const auto b = EnvironmentLaw::biased(kBinary, 2.0);
  for (unsigned i = 1; i <= 4; ++i)
    for (unsigned j = 1; j <= 4; ++j)
      CHECK(rwre_mean_entry(b, i, j, 10, 1).empirical == doctest::Approx(mean_matrix_entry(i, j, 2.0)).epsilon(1e-12));

  // b_j = j is a right eigenvector: sum_j m_{1,j} j = psi(1) = 1
  const auto l = EnvironmentLaw::lognormal(kBinary, 0.25);
  double row = 0;
  for (unsigned j = 1; j <= 200; ++j) row += j * rwre_mean_entry(l, 1, j, 2000, 11).empirical;
  CHECK(row == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("per-environment identities") {
  const auto b = EnvironmentLaw::biased(kBinary, 2.0);
  const auto h = rwre_hit_probability(b, 1, 30000, 12);
  CHECK(h.exact == doctest::Approx(1.0 / 3));
  CHECK(std::abs(h.empirical - h.exact) <= 4 * h.se);

  const auto e = rwre_expected_crossings(b, 2, 0, 100, 13);
  CHECK(e.empirical == 2.0);
  CHECK(e.exact == 2.0);

  const auto l = EnvironmentLaw::lognormal(kBinary, 0.25);
  const auto lh = rwre_hit_probability(l, 2, 30000, 14);
  CHECK(std::abs(lh.empirical - lh.exact) <= 4 * lh.se);
  const auto lc = rwre_expected_crossings(l, 3, 2, 30000, 15);
  CHECK(std::abs(lc.empirical - lc.exact) <= 4 * lc.se);

  for (unsigned i : {1u, 5u}) {
    const auto r = rwre_row_identity(l, i, 20000, 16 + i);
    CHECK(r.exact == doctest::Approx(1 + std::exp(0.25) / 2 * (i + 1)));
    CHECK(std::abs(r.empirical - r.exact) <= 4 * r.se);
  }
  // biased row identity is the chain mean
  CHECK(rwre_row_identity(b, 3, 10, 1).exact == doctest::Approx(chain_mean(3, 2.0)));
}

TEST_CASE("biased environment reproduces the biased-walk gates") {
  VerifyConfig v;
  v.make_quick();
  const std::vector<std::string> only{"range", "clt"};
  const auto ref = run_verify(v, only);

  RwreConfig c;
  c.make_quick();
  c.range_n = v.range_n;
  c.range_reps = v.range_reps;
  c.clt_n = v.clt_n;
  c.clt_reps = v.clt_reps;
  Report r;
  rwre_scaling_gates(EnvironmentLaw::biased(kBinary, 2.0), 1.0, 0.5, c, r, "");
  auto estimate = [](const Report& rep, const std::string& name) {
    for (const auto& g : rep.gates)
      if (g.name == name) return g.estimate;
    FAIL("missing gate ", name);
    return 0.0;
  };
  for (const char* name : {"clt.ks", "clt.mean", "range.R_density"}) CHECK(estimate(r, name) == estimate(ref, name));
}

TEST_CASE("rwre configuration and quick suite") {
  RwreConfig c;
  c.apply_text("env = lognormal:0.3\nseries_cap=80\n");
  CHECK(c.env == "lognormal:0.3");
  CHECK(c.series_cap == 80);
  CHECK_THROWS_AS(c.apply_text("nope=1"), std::invalid_argument);

  RwreConfig q;
  q.make_quick();
  q.threads = 1;
  const auto one = run_rwre_verify(q);
  q.threads = 3;
  const auto three = run_rwre_verify(q);
  CHECK(one.to_json() == three.to_json());
  for (const auto* g : one.group("rwre.kernel_reduction")) CHECK(g->pass);
  for (const auto* g : one.group("rwre.sigma2_reduction")) CHECK(g->pass);
  for (const auto* g : one.group("rwre.spine_reduction")) CHECK(g->pass);

  RwreConfig off;
  off.env = "biased";
  off.lambda = 3.0;
  CHECK_THROWS_AS(run_rwre_verify(off), RegimeError);
}
