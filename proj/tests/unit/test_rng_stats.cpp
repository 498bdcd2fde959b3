#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "gwtrace/parallel.hpp"
#include "gwtrace/rng.hpp"
#include "gwtrace/stats.hpp"

using namespace gwtrace;

// Known-answer vectors published with the Random123 library.
TEST_CASE("philox4x32-10 known answers") {
  CHECK(philox4x32_10({0, 0, 0, 0}, {0, 0}) == PhiloxCounter{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(philox4x32_10({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
        PhiloxCounter{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(philox4x32_10({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
        PhiloxCounter{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("streams are pure functions of key, id and position") {
  Stream a(1, 2), b(1, 2), c(1, 3);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 1000; ++i) {
    const auto x = a();
    CHECK(x == b());
    seen.insert(x);
    seen.insert(c());
  }
  CHECK(seen.size() == 2000);
  CHECK(Stream(5, 6).split(1)() == Stream(5, 6).split(1)());
  CHECK(Stream(5, 6).split(1)() != Stream(5, 6).split(2)());
}

TEST_CASE("uniform draws are in range with the right mean") {
  Stream s(9, 9);
  RunningStats st;
  for (int i = 0; i < 200000; ++i) {
    const double u = s.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    st.add(u);
  }
  CHECK(std::abs(st.mean() - 0.5) < 3 * st.se() + 1e-12);
  CHECK(st.variance() == doctest::Approx(1.0 / 12).epsilon(0.01));
}

TEST_CASE("running stats merge matches a single pass") {
  RunningStats all, left, right;
  for (int i = 0; i < 100; ++i) {
    const double x = std::sin(i) * 3 + i * 0.01;
    all.add(x);
    (i < 37 ? left : right).add(x);
  }
  left.merge(right);
  CHECK(left.count() == all.count());
  CHECK(left.mean() == doctest::Approx(all.mean()).epsilon(1e-12));
  CHECK(left.variance() == doctest::Approx(all.variance()).epsilon(1e-12));

  RunningCovariance cv;
  for (int i = 0; i < 10; ++i) cv.add(i, 2.0 * i + 1);
  CHECK(cv.cov() == doctest::Approx(2.0 * cv.var_x()));
}

TEST_CASE("distribution helpers") {
  CHECK(half_normal_cdf(0.0) == 0.0);
  CHECK(half_normal_cdf(1.0) == doctest::Approx(0.682689492137).epsilon(1e-10));
  CHECK(normal_cdf(0.0) == doctest::Approx(0.5));
  // Exact sample quantiles give the minimal KS distance 1/(2n).
  std::vector<double> u;
  for (int i = 0; i < 10; ++i) u.push_back((i + 0.5) / 10);
  CHECK(ks_distance(u, [](double x) { return x; }) == doctest::Approx(0.05));
  const std::vector<double> p{1, 1, 0}, q{0, 1, 1};
  CHECK(total_variation(p, q) == doctest::Approx(0.5));
  const std::vector<double> x{1, 2, 3, 4}, y{3, 5, 7, 9};
  CHECK(ols_slope(x, y) == doctest::Approx(2.0));
  // E|B_t|^2 = t
  CHECK(abs_bm_cross_moment(0.7, 0.7) == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(abs_bm_cross_moment(0.0, 1.0) == doctest::Approx(0.0));
}

TEST_CASE("parallel_for writes every slot once regardless of thread count") {
  for (unsigned threads : {1u, 3u, 8u}) {
    std::vector<int> hits(1000, 0);
    parallel_for(hits.size(), threads, [&](std::size_t i) { hits[i] += static_cast<int>(i); });
    for (std::size_t i = 0; i < hits.size(); ++i) CHECK(hits[i] == static_cast<int>(i));
  }
  CHECK_THROWS(parallel_for(10, 4, [](std::size_t i) {
    if (i == 5) throw std::runtime_error("boom");
  }));
}
