#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gwtrace/biased_walk.hpp"
#include "gwtrace/report.hpp"

namespace gwtrace {

/// t -> |X_{floor(nt)}| / sqrt(sigma2 n) at each grid time in [0, 1].
/// e_* counts as height -1.
std::vector<double> rescaled_height(const WalkPath& path, double sigma2, std::uint64_t n,
                                    std::span<const double> grid);

/// Finite metric sample, row-major distances.
struct FiniteMetric {
  std::size_t size = 0;
  std::vector<double> d;
  [[nodiscard]] double operator()(std::size_t i, std::size_t j) const noexcept { return d[i * size + j]; }
};

struct CodedTreeSample {
  std::vector<double> times;
  std::vector<double> g;
  FiniteMetric metric;  // d_g(s, t) = g(s) + g(t) - 2 min_{[s, t]} g over the sampled points
};

CodedTreeSample coded_tree(std::span<const double> times, std::span<const double> g);

struct DistortionReport {
  std::uint64_t pairs_sampled = 0;
  double max_distortion = 0;
  double gh_upper = 0;  // max_distortion / 2
};

/// Distortion of phi: A -> B; phi must be onto B and send point 0 to point 0.
DistortionReport gh_upper_bound(const FiniteMetric& a, const FiniteMetric& b, std::span<const std::size_t> phi);

/// Tree distance on a tree extended by e_* (height -1, parent of the root).
std::uint32_t tree_distance(const GrownTree& tree, VertexId x, VertexId y);

/// Compares d_tree(X_s, X_t) with d_g(s, t) of the height path over
/// `pairs` uniform pairs of times in [0, n].  The distortion is rescaled by
/// 1 / sqrt(sigma2 n).  Throws ConsistencyError if some pair has d_g < d_tree.
DistortionReport trace_vs_code_distortion(const GrownTree& tree, const WalkPath& path, std::uint64_t n,
                                          std::uint64_t pairs, double sigma2, Stream rng);

struct OneSidedness {
  std::uint64_t paths = 0;
  std::uint64_t pairs = 0;
  std::uint64_t violations = 0;
  std::uint64_t equalities = 0;
};

/// Enumerates every nearest-neighbour path of length <= max_len from the
/// root of a finite tree (reflected at e_*) and checks d_g >= d_tree on all pairs.
OneSidedness check_one_sidedness(const GrownTree& tree, unsigned max_len);

struct Estimate {
  double empirical = 0;
  double exact = 0;
  double se = 0;
};

/// Frequency with which the first excursion hits the depth-ell vertex along
/// the first-child line, on trees of `law` conditioned to contain that
/// vertex; exact (lambda-1)/(lambda^(ell+1)-1).
Estimate verify_hit_probability(const OffspringLaw& law, double lambda, unsigned ell, std::uint64_t reps,
                                std::uint64_t seed, unsigned threads = 1);

/// Mean of N_x^(k) for the same vertex; exact k lambda^-ell.
Estimate verify_expected_crossings(const OffspringLaw& law, double lambda, unsigned k, unsigned ell,
                                   std::uint64_t reps, std::uint64_t seed, unsigned threads = 1);

/// R_n = distinct vertices among X_0..X_n.  i_n counts, excursion by
/// excursion, first visits up to time n of vertices whose local time in
/// that excursion is 1.  complete is false if the excursion running at time
/// n had not ended within the path; i_n then uses the counts seen so far.
struct RangeStats {
  std::uint64_t n = 0;
  std::uint64_t range = 0;
  std::uint64_t type1 = 0;
  bool complete = true;
  [[nodiscard]] double range_density() const { return double(range) / double(n); }
  [[nodiscard]] double type1_density() const { return double(type1) / double(n); }
};

RangeStats range_statistics(const GrownTree& tree, const WalkPath& path, std::uint64_t n);

/// Same, walking n steps (and then up to overrun * n more to close the
/// running excursion) without storing the path.
RangeStats range_statistics_run(GrownTree& tree, GrowthHook& growth, const WalkKernel& kernel, std::uint64_t n,
                                std::uint64_t overrun, Stream rng);

// ---------------------------------------------------------------------------

struct VerifyConfig {
  std::string law = "binary";
  double lambda = 2.0;
  std::uint64_t seed = 7;
  unsigned threads = 1;

  unsigned spectral_K = 200;
  unsigned balance_n = 50;
  unsigned chain_imax = 30;
  std::uint64_t mto_reps = 1'000'000;
  unsigned mto_nmax = 3;
  std::uint64_t sampler_samples = 1'000'000;
  std::uint64_t hit_reps = 200'000;
  std::uint64_t identity_excursions = 10'000;
  std::uint64_t identity_budget = 1'000'000;
  std::uint64_t range_n = 1'000'000;
  std::uint64_t range_reps = 100;
  std::uint64_t range_overrun = 20;
  std::uint64_t clt_n = 100'000;
  std::uint64_t clt_reps = 10'000;
  std::uint64_t distortion_n0 = 10'000;
  unsigned distortion_levels = 3;
  std::uint64_t distortion_reps = 20;
  std::uint64_t distortion_pairs = 10'000;
  std::uint64_t forest_k = 100'000;
  std::uint64_t forest_reps = 20;
  std::uint64_t forest_budget = 10'000'000;
  std::uint64_t heights_n = 100'000;
  std::uint64_t heights_reps = 1000;

  double se_mult = 3.0;
  double tv_max = 0.01;
  double range_rel = 0.1;
  double ks_max = 0.05;
  double joint_rel = 0.15;
  double distortion_max = 0.2;
  double lbar_max = 0.05;
  double index_rel = 0.1;
  double heights_rel = 0.1;

  /// key=value lines ('#' comments); unknown keys and bad values throw
  /// std::invalid_argument naming the line.
  void apply_text(std::string_view text);
  void set(std::string_view key, std::string_view value);
  /// Shrinks every sample size for smoke runs.
  void make_quick();
  [[nodiscard]] std::vector<std::pair<std::string, std::string>> entries() const;
};

/// Gate groups in report order.
std::vector<std::string> verify_groups();

/// Every gate of the biased-walk suite, or only the listed groups.  Throws
/// RegimeError when the law leaves sigma^2 undefined or lambda differs from the mean.
Report run_verify(const VerifyConfig& config, std::span<const std::string> only = {});

}  // namespace gwtrace
