#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <optional>
#include <span>
#include <vector>

#include "gwtrace/gw_tree.hpp"
#include "gwtrace/rng.hpp"
#include "gwtrace/stats.hpp"

namespace gwtrace {

/// log C(n, k) for real n >= k >= 0.
double log_binomial(double n, double k) noexcept;

/// m_{i,j} = C(i+j-1, j) m^(i+1) / (m+1)^(i+j), evaluated in log space.
double mean_matrix_entry(unsigned i, unsigned j, double m);

/// Spine transition p_hat(i, j) = m_{i,j} b_j / b_i = C(i+j-1, i) m^(i+1) / (m+1)^(i+j).
double nhat_probability(unsigned i, unsigned j, double m);

/// P(G = j - 1) for G negative binomial with size i+1 and success m/(m+1),
/// written from the textbook pmf rather than from p_hat.
double negbin_probability(unsigned i, unsigned j, double m);

struct SpectralData {
  double m = 0;
  unsigned K = 0;
  std::vector<double> a, b, pi;  // index 0 holds i = 1
};

SpectralData spectral_data(double m, unsigned K);

/// Eigen residuals over the K x K block.  The raw_* values use only the
/// truncated matrix.  The corrected residuals extend each series past K
/// until its terms fall below 1e-18 of the partial sum and are decreasing;
/// the leftover is bounded by a geometric series and reported as *_tail.
struct SpectralResiduals {
  double m = 0;
  unsigned K = 0;
  double residual_left = 0;   // || aM - a ||_1 over j <= K
  double residual_right = 0;  // || Mb - b ||_inf over i <= K
  double raw_left = 0;
  double raw_right = 0;
  double tail_left = 0;
  double tail_right = 0;
  double a_mass = 0;   // sum_{i<=K} a_i
  double pi_mass = 0;  // sum_{i<=K} pi_i
};

SpectralResiduals spectral_residuals(double m, unsigned K);

/// max over i, j <= n of |pi_i p(i,j) - pi_j p(j,i)| / max(...), and the absolute version.
struct BalanceError {
  double relative = 0;
  double absolute = 0;
};
BalanceError detailed_balance_error(double m, unsigned n);

/// max |p_hat(i,j) - negbin(i,j)| over i <= imax, j <= jmax.
double negbin_reduction_error(double m, unsigned imax, unsigned jmax);

/// sum_j p_hat(i, j) j by direct summation of the pmf.
double chain_mean(unsigned i, double m);

/// Q^i_{j,k} as displayed for the reduction framework (not validated here).
double q_constant(unsigned i, unsigned j, unsigned k, const OffspringLaw& law);

// ---------------------------------------------------------------------------

/// The sequences P_x: i.i.d. draws of the parent (weight lambda) or one of
/// the nu(x) children (weight 1 each).
struct LocalTimeOffspringSampler {
  double lambda;
  const OffspringLaw* law;
};

/// Draws nu, then counts child draws until the parent has been drawn i times.
/// counts.size() == nu on return.
void sample_children_local_times(unsigned i, const LocalTimeOffspringSampler& sampler, Stream& rng,
                                 std::vector<std::uint32_t>& counts);

struct LocalTimeTree {
  GrownTree tree;  // tags hold the types
  bool truncated = false;
};

/// Multi-type tree from a root of type k; type-0 children are pruned.
/// Generation `generation_cap` is produced but not expanded further.
LocalTimeTree sample_local_time_tree(unsigned k, const LocalTimeOffspringSampler& sampler, Stream& rng,
                                     std::size_t size_cap,
                                     unsigned generation_cap = std::numeric_limits<unsigned>::max());
/// Same, reusing the storage of `out`.
void sample_local_time_tree(unsigned k, const LocalTimeOffspringSampler& sampler, Stream& rng, std::size_t size_cap,
                            unsigned generation_cap, LocalTimeTree& out);

/// One step of N_hat, sampled through j - 1 ~ NegBin(i+1, m/(m+1)).
unsigned nhat_step(unsigned i, double m, Stream& rng);

/// gamma_1 = min{n >= 1 : N_hat_n = 1} from N_hat_0 = 1; nullopt past `cap` steps.
std::optional<std::uint64_t> return_time_sample(double m, Stream& rng, std::uint64_t cap);

/// Occupation counts of states 1..max_state (index 0 = state 1) and an
/// overflow cell, over `steps` steps from N_hat_0 = 1.
std::vector<double> occupation_counts(double m, std::uint64_t steps, unsigned max_state, Stream& rng);

/// CSV "step,state" of a chain trajectory.
std::string chain_trace_csv(double m, std::uint64_t steps, Stream& rng);

// ---------------------------------------------------------------------------

using PathFunction = std::function<double(std::span<const unsigned>)>;

struct ManyToOneEstimate {
  RunningStats lhs, rhs;
  [[nodiscard]] double joint_se() const { return std::sqrt(lhs.se() * lhs.se() + rhs.se() * rhs.se()); }
};

/// LHS: sum over generation-n vertices of the local-time tree of f(types
/// along the ancestral line, generations 1..n).  RHS: k f(N_hat_1..n)/N_hat_n
/// with N_hat_0 = k.  Each replica draws one tree and one chain path and
/// feeds every (f, n <= n_max) combination; result[f][n-1].  Replicas are
/// numbered from first_replica, so disjoint ranges can be merged.
std::vector<std::vector<ManyToOneEstimate>> many_to_one_batch(const std::vector<PathFunction>& fs, unsigned n_max,
                                                              unsigned k, const LocalTimeOffspringSampler& sampler,
                                                              std::uint64_t reps, std::uint64_t seed,
                                                              std::uint64_t first_replica = 0);

ManyToOneEstimate many_to_one_pair(const PathFunction& f, unsigned n, unsigned k,
                                   const LocalTimeOffspringSampler& sampler, std::uint64_t reps, std::uint64_t seed);

}  // namespace gwtrace
