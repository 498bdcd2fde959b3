#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gwtrace/biased_walk.hpp"
#include "gwtrace/gw_tree.hpp"
#include "gwtrace/report.hpp"
#include "gwtrace/scaling_lab.hpp"

namespace gwtrace {

/// Law of one generation of the branching potential: nu children, each
/// with an increment V(xi) - V(x).
///   biased:    increment ln(lambda), so V(x) = |x| ln(lambda)
///   lognormal: i.i.d. increments ln(m) + Normal(s2 / 2, s2), so psi(1) = 1
class EnvironmentLaw {
 public:
  enum class Kind { biased, lognormal };

  static EnvironmentLaw biased(const OffspringLaw& law, double lambda);
  static EnvironmentLaw lognormal(const OffspringLaw& law, double s2);
  /// "biased" or "lognormal:<s2>"; `law` and `lambda` fill in the rest.
  static EnvironmentLaw parse(std::string_view descriptor, const OffspringLaw& law, double lambda);

  [[nodiscard]] Kind kind() const noexcept { return kind_; }
  [[nodiscard]] const OffspringLaw& offspring() const noexcept { return law_; }
  [[nodiscard]] double lambda() const noexcept { return lambda_; }
  [[nodiscard]] double s2() const noexcept { return s2_; }
  [[nodiscard]] std::string descriptor() const;

  /// psi(t) = E[sum_{|x|=1} exp(-t V(x))], closed form.
  [[nodiscard]] double psi(double t) const;
  /// E[sum_{x != y, |x|=|y|=1} exp(-V(x) - V(y))], closed form.
  [[nodiscard]] double pair_moment() const;
  /// Mean and variance of the spine step S_1, closed form.
  [[nodiscard]] double spine_mean() const;
  [[nodiscard]] double spine_variance() const;

  /// The kernel the walk uses: biased(lambda) for the biased law, which is
  /// the same chain, and the exp(-V) weights otherwise.
  [[nodiscard]] WalkKernel kernel() const;

  /// Draws nu and the increments of one vertex's children.
  void draw(Stream& rng, std::vector<double>& increments) const;
  /// One draw of the spine step S_1 (the size-biased increment).
  double spine_step(Stream& rng) const;

 private:
  EnvironmentLaw(Kind kind, const OffspringLaw& law, double lambda, double s2)
      : kind_(kind), law_(law), lambda_(lambda), s2_(s2) {}

  Kind kind_;
  OffspringLaw law_;
  double lambda_ = 0;
  double s2_ = 0;
};

/// Lazy growth of an environment.  Offspring and increments of v come from
/// the stream keyed by (growth key, label(v)), like expand_gw; for the
/// biased law the number of children is the same draw, so the trees agree.
class EnvironmentGrowth final : public GrowthHook {
 public:
  explicit EnvironmentGrowth(const EnvironmentLaw& law) : law_(&law) {}
  void expand(GrownTree& tree, VertexId v) override;

 private:
  const EnvironmentLaw* law_;
  std::vector<double> increments_;
};

struct BranchingEnvironment {
  GrownTree tree;  // potential marks set, V(e) = 0
  [[nodiscard]] double V(VertexId v) const noexcept {
    return v == kArtificialParent ? 0.0 : tree.potential(v);
  }
};

/// Environment expanded down to depth `cap` (vertices at depth cap stay
/// unexpanded and can be grown lazily).
BranchingEnvironment sample_environment(const EnvironmentLaw& law, unsigned cap, const Stream& rng,
                                        std::size_t max_vertices = std::size_t{1} << 26);

/// (parent, child_1, ..., child_d) probabilities from the absolute
/// potentials: weight exp(-V(v)) for the parent, exp(-V(vi)) for child i.
std::vector<double> rwre_step_probabilities(const BranchingEnvironment& env, VertexId v);

/// One step of the reflected walk in the environment.
VertexId rwre_step(BranchingEnvironment& env, const EnvironmentLaw& law, VertexId current, Stream& rng);

/// Largest |p - p_biased| over the transition probabilities of the
/// materialized vertices, p from rwre_step_probabilities.
double kernel_reduction_error(const BranchingEnvironment& env, double lambda);

/// psi(1), psi(2), the pair moment and sigma^2 = (1 - psi(2)) / pair:
/// closed forms in `exact`, Monte Carlo over `reps` generations in
/// `empirical` (sigma^2 with a delta-method SE).  Throws RegimeError if
/// psi(2) >= 1 or the pair moment vanishes.
struct PsiProfile {
  Estimate psi1, psi2, pair_moment, sigma2;
  std::uint64_t reps = 0;
};

PsiProfile psi_profile(const EnvironmentLaw& law, std::uint64_t reps, std::uint64_t seed, unsigned threads = 1);

std::string psi_json(const PsiProfile& p);

/// b1 = E[1 / (1 + Sigma)], a1 = E[(1 + Sigma)^-2] / b1 with
/// Sigma = sum_{l >= 1} exp(-S_l) cut at series_cap terms.  The biased law
/// has a deterministic spine and needs no sampling.
struct SpineConstants {
  double a1 = 0, b1 = 0;
  double a1_se = 0, b1_se = 0;
  double drift = 0, drift_se = 0;  // sample mean of S_1
  double tail_bound = 0;           // E of the dropped terms: psi(2)^(cap+1) / (1 - psi(2))
  std::uint64_t reps = 0;
};

/// Throws RegimeError unless psi(1) = 1 and the estimated drift is positive;
/// std::invalid_argument for series_cap < 50.
SpineConstants spine_constants(const EnvironmentLaw& law, std::uint64_t reps, unsigned series_cap, std::uint64_t seed,
                               unsigned threads = 1);

/// m_{i,j} = C(i+j-1, j) E[sum_{|x|=1} exp(-jV(x)) / (1 + exp(-V(x)))^(i+j)]
/// averaged over `reps` sampled generations.
Estimate rwre_mean_entry(const EnvironmentLaw& law, unsigned i, unsigned j, std::uint64_t reps, std::uint64_t seed);

/// Per-environment oracles along the first-child line at depth ell:
/// hit: P_V(N_x^(1) >= 1) = 1 / (1 + e^V(x_1) + ... + e^V(x));
/// crossings: E_V[N_x^(k)] = k e^-V(x).
/// `empirical` and `exact` are averages over environments; `se` is the
/// standard error of their difference.
Estimate rwre_hit_probability(const EnvironmentLaw& law, unsigned ell, std::uint64_t reps, std::uint64_t seed,
                              unsigned threads = 1);
Estimate rwre_expected_crossings(const EnvironmentLaw& law, unsigned k, unsigned ell, std::uint64_t reps,
                                 std::uint64_t seed, unsigned threads = 1);

/// E[sum_{|x|=1} N_x^2 | N_e = i] / i, i.e. sum_j p_hat(i, j) j, by running
/// i excursions per sampled environment; exact psi(1) + psi(2) (i + 1).
Estimate rwre_row_identity(const EnvironmentLaw& law, unsigned i, std::uint64_t reps, std::uint64_t seed,
                           unsigned threads = 1);

// ---------------------------------------------------------------------------

struct RwreConfig {
  std::string law = "binary";
  double lambda = 2.0;
  std::string env = "lognormal:0.25";
  std::uint64_t seed = 7;
  unsigned threads = 1;

  std::uint64_t psi_reps = 1'000'000;
  std::uint64_t spine_reps = 1'000'000;
  unsigned series_cap = 200;
  unsigned kernel_depth = 12;
  std::uint64_t kernel_trees = 20;
  std::uint64_t identity_reps = 200'000;
  std::uint64_t row_reps = 100'000;
  unsigned row_imax = 10;
  std::uint64_t clt_n = 100'000;
  std::uint64_t clt_reps = 10'000;
  std::uint64_t range_n = 1'000'000;
  std::uint64_t range_reps = 100;
  std::uint64_t range_overrun = 20;

  double se_mult = 3.0;
  double ks_max = 0.05;
  double range_rel = 0.1;
  double spine_se_max = 0.005;

  void apply_text(std::string_view text);
  void set(std::string_view key, std::string_view value);
  void make_quick();
  [[nodiscard]] std::vector<std::pair<std::string, std::string>> entries() const;
};

/// Criterion gates of the random-environment suite: reductions of the
/// biased law, psi profile, spine constants, per-environment identities,
/// the row identity and the CLT and range gates.
Report run_rwre_verify(const RwreConfig& config);

/// CLT and range gates for one environment law, seeded like the biased-walk
/// suite so that the biased law reproduces its numbers.  sigma2 and b1 are
/// the limit constants to test against.
void rwre_scaling_gates(const EnvironmentLaw& law, double sigma2, double b1, const RwreConfig& config,
                        Report& report, const std::string& prefix);

}  // namespace gwtrace
