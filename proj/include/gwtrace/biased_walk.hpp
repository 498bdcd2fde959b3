#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "gwtrace/gw_tree.hpp"
#include "gwtrace/rng.hpp"

namespace gwtrace {

/// Transition weights.  biased: parent lambda, each child 1.  potential:
/// parent 1, child y weight exp(-(V(y) - V(x))), read from the tree marks.
struct WalkKernel {
  enum class Kind { biased, potential };
  Kind kind = Kind::biased;
  double lambda = 2.0;

  static WalkKernel biased(double lambda) { return {Kind::biased, lambda}; }
  static WalkKernel potential() { return {Kind::potential, 1.0}; }
};

/// Materializes the children of a vertex on the walk's first arrival.
class GrowthHook {
 public:
  virtual ~GrowthHook() = default;
  virtual void expand(GrownTree& tree, VertexId v) = 0;
};

class GwGrowth final : public GrowthHook {
 public:
  explicit GwGrowth(const OffspringLaw& law) : law_(&law) {}
  void expand(GrownTree& tree, VertexId v) override { expand_gw(tree, v, *law_); }

 private:
  const OffspringLaw* law_;
};

/// For trees that are already complete; reaching an unexpanded vertex is an error.
class NoGrowth final : public GrowthHook {
 public:
  void expand(GrownTree& tree, VertexId v) override;
};

/// (parent, child_1, ..., child_d) transition probabilities at v.
std::vector<double> step_probabilities(const GrownTree& tree, VertexId v, const WalkKernel& kernel);

/// One step of the reflected walk.  From e_* the walk moves to e; otherwise
/// the children of `current` are grown first if needed.
VertexId walk_step(GrownTree& tree, GrowthHook& growth, VertexId current, const WalkKernel& kernel, Stream& rng);

/// Streaming walker.  With a censor depth D, a vertex at depth >= D always
/// steps to its parent and is never expanded.  For a recurrent walk this
/// leaves the law of every local time at depth <= D unchanged, because each
/// excursion below depth D returns almost surely.
class Walker {
 public:
  Walker(GrownTree& tree, GrowthHook& growth, WalkKernel kernel, Stream rng)
      : tree_(&tree), growth_(&growth), kernel_(kernel), rng_(rng) {}

  void set_censor_depth(std::uint32_t depth) noexcept { censor_ = depth; }

  [[nodiscard]] VertexId position() const noexcept { return pos_; }
  /// |X_n|, with e_* at height -1.
  [[nodiscard]] int height() const noexcept { return height_; }
  [[nodiscard]] std::uint64_t time() const noexcept { return time_; }
  [[nodiscard]] std::uint64_t returns() const noexcept { return returns_; }

  VertexId step() {
    ++time_;
    if (pos_ == kArtificialParent) {
      pos_ = GrownTree::root();
      height_ = 0;
      return pos_;
    }
    if (static_cast<std::uint32_t>(height_) >= censor_) {
      up();
      return pos_;
    }
    if (!tree_->expanded(pos_)) growth_->expand(*tree_, pos_);
    const auto kids = tree_->children(pos_);
    const double u = rng_.uniform();
    if (kernel_.kind == WalkKernel::Kind::biased) {
      const double x = u * (kernel_.lambda + static_cast<double>(kids.size()));
      if (x < kernel_.lambda) {
        up();
      } else {
        const auto i = std::min<std::size_t>(static_cast<std::size_t>(x - kernel_.lambda), kids.size() - 1);
        pos_ = kids[i];
        ++height_;
      }
      return pos_;
    }
    double total = 1.0;
    for (VertexId c : kids) total += tree_->step_weight(c);
    double x = u * total - 1.0;
    if (x < 0.0) {
      up();
      return pos_;
    }
    for (VertexId c : kids) {
      x -= tree_->step_weight(c);
      if (x < 0.0) {
        pos_ = c;
        ++height_;
        return pos_;
      }
    }
    pos_ = kids.back();
    ++height_;
    return pos_;
  }

 private:
  void up() noexcept {
    pos_ = tree_->parent(pos_);
    if (--height_ < 0) ++returns_;
  }

  GrownTree* tree_;
  GrowthHook* growth_;
  WalkKernel kernel_;
  Stream rng_;
  VertexId pos_ = GrownTree::root();
  int height_ = 0;
  std::uint64_t time_ = 0;
  std::uint64_t returns_ = 0;
  std::uint32_t censor_ = std::numeric_limits<std::uint32_t>::max();
};

struct WalkPath {
  std::vector<VertexId> vertices;  // X_0 = e, ..., X_n; e_* is kArtificialParent
  std::vector<int> heights;        // |X_k|, -1 at e_*
  std::vector<std::uint64_t> tau;  // indices k >= 1 with X_k = e_*
  bool critical = true;            // lambda == m
};

struct WalkOptions {
  bool allow_noncritical = false;
  std::size_t max_vertices = std::size_t{1} << 28;
  std::uint64_t replica = 0;
};

struct WalkRun {
  GrownTree tree;
  WalkPath path;
};

/// Walk of n_steps on a lazily grown GW tree.  Tree growth and walk steps
/// use separate sub-streams of (seed, replica).
WalkRun run_walk(const OffspringLaw& law, double lambda, std::uint64_t n_steps, std::uint64_t seed,
                 const WalkOptions& options = {});

/// Same, on a given (possibly partly grown) tree.
WalkPath run_walk_on(GrownTree& tree, GrowthHook& growth, const WalkKernel& kernel, std::uint64_t n_steps,
                     Stream rng);

std::vector<std::uint64_t> excursion_times(const WalkPath& path);

/// N_x^(k) for every vertex id of the tree; counts[e] = k.
struct LocalTimeField {
  std::vector<std::uint32_t> counts;
  std::uint32_t k = 0;
};

LocalTimeField local_time_field(const GrownTree& tree, const WalkPath& path, std::uint32_t k);

/// The trace R_n as a tree of its own: ids follow first visits, siblings
/// are ordered by first visit, origin[i] is the id in the walked tree.
struct TraceTree {
  GrownTree tree;
  std::vector<VertexId> origin;
};

TraceTree trace_tree(const GrownTree& tree, const WalkPath& path, std::uint64_t n);

/// Runs one excursion from e until the walk hits e_*.  Visited vertices
/// X_0..X_{tau-1} are appended to `out`.  Returns false, leaving a partial
/// excursion in `out`, if `budget` steps pass first.
bool run_excursion(Walker& walker, std::uint64_t budget, std::vector<VertexId>& out);

/// Path dump: "step,vertex_id,height"; e_* is written as vertex -1.
std::string path_csv(const WalkPath& path);

/// Throws RegimeError when lambda differs from m and exploration was not requested.
void check_bias(const OffspringLaw& law, double lambda, bool allow_noncritical);

}  // namespace gwtrace
