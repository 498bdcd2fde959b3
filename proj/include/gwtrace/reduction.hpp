#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gwtrace/biased_walk.hpp"
#include "gwtrace/gw_tree.hpp"

namespace gwtrace {

/// T: the vertices of positive local time N^(1), tagged with it.  Ids keep
/// the relative order of the walked tree; origin[i] is the walked-tree id.
struct TypedTree {
  GrownTree tree;
  std::vector<VertexId> origin;
};

TypedTree build_T(const GrownTree& tree, const LocalTimeField& field);

/// T from one complete excursion X_0 = e, ..., X_{tau-1}.
TypedTree build_T(const GrownTree& tree, std::span<const VertexId> excursion);

enum class VertexKind : std::uint8_t { fertile, sterile };

struct TypedReducedTree {
  GrownTree tree;  // edge lengths set
  std::vector<VertexKind> kind;
  std::vector<std::uint32_t> first_hit_rank;
  std::vector<VertexId> source;  // vertex of T that the node stands for
};

/// First-hit rank of every vertex of T along the excursion.
std::vector<std::uint32_t> first_hit_ranks(const TypedTree& T, std::span<const VertexId> excursion);

/// T^(r): each vertex hangs from its youngest strict ancestor of type 1, at
/// distance the generation gap.  Node ids (and sibling order) follow first_hit_rank.
TypedReducedTree build_reduced_r(const TypedTree& T, std::span<const std::uint32_t> first_hit_rank);

/// T^(w): one node per step of the excursion.  A fertile vertex gets its own
/// node on the first visit and a zero-length sterile child on each later
/// visit; every visit to a sterile vertex adds a copy of its T^(r) edge.
/// Throws ConsistencyError if the excursion does not match T.
TypedReducedTree build_reduced_w(const TypedReducedTree& r, const TypedTree& T, std::span<const VertexId> excursion);

struct RestrictedHeight {
  std::vector<double> H;    // every vertex, depth-first
  std::vector<double> H_f;  // fertile vertices only
};

/// Height function of the forest (trees in the given order) and its
/// restriction to fertile vertices.
RestrictedHeight restricted_height(std::span<const TypedReducedTree> forest);

/// "id parent_id type edge_len first_hit_rank", root parent -1, type f or s.
std::string reduced_dump(const TypedReducedTree& t);

/// "rank,height"
std::string height_csv(std::span<const double> heights);

// ---------------------------------------------------------------------------
// Forests of i.i.d. excursions, streamed in first-hit order

/// A forest reduced to what the scans need, in depth-first order of its trees.
struct ForestSequence {
  std::vector<std::uint8_t> fertile;
  std::vector<double> edge;
};

ForestSequence forest_sequence(std::span<const TypedReducedTree> forest);

/// u(k): 0-based depth-first index of the k-th fertile vertex (k >= 1).
/// Throws if the forest has fewer.
std::uint64_t type1_index(const ForestSequence& forest, std::uint64_t k);

/// Largest edge among vertices up to and including the n-th fertile one.
double max_explored_edge(const ForestSequence& forest, std::uint64_t n);

/// Excursions on fresh trees, one after the other.  Vertex records are
/// indexed by global first-hit order, which is the depth-first order of the
/// T^(r) forest; step records give the T^(w) forest in its depth-first order.
struct ForestRecord {
  std::vector<std::uint32_t> depth;
  std::vector<std::uint32_t> t_parent;  // kNoVertex at roots
  std::vector<std::uint32_t> r_parent;  // kNoVertex at roots
  std::vector<std::uint8_t> fertile;
  std::vector<std::uint64_t> first_time;
  std::vector<std::uint32_t> steps;  // vertex index at each step, e_* excluded
  std::uint64_t trees = 0;
  std::uint64_t skipped = 0;  // excursions dropped for exceeding the budget
  std::uint64_t fertile_count = 0;

  [[nodiscard]] std::size_t size() const noexcept { return depth.size(); }
  [[nodiscard]] std::uint32_t r_edge(std::uint32_t v) const noexcept {
    return r_parent[v] == kNoVertex ? 0 : depth[v] - depth[r_parent[v]];
  }
};

struct ForestOptions {
  std::uint64_t min_vertices = 0;
  std::uint64_t min_fertile = 0;
  std::uint64_t budget = 10'000'000;  // steps per excursion
  std::uint64_t max_excursions = 100'000'000;
  bool keep_steps = true;
};

/// Runs excursions until both minimums are met.  Excursion e uses the
/// growth and walk streams of (seed, replica) split by e.
ForestRecord scan_forest(const OffspringLaw& law, double lambda, std::uint64_t seed, std::uint64_t replica,
                         const ForestOptions& options);

ForestSequence r_sequence(const ForestRecord& forest);
ForestSequence w_sequence(const ForestRecord& forest);

/// Depth of the n-th distinct vertex (n >= 1) visited by a walk that starts
/// on a fresh tree after each return to e_*; the T^(r) forest height at index n-1.
std::uint32_t first_hit_depth(const OffspringLaw& law, double lambda, std::uint64_t n, std::uint64_t seed,
                              std::uint64_t replica);

// ---------------------------------------------------------------------------

struct LimitConstants {
  double m = 0, lambda = 0;
  double a1 = 0, b1 = 0, pi1 = 0;
  double eta2 = 0, sigma2 = 0;
  double c1_r = 0, c1_w = 0, c2 = 0, sigma_f = 0;
};

/// Throws RegimeError for m <= 1 or E[nu(nu-1)] = 0 (sigma^2 undefined).
LimitConstants limit_constants(const OffspringLaw& law);

}  // namespace gwtrace
