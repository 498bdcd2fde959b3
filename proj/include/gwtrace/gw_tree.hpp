#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gwtrace/rng.hpp"

namespace gwtrace {

// ---------------------------------------------------------------------------
// Offspring laws
// ---------------------------------------------------------------------------

/// Law of the number of children nu.  Either a finite pmf (point masses
/// included) or a geometric law; both have E[nu^2] < infinity.
class OffspringLaw {
 public:
  enum class Kind { finite, geometric };

  /// nu == d almost surely.
  static OffspringLaw point_mass(unsigned d);
  /// P(nu = k) = (1 - q) q^k with mean q / (1 - q) = `mean`.
  static OffspringLaw geometric(double mean);
  /// pmf[k] = P(nu = k).  Rejects negative entries and sums off 1 by more than 1e-12.
  static OffspringLaw from_pmf(std::vector<double> pmf);
  /// "binary", "unary", "point:<d>", "geometric:<mean>", "pmf:<p0>,<p1>,..."
  static OffspringLaw parse(std::string_view descriptor);

  [[nodiscard]] Kind kind() const noexcept { return kind_; }
  [[nodiscard]] double mean() const noexcept { return mean_; }
  /// E[nu (nu - 1)]
  [[nodiscard]] double second_factorial_moment() const noexcept { return second_factorial_; }
  [[nodiscard]] double pmf(unsigned k) const noexcept;
  /// Largest k with positive mass, or nullopt for unbounded support.
  [[nodiscard]] std::optional<unsigned> max_support() const noexcept;
  /// Point mass value if nu is deterministic.
  [[nodiscard]] std::optional<unsigned> deterministic_value() const noexcept;
  /// Smallest fixed point of the generating function on [0, 1].
  [[nodiscard]] double extinction_probability() const;
  [[nodiscard]] const std::string& descriptor() const noexcept { return descriptor_; }

  /// Inverse-CDF draw; consumes exactly one uniform.
  unsigned sample(Stream& rng) const noexcept;

  /// Throws RegimeError unless m > 1.
  void require_supercritical() const;

 private:
  OffspringLaw() = default;
  void finish_finite();

  Kind kind_ = Kind::finite;
  std::vector<double> pmf_;
  std::vector<double> cdf_;
  double q_ = 0.0;  // geometric ratio
  double mean_ = 0.0;
  double second_factorial_ = 0.0;
  std::string descriptor_;
};

unsigned sample_offspring(const OffspringLaw& law, Stream& rng) noexcept;

// ---------------------------------------------------------------------------
// Flat tree table
// ---------------------------------------------------------------------------

using VertexId = std::uint32_t;

/// The artificial parent e_* of the root.
inline constexpr VertexId kArtificialParent = std::numeric_limits<VertexId>::max() - 1;
inline constexpr VertexId kNoVertex = std::numeric_limits<VertexId>::max();

/// Rooted ordered tree stored as an indexable vertex table.  The root is
/// vertex 0; parents always have smaller ids than their children.  A
/// vertex whose children have not been sampled yet is "unexpanded"; its
/// children appear on expand() with fresh consecutive ids, so existing ids
/// never move.
class GrownTree {
 public:
  GrownTree();

  [[nodiscard]] static constexpr VertexId root() noexcept { return 0; }
  [[nodiscard]] std::size_t size() const noexcept { return vertices_.size(); }

  [[nodiscard]] VertexId parent(VertexId v) const noexcept { return vertices_[v].parent; }
  [[nodiscard]] std::uint32_t depth(VertexId v) const noexcept { return vertices_[v].depth; }
  [[nodiscard]] bool expanded(VertexId v) const noexcept { return vertices_[v].child_count != kUnexpanded; }
  /// Empty for unexpanded vertices.
  [[nodiscard]] std::span<const VertexId> children(VertexId v) const noexcept {
    const Record& r = vertices_[v];
    if (r.child_count == kUnexpanded) return {};
    return {slots_.data() + r.first_slot, r.child_count};
  }
  [[nodiscard]] std::uint32_t child_count(VertexId v) const noexcept {
    const auto c = vertices_[v].child_count;
    return c == kUnexpanded ? 0 : c;
  }

  /// Length of the edge (parent(v), v); 1 unless lengths were set.
  [[nodiscard]] double edge_length(VertexId v) const noexcept {
    if (!edge_len_.empty()) return edge_len_[v];
    return v == root() ? 0.0 : 1.0;
  }
  [[nodiscard]] bool has_edge_lengths() const noexcept { return !edge_len_.empty(); }

  /// Integer tag (e.g. a local time), if tags are present.
  [[nodiscard]] bool has_tags() const noexcept { return !tags_.empty(); }
  [[nodiscard]] std::uint32_t tag(VertexId v) const noexcept { return tags_[v]; }
  void set_tags(std::vector<std::uint32_t> tags);
  void set_tag(VertexId v, std::uint32_t t) noexcept { tags_[v] = t; }

  /// Branching potential V(v) and the child weight exp(-(V(v) - V(parent))).
  [[nodiscard]] bool has_potential() const noexcept { return !potential_.empty(); }
  [[nodiscard]] double potential(VertexId v) const noexcept { return potential_[v]; }
  [[nodiscard]] double step_weight(VertexId v) const noexcept { return step_weight_[v]; }
  /// Starts potential marks on a root-only tree, V(e) = 0.
  void enable_potential();
  /// Overwrites V(v) without touching step weights.
  void set_potential(VertexId v, double value) noexcept { potential_[v] = value; }

  /// Growth label of v: a hash of its Neveu word.  Offspring of v are drawn
  /// from a stream keyed by (growth key, label), so the realized tree does
  /// not depend on the order in which vertices are expanded.
  [[nodiscard]] std::uint64_t label(VertexId v) const noexcept { return labels_[v]; }
  [[nodiscard]] std::uint64_t growth_key() const noexcept { return growth_key_; }
  void set_growth_key(std::uint64_t key) noexcept { growth_key_ = key; }

  /// Appends `count` children to an unexpanded vertex.
  std::span<const VertexId> expand(VertexId v, std::uint32_t count);
  /// Same, recording potential increments for the new children.
  std::span<const VertexId> expand_with_potential(VertexId v, std::span<const double> increments);

  /// Drops everything except an unexpanded root; keeps capacity.
  void reset(std::uint64_t growth_key);

  /// Vertex budget; expand() throws ResourceError beyond it.
  void set_max_vertices(std::size_t n) noexcept { max_vertices_ = n; }
  [[nodiscard]] std::size_t max_vertices() const noexcept { return max_vertices_; }

 private:
  friend class TreeBuilder;
  static constexpr std::uint32_t kUnexpanded = std::numeric_limits<std::uint32_t>::max();

  struct Record {
    VertexId parent;
    std::uint32_t depth;
    std::uint32_t first_slot;
    std::uint32_t child_count;
  };

  std::vector<Record> vertices_;
  std::vector<VertexId> slots_;
  std::vector<std::uint64_t> labels_;
  std::vector<double> edge_len_;
  std::vector<std::uint32_t> tags_;
  std::vector<double> potential_;
  std::vector<double> step_weight_;
  std::uint64_t growth_key_ = 0;
  std::size_t max_vertices_ = std::size_t{1} << 30;
};

/// Builds a fully expanded tree from parent links.  Vertices must be added
/// parent-first; siblings keep insertion order.
class TreeBuilder {
 public:
  VertexId add_root();
  VertexId add_child(VertexId parent, double edge_length = 1.0);
  [[nodiscard]] std::size_t size() const noexcept { return parents_.size(); }
  GrownTree build() &&;

 private:
  std::vector<VertexId> parents_;
  std::vector<double> lengths_;
  bool unit_lengths_ = true;
};

/// Draws nu(v) from the stream keyed by (tree growth key, label(v)) and
/// expands v.
void expand_gw(GrownTree& tree, VertexId v, const OffspringLaw& law);

/// Growth key of a tree grown from `rng`.
std::uint64_t growth_key_of(const Stream& rng) noexcept;

/// Breadth-first realization truncated at `generation_cap`: vertices of
/// depth < cap are expanded, those at depth cap are left as the frontier.
GrownTree grow_tree(const OffspringLaw& law, const Stream& rng, unsigned generation_cap,
                    std::size_t max_vertices = std::size_t{1} << 26);

/// Rejection against extinction before `generation_cap`.  Attempt 0 is
/// grow_tree(law, rng, ...) itself; attempt a > 0 uses rng.split(a).
GrownTree condition_on_survival(const OffspringLaw& law, const Stream& rng, unsigned generation_cap,
                                unsigned max_retries, std::size_t max_vertices = std::size_t{1} << 26);

/// Number of vertices at depth n; throws if generation n is not fully materialized.
std::size_t generation_size(const GrownTree& tree, unsigned n);

/// Depth-first (lexicographic) ranking of the materialized vertices.
struct Ranking {
  std::vector<VertexId> order;         // rank -> vertex
  std::vector<std::uint32_t> rank_of;  // vertex -> rank
};

Ranking dfs_order(const GrownTree& tree);

struct HeightFunction {
  std::vector<double> values;  // indexed by depth-first rank
};

/// values[k] = sum of edge lengths from the root to the vertex of rank k.
HeightFunction height_function(const GrownTree& tree, const Ranking& ranking);

/// Distance from the root for every vertex, indexed by id.
std::vector<double> vertex_heights(const GrownTree& tree);

/// Kesten-Stigum martingale W_n = m^-n #{|x| = n}, m taken from the law.
double ks_martingale_value(const GrownTree& tree, const OffspringLaw& law, unsigned n);

/// "id parent_id depth edge_len" lines after a "# law=... seed=..." header.
/// The root's parent is written as -1.  With potentials, a V column is appended.
std::string dump_tree(const GrownTree& tree, std::string_view law_descriptor, std::uint64_t seed);

}  // namespace gwtrace
