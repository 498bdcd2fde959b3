#include "gwtrace/reduction.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

#include "gwtrace/errors.hpp"

namespace gwtrace {

namespace {

// walked-tree id -> T id
std::vector<VertexId> inverse_origin(const TypedTree& T) {
  VertexId top = 0;
  for (auto v : T.origin) top = std::max(top, v);
  std::vector<VertexId> inv(static_cast<std::size_t>(top) + 1, kNoVertex);
  for (VertexId i = 0; i < T.origin.size(); ++i) inv[T.origin[i]] = i;
  return inv;
}

VertexId lookup(const std::vector<VertexId>& inv, VertexId x) {
  if (x >= inv.size() || inv[x] == kNoVertex)
    throw ConsistencyError(fmt::format("walked vertex {} has no local time", x));
  return inv[x];
}

void check_excursion(const GrownTree& tree, std::span<const VertexId> ex) {
  if (ex.empty() || ex.front() != GrownTree::root() || ex.back() != GrownTree::root())
    throw ConsistencyError("an excursion starts and ends at the root");
  for (std::size_t n = 1; n < ex.size(); ++n) {
    const VertexId a = ex[n - 1], b = ex[n];
    if (a >= tree.size() || b >= tree.size() || (tree.parent(a) != b && tree.parent(b) != a))
      throw ConsistencyError(fmt::format("steps {} and {} of the excursion are not neighbours", n - 1, n));
  }
}

}  // namespace

TypedTree build_T(const GrownTree& tree, const LocalTimeField& field) {
  if (field.k != 1) throw std::invalid_argument("T is built from the first excursion only");
  if (field.counts.size() != tree.size()) throw std::invalid_argument("local-time field does not match the tree");
  TypedTree out;
  TreeBuilder b;
  std::vector<VertexId> local(tree.size(), kNoVertex);
  std::vector<std::uint32_t> tags;
  for (VertexId v = 0; v < tree.size(); ++v) {
    if (field.counts[v] == 0) continue;
    if (v == GrownTree::root()) {
      local[v] = b.add_root();
    } else {
      const VertexId p = local[tree.parent(v)];
      if (p == kNoVertex) throw ConsistencyError(fmt::format("vertex {} is visited but its parent is not", v));
      local[v] = b.add_child(p);
    }
    out.origin.push_back(v);
    tags.push_back(field.counts[v]);
  }
  out.tree = std::move(b).build();
  out.tree.set_tags(std::move(tags));
  return out;
}

TypedTree build_T(const GrownTree& tree, std::span<const VertexId> excursion) {
  check_excursion(tree, excursion);
  LocalTimeField field;
  field.k = 1;
  field.counts.assign(tree.size(), 0);
  field.counts[GrownTree::root()] = 1;
  for (std::size_t n = 1; n < excursion.size(); ++n)
    if (excursion[n - 1] == tree.parent(excursion[n])) ++field.counts[excursion[n]];
  return build_T(tree, field);
}

std::vector<std::uint32_t> first_hit_ranks(const TypedTree& T, std::span<const VertexId> excursion) {
  const auto inv = inverse_origin(T);
  std::vector<std::uint32_t> rank(T.tree.size(), kNoVertex);
  std::uint32_t next = 0;
  for (auto x : excursion) {
    const auto t = lookup(inv, x);
    if (rank[t] == kNoVertex) rank[t] = next++;
  }
  if (next != T.tree.size()) throw ConsistencyError("the excursion misses vertices of T");
  return rank;
}

TypedReducedTree build_reduced_r(const TypedTree& T, std::span<const std::uint32_t> first_hit_rank) {
  const auto& t = T.tree;
  const std::size_t n = t.size();
  if (first_hit_rank.size() != n) throw std::invalid_argument("one rank per vertex of T");
  if (!t.has_tags() || t.tag(GrownTree::root()) != 1) throw std::invalid_argument("T needs a type-1 root");
  std::vector<VertexId> by_rank(n, kNoVertex);
  for (VertexId v = 0; v < n; ++v) {
    const auto r = first_hit_rank[v];
    if (r >= n || by_rank[r] != kNoVertex) throw std::invalid_argument("ranks are not a permutation");
    by_rank[r] = v;
  }
  if (by_rank[0] != GrownTree::root()) throw std::invalid_argument("the root must be hit first");

  std::vector<VertexId> ya(n, kNoVertex);  // youngest strict type-1 ancestor
  TypedReducedTree out;
  TreeBuilder b;
  b.add_root();
  out.kind.push_back(VertexKind::fertile);
  out.first_hit_rank.push_back(0);
  out.source.push_back(GrownTree::root());
  for (std::size_t r = 1; r < n; ++r) {
    const VertexId v = by_rank[r];
    const VertexId p = t.parent(v);
    ya[v] = t.tag(p) == 1 ? p : ya[p];
    if (first_hit_rank[ya[v]] >= r) throw ConsistencyError("an ancestor is hit after its descendant");
    b.add_child(first_hit_rank[ya[v]], static_cast<double>(t.depth(v) - t.depth(ya[v])));
    out.kind.push_back(t.tag(v) == 1 ? VertexKind::fertile : VertexKind::sterile);
    out.first_hit_rank.push_back(static_cast<std::uint32_t>(r));
    out.source.push_back(v);
  }
  out.tree = std::move(b).build();
  return out;
}

TypedReducedTree build_reduced_w(const TypedReducedTree& r, const TypedTree& T, std::span<const VertexId> excursion) {
  const auto& t = T.tree;
  const auto inv = inverse_origin(T);
  std::vector<VertexId> node_of(t.size(), kNoVertex);  // T id -> T^(r) node
  for (VertexId q = 0; q < r.source.size(); ++q) node_of[r.source[q]] = q;

  if (excursion.empty() || lookup(inv, excursion.front()) != GrownTree::root())
    throw ConsistencyError("an excursion starts at the root");
  if (lookup(inv, excursion.back()) != GrownTree::root()) throw ConsistencyError("an excursion ends at the root");

  // visits to x: entries from the parent plus returns from each child
  std::vector<std::uint64_t> expected(t.size(), 0), seen(t.size(), 0);
  expected[GrownTree::root()] = 1;
  for (VertexId v = 1; v < t.size(); ++v) {
    expected[v] += t.tag(v);
    expected[t.parent(v)] += t.tag(v);
  }

  std::vector<VertexId> wnode(t.size(), kNoVertex);
  TypedReducedTree out;
  TreeBuilder b;
  for (std::size_t n = 0; n < excursion.size(); ++n) {
    const VertexId x = lookup(inv, excursion[n]);
    ++seen[x];
    if (n > 0) {
      const VertexId prev = lookup(inv, excursion[n - 1]);
      if (t.parent(prev) != x && t.parent(x) != prev)
        throw ConsistencyError(fmt::format("steps {} and {} are not neighbours in T", n - 1, n));
    }
    const VertexId q = node_of[x];
    const bool fertile = r.kind[q] == VertexKind::fertile;
    VertexId id;
    if (q == GrownTree::root() && n == 0) {
      id = b.add_root();
      wnode[x] = id;
      out.kind.push_back(VertexKind::fertile);
    } else if (fertile && wnode[x] != kNoVertex) {
      id = b.add_child(wnode[x], 0.0);
      out.kind.push_back(VertexKind::sterile);
    } else {
      const VertexId anchor = wnode[r.source[r.tree.parent(q)]];
      if (anchor == kNoVertex) throw ConsistencyError("a vertex is visited before its type-1 ancestor");
      id = b.add_child(anchor, r.tree.edge_length(q));
      out.kind.push_back(fertile ? VertexKind::fertile : VertexKind::sterile);
      if (fertile) wnode[x] = id;
    }
    out.first_hit_rank.push_back(static_cast<std::uint32_t>(n));
    out.source.push_back(x);
  }
  if (seen != expected) throw ConsistencyError("visit counts disagree with the local times of T");
  out.tree = std::move(b).build();
  return out;
}

RestrictedHeight restricted_height(std::span<const TypedReducedTree> forest) {
  RestrictedHeight out;
  for (const auto& t : forest) {
    const auto ranking = dfs_order(t.tree);
    const auto h = height_function(t.tree, ranking).values;
    for (std::size_t k = 0; k < h.size(); ++k) {
      out.H.push_back(h[k]);
      if (t.kind[ranking.order[k]] == VertexKind::fertile) out.H_f.push_back(h[k]);
    }
  }
  return out;
}

std::string reduced_dump(const TypedReducedTree& t) {
  std::string out;
  for (VertexId v = 0; v < t.tree.size(); ++v) {
    const long long parent = v == GrownTree::root() ? -1 : static_cast<long long>(t.tree.parent(v));
    out += fmt::format("{} {} {} {} {}\n", v, parent, t.kind[v] == VertexKind::fertile ? 'f' : 's',
                       t.tree.edge_length(v), t.first_hit_rank[v]);
  }
  return out;
}

std::string height_csv(std::span<const double> heights) {
  std::string out = "rank,height\n";
  for (std::size_t k = 0; k < heights.size(); ++k) out += fmt::format("{},{}\n", k, heights[k]);
  return out;
}

// ---------------------------------------------------------------------------

ForestSequence forest_sequence(std::span<const TypedReducedTree> forest) {
  ForestSequence out;
  for (const auto& t : forest) {
    const auto ranking = dfs_order(t.tree);
    for (auto v : ranking.order) {
      out.fertile.push_back(t.kind[v] == VertexKind::fertile);
      out.edge.push_back(t.tree.edge_length(v));
    }
  }
  return out;
}

std::uint64_t type1_index(const ForestSequence& forest, std::uint64_t k) {
  if (k < 1) throw std::invalid_argument("k starts at 1");
  std::uint64_t seen = 0;
  for (std::size_t i = 0; i < forest.fertile.size(); ++i)
    if (forest.fertile[i] && ++seen == k) return i;
  throw std::out_of_range(fmt::format("the forest holds {} fertile vertices, {} requested", seen, k));
}

double max_explored_edge(const ForestSequence& forest, std::uint64_t n) {
  const auto last = type1_index(forest, n);
  double best = 0.0;
  for (std::size_t i = 0; i <= last; ++i) best = std::max(best, forest.edge[i]);
  return best;
}

ForestRecord scan_forest(const OffspringLaw& law, double lambda, std::uint64_t seed, std::uint64_t replica,
                         const ForestOptions& options) {
  const Stream growth_base = Stream::for_replica(seed, replica, substream::growth);
  const Stream walk_base = Stream::for_replica(seed, replica, substream::walk);
  ForestRecord rec;
  GrownTree tree;
  GwGrowth growth(law);
  std::vector<VertexId> ex;
  std::vector<std::uint32_t> count, index;
  std::uint64_t time = 0;
  for (std::uint64_t e = 0;; ++e) {
    if (rec.size() >= options.min_vertices && rec.fertile_count >= options.min_fertile) break;
    if (e >= options.max_excursions) throw ResourceError("forest scan ran out of excursions");
    tree.reset(growth_key_of(growth_base.split(e)));
    Walker walker(tree, growth, WalkKernel::biased(lambda), walk_base.split(e));
    ex.clear();
    if (!run_excursion(walker, options.budget, ex)) {
      ++rec.skipped;
      continue;
    }
    ++rec.trees;
    count.assign(tree.size(), 0);
    count[GrownTree::root()] = 1;
    for (std::size_t n = 1; n < ex.size(); ++n)
      if (ex[n - 1] == tree.parent(ex[n])) ++count[ex[n]];
    index.assign(tree.size(), kNoVertex);
    for (std::size_t n = 0; n < ex.size(); ++n) {
      const VertexId x = ex[n];
      if (index[x] == kNoVertex) {
        const auto g = static_cast<std::uint32_t>(rec.size());
        index[x] = g;
        rec.depth.push_back(tree.depth(x));
        if (x == GrownTree::root()) {
          rec.t_parent.push_back(kNoVertex);
          rec.r_parent.push_back(kNoVertex);
        } else {
          const auto p = index[tree.parent(x)];
          rec.t_parent.push_back(p);
          rec.r_parent.push_back(rec.fertile[p] ? p : rec.r_parent[p]);
        }
        rec.fertile.push_back(count[x] == 1);
        rec.fertile_count += count[x] == 1;
        rec.first_time.push_back(time + n);
      }
      if (options.keep_steps) rec.steps.push_back(index[x]);
    }
    time += ex.size();
  }
  return rec;
}

ForestSequence r_sequence(const ForestRecord& forest) {
  ForestSequence out;
  out.fertile = forest.fertile;
  out.edge.resize(forest.size());
  for (std::uint32_t v = 0; v < forest.size(); ++v) out.edge[v] = forest.r_edge(v);
  return out;
}

ForestSequence w_sequence(const ForestRecord& forest) {
  if (forest.steps.empty() && forest.size() > 0) throw std::invalid_argument("the scan did not keep its steps");
  ForestSequence out;
  out.fertile.resize(forest.steps.size());
  out.edge.resize(forest.steps.size());
  for (std::size_t t = 0; t < forest.steps.size(); ++t) {
    const auto v = forest.steps[t];
    const bool first = forest.first_time[v] == t;
    out.fertile[t] = forest.fertile[v] && first;
    out.edge[t] = forest.fertile[v] && !first ? 0.0 : forest.r_edge(v);
  }
  return out;
}

std::uint32_t first_hit_depth(const OffspringLaw& law, double lambda, std::uint64_t n, std::uint64_t seed,
                              std::uint64_t replica) {
  if (n < 1) throw std::invalid_argument("n starts at 1");
  const Stream growth_base = Stream::for_replica(seed, replica, substream::growth);
  const Stream walk_base = Stream::for_replica(seed, replica, substream::walk);
  GrownTree tree;
  GwGrowth growth(law);
  std::vector<std::uint8_t> seen;
  std::uint64_t found = 0;
  for (std::uint64_t e = 0;; ++e) {
    tree.reset(growth_key_of(growth_base.split(e)));
    Walker walker(tree, growth, WalkKernel::biased(lambda), walk_base.split(e));
    seen.assign(1, 1);
    if (++found == n) return 0;
    for (;;) {
      const VertexId v = walker.step();
      if (v == kArtificialParent) break;
      if (seen.size() < tree.size()) seen.resize(tree.size(), 0);
      if (!seen[v]) {
        seen[v] = 1;
        if (++found == n) return tree.depth(v);
      }
    }
  }
}

// ---------------------------------------------------------------------------

LimitConstants limit_constants(const OffspringLaw& law) {
  const double m = law.mean();
  const double s = law.second_factorial_moment();
  if (!(s > 0.0)) throw RegimeError("E[nu(nu-1)] = 0: sigma^2 is undefined for this law");
  if (!(m > 1.0)) throw RegimeError(fmt::format("offspring mean {} must exceed 1", m));
  LimitConstants c;
  c.m = m;
  c.lambda = m;
  c.a1 = (m - 1.0) / m;
  c.b1 = 1.0 - 1.0 / m;
  c.pi1 = c.a1 * c.b1;
  c.eta2 = 2.0 * s / (m * m);
  c.sigma2 = 2.0 * c.b1 / c.eta2;
  c.c1_r = c.a1;
  c.c1_w = c.a1 * c.b1 / 2.0;
  c.c2 = 1.0 / (c.a1 * c.b1);
  c.sigma_f = std::sqrt(c.eta2) / (c.b1 * std::sqrt(c.a1));
  return c;
}

}  // namespace gwtrace
