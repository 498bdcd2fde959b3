#include "gwtrace/biased_walk.hpp"

#include <cmath>
#include <fmt/format.h>

#include "gwtrace/errors.hpp"

namespace gwtrace {

void NoGrowth::expand(GrownTree&, VertexId v) {
  throw ConsistencyError(fmt::format("walk reached vertex {} beyond the pre-grown tree", v));
}

std::vector<double> step_probabilities(const GrownTree& tree, VertexId v, const WalkKernel& kernel) {
  const auto kids = tree.children(v);
  std::vector<double> p(kids.size() + 1);
  if (kernel.kind == WalkKernel::Kind::biased) {
    const double total = kernel.lambda + static_cast<double>(kids.size());
    p[0] = kernel.lambda / total;
    for (std::size_t i = 0; i < kids.size(); ++i) p[i + 1] = 1.0 / total;
    return p;
  }
  // Weights exp(-V(.)) scaled by exp(V(v)) so the parent weighs 1.
  double total = 1.0;
  for (VertexId c : kids) total += tree.step_weight(c);
  p[0] = 1.0 / total;
  for (std::size_t i = 0; i < kids.size(); ++i) p[i + 1] = tree.step_weight(kids[i]) / total;
  return p;
}

VertexId walk_step(GrownTree& tree, GrowthHook& growth, VertexId current, const WalkKernel& kernel, Stream& rng) {
  if (current == kArtificialParent) return GrownTree::root();
  if (!tree.expanded(current)) growth.expand(tree, current);
  const auto kids = tree.children(current);
  const auto p = step_probabilities(tree, current, kernel);
  double x = rng.uniform();
  for (std::size_t i = 0; i < p.size(); ++i) {
    x -= p[i];
    if (x < 0.0) return i == 0 ? tree.parent(current) : kids[i - 1];
  }
  return kids.empty() ? tree.parent(current) : kids.back();
}

void check_bias(const OffspringLaw& law, double lambda, bool allow_noncritical) {
  if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be positive");
  if (lambda != law.mean() && !allow_noncritical)
    throw RegimeError(fmt::format("lambda = {} differs from m = {}; the walk is only null recurrent at lambda = m "
                                  "(pass --allow-noncritical to explore other regimes)",
                                  lambda, law.mean()));
}

WalkPath run_walk_on(GrownTree& tree, GrowthHook& growth, const WalkKernel& kernel, std::uint64_t n_steps,
                     Stream rng) {
  Walker walker(tree, growth, kernel, rng);
  WalkPath path;
  path.vertices.reserve(n_steps + 1);
  path.heights.reserve(n_steps + 1);
  path.vertices.push_back(walker.position());
  path.heights.push_back(0);
  for (std::uint64_t k = 1; k <= n_steps; ++k) {
    const VertexId v = walker.step();
    path.vertices.push_back(v);
    path.heights.push_back(walker.height());
    if (v == kArtificialParent) path.tau.push_back(k);
  }
  return path;
}

WalkRun run_walk(const OffspringLaw& law, double lambda, std::uint64_t n_steps, std::uint64_t seed,
                 const WalkOptions& options) {
  check_bias(law, lambda, options.allow_noncritical);
  WalkRun run;
  run.tree.reset(growth_key_of(Stream::for_replica(seed, options.replica, substream::growth)));
  run.tree.set_max_vertices(options.max_vertices);
  GwGrowth growth(law);
  run.path = run_walk_on(run.tree, growth, WalkKernel::biased(lambda), n_steps,
                         Stream::for_replica(seed, options.replica, substream::walk));
  run.path.critical = lambda == law.mean();
  return run;
}

std::vector<std::uint64_t> excursion_times(const WalkPath& path) {
  std::vector<std::uint64_t> out;
  for (std::uint64_t k = 1; k < path.vertices.size(); ++k)
    if (path.vertices[k] == kArtificialParent) out.push_back(k);
  return out;
}

LocalTimeField local_time_field(const GrownTree& tree, const WalkPath& path, std::uint32_t k) {
  const auto tau = excursion_times(path);
  if (k < 1 || tau.size() < k)
    throw std::invalid_argument(fmt::format("path completes {} excursions, {} requested", tau.size(), k));
  LocalTimeField field;
  field.k = k;
  field.counts.assign(tree.size(), 0);
  const std::uint64_t end = tau[k - 1];
  for (std::uint64_t n = 1; n <= end; ++n) {
    const VertexId x = path.vertices[n];
    if (x == kArtificialParent || x == GrownTree::root()) continue;
    if (path.vertices[n - 1] == tree.parent(x)) ++field.counts[x];
  }
  field.counts[GrownTree::root()] = k;
  return field;
}

TraceTree trace_tree(const GrownTree& tree, const WalkPath& path, std::uint64_t n) {
  if (n >= path.vertices.size()) throw std::invalid_argument("trace time beyond the path");
  std::vector<VertexId> local(tree.size(), kNoVertex);
  TraceTree out;
  TreeBuilder builder;
  for (std::uint64_t k = 0; k <= n; ++k) {
    const VertexId x = path.vertices[k];
    if (x == kArtificialParent || local[x] != kNoVertex) continue;
    local[x] = x == GrownTree::root() ? builder.add_root() : builder.add_child(local[tree.parent(x)]);
    out.origin.push_back(x);
  }
  out.tree = std::move(builder).build();
  return out;
}

bool run_excursion(Walker& walker, std::uint64_t budget, std::vector<VertexId>& out) {
  if (walker.position() != GrownTree::root())
    throw std::logic_error("an excursion must start at the root");
  out.push_back(GrownTree::root());
  for (std::uint64_t s = 0; s < budget; ++s) {
    const VertexId v = walker.step();
    if (v == kArtificialParent) {
      walker.step();
      return true;
    }
    out.push_back(v);
  }
  return false;
}

std::string path_csv(const WalkPath& path) {
  std::string out = "step,vertex_id,height\n";
  for (std::size_t k = 0; k < path.vertices.size(); ++k) {
    const VertexId v = path.vertices[k];
    const long long id = v == kArtificialParent ? -1 : static_cast<long long>(v);
    out += fmt::format("{},{},{}\n", k, id, path.heights[k]);
  }
  return out;
}

}  // namespace gwtrace
