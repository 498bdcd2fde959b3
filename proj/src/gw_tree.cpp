#include "gwtrace/gw_tree.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fmt/format.h>
#include <numeric>

#include "gwtrace/errors.hpp"

namespace gwtrace {

namespace {

constexpr std::uint64_t kRootLabel = 0x5851f42d4c957f2dULL;

std::uint64_t child_label(std::uint64_t parent, std::uint32_t index) noexcept {
  return mix64(parent ^ mix64(static_cast<std::uint64_t>(index) + 1));
}

double parse_number(std::string_view text, std::string_view descriptor) {
  const auto trim = [](std::string_view s) {
    while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
    while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
    return s;
  };
  text = trim(text);
  // "a/b" fractions are accepted so that e.g. 1/3 sums to one exactly enough.
  if (const auto slash = text.find('/'); slash != std::string_view::npos) {
    const double num = parse_number(text.substr(0, slash), descriptor);
    const double den = parse_number(text.substr(slash + 1), descriptor);
    if (den == 0.0) throw std::invalid_argument(fmt::format("zero denominator in law '{}'", descriptor));
    return num / den;
  }
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty())
    throw std::invalid_argument(fmt::format("bad number '{}' in law '{}'", text, descriptor));
  return value;
}

}  // namespace

// ---------------------------------------------------------------------------

OffspringLaw OffspringLaw::point_mass(unsigned d) {
  OffspringLaw law;
  law.pmf_.assign(d + 1, 0.0);
  law.pmf_[d] = 1.0;
  law.finish_finite();
  law.descriptor_ = d == 2 ? "binary" : d == 1 ? "unary" : fmt::format("point:{}", d);
  return law;
}

OffspringLaw OffspringLaw::geometric(double mean) {
  if (!(mean > 0.0) || !std::isfinite(mean))
    throw std::invalid_argument("geometric law needs a positive finite mean");
  OffspringLaw law;
  law.kind_ = Kind::geometric;
  law.q_ = mean / (1.0 + mean);
  law.mean_ = mean;
  law.second_factorial_ = 2.0 * mean * mean;
  law.descriptor_ = fmt::format("geometric:{}", mean);
  return law;
}

OffspringLaw OffspringLaw::from_pmf(std::vector<double> pmf) {
  if (pmf.empty()) throw std::invalid_argument("empty pmf");
  double total = 0.0;
  for (double p : pmf) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw std::invalid_argument("pmf entries must be finite and >= 0");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-12)
    throw std::invalid_argument(fmt::format("pmf sums to {} (must be 1 within 1e-12)", total));
  while (pmf.size() > 1 && pmf.back() == 0.0) pmf.pop_back();
  OffspringLaw law;
  law.pmf_ = std::move(pmf);
  law.finish_finite();
  law.descriptor_ = fmt::format("pmf:{}", fmt::join(law.pmf_, ","));
  return law;
}

OffspringLaw OffspringLaw::parse(std::string_view descriptor) {
  if (descriptor == "binary") return point_mass(2);
  if (descriptor == "unary") return point_mass(1);
  const auto colon = descriptor.find(':');
  if (colon == std::string_view::npos)
    throw std::invalid_argument(fmt::format("unknown law '{}'", descriptor));
  const auto head = descriptor.substr(0, colon);
  const auto body = descriptor.substr(colon + 1);
  if (head == "point") {
    const double d = parse_number(body, descriptor);
    if (d < 0 || d != std::floor(d) || d > 1e6)
      throw std::invalid_argument(fmt::format("point mass needs a non-negative integer in '{}'", descriptor));
    return point_mass(static_cast<unsigned>(d));
  }
  if (head == "geometric") return geometric(parse_number(body, descriptor));
  if (head == "pmf") {
    std::vector<double> pmf;
    std::size_t start = 0;
    while (start <= body.size()) {
      const auto comma = body.find(',', start);
      const auto end = comma == std::string_view::npos ? body.size() : comma;
      pmf.push_back(parse_number(body.substr(start, end - start), descriptor));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    return from_pmf(std::move(pmf));
  }
  throw std::invalid_argument(fmt::format("unknown law '{}'", descriptor));
}

void OffspringLaw::finish_finite() {
  kind_ = Kind::finite;
  cdf_.resize(pmf_.size());
  std::partial_sum(pmf_.begin(), pmf_.end(), cdf_.begin());
  mean_ = 0.0;
  second_factorial_ = 0.0;
  for (std::size_t k = 0; k < pmf_.size(); ++k) {
    const double kk = static_cast<double>(k);
    mean_ += kk * pmf_[k];
    second_factorial_ += kk * (kk - 1.0) * pmf_[k];
  }
}

double OffspringLaw::pmf(unsigned k) const noexcept {
  if (kind_ == Kind::geometric) return (1.0 - q_) * std::pow(q_, k);
  return k < pmf_.size() ? pmf_[k] : 0.0;
}

std::optional<unsigned> OffspringLaw::max_support() const noexcept {
  if (kind_ == Kind::geometric) return std::nullopt;
  return static_cast<unsigned>(pmf_.size() - 1);
}

std::optional<unsigned> OffspringLaw::deterministic_value() const noexcept {
  if (kind_ == Kind::geometric) return std::nullopt;
  for (std::size_t k = 0; k < pmf_.size(); ++k)
    if (pmf_[k] == 1.0) return static_cast<unsigned>(k);
  return std::nullopt;
}

double OffspringLaw::extinction_probability() const {
  if (kind_ == Kind::geometric) return std::min(1.0, (1.0 - q_) / q_);
  if (pmf_[0] == 0.0) return 0.0;
  double s = 0.0;
  for (int it = 0; it < 10'000'000; ++it) {
    double g = 0.0;
    for (std::size_t k = pmf_.size(); k-- > 0;) g = g * s + pmf_[k];
    if (std::abs(g - s) < 1e-15) return g;
    s = g;
  }
  return s;
}

unsigned OffspringLaw::sample(Stream& rng) const noexcept {
  if (kind_ == Kind::geometric) {
    const double u = rng.uniform_pos();
    return static_cast<unsigned>(std::floor(std::log(u) / std::log(q_)));
  }
  const double u = rng.uniform();
  const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  // Rounding can leave cdf_.back() a hair under 1; fall back to the top of the support.
  if (it == cdf_.end()) return static_cast<unsigned>(pmf_.size() - 1);
  return static_cast<unsigned>(it - cdf_.begin());
}

void OffspringLaw::require_supercritical() const {
  if (!(mean_ > 1.0))
    throw RegimeError(fmt::format("offspring mean m = {} must exceed 1 (law '{}')", mean_, descriptor_));
}

unsigned sample_offspring(const OffspringLaw& law, Stream& rng) noexcept { return law.sample(rng); }

// ---------------------------------------------------------------------------

GrownTree::GrownTree() { reset(0); }

void GrownTree::reset(std::uint64_t growth_key) {
  vertices_.clear();
  slots_.clear();
  labels_.clear();
  edge_len_.clear();
  tags_.clear();
  potential_.clear();
  step_weight_.clear();
  growth_key_ = growth_key;
  vertices_.push_back({kArtificialParent, 0, 0, kUnexpanded});
  labels_.push_back(kRootLabel);
}

void GrownTree::set_tags(std::vector<std::uint32_t> tags) {
  if (tags.size() != vertices_.size()) throw std::invalid_argument("tag vector size mismatch");
  tags_ = std::move(tags);
}

std::span<const VertexId> GrownTree::expand(VertexId v, std::uint32_t count) {
  Record& r = vertices_[v];
  if (r.child_count != kUnexpanded) throw std::logic_error("vertex expanded twice");
  if (vertices_.size() + count > max_vertices_)
    throw ResourceError(fmt::format("tree exceeds the vertex budget of {}", max_vertices_));
  const auto first_id = static_cast<VertexId>(vertices_.size());
  const auto first_slot = static_cast<std::uint32_t>(slots_.size());
  const std::uint32_t depth = r.depth + 1;
  const std::uint64_t label = labels_[v];
  r.first_slot = first_slot;
  r.child_count = count;
  for (std::uint32_t i = 0; i < count; ++i) {
    vertices_.push_back({v, depth, 0, kUnexpanded});
    labels_.push_back(child_label(label, i));
    slots_.push_back(first_id + i);
  }
  if (!edge_len_.empty()) edge_len_.resize(vertices_.size(), 1.0);
  if (!tags_.empty()) tags_.resize(vertices_.size(), 0);
  if (!potential_.empty()) {
    potential_.resize(vertices_.size(), potential_[v]);
    step_weight_.resize(vertices_.size(), 1.0);
  }
  return {slots_.data() + first_slot, count};
}

void GrownTree::enable_potential() {
  if (!potential_.empty()) return;
  if (vertices_.size() != 1) throw std::logic_error("potential must be set from the root on");
  potential_.assign(1, 0.0);
  step_weight_.assign(1, 1.0);
}

std::span<const VertexId> GrownTree::expand_with_potential(VertexId v, std::span<const double> increments) {
  enable_potential();
  const auto kids = expand(v, static_cast<std::uint32_t>(increments.size()));
  const double base = potential_[v];
  for (std::size_t i = 0; i < kids.size(); ++i) {
    potential_[kids[i]] = base + increments[i];
    step_weight_[kids[i]] = std::exp(-increments[i]);
  }
  return kids;
}

VertexId TreeBuilder::add_root() {
  if (!parents_.empty()) throw std::logic_error("root added twice");
  parents_.push_back(kArtificialParent);
  lengths_.push_back(0.0);
  return 0;
}

VertexId TreeBuilder::add_child(VertexId parent, double edge_length) {
  if (parent >= parents_.size()) throw std::out_of_range("unknown parent");
  if (!(edge_length >= 0.0)) throw std::invalid_argument("edge lengths must be non-negative");
  if (edge_length != 1.0) unit_lengths_ = false;
  parents_.push_back(parent);
  lengths_.push_back(edge_length);
  return static_cast<VertexId>(parents_.size() - 1);
}

GrownTree TreeBuilder::build() && {
  if (parents_.empty()) throw std::logic_error("empty tree");
  const std::size_t n = parents_.size();
  GrownTree t;
  t.vertices_.assign(n, {kArtificialParent, 0, 0, 0});
  t.labels_.assign(n, kRootLabel);
  std::vector<std::uint32_t> count(n, 0);
  for (std::size_t v = 1; v < n; ++v) ++count[parents_[v]];
  std::uint32_t slot = 0;
  for (std::size_t v = 0; v < n; ++v) {
    t.vertices_[v].first_slot = slot;
    slot += count[v];
  }
  t.slots_.assign(n - 1, 0);
  std::vector<std::uint32_t> fill(n, 0);
  for (std::size_t v = 1; v < n; ++v) {
    const VertexId p = parents_[v];
    auto& rec = t.vertices_[v];
    rec.parent = p;
    rec.depth = t.vertices_[p].depth + 1;
    t.labels_[v] = child_label(t.labels_[p], fill[p]);
    t.slots_[t.vertices_[p].first_slot + fill[p]++] = static_cast<VertexId>(v);
  }
  for (std::size_t v = 0; v < n; ++v) t.vertices_[v].child_count = count[v];
  if (!unit_lengths_) t.edge_len_ = std::move(lengths_);
  return t;
}

// ---------------------------------------------------------------------------

std::uint64_t growth_key_of(const Stream& rng) noexcept { return mix64(rng.key() ^ mix64(rng.id())); }

void expand_gw(GrownTree& tree, VertexId v, const OffspringLaw& law) {
  Stream s(tree.growth_key(), tree.label(v));
  tree.expand(v, law.sample(s));
}

GrownTree grow_tree(const OffspringLaw& law, const Stream& rng, unsigned generation_cap, std::size_t max_vertices) {
  if (generation_cap < 1) throw std::invalid_argument("generation cap must be >= 1");
  GrownTree tree;
  tree.reset(growth_key_of(rng));
  tree.set_max_vertices(max_vertices);
  // Ids are handed out in expansion order, so scanning ids is a breadth-first sweep.
  for (VertexId v = 0; v < tree.size(); ++v)
    if (tree.depth(v) < generation_cap) expand_gw(tree, v, law);
  return tree;
}

GrownTree condition_on_survival(const OffspringLaw& law, const Stream& rng, unsigned generation_cap,
                                unsigned max_retries, std::size_t max_vertices) {
  for (unsigned attempt = 0; attempt <= max_retries; ++attempt) {
    GrownTree tree = grow_tree(law, attempt == 0 ? rng : rng.split(attempt), generation_cap, max_vertices);
    if (generation_size(tree, generation_cap) > 0) return tree;
  }
  throw RetryExhausted(fmt::format("no survival to generation {} in {} attempts (law '{}')", generation_cap,
                                   max_retries + 1, law.descriptor()));
}

std::size_t generation_size(const GrownTree& tree, unsigned n) {
  std::size_t count = 0;
  for (VertexId v = 0; v < tree.size(); ++v) {
    const auto d = tree.depth(v);
    if (d < n && !tree.expanded(v))
      throw std::invalid_argument(fmt::format("generation {} is not fully grown", n));
    if (d == n) ++count;
  }
  return count;
}

Ranking dfs_order(const GrownTree& tree) {
  Ranking r;
  r.order.reserve(tree.size());
  r.rank_of.assign(tree.size(), 0);
  std::vector<VertexId> stack{GrownTree::root()};
  while (!stack.empty()) {
    const VertexId v = stack.back();
    stack.pop_back();
    r.rank_of[v] = static_cast<std::uint32_t>(r.order.size());
    r.order.push_back(v);
    const auto kids = tree.children(v);
    for (auto it = kids.rbegin(); it != kids.rend(); ++it) stack.push_back(*it);
  }
  return r;
}

std::vector<double> vertex_heights(const GrownTree& tree) {
  std::vector<double> h(tree.size(), 0.0);
  for (VertexId v = 1; v < tree.size(); ++v) h[v] = h[tree.parent(v)] + tree.edge_length(v);
  return h;
}

HeightFunction height_function(const GrownTree& tree, const Ranking& ranking) {
  if (ranking.order.size() != tree.size()) throw std::invalid_argument("ranking does not match tree");
  const auto h = vertex_heights(tree);
  HeightFunction out;
  out.values.reserve(tree.size());
  for (VertexId v : ranking.order) out.values.push_back(h[v]);
  return out;
}

double ks_martingale_value(const GrownTree& tree, const OffspringLaw& law, unsigned n) {
  const auto count = generation_size(tree, n);
  if (count == 0) return 0.0;
  return static_cast<double>(count) * std::pow(law.mean(), -static_cast<double>(n));
}

std::string dump_tree(const GrownTree& tree, std::string_view law_descriptor, std::uint64_t seed) {
  std::string out = fmt::format("# law={} seed={}\n", law_descriptor, seed);
  for (VertexId v = 0; v < tree.size(); ++v) {
    const long long parent = v == GrownTree::root() ? -1 : static_cast<long long>(tree.parent(v));
    if (tree.has_potential())
      out += fmt::format("{} {} {} {} {}\n", v, parent, tree.depth(v), tree.edge_length(v), tree.potential(v));
    else
      out += fmt::format("{} {} {} {}\n", v, parent, tree.depth(v), tree.edge_length(v));
  }
  return out;
}

}  // namespace gwtrace
