#include "gwtrace/report.hpp"

#include <cmath>
#include <json.hpp>

namespace gwtrace {

Gate abs_gate(std::string name, double estimate, double target, double tolerance) {
  Gate g{std::move(name), estimate, target, tolerance, Gate::Relation::abs_diff, false};
  g.pass = std::abs(estimate - target) <= tolerance;
  return g;
}

Gate at_most_gate(std::string name, double estimate, double bound, double tolerance) {
  Gate g{std::move(name), estimate, bound, tolerance, Gate::Relation::at_most, false};
  g.pass = estimate <= bound + tolerance;
  return g;
}

bool Report::all_pass() const noexcept {
  for (const auto& g : gates)
    if (!g.pass) return false;
  return !gates.empty();
}

std::vector<const Gate*> Report::group(const std::string& prefix) const {
  std::vector<const Gate*> out;
  for (const auto& g : gates)
    if (g.name.rfind(prefix, 0) == 0) out.push_back(&g);
  return out;
}

namespace {

// NaN and infinities are not JSON numbers
nlohmann::ordered_json number(double x) {
  if (std::isfinite(x)) return x;
  return std::isnan(x) ? "nan" : (x > 0 ? "inf" : "-inf");
}

}  // namespace

std::string Report::to_json() const {
  nlohmann::ordered_json j;
  j["schema"] = 1;
  j["suite"] = suite;
  auto& cfg = j["config"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : config) cfg[k] = v;
  auto& gs = j["gates"] = nlohmann::ordered_json::array();
  for (const auto& g : gates) {
    nlohmann::ordered_json e;
    e["name"] = g.name;
    e["estimate"] = number(g.estimate);
    e["target"] = number(g.target);
    e["tolerance"] = number(g.tolerance);
    e["relation"] = g.relation == Gate::Relation::abs_diff ? "abs_diff" : "at_most";
    e["pass"] = g.pass;
    gs.push_back(std::move(e));
  }
  auto& d = j["diagnostics"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : diagnostics) d[k] = number(v);
  j["all_pass"] = all_pass();
  return j.dump(2) + "\n";
}

}  // namespace gwtrace
