#pragma once

#include <string>
#include <utility>
#include <vector>

namespace gwtrace {

/// One pass/fail check.  abs_diff: |estimate - target| <= tolerance.
/// at_most: estimate <= target + tolerance.
struct Gate {
  enum class Relation { abs_diff, at_most };
  std::string name;
  double estimate = 0;
  double target = 0;
  double tolerance = 0;
  Relation relation = Relation::abs_diff;
  bool pass = false;
};

Gate abs_gate(std::string name, double estimate, double target, double tolerance);
Gate at_most_gate(std::string name, double estimate, double bound, double tolerance = 0.0);

struct Report {
  std::string suite;
  std::vector<std::pair<std::string, std::string>> config;
  std::vector<Gate> gates;
  std::vector<std::pair<std::string, double>> diagnostics;

  [[nodiscard]] bool all_pass() const noexcept;
  /// Gates whose name starts with `prefix`.
  [[nodiscard]] std::vector<const Gate*> group(const std::string& prefix) const;
  /// Deterministic JSON text with "schema": 1.
  [[nodiscard]] std::string to_json() const;
};

}  // namespace gwtrace
