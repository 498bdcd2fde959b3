#pragma once

#include <cctype>
#include <charconv>
#include <fmt/format.h>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>

namespace gwtrace::detail {

template <class T>
T parse_number(std::string_view key, std::string_view value) {
  T out{};
  if constexpr (std::is_floating_point_v<T>) {
    try {
      std::size_t used = 0;
      out = static_cast<T>(std::stod(std::string(value), &used));
      if (used != value.size()) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw std::invalid_argument(fmt::format("{}: '{}' is not a number", key, value));
    }
  } else {
    const auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc() || p != value.data() + value.size())
      throw std::invalid_argument(fmt::format("{}: '{}' is not a non-negative integer", key, value));
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

// Assigns `value` to the field called `key`; for_each_field(visit) must call
// visit(name, field) for every field.
template <class ForEach>
void set_field(ForEach&& for_each_field, std::string_view key, std::string_view value) {
  bool found = false;
  for_each_field([&](std::string_view name, auto& field) {
    if (name != key) return;
    found = true;
    using T = std::decay_t<decltype(field)>;
    if constexpr (std::is_same_v<T, std::string>) field = std::string(value);
    else field = parse_number<T>(key, value);
  });
  if (!found) throw std::invalid_argument(fmt::format("unknown key '{}'", key));
}

// key=value lines, '#' starts a comment; errors name the line.
template <class Set>
void apply_lines(std::string_view text, Set&& set) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw std::invalid_argument(fmt::format("line {}: expected key=value", line_no));
    try {
      set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(fmt::format("line {}: {}", line_no, e.what()));
    }
  }
}

}  // namespace gwtrace::detail
