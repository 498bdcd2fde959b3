#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace gwtrace {

/// Philox4x32-10 block function (Salmon et al., "Parallel random numbers:
/// as easy as 1, 2, 3").  Maps a 128-bit counter and 64-bit key to 128
/// pseudo-random bits.
using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

PhiloxCounter philox4x32_10(PhiloxCounter ctr, PhiloxKey key) noexcept;

/// SplitMix64 finalizer; used to derive keys and vertex labels.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seed of a numbered group of checks within a suite.
constexpr std::uint64_t group_seed(std::uint64_t seed, std::uint64_t group) noexcept {
  return mix64(seed ^ mix64(group * 0x9e3779b97f4a7c15ULL));
}

/// Counter-based random stream.  A stream is identified by (key, id); the
/// n-th output is a pure function of (key, id, n), so streams can be
/// created anywhere in any order without coordination.
///
/// Satisfies UniformRandomBitGenerator.
class Stream {
 public:
  using result_type = std::uint64_t;

  Stream() = default;
  Stream(std::uint64_t key, std::uint64_t id) noexcept : key_(key), id_(id) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    if (buffered_ == 0) refill();
    return buffer_[--buffered_];
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Uniform double in (0, 1].
  double uniform_pos() noexcept { return 1.0 - uniform(); }

  /// Independent child stream, deterministic in (this stream's identity, tag).
  [[nodiscard]] Stream split(std::uint64_t tag) const noexcept {
    return Stream(mix64(key_ ^ mix64(id_ + 0x632be59bd9b4e019ULL)), mix64(tag));
  }

  /// Canonical per-replica stream.  Sub-stream tags keep e.g. tree growth
  /// and walk steps apart so that one can be replayed without the other.
  static Stream for_replica(std::uint64_t seed, std::uint64_t replica, std::uint64_t substream) noexcept {
    return Stream(mix64(seed), (replica << 8) | (substream & 0xff));
  }

  [[nodiscard]] std::uint64_t key() const noexcept { return key_; }
  [[nodiscard]] std::uint64_t id() const noexcept { return id_; }
  [[nodiscard]] std::uint64_t position() const noexcept { return block_; }

 private:
  void refill() noexcept;

  std::uint64_t key_ = 0;
  std::uint64_t id_ = 0;
  std::uint64_t block_ = 0;
  std::array<std::uint64_t, 2> buffer_{};
  int buffered_ = 0;
};

/// Sub-stream tags used throughout the library.
namespace substream {
inline constexpr std::uint64_t growth = 1;
inline constexpr std::uint64_t walk = 2;
inline constexpr std::uint64_t sampler = 3;
inline constexpr std::uint64_t pairs = 4;
inline constexpr std::uint64_t environment = 5;
}  // namespace substream

}  // namespace gwtrace
