#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "edgefall/errors.hpp"

namespace edgefall {

enum class SensorKind : std::uint8_t { Accelerometer, Gyroscope, Barometer };

// Fixed channel order of a full recording: Ax Ay Az Gx Gy Gz B.
inline constexpr std::array<SensorKind, 3> kSensorOrder = {
    SensorKind::Accelerometer, SensorKind::Gyroscope, SensorKind::Barometer};

inline constexpr std::size_t kFullChannelCount = 7;

inline constexpr std::array<std::string_view, kFullChannelCount> kChannelNames =
    {"ax", "ay", "az", "gx", "gy", "gz", "p"};

constexpr std::size_t channel_count(SensorKind s) noexcept {
  return s == SensorKind::Barometer ? 1 : 3;
}

// First channel of the sensor within the full 7-channel layout.
constexpr std::size_t channel_offset(SensorKind s) noexcept {
  switch (s) {
    case SensorKind::Accelerometer: return 0;
    case SensorKind::Gyroscope: return 3;
    case SensorKind::Barometer: return 6;
  }
  return 0;
}

constexpr char sensor_letter(SensorKind s) noexcept {
  switch (s) {
    case SensorKind::Accelerometer: return 'A';
    case SensorKind::Gyroscope: return 'G';
    case SensorKind::Barometer: return 'B';
  }
  return '?';
}

inline std::string_view sensor_name(SensorKind s) noexcept {
  switch (s) {
    case SensorKind::Accelerometer: return "accelerometer";
    case SensorKind::Gyroscope: return "gyroscope";
    case SensorKind::Barometer: return "barometer";
  }
  return "unknown";
}

// Nonempty subset of {A, G, B}.
class SensorSet {
 public:
  static constexpr std::uint8_t kAllBits = 0b111;

  // Defaults to all three sensors.
  constexpr SensorSet() noexcept : bits_(kAllBits) {}

  static constexpr SensorSet all() noexcept { return SensorSet(); }

  static SensorSet from_bits(std::uint8_t bits) {
    if (bits == 0 || (bits & ~kAllBits) != 0) {
      throw ConfigError("invalid sensor set bits " + std::to_string(bits));
    }
    SensorSet s;
    s.bits_ = bits;
    return s;
  }

  static SensorSet of(std::initializer_list<SensorKind> kinds) {
    std::uint8_t bits = 0;
    for (auto k : kinds) bits |= bit(k);
    return from_bits(bits);
  }

  // Accepts letter codes in any order and case, optionally separated by
  // '+' or spaces: "ABG", "a+b", "GA".
  static SensorSet parse(std::string_view text) {
    std::uint8_t bits = 0;
    for (char c : text) {
      switch (c) {
        case 'A': case 'a': bits |= bit(SensorKind::Accelerometer); break;
        case 'G': case 'g': bits |= bit(SensorKind::Gyroscope); break;
        case 'B': case 'b': bits |= bit(SensorKind::Barometer); break;
        case '+': case ' ': break;
        default:
          throw ConfigError("unknown sensor code '" + std::string(1, c) +
                            "' in \"" + std::string(text) + "\"");
      }
    }
    if (bits == 0) throw ConfigError("sensor set must be nonempty");
    return from_bits(bits);
  }

  constexpr bool contains(SensorKind k) const noexcept {
    return (bits_ & bit(k)) != 0;
  }

  constexpr bool is_subset_of(SensorSet other) const noexcept {
    return (bits_ & ~other.bits_) == 0;
  }

  constexpr std::uint8_t bits() const noexcept { return bits_; }

  constexpr std::size_t sensor_count() const noexcept {
    std::size_t n = 0;
    for (auto k : kSensorOrder) n += contains(k) ? 1 : 0;
    return n;
  }

  constexpr std::size_t channel_count() const noexcept {
    std::size_t n = 0;
    for (auto k : kSensorOrder) n += contains(k) ? edgefall::channel_count(k) : 0;
    return n;
  }

  // Indices into the full 7-channel layout, in canonical order.
  std::vector<std::size_t> full_channel_indices() const {
    std::vector<std::size_t> idx;
    for (auto k : kSensorOrder) {
      if (!contains(k)) continue;
      for (std::size_t c = 0; c < edgefall::channel_count(k); ++c) {
        idx.push_back(channel_offset(k) + c);
      }
    }
    return idx;
  }

  // Positions of `sub`'s channels inside this set's channel layout.
  std::vector<std::size_t> channel_indices_of(SensorSet sub) const {
    if (!sub.is_subset_of(*this)) {
      throw ConfigError("sensor set " + sub.name() + " is not a subset of " +
                        name());
    }
    std::vector<std::size_t> idx;
    std::size_t pos = 0;
    for (auto k : kSensorOrder) {
      if (!contains(k)) continue;
      for (std::size_t c = 0; c < edgefall::channel_count(k); ++c, ++pos) {
        if (sub.contains(k)) idx.push_back(pos);
      }
    }
    return idx;
  }

  std::vector<std::string> channel_names() const {
    std::vector<std::string> names;
    for (auto i : full_channel_indices()) names.emplace_back(kChannelNames[i]);
    return names;
  }

  // Letters in alphabetical order (A, B, G), the way sensor combinations are
  // usually written in reports.
  std::string name() const {
    std::string s;
    if (contains(SensorKind::Accelerometer)) s += 'A';
    if (contains(SensorKind::Barometer)) s += 'B';
    if (contains(SensorKind::Gyroscope)) s += 'G';
    return s;
  }

  constexpr bool operator==(const SensorSet&) const = default;

 private:
  static constexpr std::uint8_t bit(SensorKind k) noexcept {
    return static_cast<std::uint8_t>(1u << static_cast<unsigned>(k));
  }

  std::uint8_t bits_;
};

// The seven nonempty subsets, largest first, in the order reports list them.
inline std::vector<SensorSet> all_sensor_sets() {
  std::vector<SensorSet> out;
  for (const char* code : {"ABG", "AG", "BG", "AB", "A", "G", "B"}) {
    out.push_back(SensorSet::parse(code));
  }
  return out;
}

// Comma-separated list such as "A,AB,ABG".
inline std::vector<SensorSet> parse_sensor_sets(std::string_view text) {
  std::vector<SensorSet> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto comma = text.find(',', start);
    if (comma == std::string_view::npos) comma = text.size();
    auto token = text.substr(start, comma - start);
    while (!token.empty() && token.front() == ' ') token.remove_prefix(1);
    while (!token.empty() && token.back() == ' ') token.remove_suffix(1);
    if (!token.empty()) {
      auto s = SensorSet::parse(token);
      bool dup = false;
      for (auto existing : out) dup = dup || existing == s;
      if (!dup) out.push_back(s);
    }
    start = comma + 1;
  }
  if (out.empty()) throw ConfigError("empty sensor subset list");
  return out;
}

}  // namespace edgefall
