// Common types, error reporting and small numeric helpers shared by every
// replaylab module.
#pragma once

#include <Eigen/Dense>

#include <charconv>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>

namespace replaylab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Rng = std::mt19937_64;

// =============================================================================
// Errors
// =============================================================================

enum class ErrorKind {
  parameter,
  shape,
  divergence,
  rank,
  io,
  unsupported,
  insufficient_data,
  training_diverged,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::parameter: return "parameter";
    case ErrorKind::shape: return "shape";
    case ErrorKind::divergence: return "divergence";
    case ErrorKind::rank: return "rank";
    case ErrorKind::io: return "io";
    case ErrorKind::unsupported: return "unsupported";
    case ErrorKind::insufficient_data: return "insufficient_data";
    case ErrorKind::training_diverged: return "training_diverged";
  }
  return "unknown";
}

/// Library exception. `index` carries the step (rollouts) or epoch (training)
/// at which a divergence was detected.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message,
        std::optional<long> index = std::nullopt)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind),
        index_(index),
        message_(message) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& message() const noexcept { return message_; }
  std::optional<long> index() const noexcept { return index_; }

 private:
  ErrorKind kind_;
  std::optional<long> index_;
  std::string message_;
};

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) throw Error(kind, message);
}

// =============================================================================
// Random numbers
// =============================================================================

/// Generator for an independent stream derived from (seed, stream).
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream),
                    static_cast<std::uint32_t>(stream >> 32), 0x5eedu};
  return Rng(seq);
}

inline Vec standard_normal(Eigen::Index size, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec out(size);
  for (Eigen::Index i = 0; i < size; ++i) out[i] = normal(rng);
  return out;
}

// =============================================================================
// Formatting
// =============================================================================

/// Shortest decimal string that round-trips to the same double.
inline std::string shortest(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc{}) return std::to_string(value);
  return std::string(buf, end);
}

/// Scientific notation with 17 significant digits.
inline std::string sig17(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value,
                                 std::chars_format::scientific, 16);
  if (ec != std::errc{}) return std::to_string(value);
  return std::string(buf, end);
}

inline bool all_finite(const Mat& m) { return m.allFinite(); }

}  // namespace replaylab
