#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace sgt {

using real = double;

/// Relative/absolute tolerance pair used by pointwise comparisons.
struct Tolerance {
  real rel = 1e-9;
  real abs = 1e-12;

  bool close(real a, real b) const {
    return std::fabs(a - b) <= abs + rel * std::max(std::fabs(a), std::fabs(b));
  }
  /// a <= b up to tolerance.
  bool leq(real a, real b) const { return a <= b + abs + rel * std::max(std::fabs(a), std::fabs(b)); }
};

inline constexpr Tolerance kDefaultTol{};

/// Extended nonnegative real with a tagged +infinity (never a float special
/// value in stored data).
struct ExtReal {
  real value = 0.0;
  bool finite = true;

  static ExtReal inf() { return {0.0, false}; }
  static ExtReal of(real v) { return {v, true}; }

  bool operator<(const ExtReal& o) const {
    if (!finite) return false;
    if (!o.finite) return true;
    return value < o.value;
  }
};

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A function failed validation against its declared class.
class ClassError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent input data (grids, records, configs).
class DataError : public Error {
 public:
  using Error::Error;
};

/// A constructive synthesis step could not complete.
class SynthesisError : public Error {
 public:
  using Error::Error;
};

/// The coupled-output fixed point did not converge.
class CouplingError : public Error {
 public:
  real residual = 0.0;
  CouplingError(const std::string& what, real res) : Error(what), residual(res) {}
};

/// Deterministic 64-bit generator (splitmix64). Used wherever randomized
/// grids/probes must be reproducible across platforms.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed = 0x9e3779b97f4a7c15ull) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  real uniform() { return static_cast<real>(next() >> 11) * 0x1.0p-53; }

  real uniform(real lo, real hi) { return lo + (hi - lo) * uniform(); }

  /// Log-uniform in [lo, hi], lo > 0.
  real log_uniform(real lo, real hi) { return lo * std::exp(uniform() * std::log(hi / lo)); }

  std::uint64_t below(std::uint64_t n) { return next() % n; }

 private:
  std::uint64_t state_;
};

inline void require(bool cond, const char* msg) {
  if (!cond) throw DataError(msg);
}

/// Time-set discipline: continuous, continuous snapped to a step dt, or the
/// integer grid (discrete time).
struct TimeQuantum {
  bool integer = false;
  real dt = 0.0;  // 0 = continuous

  /// Smallest representable time >= t.
  real snap_up(real t) const {
    if (t <= 0.0) return 0.0;
    if (integer) return std::ceil(t * (1.0 - 1e-12));
    if (dt > 0.0) return std::ceil(t / dt * (1.0 - 1e-12)) * dt;
    return t;
  }
};

}  // namespace sgt
