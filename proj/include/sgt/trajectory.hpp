#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "sgt/kl_fn.hpp"

namespace sgt {

/// Sampled input object: one row per channel, columns aligned with the
/// trajectory time grid.
struct InputRecord {
  std::vector<std::vector<real>> channels;

  std::size_t samples() const { return channels.empty() ? 0 : channels.front().size(); }

  /// Pointwise magnitude max_c |u_c(t_i)| over the bound channels
  /// (empty binding = all channels).
  real magnitude(std::size_t i, const std::vector<std::size_t>& binding) const {
    real m = 0.0;
    if (binding.empty()) {
      for (const auto& ch : channels) m = std::max(m, std::fabs(ch[i]));
    } else {
      for (std::size_t c : binding) m = std::max(m, std::fabs(channels.at(c)[i]));
    }
    return m;
  }
};

/// The sampled quadruple (tau, u, x, y): horizon, input object, nonnegative
/// state magnitude and output magnitude on a shared time grid.
struct Trajectory {
  real tau = 0.0;
  bool horizon_truncated = false;  // stands for an infinite-horizon trajectory cut at tau
  bool integer_time = false;
  std::vector<real> times;
  std::vector<real> x, y;
  InputRecord u;

  std::size_t size() const { return times.size(); }

  void validate_or_throw() const {
    require(!times.empty(), "trajectory: empty time grid");
    require(times.front() == 0.0, "trajectory: time grid must start at 0");
    for (std::size_t i = 1; i < times.size(); ++i)
      require(times[i] > times[i - 1], "trajectory: times must be strictly increasing");
    require(times.back() < tau, "trajectory: grid must lie in [0, tau)");
    require(x.size() == times.size() && y.size() == times.size(),
            "trajectory: signal length mismatch");
    for (std::size_t i = 0; i < times.size(); ++i)
      require(x[i] >= 0.0 && y[i] >= 0.0, "trajectory: x and y must be nonnegative");
    for (const auto& ch : u.channels)
      require(ch.size() == times.size(), "trajectory: input channel length mismatch");
  }

  /// Largest index with times[i] <= a (outward snap of a left endpoint).
  std::size_t snap_left(real a) const {
    auto it = std::upper_bound(times.begin(), times.end(), a);
    return it == times.begin() ? 0 : static_cast<std::size_t>(it - times.begin()) - 1;
  }

  /// Smallest index with times[i] >= b (outward snap of a right endpoint).
  std::size_t snap_right(real b) const {
    auto it = std::lower_bound(times.begin(), times.end(), b);
    return it == times.end() ? times.size() - 1 : static_cast<std::size_t>(it - times.begin());
  }
};

enum class Signal { kX, kY };

/// sup of the sampled signal over grid points in [a, b], endpoints snapped
/// outward to the nearest enclosing grid points.
inline real sup_on_interval(const Trajectory& traj, Signal which, real a, real b) {
  if (a < 0.0 || a > b) throw DomainError("sup_on_interval: need 0 <= a <= b");
  if (b >= traj.tau) throw DomainError("sup_on_interval: b >= tau (beyond horizon)");
  const auto& sig = which == Signal::kX ? traj.x : traj.y;
  real m = 0.0;
  for (std::size_t i = traj.snap_left(a); i <= traj.snap_right(b); ++i) m = std::max(m, sig[i]);
  return m;
}

/// Incremental evaluator of an input measure over a window [i0, j] that only
/// ever extends to the right. Keeps pairwise checkers linear per row.
class MeasureScan {
 public:
  virtual ~MeasureScan() = default;
  /// Extends the window to column j (j nondecreasing across calls) and
  /// returns the measure of [times[i0], times[j]].
  virtual real extend(std::size_t j) = 0;
};

/// A monotone interval set-function mu(u, a, b) over sampled inputs:
/// sup-type, integral-type, constant-zero, monotone-mapped, binary max, or
/// the combined three-way-max form used by the small-gain construction.
class InputMeasure {
 public:
  InputMeasure() : InputMeasure(zero()) {}

  static InputMeasure zero() {
    auto n = std::make_shared<Node>();
    n->kind = Kind::kZero;
    return InputMeasure(std::move(n));
  }

  static InputMeasure sup(std::vector<std::size_t> channels = {}) {
    auto n = std::make_shared<Node>();
    n->kind = Kind::kSup;
    n->channels = std::move(channels);
    return InputMeasure(std::move(n));
  }

  /// Trapezoid integral of the pointwise magnitude.
  static InputMeasure integral(std::vector<std::size_t> channels = {}) {
    auto n = std::make_shared<Node>();
    n->kind = Kind::kIntegral;
    n->channels = std::move(channels);
    return InputMeasure(std::move(n));
  }

  /// g(inner(...)) for nondecreasing g.
  static InputMeasure mapped(ScalarFn g, InputMeasure inner) {
    require(g.nondecreasing_class(), "InputMeasure::mapped: map must be nondecreasing");
    auto n = std::make_shared<Node>();
    n->kind = Kind::kMapped;
    n->map = std::move(g);
    n->terms.push_back(std::move(inner));
    return InputMeasure(std::move(n));
  }

  static InputMeasure max_of(std::vector<InputMeasure> terms) {
    require(!terms.empty(), "InputMeasure::max_of: need at least one term");
    auto n = std::make_shared<Node>();
    n->kind = Kind::kMax;
    n->terms = std::move(terms);
    return InputMeasure(std::move(n));
  }

  /// max{ theta(sigma3(mu_a)), theta(mu_b), mu_a } with theta(s) = beta(s, 0).
  static InputMeasure combined(const KLFn& beta, const ScalarFn& sigma3, InputMeasure mu_a,
                               InputMeasure mu_b,
                               real range_hint = ScalarFn::kDefaultRangeHint) {
    return combined_from_slice(transient_slice(beta, range_hint), sigma3, std::move(mu_a),
                               std::move(mu_b));
  }

  static InputMeasure combined_from_slice(ScalarFn theta, ScalarFn sigma3, InputMeasure mu_a,
                                          InputMeasure mu_b) {
    auto n = std::make_shared<Node>();
    n->kind = Kind::kCombined;
    n->map = std::move(theta);
    n->sigma3 = std::move(sigma3);
    n->terms.push_back(std::move(mu_a));
    n->terms.push_back(std::move(mu_b));
    return InputMeasure(std::move(n));
  }

  real eval(const Trajectory& traj, real a, real b) const {
    if (a < 0.0 || a > b) throw DomainError("InputMeasure: need 0 <= a <= b");
    std::size_t i0 = traj.snap_left(a);
    std::size_t j = traj.snap_right(b);
    auto scan = scanner(traj, i0);
    real v = 0.0;
    for (std::size_t k = i0; k <= j; ++k) v = scan->extend(k);
    return v;
  }

  std::unique_ptr<MeasureScan> scanner(const Trajectory& traj, std::size_t i0) const {
    return node_->scanner(traj, i0);
  }

  enum class Kind { kZero, kSup, kIntegral, kMapped, kMax, kCombined };

  // structural introspection (serialization, reports)
  Kind kind() const { return node_->kind; }
  const std::vector<std::size_t>& bound_channels() const { return node_->channels; }
  const ScalarFn& map_fn() const { return node_->map; }        // mapped g / combined theta
  const ScalarFn& sigma3_fn() const { return node_->sigma3; }  // combined only
  const std::vector<InputMeasure>& parts() const { return node_->terms; }

 private:

  struct Node;
  using NodePtr = std::shared_ptr<const Node>;

  struct ZeroScan final : MeasureScan {
    real extend(std::size_t) override { return 0.0; }
  };

  struct SupScan final : MeasureScan {
    const Trajectory* traj;
    const std::vector<std::size_t>* channels;
    real running = 0.0;
    real extend(std::size_t j) override {
      running = std::max(running, traj->u.magnitude(j, *channels));
      return running;
    }
  };

  struct IntegralScan final : MeasureScan {
    const Trajectory* traj;
    const std::vector<std::size_t>* channels;
    std::size_t prev;
    real prev_mag = 0.0;
    real running = 0.0;
    bool first = true;
    real extend(std::size_t j) override {
      real m = traj->u.magnitude(j, *channels);
      if (!first)
        running += 0.5 * (prev_mag + m) * (traj->times[j] - traj->times[prev]);
      first = false;
      prev = j;
      prev_mag = m;
      return running;
    }
  };

  struct MappedScan final : MeasureScan {
    const ScalarFn* map;
    std::unique_ptr<MeasureScan> inner;
    real extend(std::size_t j) override { return map->eval(inner->extend(j)); }
  };

  struct MaxScan final : MeasureScan {
    std::vector<std::unique_ptr<MeasureScan>> inner;
    real extend(std::size_t j) override {
      real v = 0.0;
      for (auto& s : inner) v = std::max(v, s->extend(j));
      return v;
    }
  };

  struct CombinedScan final : MeasureScan {
    const ScalarFn* theta;
    const ScalarFn* sigma3;
    std::unique_ptr<MeasureScan> a, b;
    real extend(std::size_t j) override {
      real va = a->extend(j);
      real vb = b->extend(j);
      return std::max({theta->eval(sigma3->eval(va)), theta->eval(vb), va});
    }
  };

  struct Node {
    Kind kind = Kind::kZero;
    std::vector<std::size_t> channels;
    ScalarFn map;     // mapped: g; combined: theta
    ScalarFn sigma3;  // combined only
    std::vector<InputMeasure> terms;

    std::unique_ptr<MeasureScan> scanner(const Trajectory& traj, std::size_t i0) const {
      switch (kind) {
        case Kind::kZero:
          return std::make_unique<ZeroScan>();
        case Kind::kSup: {
          auto s = std::make_unique<SupScan>();
          s->traj = &traj;
          s->channels = &channels;
          return s;
        }
        case Kind::kIntegral: {
          auto s = std::make_unique<IntegralScan>();
          s->traj = &traj;
          s->channels = &channels;
          s->prev = i0;
          return s;
        }
        case Kind::kMapped: {
          auto s = std::make_unique<MappedScan>();
          s->map = &map;
          s->inner = terms[0].scanner(traj, i0);
          return s;
        }
        case Kind::kMax: {
          auto s = std::make_unique<MaxScan>();
          for (const auto& t : terms) s->inner.push_back(t.scanner(traj, i0));
          return s;
        }
        case Kind::kCombined: {
          auto s = std::make_unique<CombinedScan>();
          s->theta = &map;
          s->sigma3 = &sigma3;
          s->a = terms[0].scanner(traj, i0);
          s->b = terms[1].scanner(traj, i0);
          return s;
        }
      }
      return std::make_unique<ZeroScan>();
    }
  };

  explicit InputMeasure(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  NodePtr node_;
};

/// The KL-practical-IOS data (beta, mu, C).
struct IOSCertificate {
  KLFn beta;
  InputMeasure mu;
  real C = 0.0;

  void validate_or_throw(const std::vector<real>& s_grid, const std::vector<real>& t_grid) const {
    require(C >= 0.0, "certificate: need C >= 0");
    auto r = beta.validate_on(s_grid, t_grid);
    if (!r.ok) throw ClassError("certificate beta: " + r.what);
  }
};

}  // namespace sgt
