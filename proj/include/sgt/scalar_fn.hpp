#pragma once

#include <algorithm>
#include <cstddef>
#include <utility>
#include <vector>

#include "sgt/core.hpp"

namespace sgt {

/// Declared comparison class of a scalar function.
enum class FnClass { kK, kKInf, kL, kMonotone };

inline const char* to_string(FnClass c) {
  switch (c) {
    case FnClass::kK: return "K";
    case FnClass::kKInf: return "Kinf";
    case FnClass::kL: return "L";
    case FnClass::kMonotone: return "monotone";
  }
  return "?";
}

struct ValidationResult {
  bool ok = true;
  std::string what;
};

/// Grid used when a parametric kind has to be lowered to piecewise-linear
/// form, and for grid-certified contraction checks.
struct LoweringGrid {
  int points_per_decade = 256;
  real lo_rel = 1e-9;  // lowest positive knot, relative to the range hint
};

struct ContractionGrid {
  int points_per_decade = 512;
  real horizon = 0.0;  // 0 = auto: 1e6 * max(r0, 1)
};

struct ContractionCheck {
  bool contraction = false;
  real witness = 0.0;  // smallest failing grid point when !contraction
};

/// A represented nonnegative scalar function with a declared class.
///
/// Kinds: monotone piecewise-linear over explicit knots (the canonical form,
/// closed under max, sum, composition and inversion), power law a*s^p,
/// linear saturation min(a*s, b), and log-affine a*exp(b*s) (the natural
/// parametric form for decaying class-L profiles).
///
/// Piecewise-linear extrapolation beyond the last knot: nondecreasing classes
/// extend the final segment linearly; class L extrapolates the final segment
/// exponentially so the tail provably tends to 0.
class ScalarFn {
 public:
  enum class Kind { kPiecewiseLinear, kPower, kLinearSaturation, kExpAffine };

  /// Default-constructs the zero function.
  ScalarFn() : xs_{0.0, 1.0}, ys_{0.0, 0.0} {}

  // ---- factories ----

  static ScalarFn pwl(std::vector<real> xs, std::vector<real> ys, FnClass cls) {
    require(xs.size() == ys.size() && xs.size() >= 2, "pwl: need >= 2 knots");
    require(xs.front() == 0.0, "pwl: knot grid must start at 0");
    for (std::size_t i = 1; i < xs.size(); ++i)
      require(xs[i] > xs[i - 1], "pwl: knots must be strictly increasing");
    for (real y : ys) require(y >= 0.0, "pwl: values must be nonnegative");
    ScalarFn f;
    f.kind_ = Kind::kPiecewiseLinear;
    f.xs_ = std::move(xs);
    f.ys_ = std::move(ys);
    f.cls_ = cls;
    return f;
  }

  static ScalarFn pwl(const std::vector<std::pair<real, real>>& knots, FnClass cls) {
    std::vector<real> xs, ys;
    xs.reserve(knots.size());
    ys.reserve(knots.size());
    for (auto& [x, y] : knots) {
      xs.push_back(x);
      ys.push_back(y);
    }
    return pwl(std::move(xs), std::move(ys), cls);
  }

  /// a * s^p
  static ScalarFn power(real a, real p, FnClass cls = FnClass::kKInf) {
    require(a >= 0.0 && p > 0.0, "power: need a >= 0, p > 0");
    ScalarFn f;
    f.kind_ = Kind::kPower;
    f.a_ = a;
    f.b_ = p;
    f.cls_ = (a == 0.0) ? FnClass::kMonotone : cls;
    return f;
  }

  static ScalarFn linear(real a) { return power(a, 1.0, FnClass::kKInf); }
  static ScalarFn identity() { return power(1.0, 1.0, FnClass::kKInf); }

  /// min(a*s, b) — saturating gain; monotone nondecreasing, not class K.
  static ScalarFn linsat(real a, real b) {
    require(a > 0.0 && b > 0.0, "linsat: need a > 0, b > 0");
    ScalarFn f;
    f.kind_ = Kind::kLinearSaturation;
    f.a_ = a;
    f.b_ = b;
    f.cls_ = FnClass::kMonotone;
    return f;
  }

  /// a * exp(b*s); with b < 0 this is the canonical class-L profile.
  static ScalarFn exp_affine(real a, real b, FnClass cls = FnClass::kL) {
    require(a >= 0.0, "exp_affine: need a >= 0");
    ScalarFn f;
    f.kind_ = Kind::kExpAffine;
    f.a_ = a;
    f.b_ = b;
    f.cls_ = cls;
    return f;
  }

  /// a * exp(-rate * s), class L.
  static ScalarFn exp_decay(real a, real rate) {
    require(rate > 0.0, "exp_decay: need rate > 0");
    return exp_affine(a, -rate, FnClass::kL);
  }

  static ScalarFn zero() { return pwl({{0.0, 0.0}, {1.0, 0.0}}, FnClass::kMonotone); }

  static ScalarFn constant(real c) {
    require(c >= 0.0, "constant: need c >= 0");
    return pwl({{0.0, c}, {1.0, c}}, FnClass::kMonotone);
  }

  // ---- observers ----

  Kind kind() const { return kind_; }
  FnClass declared_class() const { return cls_; }

  /// Same representation with a different declared class (re-validated).
  ScalarFn with_class(FnClass cls) const {
    ScalarFn f = *this;
    f.cls_ = cls;
    f.validate_or_throw();
    return f;
  }
  const std::vector<real>& knot_xs() const { return xs_; }
  const std::vector<real>& knot_ys() const { return ys_; }
  real param_a() const { return a_; }
  real param_b() const { return b_; }

  bool nondecreasing_class() const { return cls_ != FnClass::kL; }

  /// f(s). Exact on knots for the piecewise-linear kind.
  real eval(real s) const {
    if (s < 0.0) throw DomainError("ScalarFn::eval: negative input");
    switch (kind_) {
      case Kind::kPower:
        return a_ * std::pow(s, b_);
      case Kind::kLinearSaturation:
        return std::min(a_ * s, b_);
      case Kind::kExpAffine:
        return a_ * std::exp(b_ * s);
      case Kind::kPiecewiseLinear:
        return eval_pwl(s);
    }
    return 0.0;
  }

  real operator()(real s) const { return eval(s); }

  /// Final-segment slope of the piecewise-linear representation (the slope
  /// used for linear extrapolation of nondecreasing kinds).
  real final_slope() const {
    switch (kind_) {
      case Kind::kPower:
        return (b_ == 1.0) ? a_ : (b_ > 1.0 ? std::numeric_limits<real>::infinity() : 0.0);
      case Kind::kLinearSaturation:
        return 0.0;
      case Kind::kExpAffine:
        return 0.0;
      case Kind::kPiecewiseLinear: {
        std::size_t n = xs_.size();
        return (ys_[n - 1] - ys_[n - 2]) / (xs_[n - 1] - xs_[n - 2]);
      }
    }
    return 0.0;
  }

  ValidationResult validate() const {
    switch (cls_) {
      case FnClass::kK:
      case FnClass::kKInf: {
        if (eval(0.0) != 0.0) return {false, "class K: value at 0 must be 0"};
        if (kind_ == Kind::kPower) {
          if (a_ <= 0.0) return {false, "class K: power law needs a > 0"};
          break;
        }
        if (kind_ == Kind::kLinearSaturation)
          return {false, "class K: saturation is not strictly increasing"};
        if (kind_ == Kind::kExpAffine) return {false, "class K: exp-affine is positive at 0"};
        for (std::size_t i = 1; i < ys_.size(); ++i)
          if (!(ys_[i] > ys_[i - 1]))
            return {false, "class K: not strictly increasing on the knot grid"};
        if (cls_ == FnClass::kKInf && !(final_slope() > 0.0))
          return {false, "class Kinf: final-segment slope must be > 0"};
        break;
      }
      case FnClass::kL: {
        if (kind_ == Kind::kExpAffine) {
          if (!(b_ < 0.0)) return {false, "class L: exp-affine needs negative rate"};
          break;
        }
        if (kind_ != Kind::kPiecewiseLinear)
          return {false, "class L: kind cannot represent a decaying function"};
        for (std::size_t i = 1; i < ys_.size(); ++i)
          if (ys_[i] > ys_[i - 1]) return {false, "class L: not nonincreasing on the knot grid"};
        std::size_t n = ys_.size();
        if (ys_[n - 1] != 0.0 && !(ys_[n - 1] < ys_[n - 2]))
          return {false, "class L: final segment must decay toward the limit 0"};
        break;
      }
      case FnClass::kMonotone: {
        if (kind_ == Kind::kExpAffine && b_ < 0.0)
          return {false, "monotone: decaying exp-affine is not nondecreasing"};
        if (kind_ == Kind::kPiecewiseLinear)
          for (std::size_t i = 1; i < ys_.size(); ++i)
            if (ys_[i] < ys_[i - 1]) return {false, "monotone: decreasing on the knot grid"};
        break;
      }
    }
    return {};
  }

  void validate_or_throw() const {
    auto r = validate();
    if (!r.ok) throw ClassError("ScalarFn: " + r.what + " (declared " + to_string(cls_) + ")");
  }

  // ---- representation changes ----

  /// Lower to the canonical piecewise-linear form on a geometric grid over
  /// (0, range_hint]. Exact for kinds that are already piecewise linear.
  ScalarFn lower_to_pwl(real range_hint = kDefaultRangeHint, const LoweringGrid& g = {}) const {
    if (kind_ == Kind::kPiecewiseLinear) return *this;
    if (kind_ == Kind::kPower && b_ == 1.0) {
      return pwl({{0.0, 0.0}, {range_hint, a_ * range_hint}}, cls_);
    }
    if (kind_ == Kind::kLinearSaturation) {
      real kink = b_ / a_;
      return pwl({{0.0, 0.0}, {kink, b_}, {2.0 * kink, b_}}, FnClass::kMonotone);
    }
    std::vector<real> xs = geometric_grid(range_hint * g.lo_rel, range_hint, g.points_per_decade);
    xs.insert(xs.begin(), 0.0);
    std::vector<real> ys(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) ys[i] = eval(xs[i]);
    return pwl(std::move(xs), std::move(ys), cls_);
  }

  ScalarFn scale_output(real c) const {
    require(c >= 0.0, "scale_output: need c >= 0");
    ScalarFn f = *this;
    switch (kind_) {
      case Kind::kPower:
      case Kind::kExpAffine:
        f.a_ *= c;
        break;
      case Kind::kLinearSaturation:
        f.a_ *= c;
        f.b_ *= c;
        break;
      case Kind::kPiecewiseLinear:
        for (real& y : f.ys_) y *= c;
        break;
    }
    if (c == 0.0) f.cls_ = FnClass::kMonotone;
    return f;
  }

  /// s -> f(c*s)
  ScalarFn scale_input(real c) const {
    require(c > 0.0, "scale_input: need c > 0");
    ScalarFn f = *this;
    switch (kind_) {
      case Kind::kPower:
        f.a_ *= std::pow(c, b_);
        break;
      case Kind::kLinearSaturation:
        f.a_ *= c;
        break;
      case Kind::kExpAffine:
        f.b_ *= c;
        break;
      case Kind::kPiecewiseLinear:
        for (real& x : f.xs_) x /= c;
        break;
    }
    return f;
  }

  /// Drops exactly-collinear interior knots.
  ScalarFn simplified() const {
    if (kind_ != Kind::kPiecewiseLinear || xs_.size() <= 2) return *this;
    std::vector<real> xs{xs_[0]}, ys{ys_[0]};
    for (std::size_t i = 1; i + 1 < xs_.size(); ++i) {
      real lhs = (ys_[i] - ys.back()) * (xs_[i + 1] - xs.back());
      real rhs = (ys_[i + 1] - ys.back()) * (xs_[i] - xs.back());
      if (lhs != rhs) {
        xs.push_back(xs_[i]);
        ys.push_back(ys_[i]);
      }
    }
    xs.push_back(xs_.back());
    ys.push_back(ys_.back());
    return pwl(std::move(xs), std::move(ys), cls_);
  }

  static constexpr real kDefaultRangeHint = 1e6;

  static std::vector<real> geometric_grid(real lo, real hi, int points_per_decade) {
    require(lo > 0.0 && hi > lo, "geometric_grid: need 0 < lo < hi");
    double decades = std::log10(hi / lo);
    int n = std::max(2, static_cast<int>(std::ceil(decades * points_per_decade)));
    std::vector<real> xs(static_cast<std::size_t>(n) + 1);
    for (int i = 0; i <= n; ++i) xs[static_cast<std::size_t>(i)] = lo * std::pow(hi / lo, real(i) / n);
    xs.back() = hi;
    return xs;
  }

 private:
  real eval_pwl(real s) const {
    if (s >= xs_.back()) {
      std::size_t n = xs_.size();
      if (cls_ == FnClass::kL) {
        // Exponential extrapolation of the final segment toward the limit 0.
        real y1 = ys_[n - 2], y2 = ys_[n - 1];
        if (y2 <= 0.0) return 0.0;
        if (y2 >= y1) return y2;  // invalid L tail; hold (validation flags it)
        real h = xs_[n - 1] - xs_[n - 2];
        return y2 * std::pow(y2 / y1, (s - xs_.back()) / h);
      }
      return ys_[n - 1] + final_slope() * (s - xs_[n - 1]);
    }
    auto it = std::upper_bound(xs_.begin(), xs_.end(), s);
    std::size_t i = static_cast<std::size_t>(it - xs_.begin());
    if (i == 0) return ys_[0];
    real x0 = xs_[i - 1], x1 = xs_[i];
    real w = (s - x0) / (x1 - x0);
    return ys_[i - 1] + w * (ys_[i] - ys_[i - 1]);
  }

  Kind kind_ = Kind::kPiecewiseLinear;
  FnClass cls_ = FnClass::kMonotone;
  std::vector<real> xs_, ys_;  // piecewise-linear knots
  real a_ = 0.0, b_ = 0.0;     // parametric coefficients
};

namespace detail {

/// All x where the nondecreasing piecewise-linear f reaches level y
/// (segment crossings and, when needed, the linear extension).
inline void append_preimages(const ScalarFn& f, real y, std::vector<real>& out) {
  const auto& xs = f.knot_xs();
  const auto& ys = f.knot_ys();
  for (std::size_t i = 1; i < xs.size(); ++i) {
    if (ys[i - 1] < y && y < ys[i]) {
      real w = (y - ys[i - 1]) / (ys[i] - ys[i - 1]);
      out.push_back(xs[i - 1] + w * (xs[i] - xs[i - 1]));
    }
  }
  real slope = f.final_slope();
  if (y > ys.back() && slope > 0.0) out.push_back(xs.back() + (y - ys.back()) / slope);
}

inline FnClass combine_compose(FnClass f, FnClass g) {
  auto is_k = [](FnClass c) { return c == FnClass::kK || c == FnClass::kKInf; };
  if (is_k(f) && is_k(g))
    return (f == FnClass::kKInf && g == FnClass::kKInf) ? FnClass::kKInf : FnClass::kK;
  return FnClass::kMonotone;
}

inline FnClass combine_join(FnClass a, FnClass b) {
  auto is_k = [](FnClass c) { return c == FnClass::kK || c == FnClass::kKInf; };
  if (!is_k(a) || !is_k(b)) return FnClass::kMonotone;
  return (a == FnClass::kKInf || b == FnClass::kKInf) ? FnClass::kKInf : FnClass::kK;
}

}  // namespace detail

/// h(s) = f(g(s)), exact for piecewise-linear operands; parametric kinds are
/// lowered to the canonical form first. Class K is closed under composition.
inline ScalarFn compose(const ScalarFn& f, const ScalarFn& g,
                        real range_hint = ScalarFn::kDefaultRangeHint) {
  require(f.nondecreasing_class() && g.nondecreasing_class(),
          "compose: operands must be nondecreasing classes");
  ScalarFn gp = g.lower_to_pwl(range_hint);
  real g_hi = std::max(gp.eval(range_hint), real(1.0));
  ScalarFn fp = f.lower_to_pwl(g_hi * (1.0 + 1e-9));

  std::vector<real> knots = gp.knot_xs();
  for (real yk : fp.knot_xs()) detail::append_preimages(gp, yk, knots);
  knots.push_back(gp.knot_xs().back() + 1.0);  // pins the extension slope
  std::sort(knots.begin(), knots.end());
  knots.erase(std::unique(knots.begin(), knots.end()), knots.end());

  std::vector<real> ys(knots.size());
  for (std::size_t i = 0; i < knots.size(); ++i) ys[i] = fp.eval(gp.eval(knots[i]));
  return ScalarFn::pwl(std::move(knots), std::move(ys),
                       detail::combine_compose(f.declared_class(), g.declared_class()))
      .simplified();
}

/// Functional inverse of a class-K function. Exact: power laws invert in
/// closed form and piecewise-linear knots swap. Beyond the represented range
/// the inverse extends linearly when the final slope is positive and
/// saturates at the domain endpoint otherwise.
inline ScalarFn inverse(const ScalarFn& f) {
  if (f.kind() == ScalarFn::Kind::kPower) {
    if (!(f.param_a() > 0.0)) throw ClassError("inverse: zero power law is not class K");
    return ScalarFn::power(std::pow(1.0 / f.param_a(), 1.0 / f.param_b()), 1.0 / f.param_b(),
                           f.declared_class() == FnClass::kKInf ? FnClass::kKInf : FnClass::kK);
  }
  ScalarFn p = f.lower_to_pwl();
  const auto& ys = p.knot_ys();
  for (std::size_t i = 1; i < ys.size(); ++i)
    if (!(ys[i] > ys[i - 1]))
      throw ClassError("inverse: function is not strictly increasing on its knot grid");
  if (ys.front() != 0.0) throw ClassError("inverse: class K requires f(0) = 0");
  return ScalarFn::pwl(ys, p.knot_xs(),
                       f.declared_class() == FnClass::kKInf ? FnClass::kKInf : FnClass::kK);
}

/// n-fold self-composition; iterate(f, 0) is the identity.
inline ScalarFn iterate(const ScalarFn& f, unsigned n,
                        real range_hint = ScalarFn::kDefaultRangeHint) {
  if (n == 0) return ScalarFn::identity();
  ScalarFn h = f;
  for (unsigned i = 1; i < n; ++i) h = compose(f, h, range_hint);
  return h;
}

namespace detail {

/// Merged knot set of two lowered functions, including the crossing points
/// of their segments and extensions.
inline std::vector<real> merged_knots_with_crossings(const ScalarFn& a, const ScalarFn& b) {
  std::vector<real> knots = a.knot_xs();
  knots.insert(knots.end(), b.knot_xs().begin(), b.knot_xs().end());
  std::sort(knots.begin(), knots.end());
  knots.erase(std::unique(knots.begin(), knots.end()), knots.end());

  std::vector<real> result = knots;
  for (std::size_t i = 1; i < knots.size(); ++i) {
    real xl = knots[i - 1], xr = knots[i];
    real dl = a.eval(xl) - b.eval(xl);
    real dr = a.eval(xr) - b.eval(xr);
    if ((dl < 0.0 && dr > 0.0) || (dl > 0.0 && dr < 0.0)) {
      real w = dl / (dl - dr);
      result.push_back(xl + w * (xr - xl));
    }
  }
  // Extensions beyond the last knot may cross once.
  real x_last = knots.back();
  real da = a.final_slope() - b.final_slope();
  real d0 = a.eval(x_last) - b.eval(x_last);
  if (da != 0.0) {
    real xc = x_last - d0 / da;
    if (xc > x_last) {
      result.push_back(xc);
      result.push_back(xc + std::max(real(1.0), xc - x_last));
    }
  }
  result.push_back(x_last + 1.0);
  std::sort(result.begin(), result.end());
  result.erase(std::unique(result.begin(), result.end()), result.end());
  return result;
}

}  // namespace detail

/// Exact pointwise maximum of nondecreasing functions.
inline ScalarFn max_of(const ScalarFn& a, const ScalarFn& b,
                       real range_hint = ScalarFn::kDefaultRangeHint) {
  require(a.nondecreasing_class() && b.nondecreasing_class(),
          "max_of: operands must be nondecreasing classes");
  ScalarFn ap = a.lower_to_pwl(range_hint), bp = b.lower_to_pwl(range_hint);
  std::vector<real> xs = detail::merged_knots_with_crossings(ap, bp);
  std::vector<real> ys(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) ys[i] = std::max(ap.eval(xs[i]), bp.eval(xs[i]));
  return ScalarFn::pwl(std::move(xs), std::move(ys),
                       detail::combine_join(a.declared_class(), b.declared_class()))
      .simplified();
}

/// Exact pointwise sum of nondecreasing functions.
inline ScalarFn sum_of(const ScalarFn& a, const ScalarFn& b,
                       real range_hint = ScalarFn::kDefaultRangeHint) {
  require(a.nondecreasing_class() && b.nondecreasing_class(),
          "sum_of: operands must be nondecreasing classes");
  ScalarFn ap = a.lower_to_pwl(range_hint), bp = b.lower_to_pwl(range_hint);
  std::vector<real> xs = ap.knot_xs();
  xs.insert(xs.end(), bp.knot_xs().begin(), bp.knot_xs().end());
  xs.push_back(std::max(ap.knot_xs().back(), bp.knot_xs().back()) + 1.0);
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  std::vector<real> ys(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) ys[i] = ap.eval(xs[i]) + bp.eval(xs[i]);
  return ScalarFn::pwl(std::move(xs), std::move(ys),
                       detail::combine_join(a.declared_class(), b.declared_class()))
      .simplified();
}

namespace detail {

inline std::vector<real> contraction_grid(const ScalarFn& gamma, real r0,
                                          const ContractionGrid& cfg) {
  real horizon = cfg.horizon > 0.0 ? cfg.horizon : 1e6 * std::max(r0, real(1.0));
  real lo = r0 > 0.0 ? r0 * (1.0 + 1e-9) : horizon * 1e-12;
  std::vector<real> grid = ScalarFn::geometric_grid(lo, horizon, cfg.points_per_decade);
  if (gamma.kind() == ScalarFn::Kind::kPiecewiseLinear) {
    for (real x : gamma.knot_xs())
      if (x > r0 && x <= horizon) grid.push_back(x);
  }
  if (gamma.kind() == ScalarFn::Kind::kLinearSaturation) {
    real kink = gamma.param_b() / gamma.param_a();
    if (kink > r0 && kink <= horizon) grid.push_back(kink);
  }
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

}  // namespace detail

/// Grid-certified test of gamma(r) < r for every grid point r > r0.
/// On failure the witness is the smallest failing grid point.
inline ContractionCheck is_contraction_above(const ScalarFn& gamma, real r0,
                                             const ContractionGrid& cfg = {}) {
  require(r0 >= 0.0, "is_contraction_above: need r0 >= 0");
  for (real r : detail::contraction_grid(gamma, r0, cfg))
    if (!(gamma.eval(r) < r)) return {false, r};
  return {true, 0.0};
}

/// Grid-certified test of gamma(r) + rho(gamma(r)) < r for every grid r > r0.
inline ContractionCheck is_contraction_with_margin(const ScalarFn& gamma, const ScalarFn& rho,
                                                   real r0, const ContractionGrid& cfg = {}) {
  require(r0 >= 0.0, "is_contraction_with_margin: need r0 >= 0");
  for (real r : detail::contraction_grid(gamma, r0, cfg)) {
    real g = gamma.eval(r);
    if (!(g + rho.eval(g) < r)) return {false, r};
  }
  return {true, 0.0};
}

}  // namespace sgt
