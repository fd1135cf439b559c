#pragma once

#include <memory>
#include <vector>

#include "sgt/scalar_fn.hpp"

namespace sgt {

/// A two-argument bound beta(s, t), class K in s for each fixed t and class L
/// in t for each fixed s (checked on evaluation grids).
///
/// Forms: separable k(s)*l(t); max trees of scalar-function compositions
/// applied to (s, t); and gridded samples with monotone interpolation
/// (piecewise linear in s, previous-knot lookup in t, exponential tail
/// beyond the last t knot).
class KLFn {
 public:
  KLFn() : KLFn(separable(ScalarFn::identity(), ScalarFn::exp_decay(1.0, 1.0))) {}

  static KLFn separable(ScalarFn k, ScalarFn l) {
    auto n = std::make_shared<Node>();
    n->form = Form::kSeparable;
    n->k = std::move(k);
    n->l = std::move(l);
    return KLFn(std::move(n));
  }

  static KLFn scaled(real c, KLFn inner) {
    require(c >= 0.0, "KLFn::scaled: need c >= 0");
    auto n = std::make_shared<Node>();
    n->form = Form::kScaled;
    n->c = c;
    n->terms.push_back(std::move(inner));
    return KLFn(std::move(n));
  }

  /// outer(inner(s_pre(s), t_scale * t))
  static KLFn composed(ScalarFn outer, KLFn inner, ScalarFn s_pre = ScalarFn::identity(),
                       real t_scale = 1.0) {
    require(t_scale >= 0.0, "KLFn::composed: need t_scale >= 0");
    auto n = std::make_shared<Node>();
    n->form = Form::kComposed;
    n->k = std::move(outer);
    n->s_pre = std::move(s_pre);
    n->c = t_scale;
    n->terms.push_back(std::move(inner));
    return KLFn(std::move(n));
  }

  static KLFn max_of(std::vector<KLFn> terms) {
    require(!terms.empty(), "KLFn::max_of: need at least one term");
    auto n = std::make_shared<Node>();
    n->form = Form::kMax;
    n->terms = std::move(terms);
    return KLFn(std::move(n));
  }

  struct GriddedData {
    std::vector<real> s_knots;               // increasing, first = 0
    std::vector<real> t_knots;               // increasing, first = 0
    std::vector<std::vector<real>> values;   // [s][t], nondecreasing in s, nonincreasing in t
    real tail_rate = 1.0;                    // exponential decay rate beyond the last t knot
    real dress_eps = 0.0;                    // strictness dressing amplitude
    real dress_rate = 1.0;                   // dressing decay rate in t
  };

  static KLFn gridded(GriddedData g) {
    require(g.s_knots.size() >= 2 && g.t_knots.size() >= 1, "KLFn::gridded: grid too small");
    require(g.s_knots.front() == 0.0 && g.t_knots.front() == 0.0,
            "KLFn::gridded: grids must start at 0");
    require(g.values.size() == g.s_knots.size(), "KLFn::gridded: value rows mismatch");
    for (auto& row : g.values)
      require(row.size() == g.t_knots.size(), "KLFn::gridded: value cols mismatch");
    require(g.tail_rate > 0.0, "KLFn::gridded: need tail_rate > 0");
    auto n = std::make_shared<Node>();
    n->form = Form::kGridded;
    n->grid = std::make_shared<GriddedData>(std::move(g));
    return KLFn(std::move(n));
  }

  real eval(real s, real t) const {
    if (s < 0.0 || t < 0.0) throw DomainError("KLFn::eval: negative argument");
    return node_->eval(s, t);
  }

  real operator()(real s, real t) const { return eval(s, t); }

  /// The s-slice at fixed t as a scalar function (exact for separable and
  /// gridded forms; max trees lower through the scalar-function algebra).
  ScalarFn slice_at(real t, real range_hint = ScalarFn::kDefaultRangeHint) const {
    return node_->slice_at(t, range_hint);
  }

  /// Grid-based class check: K in s along each t gridline, L in t along each
  /// s gridline, with a decay spot-check beyond the last grid time.
  ValidationResult validate_on(const std::vector<real>& s_grid,
                               const std::vector<real>& t_grid) const {
    require(!s_grid.empty() && !t_grid.empty(), "KLFn::validate_on: empty grid");
    for (real t : t_grid) {
      if (eval(0.0, t) > 1e-12) return {false, "K in s: value at s=0 is not 0"};
      real prev = 0.0;
      bool first = true;
      for (real s : s_grid) {
        if (s == 0.0) continue;
        real v = eval(s, t);
        if (!first && !(v > prev)) return {false, "K in s: not strictly increasing on grid"};
        prev = v;
        first = false;
      }
    }
    real t_max = t_grid.back();
    for (real s : s_grid) {
      if (s == 0.0) continue;
      real prev = eval(s, t_grid.front());
      for (real t : t_grid) {
        real v = eval(s, t);
        if (v > prev * (1.0 + 1e-12) + 1e-300) return {false, "L in t: increasing on grid"};
        prev = v;
      }
      real far = eval(s, 10.0 * (t_max + 1.0));
      real at_end = eval(s, t_max);
      if (at_end > 0.0 && !(far < at_end)) return {false, "L in t: tail does not decay"};
    }
    return {};
  }

  enum class Form { kSeparable, kScaled, kComposed, kMax, kGridded };

  // structural introspection (serialization, reports)
  Form form() const { return node_->form; }
  const ScalarFn& part_k() const { return node_->k; }          // separable k / composed outer
  const ScalarFn& part_l() const { return node_->l; }          // separable l
  const ScalarFn& part_s_pre() const { return node_->s_pre; }  // composed pre-map
  real factor() const { return node_->c; }                     // scaled c / composed t_scale
  const std::vector<KLFn>& parts() const { return node_->terms; }
  const GriddedData* gridded_data() const {
    return node_->form == Form::kGridded ? node_->grid.get() : nullptr;
  }

 private:

  struct Node {
    Form form = Form::kSeparable;
    ScalarFn k, l, s_pre;
    real c = 1.0;
    std::vector<KLFn> terms;
    std::shared_ptr<GriddedData> grid;

    real eval(real s, real t) const {
      switch (form) {
        case Form::kSeparable:
          return k.eval(s) * l.eval(t);
        case Form::kScaled:
          return c * terms[0].eval(s, t);
        case Form::kComposed:
          return k.eval(terms[0].eval(s_pre.eval(s), c * t));
        case Form::kMax: {
          real v = 0.0;
          for (const auto& q : terms) v = std::max(v, q.eval(s, t));
          return v;
        }
        case Form::kGridded:
          return eval_gridded(s, t);
      }
      return 0.0;
    }

    real eval_gridded(real s, real t) const {
      const GriddedData& g = *grid;
      // previous-knot lookup in t, exponential tail beyond the grid
      real tail = 1.0;
      std::size_t j;
      if (t >= g.t_knots.back()) {
        j = g.t_knots.size() - 1;
        tail = std::exp(-g.tail_rate * (t - g.t_knots.back()));
      } else {
        j = static_cast<std::size_t>(
                std::upper_bound(g.t_knots.begin(), g.t_knots.end(), t) - g.t_knots.begin()) -
            1;
        tail = 1.0;
      }
      // piecewise linear in s, final-segment extension beyond the grid
      real base;
      std::size_t n = g.s_knots.size();
      if (s >= g.s_knots.back()) {
        real slope = (g.values[n - 1][j] - g.values[n - 2][j]) /
                     (g.s_knots[n - 1] - g.s_knots[n - 2]);
        base = g.values[n - 1][j] + std::max(slope, real(0.0)) * (s - g.s_knots.back());
      } else {
        auto it = std::upper_bound(g.s_knots.begin(), g.s_knots.end(), s);
        std::size_t i = static_cast<std::size_t>(it - g.s_knots.begin());
        if (i == 0) i = 1;
        real w = (s - g.s_knots[i - 1]) / (g.s_knots[i] - g.s_knots[i - 1]);
        base = g.values[i - 1][j] + w * (g.values[i][j] - g.values[i - 1][j]);
      }
      if (t >= g.t_knots.back()) base *= tail;
      // piecewise-linear strictness dressing, decaying in t
      real scale = g.s_knots.back();
      real dress = g.dress_eps * (std::min(s, scale) / scale) * std::exp(-g.dress_rate * t);
      return base + dress;
    }

    ScalarFn slice_at(real t, real range_hint) const {
      switch (form) {
        case Form::kSeparable:
          return k.scale_output(l.eval(t));
        case Form::kScaled:
          return terms[0].slice_at(t, range_hint).scale_output(c);
        case Form::kComposed: {
          ScalarFn inner = terms[0].slice_at(c * t, range_hint);
          return compose(k, compose(inner, s_pre, range_hint), range_hint);
        }
        case Form::kMax: {
          ScalarFn m = terms[0].slice_at(t, range_hint);
          for (std::size_t i = 1; i < terms.size(); ++i)
            m = sgt::max_of(m, terms[i].slice_at(t, range_hint), range_hint);
          return m;
        }
        case Form::kGridded: {
          std::vector<real> ys(grid->s_knots.size());
          for (std::size_t i = 0; i < ys.size(); ++i) ys[i] = eval_gridded(grid->s_knots[i], t);
          FnClass cls = ys.front() == 0.0 ? FnClass::kK : FnClass::kMonotone;
          return ScalarFn::pwl(grid->s_knots, ys, cls);
        }
      }
      return ScalarFn::zero();
    }
  };

  explicit KLFn(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  std::shared_ptr<const Node> node_;
};

/// theta(s) := beta(s, 0), the transient-overshoot slice.
inline ScalarFn transient_slice(const KLFn& beta,
                                real range_hint = ScalarFn::kDefaultRangeHint) {
  return beta.slice_at(0.0, range_hint);
}

}  // namespace sgt
