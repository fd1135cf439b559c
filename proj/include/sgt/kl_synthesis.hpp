#pragma once

#include <functional>
#include <optional>

#include "sgt/checks.hpp"

namespace sgt {

/// Attractivity data (C, delta, T): T(eps, r) is the certified waiting time
/// after which the output stays below eps from any start with x(t0) <= r.
/// Stored on explicit (eps, radius) grids; +infinity never appears in stored
/// data, queries outside the grid return a tagged sentinel instead.
struct AttractivityTable {
  real C = 0.0;
  ScalarFn delta;  // class K-infinity stability gauge
  std::vector<real> eps;                  // > C, strictly increasing
  std::vector<real> radii;                // > 0, strictly increasing
  std::vector<std::vector<real>> T;       // [eps index][radius index]
  bool regularized = false;

  void validate_or_throw() const {
    require(!eps.empty() && !radii.empty(), "attractivity table: empty grid");
    require(C >= 0.0, "attractivity table: need C >= 0");
    for (std::size_t i = 0; i < eps.size(); ++i) {
      require(eps[i] > C, "attractivity table: eps must exceed C");
      if (i) require(eps[i] > eps[i - 1], "attractivity table: eps must increase");
    }
    for (std::size_t j = 0; j < radii.size(); ++j) {
      require(radii[j] > 0.0, "attractivity table: radii must be positive");
      if (j) require(radii[j] > radii[j - 1], "attractivity table: radii must increase");
    }
    require(T.size() == eps.size(), "attractivity table: row count mismatch");
    for (const auto& row : T) {
      require(row.size() == radii.size(), "attractivity table: column count mismatch");
      for (real v : row)
        require(std::isfinite(v) && v >= 0.0, "attractivity table: T must be finite and >= 0");
    }
  }

  /// Smallest stored radius >= r, or none when r lies above the grid.
  std::optional<std::size_t> column_for(real r) const {
    auto it = std::lower_bound(radii.begin(), radii.end(), r);
    if (it == radii.end()) return std::nullopt;
    return static_cast<std::size_t>(it - radii.begin());
  }

  /// Conservative waiting-time claim for arbitrary (eps, r): the stored entry
  /// at the largest grid eps <= eps and the smallest grid radius >= r.
  /// Returns a far sentinel when no stored entry certifies the pair.
  real claim(real eps_q, real r) const {
    constexpr real kNoClaim = 1e300;
    auto col = column_for(r);
    if (!col) return kNoClaim;
    auto it = std::upper_bound(eps.begin(), eps.end(), eps_q);
    if (it == eps.begin()) return kNoClaim;
    std::size_t i = static_cast<std::size_t>(it - eps.begin()) - 1;
    return T[i][*col];
  }

  std::function<real(real, real)> as_function() const {
    return [table = *this](real e, real r) { return table.claim(e, r); };
  }
};

/// Regularized table: T_hat(eps, r) = r/(eps - C) + inf{T(eps', r') :
/// r' >= r, C < eps' <= eps} over the stored grid. The result is strictly
/// increasing in r, strictly decreasing in eps, and inherits the table's
/// attractivity claims (the infimum is attained at a stored, certified pair).
inline AttractivityTable regularize_table(const AttractivityTable& table) {
  table.validate_or_throw();
  AttractivityTable out = table;
  std::size_t ne = table.eps.size(), nr = table.radii.size();
  std::vector<std::vector<real>> m(ne, std::vector<real>(nr));
  for (std::size_t i = 0; i < ne; ++i) {
    for (std::size_t jr = nr; jr-- > 0;) {
      real v = table.T[i][jr];
      if (i > 0) v = std::min(v, m[i - 1][jr]);
      if (jr + 1 < nr) v = std::min(v, m[i][jr + 1]);
      m[i][jr] = v;
    }
  }
  for (std::size_t i = 0; i < ne; ++i)
    for (std::size_t jr = 0; jr < nr; ++jr)
      out.T[i][jr] = table.radii[jr] / (table.eps[i] - table.C) + m[i][jr];
  out.regularized = true;
  return out;
}

/// The infimum of the certified-level set {eps on the grid : T(eps, r) <= t},
/// with the radius snapped up to the stored grid; a tagged infinity when the
/// set is empty on the grid.
inline ExtReal reachable_level(const AttractivityTable& table, real r, real t) {
  if (!(r > 0.0)) throw DomainError("reachable_level: need r > 0");
  if (t < 0.0) throw DomainError("reachable_level: need t >= 0");
  auto col = table.column_for(r);
  if (!col) return ExtReal::inf();
  for (std::size_t i = 0; i < table.eps.size(); ++i)
    if (table.T[i][*col] <= t) return ExtReal::of(table.eps[i]);
  return ExtReal::inf();
}

/// Sampled two-argument surface for envelope fitting.
struct PhiSamples {
  std::vector<real> s_knots;  // increasing, first = 0, phi(0, .) = 0
  std::vector<real> t_knots;  // increasing, first = 0
  std::vector<std::vector<real>> values;  // [s][t]
};

struct EnvelopeOptions {
  real margin = 0.05;   // sound-dominance guard against grid undersampling
  int probe_levels = 8; // hypothesis-precheck probe count
  real dress_rel = 1e-9;
};

/// Monotone KL envelope of the samples: the nondecreasing-in-s,
/// nonincreasing-in-t upper hull, multiplied by (1 + margin), with an
/// exponential tail beyond the last time knot keyed to the witnessed decay.
///
/// Preconditions are the two classical envelope hypotheses, checked on the
/// grid: attractivity via T_witness (phi(s, t) < eps for s <= r,
/// t >= T_witness(eps, r)) and stability via stability_delta (phi(s, t) <= eps
/// for s <= stability_delta(eps)). Violations raise a DomainError naming the
/// failed bullet.
inline KLFn kl_envelope(const PhiSamples& phi, const ScalarFn& stability_delta,
                        const std::function<real(real, real)>& T_witness,
                        const EnvelopeOptions& opts = {}) {
  require(phi.s_knots.size() >= 2 && !phi.t_knots.empty(), "kl_envelope: grid too small");
  require(phi.s_knots.front() == 0.0 && phi.t_knots.front() == 0.0,
          "kl_envelope: grids must start at 0");
  require(phi.values.size() == phi.s_knots.size(), "kl_envelope: sample rows mismatch");
  std::size_t ns = phi.s_knots.size(), nt = phi.t_knots.size();
  real v_max = 0.0;
  for (const auto& row : phi.values) {
    require(row.size() == nt, "kl_envelope: sample cols mismatch");
    for (real v : row) {
      require(std::isfinite(v) && v >= 0.0, "kl_envelope: samples must be finite and >= 0");
      v_max = std::max(v_max, v);
    }
  }
  for (real v : phi.values.front())
    require(v == 0.0, "kl_envelope: phi(0, t) must be 0");

  // Monotone upper hull. hull[i][j] = sup{phi(s', t') : s' <= s_i, t' >= t_j},
  // which doubles as the region maximum for the hypothesis prechecks below.
  std::vector<std::vector<real>> hull(ns, std::vector<real>(nt));
  for (std::size_t i = 0; i < ns; ++i)
    for (std::size_t j = nt; j-- > 0;) {
      real v = phi.values[i][j];
      if (i > 0) v = std::max(v, hull[i - 1][j]);
      if (j + 1 < nt) v = std::max(v, hull[i][j + 1]);
      hull[i][j] = v;
    }

  // Probe levels: positive values the surface provably attains.
  std::vector<real> probes;
  for (int k = 1; k <= opts.probe_levels; ++k)
    probes.push_back(v_max * real(k) / opts.probe_levels * (1.0 + 1e-9) + 1e-12);

  auto t_index_at_or_after = [&](real tw) -> std::optional<std::size_t> {
    auto it = std::lower_bound(phi.t_knots.begin(), phi.t_knots.end(), tw);
    if (it == phi.t_knots.end()) return std::nullopt;
    return static_cast<std::size_t>(it - phi.t_knots.begin());
  };

  // Bullet 1: attractivity — phi(s, t) < eps for all s <= r, t >= T(eps, r).
  for (std::size_t i = 1; i < ns; ++i) {
    for (real e : probes) {
      auto j = t_index_at_or_after(T_witness(e, phi.s_knots[i]));
      if (!j) continue;  // witness beyond the grid: vacuous on the grid
      if (!(hull[i][*j] < e))
        throw DomainError("kl_envelope: attractivity hypothesis fails (s=" +
                          std::to_string(phi.s_knots[i]) + ", t>=" +
                          std::to_string(phi.t_knots[*j]) + ", eps=" + std::to_string(e) + ")");
    }
  }
  // Bullet 2: stability — phi(s, t) <= eps for all s <= stability_delta(eps).
  for (real e : probes) {
    real gate = stability_delta.eval(e);
    for (std::size_t i = 0; i < ns && phi.s_knots[i] <= gate; ++i)
      if (hull[i][0] > e * (1.0 + 1e-9))
        throw DomainError("kl_envelope: stability hypothesis fails (s=" +
                          std::to_string(phi.s_knots[i]) + ", eps=" + std::to_string(e) + ")");
  }

  KLFn::GriddedData g;
  g.s_knots = phi.s_knots;
  g.t_knots = phi.t_knots;
  g.values = std::move(hull);
  for (auto& row : g.values) {
    for (real& v : row) v *= (1.0 + opts.margin);
  }
  // Keep the s = 0 slice exactly zero.
  for (real& v : g.values.front()) v = 0.0;

  // Tail rate keyed to the witnessed decay of the top row.
  real rate = 1.0;
  if (nt >= 2 && v_max > 0.0) {
    real v_end = std::max(g.values[ns - 1][nt - 1], v_max * 1e-12);
    std::size_t j_half = 0;
    for (std::size_t j = 0; j < nt; ++j)
      if (g.values[ns - 1][j] >= 2.0 * v_end) j_half = j;
    real t_half = phi.t_knots[nt - 1] - phi.t_knots[j_half];
    if (t_half <= 0.0) t_half = std::max(phi.t_knots.back() * 0.25, real(1.0));
    rate = std::log(2.0) / t_half;
  }
  g.tail_rate = rate;
  g.dress_eps = opts.dress_rel * (v_max + 1e-12);
  g.dress_rate = rate;
  return KLFn::gridded(std::move(g));
}

struct DecayBoundOptions {
  int max_t_columns = 512;
  real t_hi = 0.0;        // 0 = auto: 1.25 * largest stored waiting time
  int delta_inv_knots = 48;
  EnvelopeOptions envelope{};
};

namespace detail {

inline std::vector<real> subsample_sorted(std::vector<real> v, std::size_t cap) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  if (v.size() <= cap) return v;
  std::vector<real> out;
  out.reserve(cap);
  for (std::size_t k = 0; k < cap; ++k)
    out.push_back(v[k * (v.size() - 1) / (cap - 1)]);
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace detail

/// The constructive decay bound behind the practical-to-KL direction: from a
/// regularized table build phi(r, t) = min{reachable_level(r, t) - C,
/// delta^{-1}(r)} (with the stability branch when no level is certified and
/// phi(0, t) = 0), fit a KL envelope, and return twice the envelope.
///
/// The sample grid bakes the radius snap-up into the stored values, so the
/// returned bound dominates phi at every real argument inside the grid, and
/// at every grid (r, t) the certified level reachable_level(r, t) (or the
/// stability branch) satisfies min{level - 2C, delta^{-1}(r)} <= bound(r, t).
inline KLFn decay_bound_from_table(const AttractivityTable& table,
                                   const DecayBoundOptions& opts = {}) {
  require(table.regularized, "decay_bound_from_table: table must be regularized first");
  table.validate_or_throw();
  const real C = table.C;
  ScalarFn delta_inv = inverse(table.delta);

  // Time grid: every distinct stored waiting time (subsampled under a cap).
  std::vector<real> ts{0.0};
  for (const auto& row : table.T)
    for (real v : row) ts.push_back(v);
  real t_top = *std::max_element(ts.begin(), ts.end());
  real t_hi = opts.t_hi > 0.0 ? opts.t_hi : std::max(t_top * 1.25, real(1.0));
  ts.push_back(t_hi);
  ts = detail::subsample_sorted(std::move(ts), static_cast<std::size_t>(opts.max_t_columns));

  // phi at a query radius, exact up to the internal snap-up.
  auto phi_at = [&](real r, real t) -> real {
    if (r <= 0.0) return 0.0;
    ExtReal lvl = reachable_level(table, r, t);
    real stab = delta_inv.eval(r);
    if (!lvl.finite) return stab;
    return std::min(std::max(lvl.value - C, real(0.0)), stab);
  };

  // Radius grid: below the first stored radius phi follows the stability
  // branch exactly, so sample the shape of delta^{-1} there (plus the points
  // where it crosses the certified levels); at and above the stored radii the
  // snap-up is baked by storing each next radius's value.
  real r1 = table.radii.front();
  std::vector<real> low;
  for (real x : delta_inv.knot_xs())
    if (x > 0.0 && x < r1) low.push_back(x);
  low = detail::subsample_sorted(std::move(low), static_cast<std::size_t>(opts.delta_inv_knots));
  for (real e : table.eps) {
    real crossing = table.delta.eval(std::max(e - C, real(0.0)));
    if (crossing > 0.0 && crossing < r1) low.push_back(crossing);
  }
  low.push_back(r1 * 0.5);
  low = detail::subsample_sorted(std::move(low), static_cast<std::size_t>(opts.delta_inv_knots) + 8);

  PhiSamples phi;
  phi.t_knots = ts;
  phi.s_knots.push_back(0.0);
  for (real r : low)
    if (r > 0.0 && r < r1) phi.s_knots.push_back(r);
  for (real r : table.radii) phi.s_knots.push_back(r);
  real r_top = table.radii.back();
  phi.s_knots.push_back(2.0 * r_top);

  phi.values.assign(phi.s_knots.size(), std::vector<real>(ts.size()));
  for (std::size_t i = 0; i < phi.s_knots.size(); ++i) {
    real s = phi.s_knots[i];
    for (std::size_t j = 0; j < ts.size(); ++j)
      phi.values[i][j] = s > r_top ? delta_inv.eval(s)  // stability branch above the grid
                                   : phi_at(s, ts[j]);
  }

  // Attractivity witness from the stored table: the smallest stored waiting
  // time among levels below C + eps, at the radius column covering r. There
  // is no witness above the stored radii (the stability-only region), which
  // is vacuous on the grid.
  auto t_witness = [&table, C](real e, real r) -> real {
    auto col = table.column_for(r);
    if (!col) return 1e300;
    real best = 1e300;
    for (std::size_t i = 0; i < table.eps.size(); ++i)
      if (table.eps[i] - C < e) best = std::min(best, table.T[i][*col]);
    return best;
  };

  KLFn envelope = kl_envelope(phi, table.delta, t_witness, opts.envelope);

  // Bake the radius snap-up into the stored envelope: shift every row's
  // values up by one knot (keeping the zero row), so the piecewise-linear
  // interpolation dominates the surface at every real radius inside the grid,
  // not just at the knots.
  KLFn::GriddedData shifted = *envelope.gridded_data();
  for (std::size_t i = 1; i + 1 < shifted.values.size(); ++i)
    shifted.values[i] = shifted.values[i + 1];
  KLFn conservative = KLFn::gridded(std::move(shifted));
  return KLFn::scaled(2.0, conservative);
}

struct TableFromCertOptions {
  std::vector<real> radii;        // empty = log grid from radius_lo/hi
  real radius_lo = 1e-3, radius_hi = 1e3;
  int radius_points = 64;
  int eps_points = 32;
  real eps_lo_rel = 1e-6;         // lowest eps offset relative to the beta scale
  TimeQuantum quantum{};
  real range_hint = ScalarFn::kDefaultRangeHint;
};

/// Smallest time (snapped up to the time discipline) with beta(r, t) <= eps.
inline real time_to_reach(const KLFn& beta, real r, real target, const TimeQuantum& quantum,
                          const char* who = "time_to_reach") {
  require(target >= 0.0, "time_to_reach: need target >= 0");
  if (beta.eval(r, 0.0) <= target) return 0.0;
  real hi = 1.0;
  int guard = 0;
  while (beta.eval(r, hi) > target) {
    hi *= 2.0;
    if (++guard > 200)
      throw SynthesisError(std::string(who) + ": bound does not decay to the target");
  }
  real lo = 0.0;
  for (int it = 0; it < 120; ++it) {
    real mid = 0.5 * (lo + hi);
    if (beta.eval(r, mid) <= target)
      hi = mid;
    else
      lo = mid;
  }
  return quantum.snap_up(hi);
}

/// KL-practical-IOS data to practical-IOS data: delta is the exact swap of
/// the transient slice (a K-infinity minorant of its inverse on the slice's
/// range), and T(eps, r) is the smallest grid time with beta(r, t) <= eps.
inline std::pair<ScalarFn, AttractivityTable> certificate_to_table(
    const IOSCertificate& cert, const TableFromCertOptions& opts = {}) {
  ScalarFn beta_hat = transient_slice(cert.beta, opts.range_hint);
  ScalarFn delta = inverse(beta_hat);
  if (delta.final_slope() > 0.0 && delta.declared_class() != FnClass::kKInf)
    delta = delta.with_class(FnClass::kKInf);

  AttractivityTable table;
  table.C = cert.C;
  table.delta = delta;
  if (opts.radii.empty()) {
    for (int i = 0; i < opts.radius_points; ++i)
      table.radii.push_back(opts.radius_lo * std::pow(opts.radius_hi / opts.radius_lo,
                                                      real(i) / (opts.radius_points - 1)));
  } else {
    table.radii = opts.radii;
  }
  real scale = beta_hat.eval(table.radii.back());
  real off_lo = std::max(scale * opts.eps_lo_rel, 1e-12);
  if (cert.C > 0.0) off_lo = std::min(off_lo, cert.C);  // keep 3C above the grid floor
  real off_hi = std::max(scale * 1.1, off_lo * 10.0);
  for (int i = 0; i < opts.eps_points; ++i)
    table.eps.push_back(cert.C +
                        off_lo * std::pow(off_hi / off_lo, real(i) / (opts.eps_points - 1)));
  table.T.assign(table.eps.size(), std::vector<real>(table.radii.size(), 0.0));
  for (std::size_t i = 0; i < table.eps.size(); ++i)
    for (std::size_t j = 0; j < table.radii.size(); ++j)
      table.T[i][j] = time_to_reach(cert.beta, table.radii[j], table.eps[i], opts.quantum,
                                    "certificate_to_table");
  table.validate_or_throw();
  return {delta, table};
}

/// Practical-IOS data back to a KL certificate: regularize, build the decay
/// bound, and return (3 * bound, mu, 3C).
inline IOSCertificate table_to_certificate(const AttractivityTable& table, InputMeasure mu,
                                           const DecayBoundOptions& opts = {}) {
  AttractivityTable reg = table.regularized ? table : regularize_table(table);
  KLFn bound = decay_bound_from_table(reg, opts);
  return IOSCertificate{KLFn::scaled(3.0, bound), std::move(mu), 3.0 * table.C};
}

}  // namespace sgt
