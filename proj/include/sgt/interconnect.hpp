#pragma once

#include <span>

#include "sgt/small_gain.hpp"

namespace sgt {

/// Claimed IOS data for one subsystem: transient bound, partner-output gain,
/// external-input gain, offset.
struct GainCertificate {
  KLFn beta;
  ScalarFn gamma_y, gamma_u;
  real C = 0.0;
};

/// Claimed state bounds (the observability-style data): x is bounded through
/// the initial state, the own output, the external input, and an offset.
struct UOBounds {
  ScalarFn sigma1, sigma3, sigma4;
  real d = 0.0;
};

using VectorFn = std::function<void(std::span<const real> x, std::span<const real> v,
                                    std::span<const real> u, std::span<real> out)>;
using InputSignal = std::function<void(real t, std::span<real> out)>;

/// An ODE subsystem x' = f(x, v, u), y = h(x, v, u), where v is the partner
/// output port, together with its claimed gain certificate. The certificate
/// is user input; it is verified empirically on each simulated run before
/// being composed.
struct SystemSpec {
  std::size_t state_dim = 1;
  std::size_t output_dim = 1;
  std::size_t input_dim = 0;
  VectorFn rhs;
  VectorFn output;
  bool output_feedthrough = false;  // h reads the partner port
  GainCertificate gain;
  UOBounds uo;
};

inline real euclid(std::span<const real> v) {
  real s = 0.0;
  for (real a : v) s += a * a;
  return std::sqrt(s);
}

inline InputSignal zero_input() {
  return [](real, std::span<real> out) {
    for (real& v : out) v = 0.0;
  };
}

struct SimOptions {
  real escape_guard = 1e12;
  int max_fp_iterations = 50;
  real fp_tol = 1e-12;
};

/// Raw record of one subsystem over the integration grid.
struct SimRun {
  std::vector<real> times;
  std::vector<std::vector<real>> x, y, u;  // [step][component]
  real tau = 0.0;
  bool truncated = true;
};

struct SimResult {
  SimRun run1, run2;
  Trajectory combined;      // |x| = max of the subsystem norms, |y| likewise
  Trajectory sub1, sub2;    // per-subsystem quadruples (partner output as input channel 0)
  bool finite_escape = false;
  real escape_time = 0.0;
};

namespace detail {

/// Solves the coupled output pair y1 = h1(x1, y2, u1), y2 = h2(x2, y1, u2)
/// by fixed-point iteration from the previous solution, with a relaxed retry.
inline void solve_outputs(const SystemSpec& s1, const SystemSpec& s2,
                          std::span<const real> x1, std::span<const real> x2,
                          std::span<const real> u1, std::span<const real> u2,
                          std::vector<real>& y1, std::vector<real>& y2,
                          const SimOptions& opts) {
  if (!s1.output_feedthrough && !s2.output_feedthrough) {
    s1.output(x1, y2, u1, y1);
    s2.output(x2, y1, u2, y2);
    return;
  }
  std::vector<real> n1(y1.size()), n2(y2.size());
  auto sweep = [&](real relax) -> real {
    s1.output(x1, y2, u1, n1);
    s2.output(x2, n1, u2, n2);
    real res = 0.0;
    for (std::size_t i = 0; i < y1.size(); ++i) {
      real v = relax * n1[i] + (1.0 - relax) * y1[i];
      res = std::max(res, std::fabs(v - y1[i]));
      y1[i] = v;
    }
    for (std::size_t i = 0; i < y2.size(); ++i) {
      real v = relax * n2[i] + (1.0 - relax) * y2[i];
      res = std::max(res, std::fabs(v - y2[i]));
      y2[i] = v;
    }
    return res;
  };
  real scale = 1.0 + std::max(euclid(y1), euclid(y2));
  real res = 0.0;
  for (int it = 0; it < opts.max_fp_iterations; ++it) {
    res = sweep(1.0);
    if (res <= opts.fp_tol * scale) return;
  }
  for (int it = 0; it < opts.max_fp_iterations; ++it) {
    res = sweep(0.5);
    if (res <= opts.fp_tol * scale) return;
  }
  throw CouplingError("simulate: coupled outputs did not converge (residual " +
                          std::to_string(res) + ")",
                      res);
}

}  // namespace detail

/// Fixed-step RK4 integration of the interconnection
///   x1' = f1(x1, y2, u1), x2' = f2(x2, y1, u2),
/// with the implicit output pair solved at every stage. Finite escape beyond
/// the guard truncates the run at the escape time and flags the result; the
/// trajectories carry |x| and |y| with the pair norm max{|a|, |b|}.
inline SimResult simulate_pair(const SystemSpec& s1, const SystemSpec& s2,
                               std::vector<real> xi1, std::vector<real> xi2,
                               const InputSignal& u1, const InputSignal& u2, real horizon,
                               real dt, const SimOptions& opts = {}) {
  require(dt > 0.0 && horizon > 0.0, "simulate: need dt > 0 and horizon > 0");
  require(xi1.size() == s1.state_dim && xi2.size() == s2.state_dim,
          "simulate: initial state dimension mismatch");
  std::size_t steps = static_cast<std::size_t>(std::llround(horizon / dt));

  SimResult out;
  std::vector<real> x1 = std::move(xi1), x2 = std::move(xi2);
  std::vector<real> y1(s1.output_dim, 0.0), y2(s2.output_dim, 0.0);
  std::vector<real> uv1(s1.input_dim, 0.0), uv2(s2.input_dim, 0.0);

  auto record = [&](real t) {
    out.run1.times.push_back(t);
    out.run2.times.push_back(t);
    out.run1.x.push_back(x1);
    out.run2.x.push_back(x2);
    out.run1.y.push_back(y1);
    out.run2.y.push_back(y2);
    out.run1.u.push_back(uv1);
    out.run2.u.push_back(uv2);
  };

  std::vector<real> k1a(s1.state_dim), k2a(s1.state_dim), k3a(s1.state_dim), k4a(s1.state_dim);
  std::vector<real> k1b(s2.state_dim), k2b(s2.state_dim), k3b(s2.state_dim), k4b(s2.state_dim);
  std::vector<real> w1(s1.state_dim), w2(s2.state_dim);

  auto derivs = [&](const std::vector<real>& a, const std::vector<real>& b, real t,
                    std::vector<real>& da, std::vector<real>& db) {
    u1(t, uv1);
    u2(t, uv2);
    detail::solve_outputs(s1, s2, a, b, uv1, uv2, y1, y2, opts);
    s1.rhs(a, y2, uv1, da);
    s2.rhs(b, y1, uv2, db);
  };

  real t = 0.0;
  u1(0.0, uv1);
  u2(0.0, uv2);
  detail::solve_outputs(s1, s2, x1, x2, uv1, uv2, y1, y2, opts);
  record(0.0);

  for (std::size_t step = 0; step < steps; ++step) {
    derivs(x1, x2, t, k1a, k1b);
    for (std::size_t i = 0; i < w1.size(); ++i) w1[i] = x1[i] + 0.5 * dt * k1a[i];
    for (std::size_t i = 0; i < w2.size(); ++i) w2[i] = x2[i] + 0.5 * dt * k1b[i];
    derivs(w1, w2, t + 0.5 * dt, k2a, k2b);
    for (std::size_t i = 0; i < w1.size(); ++i) w1[i] = x1[i] + 0.5 * dt * k2a[i];
    for (std::size_t i = 0; i < w2.size(); ++i) w2[i] = x2[i] + 0.5 * dt * k2b[i];
    derivs(w1, w2, t + 0.5 * dt, k3a, k3b);
    for (std::size_t i = 0; i < w1.size(); ++i) w1[i] = x1[i] + dt * k3a[i];
    for (std::size_t i = 0; i < w2.size(); ++i) w2[i] = x2[i] + dt * k3b[i];
    derivs(w1, w2, t + dt, k4a, k4b);
    for (std::size_t i = 0; i < x1.size(); ++i)
      x1[i] += dt / 6.0 * (k1a[i] + 2.0 * k2a[i] + 2.0 * k3a[i] + k4a[i]);
    for (std::size_t i = 0; i < x2.size(); ++i)
      x2[i] += dt / 6.0 * (k1b[i] + 2.0 * k2b[i] + 2.0 * k3b[i] + k4b[i]);
    t += dt;

    if (euclid(x1) > opts.escape_guard || euclid(x2) > opts.escape_guard) {
      out.finite_escape = true;
      out.escape_time = t;
      break;
    }
    u1(t, uv1);
    u2(t, uv2);
    detail::solve_outputs(s1, s2, x1, x2, uv1, uv2, y1, y2, opts);
    record(t);
  }

  real tau = out.finite_escape ? out.escape_time : out.run1.times.back() + dt;
  out.run1.tau = out.run2.tau = tau;

  auto fill = [&](Trajectory& traj, const SimRun& own, const SimRun& partner, bool combined) {
    traj.tau = tau;
    traj.horizon_truncated = true;
    traj.times = own.times;
    std::size_t n = own.times.size();
    traj.x.resize(n);
    traj.y.resize(n);
    if (combined) {
      traj.u.channels.assign(s1.input_dim + s2.input_dim, std::vector<real>(n));
      for (std::size_t i = 0; i < n; ++i) {
        traj.x[i] = std::max(euclid(out.run1.x[i]), euclid(out.run2.x[i]));
        traj.y[i] = std::max(euclid(out.run1.y[i]), euclid(out.run2.y[i]));
        for (std::size_t c = 0; c < s1.input_dim; ++c)
          traj.u.channels[c][i] = out.run1.u[i][c];
        for (std::size_t c = 0; c < s2.input_dim; ++c)
          traj.u.channels[s1.input_dim + c][i] = out.run2.u[i][c];
      }
    } else {
      traj.u.channels.assign(1 + own.u.front().size(), std::vector<real>(n));
      for (std::size_t i = 0; i < n; ++i) {
        traj.x[i] = euclid(own.x[i]);
        traj.y[i] = euclid(own.y[i]);
        traj.u.channels[0][i] = euclid(partner.y[i]);  // partner output port
        for (std::size_t c = 0; c < own.u[i].size(); ++c)
          traj.u.channels[1 + c][i] = own.u[i][c];
      }
    }
  };
  fill(out.combined, out.run1, out.run2, true);
  fill(out.sub1, out.run1, out.run2, false);
  fill(out.sub2, out.run2, out.run1, false);
  return out;
}

/// Single system x' = f(x, 0, u), y = h(x, 0, u) on the same integrator.
inline SimRun simulate_single(const SystemSpec& sys, std::vector<real> xi, const InputSignal& u,
                              real horizon, real dt, const SimOptions& opts = {}) {
  SystemSpec idle;
  idle.state_dim = 1;
  idle.output_dim = 1;
  idle.input_dim = 0;
  idle.rhs = [](std::span<const real>, std::span<const real>, std::span<const real>,
                std::span<real> out) { out[0] = 0.0; };
  idle.output = [](std::span<const real>, std::span<const real>, std::span<const real>,
                   std::span<real> out) { out[0] = 0.0; };
  auto res = simulate_pair(sys, idle, std::move(xi), {0.0}, u, zero_input(), horizon, dt, opts);
  return res.run1;
}

/// Both composition orders of the loop gains, checked as grid-certified
/// contractions. Mode 'both' requires both orders above r0; mode 'either'
/// (r0 = 0) accepts one order but still evaluates and reports both.
enum class LoopMode { kBoth, kEither };

struct LoopGainCheck {
  bool ok = false;
  ContractionCheck order12, order21;  // gamma1(gamma2(r)) < r and gamma2(gamma1(r)) < r
};

inline LoopGainCheck small_gain_condition(const ScalarFn& g1y, const ScalarFn& g2y, real r0,
                                          LoopMode mode = LoopMode::kBoth,
                                          const ContractionGrid& grid = {},
                                          real range_hint = ScalarFn::kDefaultRangeHint) {
  if (mode == LoopMode::kEither)
    require(r0 == 0.0, "small_gain_condition: mode 'either' applies with r0 = 0");
  LoopGainCheck out;
  out.order12 = is_contraction_above(compose(g1y, g2y, range_hint), r0, grid);
  out.order21 = is_contraction_above(compose(g2y, g1y, range_hint), r0, grid);
  out.ok = mode == LoopMode::kBoth ? (out.order12.contraction && out.order21.contraction)
                                   : (out.order12.contraction || out.order21.contraction);
  return out;
}

/// The composed interconnection data: transient bound, loop gain, input gain
/// and offset for the coupled pair viewed as one system.
struct CompositeCertificate {
  KLFn beta;
  ScalarFn gamma_loop;
  ScalarFn gamma_u;
  real C = 0.0;
  real r0 = 0.0;
};

/// Evaluates the composite formulas for the coupled pair. Requires the
/// small-gain condition in mode 'both'. The returned C is exactly 0 when all
/// subsystem constants and r0 vanish.
inline CompositeCertificate composite_certificate(const SystemSpec& s1, const SystemSpec& s2,
                                                  real r0,
                                                  const ContractionGrid& grid = {},
                                                  real range_hint = ScalarFn::kDefaultRangeHint) {
  auto loop = small_gain_condition(s1.gain.gamma_y, s2.gain.gamma_y, r0, LoopMode::kBoth, grid,
                                   range_hint);
  if (!loop.ok) {
    real witness = loop.order12.contraction ? loop.order21.witness : loop.order12.witness;
    throw SynthesisError("composite_certificate: small-gain condition fails (witness r=" +
                         std::to_string(witness) + ")");
  }

  const auto& g1 = s1.gain;
  const auto& g2 = s2.gain;
  ScalarFn th1 = transient_slice(g1.beta, range_hint);
  ScalarFn th2 = transient_slice(g2.beta, range_hint);
  auto cp = [&](const ScalarFn& f, const ScalarFn& g) { return compose(f, g, range_hint); };
  auto mx = [&](const ScalarFn& f, const ScalarFn& g) { return max_of(f, g, range_hint); };

  CompositeCertificate cert;
  cert.r0 = r0;
  cert.gamma_loop = mx(cp(g1.gamma_y, g2.gamma_y), cp(g2.gamma_y, g1.gamma_y));

  cert.beta = KLFn::max_of({
      KLFn::composed(ScalarFn::identity(), g1.beta, s1.uo.sigma1, 0.5),
      KLFn::composed(ScalarFn::identity(), g1.beta, cp(s1.uo.sigma3, th1), 0.5),
      KLFn::composed(ScalarFn::identity(), g1.beta, cp(s1.uo.sigma3, cp(g1.gamma_y, th2)), 0.5),
      KLFn::composed(g1.gamma_y, g2.beta, ScalarFn::identity(), 0.5),
      KLFn::composed(ScalarFn::identity(), g2.beta, s2.uo.sigma1, 0.5),
      KLFn::composed(ScalarFn::identity(), g2.beta, cp(s2.uo.sigma3, th2), 0.5),
      KLFn::composed(ScalarFn::identity(), g2.beta, cp(s2.uo.sigma3, cp(g2.gamma_y, th1)), 0.5),
      KLFn::composed(g2.gamma_y, g1.beta, ScalarFn::identity(), 0.5),
  });

  std::vector<ScalarFn> u_terms = {
      cp(th1, cp(s1.uo.sigma3, cp(g1.gamma_y, g2.gamma_u))),
      cp(th1, cp(s1.uo.sigma3, g1.gamma_u)),
      cp(th1, s1.uo.sigma4),
      cp(g1.gamma_y, g2.gamma_u),
      g1.gamma_u,
      cp(th2, cp(s2.uo.sigma3, cp(g2.gamma_y, g1.gamma_u))),
      cp(th2, cp(s2.uo.sigma3, g2.gamma_u)),
      cp(th2, s2.uo.sigma4),
      cp(g2.gamma_y, g1.gamma_u),
      g2.gamma_u,
  };
  ScalarFn gu = u_terms.front();
  for (std::size_t i = 1; i < u_terms.size(); ++i) gu = mx(gu, u_terms[i]);
  cert.gamma_u = gu;

  real Ct1 = std::max({s1.uo.sigma3.eval(g1.gamma_y.eval(g2.C)), s1.uo.sigma3.eval(g1.C),
                       s1.uo.sigma3.eval(r0), s1.uo.d});
  real Ct2 = std::max({s2.uo.sigma3.eval(g2.gamma_y.eval(g1.C)), s2.uo.sigma3.eval(g2.C),
                       s2.uo.sigma3.eval(r0), s2.uo.d});
  cert.C = std::max({th1.eval(Ct1), g1.gamma_y.eval(g2.C), g1.C, th2.eval(Ct2),
                     g2.gamma_y.eval(g1.C), g2.C});
  return cert;
}

/// Checks the interconnection conclusion on every grid t:
///   |(y1(t), y2(t))| <= max{beta(|(xi1, xi2)|, t), gamma_u(||u||_[0,t]), C}.
inline CheckReport certify_interconnection(const Trajectory& combined,
                                           const CompositeCertificate& cert, real xi_norm,
                                           const Tolerance& tol = kDefaultTol) {
  combined.validate_or_throw();
  CheckReport report;
  auto scan = InputMeasure::sup().scanner(combined, 0);
  for (std::size_t j = 0; j < combined.size(); ++j) {
    real usup = scan->extend(j);
    real rhs = std::max({cert.beta.eval(xi_norm, combined.times[j]), cert.gamma_u.eval(usup),
                         cert.C});
    real excess = combined.y[j] - rhs - (tol.abs + tol.rel * std::fabs(rhs));
    ++report.pairs_checked;
    if (excess > report.worst_excess) {
      report.worst_excess = excess;
      report.worst_violation = combined.y[j] - rhs;
      report.t_witness = combined.times[j];
    }
  }
  report.pass = report.worst_excess <= 0.0;
  report.horizon_truncated = combined.horizon_truncated;
  return report;
}

inline CheckReport certify_interconnection(const SimResult& sim, const CompositeCertificate& cert,
                                           std::span<const real> xi1, std::span<const real> xi2,
                                           const Tolerance& tol = kDefaultTol) {
  return certify_interconnection(sim.combined, cert, std::max(euclid(xi1), euclid(xi2)), tol);
}

// ---- adapters: casting system runs as abstract quadruples ----

/// Incremental form: two runs of the same system become one quadruple with
/// state = output = |xA - xB| and input = uA - uB. The state hypothesis holds
/// automatically with sigma3 = id. Runs are truncated to the common horizon.
inline Trajectory adapt_incremental(const SimRun& a, const SimRun& b) {
  std::size_t n = std::min(a.times.size(), b.times.size());
  require(n > 0, "adapt_incremental: empty runs");
  for (std::size_t i = 0; i < n; ++i)
    require(a.times[i] == b.times[i], "adapt_incremental: time grids must match");
  require(a.x.front().size() == b.x.front().size(),
          "adapt_incremental: state dimension mismatch");
  std::size_t nu = a.u.front().size();
  require(nu == b.u.front().size(), "adapt_incremental: input dimension mismatch");

  Trajectory traj;
  traj.tau = std::min(a.tau, b.tau);
  traj.horizon_truncated = true;
  traj.times.assign(a.times.begin(), a.times.begin() + static_cast<std::ptrdiff_t>(n));
  traj.x.resize(n);
  traj.y.resize(n);
  traj.u.channels.assign(std::max<std::size_t>(nu, 1), std::vector<real>(n, 0.0));
  std::vector<real> diff(a.x.front().size());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < diff.size(); ++c) diff[c] = a.x[i][c] - b.x[i][c];
    traj.x[i] = traj.y[i] = euclid(diff);
    for (std::size_t c = 0; c < nu; ++c) traj.u.channels[c][i] = a.u[i][c] - b.u[i][c];
  }
  return traj;
}

/// Detectability form: state = output = |x|, input = the pair (y, u).
/// Channel layout: outputs first, then external inputs.
inline Trajectory adapt_ioss(const SimRun& run) {
  std::size_t n = run.times.size();
  require(n > 0, "adapt_ioss: empty run");
  std::size_t ny = run.y.front().size(), nu = run.u.front().size();
  Trajectory traj;
  traj.tau = run.tau;
  traj.horizon_truncated = run.truncated;
  traj.times = run.times;
  traj.x.resize(n);
  traj.y.resize(n);
  traj.u.channels.assign(ny + std::max<std::size_t>(nu, 0), std::vector<real>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    traj.x[i] = traj.y[i] = euclid(run.x[i]);
    for (std::size_t c = 0; c < ny; ++c) traj.u.channels[c][i] = run.y[i][c];
    for (std::size_t c = 0; c < nu; ++c) traj.u.channels[ny + c][i] = run.u[i][c];
  }
  return traj;
}

/// Partial-detectability variant: the output channel carries an error signal
/// w instead of the state magnitude. With w = x it reduces to adapt_ioss.
inline Trajectory adapt_imes(const SimRun& run, const std::vector<std::vector<real>>& w) {
  require(w.size() == run.times.size(), "adapt_imes: error signal length mismatch");
  Trajectory traj = adapt_ioss(run);
  for (std::size_t i = 0; i < traj.size(); ++i) traj.y[i] = euclid(w[i]);
  return traj;
}

/// Sampled record of an input/output operator: w on a grid that may extend
/// left of 0 (zero before its first sample), and the operator output on the
/// nonnegative part of the grid.
struct IoRecord {
  std::vector<real> times;                 // increasing; may start below 0; must contain 0
  std::vector<std::vector<real>> w;        // [time][component]
  std::vector<real> out_mag;               // |F(w)(t)| for times >= 0, aligned with the tail
  bool left_tail_zero = true;              // the record claims compact support on the left
  real tau = 0.0;                          // horizon; 0 = one step past the last sample
};

/// Operator form: the state at time t is the running sup of |w| over all
/// samples up to t, the output is |F(w)(t)|, and the input object is w
/// restricted to the nonnegative grid.
inline Trajectory adapt_io_operator(const IoRecord& rec) {
  if (!rec.left_tail_zero)
    throw DataError("adapt_io_operator: input record must vanish left of its first sample");
  require(!rec.times.empty() && rec.w.size() == rec.times.size(),
          "adapt_io_operator: record shape mismatch");
  std::size_t first = 0;
  while (first < rec.times.size() && rec.times[first] < 0.0) ++first;
  require(first < rec.times.size() && rec.times[first] == 0.0,
          "adapt_io_operator: grid must contain t = 0");
  std::size_t n = rec.times.size() - first;
  require(rec.out_mag.size() == n, "adapt_io_operator: output record length mismatch");

  Trajectory traj;
  traj.horizon_truncated = true;
  traj.times.assign(rec.times.begin() + static_cast<std::ptrdiff_t>(first), rec.times.end());
  traj.tau = rec.tau > traj.times.back()
                 ? rec.tau
                 : traj.times.back() + (traj.times.size() > 1
                                            ? traj.times.back() - traj.times[traj.times.size() - 2]
                                            : 1.0);
  traj.x.resize(n);
  traj.y.resize(n);
  std::size_t nw = rec.w.front().size();
  traj.u.channels.assign(nw, std::vector<real>(n));
  real running = 0.0;
  for (std::size_t i = 0; i < first; ++i) running = std::max(running, euclid(rec.w[i]));
  for (std::size_t i = 0; i < n; ++i) {
    running = std::max(running, euclid(rec.w[first + i]));
    traj.x[i] = running;
    traj.y[i] = std::fabs(rec.out_mag[i]);
    for (std::size_t c = 0; c < nw; ++c) traj.u.channels[c][i] = rec.w[first + i][c];
  }
  return traj;
}

}  // namespace sgt
