#pragma once

#include <functional>
#include <string>

#include "sgt/trajectory.hpp"

namespace sgt {

/// (t0, t) pair iteration policy. Full quadratic checking up to full_limit
/// grid points; beyond that a strided subsample of anchor rows plus rows at
/// the signal extrema, each row still scanned over all t >= t0.
struct PairPolicy {
  std::size_t full_limit = 2000;
  std::size_t row_target = 2000;
};

struct CheckReport {
  bool pass = true;
  real worst_excess = -std::numeric_limits<real>::infinity();  // lhs - allowed rhs
  real worst_violation = -std::numeric_limits<real>::infinity();  // raw lhs - rhs
  real t0_witness = 0.0;
  real t_witness = 0.0;
  std::size_t pairs_checked = 0;
  bool horizon_truncated = false;
  std::string clause;  // failing clause for multi-clause checks
};

enum class BoundForm { kMax, kSum };

namespace detail {

inline std::vector<std::size_t> anchor_rows(const Trajectory& traj, const PairPolicy& policy) {
  std::size_t n = traj.size();
  std::vector<std::size_t> rows;
  if (n <= policy.full_limit) {
    rows.resize(n);
    for (std::size_t i = 0; i < n; ++i) rows[i] = i;
    return rows;
  }
  std::size_t stride = (n + policy.row_target - 1) / policy.row_target;
  for (std::size_t i = 0; i < n; i += stride) rows.push_back(i);
  auto push_near = [&](std::size_t i) {
    if (i > 0) rows.push_back(i - 1);
    rows.push_back(i);
    if (i + 1 < n) rows.push_back(i + 1);
  };
  std::size_t arg_y = 0, arg_x = 0;
  for (std::size_t i = 1; i < n; ++i) {
    if (traj.y[i] > traj.y[arg_y]) arg_y = i;
    if (traj.x[i] > traj.x[arg_x]) arg_x = i;
  }
  push_near(arg_y);
  push_near(arg_x);
  rows.push_back(n - 1);
  std::sort(rows.begin(), rows.end());
  rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
  return rows;
}

}  // namespace detail

/// Output hypothesis: for every grid pair t0 <= t,
///   max form: y(t) <= max{beta(x(t0), t - t0), gamma(||y||_[t0,t]), mu_a[t0,t], C}
///   sum form: y(t) <= beta(x(t0), t - t0) + gamma(||y||_[t0,t]) + mu_a[t0,t] + C
/// A failed check is a result, not an error.
inline CheckReport check_output_bound(const Trajectory& traj, const KLFn& beta,
                                      const ScalarFn& gamma, const InputMeasure& mu_a, real C,
                                      BoundForm form = BoundForm::kMax,
                                      const Tolerance& tol = kDefaultTol,
                                      const PairPolicy& policy = {}) {
  traj.validate_or_throw();
  CheckReport report;
  auto rows = detail::anchor_rows(traj, policy);
  for (std::size_t i0 : rows) {
    auto mu_scan = mu_a.scanner(traj, i0);
    real y_sup = 0.0;
    for (std::size_t j = i0; j < traj.size(); ++j) {
      y_sup = std::max(y_sup, traj.y[j]);
      real b = beta.eval(traj.x[i0], traj.times[j] - traj.times[i0]);
      real g = gamma.eval(y_sup);
      real m = mu_scan->extend(j);
      real rhs = form == BoundForm::kMax ? std::max({b, g, m, C}) : b + g + m + C;
      real lhs = traj.y[j];
      real excess = lhs - rhs - (tol.abs + tol.rel * std::fabs(rhs));
      ++report.pairs_checked;
      if (excess > report.worst_excess) {
        report.worst_excess = excess;
        report.worst_violation = lhs - rhs;
        report.t0_witness = traj.times[i0];
        report.t_witness = traj.times[j];
      }
    }
  }
  report.pass = report.worst_excess <= 0.0;
  report.horizon_truncated = traj.horizon_truncated;
  return report;
}

/// State hypothesis: for every grid pair t0 <= t,
///   x(t) <= max{sigma1(x(t0)), sigma2(t - t0), sigma3(||y||_[t0,t]), mu_b[t0,t], d}.
inline CheckReport check_state_bound(const Trajectory& traj, const ScalarFn& sigma1,
                                     const ScalarFn& sigma2, const ScalarFn& sigma3,
                                     const InputMeasure& mu_b, real d,
                                     const Tolerance& tol = kDefaultTol,
                                     const PairPolicy& policy = {}) {
  traj.validate_or_throw();
  CheckReport report;
  for (std::size_t i0 : detail::anchor_rows(traj, policy)) {
    auto mu_scan = mu_b.scanner(traj, i0);
    real y_sup = 0.0;
    for (std::size_t j = i0; j < traj.size(); ++j) {
      y_sup = std::max(y_sup, traj.y[j]);
      real rhs = std::max({sigma1.eval(traj.x[i0]), sigma2.eval(traj.times[j] - traj.times[i0]),
                           sigma3.eval(y_sup), mu_scan->extend(j), d});
      real lhs = traj.x[j];
      real excess = lhs - rhs - (tol.abs + tol.rel * std::fabs(rhs));
      ++report.pairs_checked;
      if (excess > report.worst_excess) {
        report.worst_excess = excess;
        report.worst_violation = lhs - rhs;
        report.t0_witness = traj.times[i0];
        report.t_witness = traj.times[j];
      }
    }
  }
  report.pass = report.worst_excess <= 0.0;
  report.horizon_truncated = traj.horizon_truncated;
  return report;
}

/// KL-practical-IOS check: y(t) <= max{beta(x(t0), t - t0), mu[t0,t], C}
/// for every grid pair.
inline CheckReport check_kl_ios(const Trajectory& traj, const IOSCertificate& cert,
                                const Tolerance& tol = kDefaultTol,
                                const PairPolicy& policy = {}) {
  return check_output_bound(traj, cert.beta, ScalarFn::zero(), cert.mu, cert.C, BoundForm::kMax,
                            tol, policy);
}

/// Probe set for the two-clause practical-IOS check.
struct PracticalProbes {
  std::vector<real> eps;                       // stability probes (any eps > 0)
  std::vector<std::pair<real, real>> eps_r;    // attractivity probes, eps > C

  static PracticalProbes defaults(const Trajectory& traj, real C, int n_eps = 6, int n_r = 5) {
    PracticalProbes p;
    real y_max = 0.0, x_max = 0.0;
    for (real v : traj.y) y_max = std::max(y_max, v);
    for (real v : traj.x) x_max = std::max(x_max, v);
    real eps_hi = std::max(y_max * 1.25, C + 1.0);
    real eps_lo = std::max(eps_hi * 1e-3, C * 1.001 + 1e-9);
    for (int i = 0; i < n_eps; ++i)
      p.eps.push_back(eps_lo * std::pow(eps_hi / eps_lo, real(i) / std::max(1, n_eps - 1)));
    real r_hi = std::max(x_max * 1.25, real(1.0));
    for (int i = 0; i < n_r; ++i) {
      real r = r_hi * std::pow(1e-3, real(n_r - 1 - i) / std::max(1, n_r - 1));
      for (real e : p.eps)
        if (e > C) p.eps_r.emplace_back(e, r);
    }
    return p;
  }
};

/// Two-clause practical-IOS check against (delta, T, mu, C):
///   stability:    x(t0) <= delta(eps)  =>  y(t) <= max{eps, mu[t0,t], C}
///   attractivity: x(t0) <= r, t >= t0 + T(eps, r)  =>  y(t) <= max{eps, mu[t0,t]}
/// over all grid pairs and the given probe set.
inline CheckReport check_practical_ios(const Trajectory& traj, const ScalarFn& delta,
                                       const std::function<real(real, real)>& T_of,
                                       const InputMeasure& mu, real C,
                                       const PracticalProbes& probes,
                                       const Tolerance& tol = kDefaultTol,
                                       const PairPolicy& policy = {}) {
  traj.validate_or_throw();
  CheckReport report;
  auto rows = detail::anchor_rows(traj, policy);

  auto run_clause = [&](const char* name, real eps, real x_gate, real t_offset, real floor_C) {
    for (std::size_t i0 : rows) {
      if (!(traj.x[i0] <= x_gate)) continue;
      auto mu_scan = mu.scanner(traj, i0);
      real t_start = traj.times[i0] + t_offset;
      for (std::size_t j = i0; j < traj.size(); ++j) {
        real m = mu_scan->extend(j);
        if (traj.times[j] < t_start) continue;
        real rhs = std::max({eps, m, floor_C});
        real excess = traj.y[j] - rhs - (tol.abs + tol.rel * std::fabs(rhs));
        ++report.pairs_checked;
        if (excess > report.worst_excess) {
          report.worst_excess = excess;
          report.worst_violation = traj.y[j] - rhs;
          report.t0_witness = traj.times[i0];
          report.t_witness = traj.times[j];
          report.clause = name;
        }
      }
    }
  };

  for (real eps : probes.eps) run_clause("stability", eps, delta.eval(eps), 0.0, C);
  for (auto [eps, r] : probes.eps_r) {
    if (!(eps > C)) continue;
    run_clause("attractivity", eps, r, T_of(eps, r), 0.0);
  }
  report.pass = report.worst_excess <= 0.0;
  report.horizon_truncated = traj.horizon_truncated;
  if (report.pass) report.clause.clear();
  return report;
}

}  // namespace sgt
