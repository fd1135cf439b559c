#pragma once

#include "sgt/kl_synthesis.hpp"

namespace sgt {

/// The input data of the small-gain construction: a KL transient bound, a
/// loop gain contracting above r0, state-bound gains, constants, and the two
/// input measures.
struct SmallGainData {
  KLFn beta;
  ScalarFn gamma;
  real r0 = 0.0;
  ScalarFn sigma1, sigma2, sigma3;
  real d = 0.0;
  real C = 0.0;
  InputMeasure mu_a, mu_b;

  void validate_or_throw(const ContractionGrid& grid = {}) const {
    require(r0 >= 0.0 && d >= 0.0 && C >= 0.0, "small-gain data: constants must be >= 0");
    auto chk = is_contraction_above(gamma, r0, grid);
    if (!chk.contraction)
      throw SynthesisError("small-gain data: gamma is not a contraction above r0 (witness r=" +
                           std::to_string(chk.witness) + ")");
  }
};

/// Constants derived from the data: the transient slice theta(s) = beta(s,0),
/// C_hat = max{C, r0}, sigma1_hat(s) = max{sigma1(s), sigma3(theta(s))}, and
/// d_hat = max{sigma3(C_hat), d}.
struct DerivedData {
  ScalarFn theta;
  real C_hat = 0.0;
  ScalarFn sigma1_hat;
  real d_hat = 0.0;
};

inline DerivedData derived_data(const SmallGainData& data,
                                real range_hint = ScalarFn::kDefaultRangeHint) {
  DerivedData out;
  out.theta = transient_slice(data.beta, range_hint);
  out.C_hat = std::max(data.C, data.r0);
  out.sigma1_hat = max_of(data.sigma1, compose(data.sigma3, out.theta, range_hint), range_hint);
  out.d_hat = std::max(data.sigma3.eval(out.C_hat), data.d);
  return out;
}

/// The decay ladder for one radius r: levels[i] is the certified output bound
/// after waiting T_hat[i] = T[0] + ... + T[i], with M[i] the state radius fed
/// into the next rung. Raw levels are the iterated gains gamma^i(theta(r));
/// stored levels clamp at the r0 floor, which is what the waiting times are
/// built against (the ladder cannot certify below the loop's fixed-point
/// region).
struct DecaySchedule {
  real r = 0.0;
  real theta_r = 0.0;
  real r0_floor = 0.0;
  std::vector<real> M;           // M[i], state radius at rung i
  std::vector<real> T;           // T[0] = 0, waiting increments
  std::vector<real> T_hat;       // prefix sums of T
  std::vector<real> levels;      // clamped: max{gamma^i(theta(r)), r0 * (1 - tol)}
  std::vector<real> levels_raw;  // gamma^i(theta(r))

  std::size_t depth() const { return levels.empty() ? 0 : levels.size() - 1; }
};

struct ScheduleOptions {
  int depth = 64;
  TimeQuantum quantum{};
  real level_floor = 0.0;  // stop once the raw level falls below max(r0, level_floor)
  real clamp_tol = 1e-9;
};

/// Builds the ladder to the requested depth, stopping early once the raw
/// level reaches the floor. Each waiting increment is the smallest grid time
/// with beta(M[i], T) below the next (clamped) level.
inline DecaySchedule build_schedule(const SmallGainData& data, const DerivedData& derived,
                                    real r, const ScheduleOptions& opts = {}) {
  require(r > 0.0, "build_schedule: need r > 0");
  require(opts.depth >= 1, "build_schedule: need depth >= 1");
  DecaySchedule s;
  s.r = r;
  s.theta_r = derived.theta.eval(r);
  s.r0_floor = data.r0 * (1.0 - opts.clamp_tol);
  s.M.push_back(r);
  s.T.push_back(0.0);
  s.T_hat.push_back(0.0);
  s.levels_raw.push_back(s.theta_r);
  s.levels.push_back(std::max(s.theta_r, s.r0_floor));

  real stop_floor = std::max(data.r0, opts.level_floor);
  for (int i = 0; i < opts.depth; ++i) {
    if (s.levels_raw.back() <= stop_floor) break;
    real raw_next = data.gamma.eval(s.levels_raw.back());
    real level_next = std::max(raw_next, s.r0_floor);
    real t_next;
    try {
      t_next = time_to_reach(data.beta, s.M.back(), level_next, opts.quantum, "build_schedule");
    } catch (const SynthesisError&) {
      throw SynthesisError("build_schedule: bound does not decay to the rung-" +
                           std::to_string(i + 1) + " target");
    }
    s.T.push_back(t_next);
    s.T_hat.push_back(s.T_hat.back() + t_next);
    s.levels_raw.push_back(raw_next);
    s.levels.push_back(level_next);
    s.M.push_back(std::max({derived.sigma1_hat.eval(r), data.sigma2.eval(s.T_hat.back()),
                            derived.d_hat}));
  }
  return s;
}

/// Re-evaluates the stored ladder invariants, independently of construction.
inline bool verify_schedule(const SmallGainData& data, const DecaySchedule& s,
                            const Tolerance& tol = kDefaultTol) {
  if (s.levels.size() != s.M.size() || s.T.size() != s.M.size()) return false;
  for (std::size_t i = 0; i + 1 < s.levels.size(); ++i) {
    if (!tol.leq(data.beta.eval(s.M[i], s.T[i + 1]), s.levels[i + 1])) return false;
    if (!tol.leq(s.T_hat[i + 1], s.T_hat[i] + s.T[i + 1]) ||
        !tol.leq(s.T_hat[i] + s.T[i + 1], s.T_hat[i + 1]))
      return false;
    // levels strictly decrease while above the floor and never climb back
    if (s.levels_raw[i] > data.r0 && !(s.levels_raw[i + 1] < s.levels_raw[i])) return false;
    if (s.levels_raw[i] <= data.r0 && !tol.leq(s.levels_raw[i + 1], data.r0)) return false;
  }
  return true;
}

/// The attractivity time for a level eps > C_hat: T_hat at the first rung
/// whose level lies below eps. Deepens the ladder on demand.
inline real attractivity_time(const SmallGainData& data, const DerivedData& derived,
                              DecaySchedule& schedule, real eps,
                              const ScheduleOptions& opts = {}, int max_depth = 8192) {
  if (!(eps > derived.C_hat))
    throw DomainError("attractivity_time: need eps > max{C, r0}");
  for (;;) {
    for (std::size_t i = 0; i < schedule.levels.size(); ++i)
      if (schedule.levels[i] < eps) return schedule.T_hat[i];
    bool exhausted = schedule.levels_raw.back() <= std::max(data.r0, opts.level_floor);
    int built = static_cast<int>(schedule.depth());
    if (exhausted || built >= max_depth)
      throw SynthesisError("attractivity_time: ladder exhausted above eps (internal invariant)");
    ScheduleOptions deeper = opts;
    deeper.depth = std::min(max_depth, std::max(built * 2, opts.depth * 2));
    schedule = build_schedule(data, derived, schedule.r, deeper);
  }
}

/// The combined input measure max{theta(sigma3(mu_a)), theta(mu_b), mu_a}.
inline InputMeasure combined_measure(const SmallGainData& data,
                                     real range_hint = ScalarFn::kDefaultRangeHint) {
  return InputMeasure::combined(data.beta, data.sigma3, data.mu_a, data.mu_b, range_hint);
}

struct SynthesisOptions {
  real r_lo = 1e-6, r_hi = 1e6;
  int r_points = 64;
  int eps_points = 32;
  real eps_lo_rel = 1e-6;
  ScheduleOptions schedule{};
  int max_depth = 8192;
  real horizon_hint = 0.0;  // extend the decay-bound time grid to cover this horizon
  DecayBoundOptions decay{};
  ContractionGrid contraction{};
  real range_hint = ScalarFn::kDefaultRangeHint;
};

struct SynthesisResult {
  IOSCertificate certificate;     // (beta_tilde, combined measure, 3 * max{C, r0})
  AttractivityTable table;        // the schedule-backed table (unregularized)
  ScalarFn delta;                 // stability gauge, minorant of theta^{-1}
  DerivedData derived;
};

/// The end-to-end construction: certify the contraction, derive constants,
/// build decay ladders over a radius grid, assemble the attractivity table,
/// and convert it into a KL certificate with constant exactly 3 * max{C, r0}
/// and the combined input measure.
inline SynthesisResult synthesize_certificate(const SmallGainData& data,
                                              const SynthesisOptions& opts = {}) {
  data.validate_or_throw(opts.contraction);
  SynthesisResult out;
  out.derived = derived_data(data, opts.range_hint);
  real C_hat = out.derived.C_hat;

  // gamma(C_hat) <= C_hat is needed by the ladder's fixed-point argument when
  // C > r0; it follows from the contraction there, but is asserted on the
  // data rather than assumed.
  if (data.gamma.eval(C_hat) > C_hat * (1.0 + 1e-9) + 1e-12)
    throw SynthesisError("synthesize_certificate: gamma(max{C, r0}) exceeds max{C, r0}");

  out.delta = inverse(out.derived.theta);
  if (out.delta.final_slope() > 0.0 && out.delta.declared_class() != FnClass::kKInf)
    out.delta = out.delta.with_class(FnClass::kKInf);

  AttractivityTable table;
  table.C = C_hat;
  table.delta = out.delta;
  for (int i = 0; i < opts.r_points; ++i)
    table.radii.push_back(opts.r_lo *
                          std::pow(opts.r_hi / opts.r_lo, real(i) / (opts.r_points - 1)));

  real scale = std::max({out.derived.theta.eval(opts.r_hi), C_hat, real(1.0)});
  real off_lo = std::max(scale * opts.eps_lo_rel, 1e-12);
  if (C_hat > 0.0) off_lo = std::min(off_lo, C_hat);  // keep 3*C_hat above the grid floor
  real off_hi = std::max(scale * 1.1, off_lo * 10.0);
  for (int i = 0; i < opts.eps_points; ++i)
    table.eps.push_back(C_hat +
                        off_lo * std::pow(off_hi / off_lo, real(i) / (opts.eps_points - 1)));

  ScheduleOptions sched = opts.schedule;
  sched.level_floor = std::max(sched.level_floor, off_lo * 0.5);
  table.T.assign(table.eps.size(), std::vector<real>(table.radii.size(), 0.0));
  for (std::size_t j = 0; j < table.radii.size(); ++j) {
    DecaySchedule ladder = build_schedule(data, out.derived, table.radii[j], sched);
    for (std::size_t i = 0; i < table.eps.size(); ++i)
      table.T[i][j] =
          attractivity_time(data, out.derived, ladder, table.eps[i], sched, opts.max_depth);
  }
  table.validate_or_throw();
  out.table = table;

  DecayBoundOptions decay = opts.decay;
  if (opts.horizon_hint > 0.0) decay.t_hi = std::max(decay.t_hi, opts.horizon_hint);
  out.certificate = table_to_certificate(table, combined_measure(data, opts.range_hint), decay);
  return out;
}

/// Pieces of the sum-to-max rewrite: a sum-form output bound
///   y <= beta + gamma(||y||) + mu_a + C
/// becomes the max-form data (alpha o beta, gamma + rho o gamma,
/// alpha o mu_a, alpha(C)) with alpha(s) = max{4 rho^{-1}(3s), 4s}, valid
/// whenever gamma + rho o gamma still contracts above r0.
struct SumToMaxPieces {
  ScalarFn gamma_eff;
  ScalarFn alpha;
  KLFn beta_eff;
  real C_eff = 0.0;

  InputMeasure apply_to_measure(const InputMeasure& mu_a) const {
    return InputMeasure::mapped(alpha, mu_a);
  }

  SmallGainData rewrite(const SmallGainData& data) const {
    SmallGainData out = data;
    out.beta = beta_eff;
    out.gamma = gamma_eff;
    out.C = C_eff;
    out.mu_a = apply_to_measure(data.mu_a);
    return out;
  }
};

inline SumToMaxPieces sum_to_max_rewrite(const KLFn& beta, const ScalarFn& gamma,
                                         const ScalarFn& rho, real C, real r0,
                                         const ContractionGrid& grid = {},
                                         real range_hint = ScalarFn::kDefaultRangeHint) {
  auto chk = is_contraction_with_margin(gamma, rho, r0, grid);
  if (!chk.contraction)
    throw DomainError(
        "sum_to_max_rewrite: gamma + rho o gamma is not a contraction above r0 (witness r=" +
        std::to_string(chk.witness) + ")");
  SumToMaxPieces out;
  out.gamma_eff = sum_of(gamma, compose(rho, gamma, range_hint), range_hint);
  ScalarFn rho_inv = inverse(rho);
  out.alpha = max_of(rho_inv.scale_input(3.0).scale_output(4.0), ScalarFn::linear(4.0),
                     range_hint);
  out.beta_eff = KLFn::composed(out.alpha, beta);
  out.C_eff = out.alpha.eval(C);
  return out;
}

}  // namespace sgt
