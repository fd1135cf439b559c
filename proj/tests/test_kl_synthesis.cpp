#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "sgt/kl_synthesis.hpp"
#include "support/test_util.hpp"

using namespace sgt;
using namespace sgt::testutil;
using Catch::Approx;

namespace {

// T(eps, r) = r / eps on log grids, C = 0, delta = id.
AttractivityTable inverse_time_table(int ne = 24, int nr = 24) {
  AttractivityTable t;
  t.C = 0.0;
  t.delta = ScalarFn::identity().lower_to_pwl(1e4).with_class(FnClass::kKInf);
  t.eps = logspace(0.05, 20.0, ne);
  t.radii = logspace(0.05, 20.0, nr);
  // make sure the example points are exactly on the grid
  t.eps.push_back(2.0);
  t.radii.push_back(2.0);
  std::sort(t.eps.begin(), t.eps.end());
  std::sort(t.radii.begin(), t.radii.end());
  t.eps.erase(std::unique(t.eps.begin(), t.eps.end()), t.eps.end());
  t.radii.erase(std::unique(t.radii.begin(), t.radii.end()), t.radii.end());
  t.T.assign(t.eps.size(), std::vector<real>(t.radii.size()));
  for (std::size_t i = 0; i < t.eps.size(); ++i)
    for (std::size_t j = 0; j < t.radii.size(); ++j) t.T[i][j] = t.radii[j] / t.eps[i];
  return t;
}

}  // namespace

TEST_CASE("regularize_table", "[kl_synthesis]") {
  SECTION("T = r/eps doubles: the corner attains the inf") {
    auto table = inverse_time_table();
    auto reg = regularize_table(table);
    for (std::size_t i = 0; i < table.eps.size(); ++i)
      for (std::size_t j = 0; j < table.radii.size(); ++j)
        REQUIRE(reg.T[i][j] == Approx(2.0 * table.radii[j] / table.eps[i]));
  }
  SECTION("constant T shifts by r/(eps - C)") {
    AttractivityTable t;
    t.C = 0.5;
    t.delta = ScalarFn::identity();
    t.eps = {1.0, 2.0, 4.0};
    t.radii = {1.0, 3.0};
    t.T.assign(3, std::vector<real>(2, 7.0));
    auto reg = regularize_table(t);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 2; ++j)
        REQUIRE(reg.T[i][j] == Approx(t.radii[j] / (t.eps[i] - 0.5) + 7.0));
  }
  SECTION("single grid point") {
    AttractivityTable t;
    t.C = 0.25;
    t.delta = ScalarFn::identity();
    t.eps = {1.0};
    t.radii = {2.0};
    t.T = {{5.0}};
    auto reg = regularize_table(t);
    REQUIRE(reg.T[0][0] == Approx(2.0 / 0.75 + 5.0));
  }
  SECTION("strictly increasing in r, strictly decreasing in eps") {
    SplitMix64 rng(5);
    AttractivityTable t;
    t.C = 0.1;
    t.delta = ScalarFn::identity();
    t.eps = logspace(0.2, 10.0, 12);
    t.radii = logspace(0.1, 30.0, 14);
    t.T.assign(t.eps.size(), std::vector<real>(t.radii.size()));
    for (auto& row : t.T)
      for (real& v : row) v = rng.uniform(0.0, 50.0);  // arbitrary, not even monotone
    auto reg = regularize_table(t);
    for (std::size_t i = 0; i < t.eps.size(); ++i)
      for (std::size_t j = 0; j < t.radii.size(); ++j) {
        if (j + 1 < t.radii.size()) REQUIRE(reg.T[i][j] < reg.T[i][j + 1]);
        if (i + 1 < t.eps.size()) REQUIRE(reg.T[i][j] > reg.T[i + 1][j]);
      }
  }
  SECTION("empty grid is a data error") {
    AttractivityTable t;
    REQUIRE_THROWS_AS(regularize_table(t), DataError);
  }
}

TEST_CASE("reachable_level", "[kl_synthesis]") {
  auto table = inverse_time_table();
  SECTION("T = r/eps: level 2 is reachable from r = 2 by t = 1") {
    auto lvl = reachable_level(table, 2.0, 1.0);
    REQUIRE(lvl.finite);
    REQUIRE(lvl.value == Approx(2.0).epsilon(1e-12));
  }
  SECTION("t = 0 with strictly positive T is the empty set") {
    REQUIRE_FALSE(reachable_level(table, 2.0, 0.0).finite);
  }
  SECTION("constant T and t >= T0 reaches the smallest grid eps") {
    AttractivityTable t;
    t.C = 0.0;
    t.delta = ScalarFn::identity();
    t.eps = {0.3, 1.0, 2.0};
    t.radii = {1.0};
    t.T.assign(3, std::vector<real>(1, 4.0));
    auto lvl = reachable_level(t, 0.7, 5.0);
    REQUIRE(lvl.finite);
    REQUIRE(lvl.value == Approx(0.3));
  }
  SECTION("radius above the grid is the empty set") {
    REQUIRE_FALSE(reachable_level(table, 1e9, 100.0).finite);
  }
}

TEST_CASE("kl_envelope", "[kl_synthesis]") {
  auto witness_exp = [](real e, real r) {
    return r <= e ? 0.0 : std::log(r / e) * (1.0 + 1e-9) + 1e-9;
  };

  SECTION("phi = s e^{-t} is dominated with the default margin") {
    PhiSamples phi;
    phi.s_knots = linspace(0, 5, 26);
    phi.t_knots = linspace(0, 6, 25);
    phi.values.assign(26, std::vector<real>(25));
    for (int i = 0; i < 26; ++i)
      for (int j = 0; j < 25; ++j)
        phi.values[i][j] = phi.s_knots[i] * std::exp(-phi.t_knots[j]);
    auto env = kl_envelope(phi, ScalarFn::identity(), witness_exp);
    for (int i = 0; i < 26; ++i)
      for (int j = 0; j < 25; ++j)
        REQUIRE(env.eval(phi.s_knots[i], phi.t_knots[j]) >= phi.values[i][j]);
    // already monotone, so the envelope is just (1 + margin) * phi at knots
    REQUIRE(env.eval(5.0, 0.0) == Approx(5.0 * 1.05).epsilon(1e-6));
    REQUIRE(env.validate_on(linspace(0, 5, 11), linspace(0, 6, 13)).ok);
  }
  SECTION("phi == 0 yields a valid nonnegative envelope") {
    PhiSamples phi;
    phi.s_knots = {0.0, 1.0, 2.0};
    phi.t_knots = {0.0, 1.0};
    phi.values.assign(3, std::vector<real>(2, 0.0));
    auto env = kl_envelope(phi, ScalarFn::identity(), [](real, real) { return 0.0; });
    REQUIRE(env.eval(1.5, 0.7) >= 0.0);
  }
  SECTION("phi = min{s, 1/(1+t)}: dominance on a 100x100 grid") {
    PhiSamples phi;
    phi.s_knots = linspace(0, 3, 100);
    phi.t_knots = linspace(0, 9, 100);
    phi.values.assign(100, std::vector<real>(100));
    for (int i = 0; i < 100; ++i)
      for (int j = 0; j < 100; ++j)
        phi.values[i][j] = std::min(phi.s_knots[i], 1.0 / (1.0 + phi.t_knots[j]));
    auto witness = [](real e, real r) {
      (void)r;
      return e >= 1.0 ? 0.0 : (1.0 / e - 1.0) * (1.0 + 1e-9) + 1e-9;
    };
    auto env = kl_envelope(phi, ScalarFn::identity(), witness);
    for (int i = 0; i < 100; ++i)
      for (int j = 0; j < 100; ++j) {
        real s = phi.s_knots[i], t = phi.t_knots[j];
        REQUIRE(env.eval(s, t) >= phi.values[i][j]);
        REQUIRE(env.eval(s, t) <= phi.values[i][j] * 1.05 + 1e-8);
      }
    REQUIRE(env.validate_on(linspace(0, 3, 7), linspace(0, 9, 7)).ok);
  }
  SECTION("violated attractivity hypothesis is a precondition error") {
    PhiSamples phi;
    phi.s_knots = {0.0, 1.0};
    phi.t_knots = {0.0, 1.0, 2.0};
    phi.values = {{0.0, 0.0, 0.0}, {1.0, 1.0, 1.0}};  // never decays
    REQUIRE_THROWS_AS(
        kl_envelope(phi, ScalarFn::identity(), [](real, real) { return 0.5; }),
        DomainError);
  }
  SECTION("violated stability hypothesis is a precondition error") {
    PhiSamples phi;
    phi.s_knots = {0.0, 0.1, 1.0};
    phi.t_knots = {0.0, 1.0};
    phi.values = {{0.0, 0.0}, {5.0, 0.0}, {5.0, 0.0}};  // blows past delta near 0
    REQUIRE_THROWS_AS(
        kl_envelope(phi, ScalarFn::identity(), [](real, real) { return 1.5; }),
        DomainError);
  }
}

TEST_CASE("certificate_to_table", "[kl_synthesis]") {
  SECTION("beta = s e^{-t}: delta is the identity, T is log(r/eps)") {
    IOSCertificate cert{KLFn::separable(ScalarFn::identity(), ScalarFn::exp_decay(1.0, 1.0)),
                        InputMeasure::zero(), 0.0};
    TableFromCertOptions opts;
    opts.quantum.dt = 0.01;
    auto [delta, table] = certificate_to_table(cert, opts);
    for (real e : {0.1, 1.0, 5.0}) REQUIRE(delta.eval(e) <= e * (1.0 + 1e-9));
    for (std::size_t i = 0; i < table.eps.size(); i += 5)
      for (std::size_t j = 0; j < table.radii.size(); j += 5) {
        real expect = std::max(0.0, std::log(table.radii[j] / table.eps[i]));
        REQUIRE(table.T[i][j] == Approx(expect).margin(0.011));  // within 1 grid step
      }
  }
  SECTION("beta = 2 s e^{-t}: delta(eps) = eps / 2") {
    IOSCertificate cert{KLFn::separable(ScalarFn::linear(2.0), ScalarFn::exp_decay(1.0, 1.0)),
                        InputMeasure::zero(), 0.0};
    auto [delta, table] = certificate_to_table(cert);
    for (real e : {0.2, 1.0, 8.0}) REQUIRE(delta.eval(e) == Approx(e / 2.0));
  }
  SECTION("eps already above the transient: T = 0") {
    IOSCertificate cert{KLFn::separable(ScalarFn::identity(), ScalarFn::exp_decay(1.0, 1.0)),
                        InputMeasure::zero(), 0.0};
    auto [delta, table] = certificate_to_table(cert);
    for (std::size_t i = 0; i < table.eps.size(); ++i)
      for (std::size_t j = 0; j < table.radii.size(); ++j)
        if (table.eps[i] >= table.radii[j]) REQUIRE(table.T[i][j] == 0.0);
  }
}

TEST_CASE("decay bound satisfies the certified-level clause", "[kl_synthesis]") {
  auto table = inverse_time_table();
  auto reg = regularize_table(table);
  auto bound = decay_bound_from_table(reg);
  ScalarFn delta_inv = inverse(reg.delta);
  // At every grid (r, t) there is a certified grid level (or the stability
  // branch) with min{level - 2C, delta^{-1}(r)} <= bound(r, t).
  for (real r : reg.radii)
    for (real t : linspace(0, 50, 26)) {
      ExtReal lvl = reachable_level(reg, r, t);
      real claim = lvl.finite ? std::min(lvl.value - 2.0 * reg.C, delta_inv.eval(r))
                              : delta_inv.eval(r);
      REQUIRE(claim <= bound.eval(r, t) * (1.0 + 1e-9) + 1e-12);
    }
}

TEST_CASE("table_to_certificate", "[kl_synthesis]") {
  SECTION("round trip: beta = s e^{-t}, C in {0, 0.5}") {
    for (real C : {0.0, 0.5}) {
      IOSCertificate in{KLFn::separable(ScalarFn::identity(), ScalarFn::exp_decay(1.0, 1.0)),
                        InputMeasure::zero(), C};
      auto [delta, table] = certificate_to_table(in);
      auto out = table_to_certificate(table, InputMeasure::zero());
      REQUIRE(out.C == 3.0 * C);  // exactly
      // the synthesized bound dominates the original on a 64x64 grid
      for (real s : logspace(1e-2, 1e2, 64))
        for (real t : linspace(0, 10, 64))
          REQUIRE(out.beta.eval(s, t) >= s * std::exp(-t) * (1.0 - 1e-12));
    }
  }
  SECTION("trajectories passing the practical check pass the KL check") {
    SplitMix64 rng(71);
    IOSCertificate in{KLFn::separable(ScalarFn::linear(1.5), ScalarFn::exp_decay(1.0, 0.7)),
                      InputMeasure::sup(), 0.2};
    auto [delta, table] = certificate_to_table(in);
    auto out = table_to_certificate(table, InputMeasure::sup());
    for (int rep = 0; rep < 20; ++rep) {
      real s0 = rng.uniform(0.2, 5.0);
      real rate = rng.uniform(0.7, 2.0);
      real floor_u = rng.uniform(0.0, 0.5);
      auto x_of = [=](real t) { return s0 * std::exp(-rate * t); };
      auto y_of = [=](real t) { return std::max(std::min(1.5 * s0 * std::exp(-0.7 * t),
                                                         1.5 * s0 * std::exp(-rate * t)),
                                                std::max(floor_u, 0.0)); };
      auto traj = make_trajectory(8.0, 0.05, x_of, y_of, {[=](real) { return floor_u; }});
      auto probes = PracticalProbes::defaults(traj, table.C);
      auto practical = check_practical_ios(traj, delta, table.as_function(), InputMeasure::sup(),
                                           table.C, probes);
      if (!practical.pass) continue;  // only the implication is claimed
      auto kl = check_kl_ios(traj, out);
      INFO("rep " << rep << " worst excess " << kl.worst_excess);
      REQUIRE(kl.pass);
    }
  }
}
