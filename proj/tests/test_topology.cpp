#include <doctest.h>

#include "qpump/topology.hpp"
#include "support.hpp"

using namespace qpump;
using qtest::for_all;
using qtest::Gen;

namespace {

PumpProblem sliding(double mu, double offset = 3.0, double v0 = 4.0) {
  PumpProblem p;
  p.potential = preset("sliding_cosine", {{"offset", offset}, {"v0", v0}});
  p.mu = mu;
  p.s_grid = 64;
  return p;
}

PumpProblem static_cosine() {
  PumpProblem p;
  p.potential.terms.push_back({CMatrix::Constant(1, 1, 3.0), {SpaceProfile::Kind::Constant}, {{1.0}}});
  p.potential.terms.push_back({CMatrix::Constant(1, 1, 4.0), {SpaceProfile::Kind::Cos, 1}, {{1.0}}});
  p.mu = 1.0;
  p.s_grid = 64;
  return p;
}

// bands below e: the discriminant has exactly one zero inside each band
int bands_below(const PotentialSpec& v, double s, double e_low, double e) {
  auto vx = [&](double x) { return evaluate(v, x, s)(0, 0).real(); };
  int count = 0;
  double prev = qtest::discriminant(vx, v.period, e_low);
  const int steps = 400;
  for (int i = 1; i <= steps; ++i) {
    const double d = qtest::discriminant(vx, v.period, e_low + (e - e_low) * i / steps);
    if ((d > 0) != (prev > 0)) ++count;
    prev = d;
  }
  return count;
}

}  // namespace

TEST_CASE("gap margin is the Floquet rate acosh |Delta(mu)|") {
  const PumpProblem p = sliding(1.0);
  const GapReport g = verify_gap(p, 16);
  REQUIRE(g.s.size() == g.margins.size());
  for (std::size_t i = 0; i < g.s.size(); i += 3) {
    auto vx = [&](double x) { return evaluate(p.potential, x, g.s[i])(0, 0).real(); };
    const double delta = qtest::discriminant(vx, p.potential.period, p.mu, 4000);
    CHECK(std::abs(delta) > 1.0);
    CHECK(g.margins[i] == doctest::Approx(std::acosh(std::abs(delta))).epsilon(1e-3));
  }
  CHECK(g.margin <= *std::min_element(g.margins.begin(), g.margins.end()) + 1e-12);
}

TEST_CASE("mu inside a band closes the gap") {
  const PumpProblem p = sliding(5.1);
  try {
    verify_gap(p, 32);
    FAIL("expected GapClosed");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::GapClosed);
    CHECK(std::isfinite(e.detail()));
  }
}

TEST_CASE("torus contour stays off the real axis and spans [e_below, mu]") {
  const PumpProblem p = sliding(1.0);
  const Contour c = torus_contour(p, 64);
  double lo = 1e9, hi = -1e9;
  for (const cplx& z : c.nodes) {
    CHECK(std::abs(z.imag()) > 1e-6);
    lo = std::min(lo, z.real());
    hi = std::max(hi, z.real());
  }
  CHECK(lo < p.e_below + 0.1);
  CHECK(hi > p.mu - 0.1);
  CHECK(hi <= p.mu);
}

TEST_CASE("static potential carries no charge") {
  const PumpProblem p = static_cosine();
  const TorusGrid g = build_torus(p, 16, 16, true);
  CHECK(chern_plaquette(g).chern == 0);
  CHECK(std::abs(chern_plaquette(g).raw) < 1e-10);
  CHECK(find_crossings(p, 0.0).empty());
  CHECK(std::abs(charge_topological(g).charge) < 1e-10);
}

TEST_CASE("sliding lattice: every method counts the bands below mu") {
  struct Case {
    double mu, offset;
  };
  for (const Case c : {Case{1.0, 3.0}, Case{1.0, 0.0}}) {
    const PumpProblem p = sliding(c.mu, c.offset);
    const int bands = bands_below(p.potential, 0.0, -6.0, c.mu);
    const TorusGrid g = build_torus(p, 32, 32, true);
    const ChernResult ch = chern_plaquette(g);
    CHECK(ch.chern == bands);
    CHECK(ch.residual < 1e-8);
    CHECK(chern_from_crossings(find_crossings(p, 0.0)) == bands);
    const double q = charge_topological(g).charge;  // coarse torus: converges slowly
    CHECK(std::lround(q) == bands);
    CHECK(std::abs(q - bands) < 0.1);
  }
}

TEST_CASE("Chern number does not depend on the fiducial point") {
  for_all(3, 41, [](Gen& gen, int) {
    PumpProblem p = sliding(1.0);
    p.x0 = gen.uniform(-3, 3);
    CHECK(chern_plaquette(build_torus(p, 24, 24)).chern == 1);
    CHECK(chern_from_crossings(find_crossings(p, p.x0)) == 1);
  });
}

TEST_CASE("crossings: lambda_z is negative and equals -(u, H u)") {
  const PumpProblem p = sliding(1.0);
  for (double x0 : {0.0, 1.3, 4.0}) {
    for (const CrossingRecord& r : find_crossings(p, x0)) {
      CHECK(r.lambda_z < 0.0);
      CHECK(r.lambda_z == doctest::Approx(r.lambda_z_quadratic).epsilon(1e-5));
      CHECK(r.residual < 1e-8);
      CHECK(std::abs(r.w) == 1);
    }
  }
}

TEST_CASE("L(z, s) = L(conj z, s)^*") {
  for (const char* name : {"sliding_cosine", "sliding_multichannel"}) {
    PumpProblem p;
    p.potential = preset(name);
    for_all(8, 42, [&](Gen& g, int) {
      CHECK(reflection_defect(p, g.off_axis(-6, 1, 0.05, 2), g.uniform(0, kTwoPi), g.uniform(-2, 2)) < 1e-10);
    });
  }
}

TEST_CASE("persistent current vanishes") {
  PumpProblem p;
  p.potential = preset("sliding_multichannel");
  for (double s : {0.3, 2.0, 4.4}) {
    const CurrentResult c = persistent_current(p, s, 0.0, 64);
    CHECK(std::abs(c.value) < 1e-10);
  }
}

TEST_CASE("curvature quadrature agrees with the plaquette flux on a patch") {
  const PumpProblem p = sliding(1.0);
  CurvaturePatch patch;
  patch.t0 = 0.5;
  patch.t1 = 1.0;
  patch.s0 = 3.6;
  patch.s1 = 4.3;  // contains the crossing
  patch.nt = 33;
  patch.ns = 33;
  const CurvatureResult r = curvature_direct(p, patch);
  CHECK(std::abs(r.integral - r.plaquette_flux) < 1e-3 * std::max(1.0, std::abs(r.plaquette_flux)));
  CHECK(r.identity_defect < 1e-6);
}
