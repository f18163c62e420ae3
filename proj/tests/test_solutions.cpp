#include <doctest.h>

#include "qpump/solutions.hpp"
#include "support.hpp"

using namespace qpump;
using qtest::for_all;
using qtest::Gen;

namespace {

PumpProblem constant_problem(const CMatrix& v) {
  PumpProblem p;
  p.potential.n = static_cast<int>(v.rows());
  p.potential.terms.push_back({v, {SpaceProfile::Kind::Constant}, {{1.0}}});
  p.e_below = -v.norm() - 1.0;
  return p;
}

PumpProblem preset_problem(const std::string& name, double mu = 1.0) {
  PumpProblem p;
  p.potential = preset(name);
  p.mu = mu;
  return p;
}

// (-d^2 + V - z) g = delta(x - x') on a Dirichlet box by second-order
// differences and a tridiagonal solve; scalar potentials only.
std::vector<cplx> fd_green_column(const std::function<double(double)>& v, cplx z, double lo, double hi, int cells,
                                  int source) {
  const double h = (hi - lo) / cells;
  const int m = cells - 1;  // interior points x_i = lo + (i + 1) h
  std::vector<cplx> diag(m), rhs(m, 0.0);
  const cplx off = -1.0 / (h * h);
  for (int i = 0; i < m; ++i) diag[i] = 2.0 / (h * h) + v(lo + (i + 1) * h) - z;
  rhs[source] = 1.0 / h;
  for (int i = 1; i < m; ++i) {  // Thomas algorithm
    const cplx w = off / diag[i - 1];
    diag[i] -= w * off;
    rhs[i] -= w * rhs[i - 1];
  }
  std::vector<cplx> g(m);
  g[m - 1] = rhs[m - 1] / diag[m - 1];
  for (int i = m - 2; i >= 0; --i) g[i] = (rhs[i] - off * g[i + 1]) / diag[i];
  return g;
}

}  // namespace

TEST_CASE("constant potential: propagator is the closed-form cosh/sinh matrix") {
  for_all(20, 31, [](Gen& g, int) {
    const double v = g.uniform(-2, 4);
    const cplx z = g.off_axis(-3, 3, 0.1, 2.0);
    const PumpProblem p = constant_problem(CMatrix::Constant(1, 1, v));
    const double xa = g.uniform(-5, 5), d = g.uniform(0.1, 3.0);
    const TransferMatrix t = transfer(p, z, 0.0, xa, xa + d);
    const cplx k = std::sqrt(v - z);
    CMatrix want(2, 2);
    want << std::cosh(k * d), std::sinh(k * d) / k, k * std::sinh(k * d), std::cosh(k * d);
    CHECK((t.m - want).norm() < 1e-10 * want.norm());
  });
}

TEST_CASE("transfer matrices compose and have unit determinant") {
  for (const char* name : {"sliding_cosine", "sliding_multichannel", "modulated_well"}) {
    const PumpProblem p = preset_problem(name);
    for_all(5, 32, [&](Gen& g, int) {
      const double s = g.uniform(0, kTwoPi), a = g.uniform(-4, 0), b = a + g.uniform(0.5, 2), c = b + g.uniform(0.5, 2);
      const cplx z = g.off_axis(-2, 2, 0.2, 1.0);
      const SliceModel m(p, s);
      const CMatrix ab = m.propagate(z, a, b), bc = m.propagate(z, b, c), ac = m.propagate(z, a, c);
      CHECK((bc * ab - ac).norm() < 1e-9 * ac.norm());
      CHECK(std::abs(determinant(ac) - 1.0) < 1e-8);
      CHECK((m.propagate(z, c, a) * ac - CMatrix::Identity(ac.rows(), ac.cols())).norm() < 1e-8 * ac.norm());
    });
  }
}

TEST_CASE("cell model agrees with RK4 on the smooth potential") {
  const PumpProblem p = preset_problem("sliding_cosine");
  for_all(5, 33, [&](Gen& g, int) {
    const double s = g.uniform(0, kTwoPi);
    const cplx z = g.off_axis(-1, 2, 0.1, 0.5);
    const double ell = p.potential.period;
    const TransferMatrix t = transfer(p, z, s, 0.0, ell);
    const CMatrix rk = qtest::rk4_monodromy([&](double x) { return evaluate(p.potential, x, s); }, 1, z, 0.0, ell, 4000);
    CHECK((t.m - rk).norm() < 1e-3 * rk.norm());
    CHECK(t.error_estimate < 1e-3);
  });
}

TEST_CASE("halving the slice width cuts the transfer error about fourfold") {
  for (const char* name : {"sliding_cosine", "sliding_multichannel"}) {
    PumpProblem p = preset_problem(name);
    for_all(3, 38, [&](Gen& g, int) {
      const double s = g.uniform(0, kTwoPi);
      const cplx z = g.off_axis(-1, 2, 0.1, 0.5);
      std::vector<CMatrix> m;
      for (int cells : {64, 128, 256}) {  // exact halvings of the period
        const double h = kTwoPi / cells;
        p.x_step = h;
        m.push_back(SliceModel(p, s).propagate(z, 0.0, kTwoPi));  // whole cells only
      }
      const double ratio = (m[0] - m[1]).norm() / (m[1] - m[2]).norm();
      CHECK(ratio > 3.5);
      CHECK(ratio < 4.5);
    });
  }
}

TEST_CASE("Floquet multipliers of the frame match the RK4 monodromy") {
  const PumpProblem p = preset_problem("sliding_cosine");
  for_all(5, 34, [&](Gen& g, int) {
    const double s = g.uniform(0, kTwoPi);
    const cplx z = g.off_axis(-1, 3, 0.2, 1.0);
    const SolutionFrame f = decaying_frame(p, z, s, 0.0);
    const CMatrix rk = qtest::rk4_monodromy([&](double x) { return evaluate(p.potential, x, s); }, 1, z, 0.0,
                                            p.potential.period, 4000);
    Eigen::ComplexEigenSolver<CMatrix> es(rk);
    cplx small = es.eigenvalues()(0), large = es.eigenvalues()(1);
    if (std::abs(small) > std::abs(large)) std::swap(small, large);
    CHECK(std::abs(f.rho_p(0) - small) < 1e-3 * std::abs(large));
    CHECK(std::abs(f.rho_m(0) - large) < 1e-3 * std::abs(large));
    CHECK(std::abs(f.rho_p(0)) < 1.0);
  });
}

TEST_CASE("frame identities and Wronskian constancy on random (z, s)") {
  for (const auto& info : preset_catalog()) {
    const PumpProblem p = preset_problem(info.name, info.name == "modulated_well" ? 0.5 : 1.0);
    for_all(10, 35, [&](Gen& g, int) {
      const double s = g.uniform(0, kTwoPi);
      const cplx z = g.off_axis(-3, 2, 0.05, 1.5);
      const SliceModel m(p, s);
      const SolutionFrame f = decaying_frame(m, z, p.x0, p.tol);
      CHECK(frame_identities(f).max() < 1e-9);
      const SolutionFrame moved = propagate_frame(m, f, g.uniform(-2, 2));
      const CMatrix w0 = wronskian(f.adj_m, f.dadj_m, f.psi_p, f.dpsi_p);
      const CMatrix w1 = wronskian(moved.adj_m, moved.dadj_m, moved.psi_p, moved.dpsi_p);
      CHECK((w0 - w1).norm() < 1e-9);
      CHECK(frame_identities(moved).max() < 1e-8);
    });
  }
}

TEST_CASE("regauge keeps the identities and alignment undoes it") {
  const PumpProblem p = preset_problem("sliding_multichannel");
  for_all(10, 36, [&](Gen& g, int) {
    const SolutionFrame f = decaying_frame(p, g.off_axis(-1, 2, 0.1, 1), g.uniform(0, kTwoPi), 0.0);
    SolutionFrame h = f;
    const CMatrix tp = g.matrix(2) + 2.0 * CMatrix::Identity(2, 2), tm = g.matrix(2) + 2.0 * CMatrix::Identity(2, 2);
    regauge(h, tp, tm);
    CHECK_FALSE(h.native);
    CHECK(frame_identities(h).max() < 1e-9);
    const auto [ap, am] = alignment(h, f);
    regauge(h, ap, am);
    CHECK((h.psi_p - f.psi_p).norm() < 1e-10);
    CHECK((h.adj_m - f.adj_m).norm() < 1e-10);
  });
}

TEST_CASE("Green function of a constant matrix potential") {
  for_all(10, 37, [](Gen& g, int) {
    const CMatrix v = g.hermitian(2);
    const PumpProblem p = constant_problem(v);
    const cplx z = g.off_axis(-2, 2, 0.2, 1.0);
    const SliceModel m(p, 0.0);
    const SolutionFrame base = decaying_frame(m, z, 0.0, p.tol);
    const double x = g.uniform(-2, 2), xp = g.uniform(-2, 2);
    const CMatrix got = greens_function(propagate_frame(m, base, x), propagate_frame(m, base, xp));
    // Q diag(e^{-kappa |x - x'|} / (2 kappa)) Q^*
    Eigen::SelfAdjointEigenSolver<CMatrix> es(v);
    CVector d(2);
    for (int i = 0; i < 2; ++i) {
      const cplx k = std::sqrt(es.eigenvalues()(i) - z);
      d(i) = std::exp(-k * std::abs(x - xp)) / (2.0 * k);
    }
    const CMatrix want = es.eigenvectors() * d.asDiagonal() * es.eigenvectors().adjoint();
    CHECK((got - want).norm() < 1e-10);
  });
}

TEST_CASE("Green function of the modulated well against a finite-difference resolvent") {
  const PumpProblem p = preset_problem("modulated_well", 0.5);
  const double s = 0.8;
  const cplx z(1.0, 0.7);
  const SliceModel m(p, s);
  const SolutionFrame base = decaying_frame(m, z, 0.0, p.tol);
  const double lo = -15.0, hi = 15.0;
  const int cells = 6000;
  const double h = (hi - lo) / cells;
  auto v = [&](double x) { return evaluate(p.potential, x, s)(0, 0).real(); };
  for (double xp : {-1.0, 0.5, 2.0}) {
    const int src = static_cast<int>(std::lround((xp - lo) / h)) - 1;
    const double xs = lo + (src + 1) * h;
    const std::vector<cplx> col = fd_green_column(v, z, lo, hi, cells, src);
    const SolutionFrame at_xp = propagate_frame(m, base, xs);
    for (double x : {-2.5, -0.3, 1.1, 4.0}) {
      const int i = static_cast<int>(std::lround((x - lo) / h)) - 1;
      const double xi = lo + (i + 1) * h;
      const cplx got = greens_function(propagate_frame(m, base, xi), at_xp)(0, 0);
      CHECK(std::abs(got - col[i]) < 1e-3 * std::abs(col[i]) + 1e-6);
    }
  }
}

TEST_CASE("Green function: continuity and unit jump of the derivative") {
  for (const auto& info : preset_catalog()) {
    const PumpProblem p = preset_problem(info.name, 0.5);
    for_all(10, 38, [&](Gen& g, int) {
      const SliceModel m(p, g.uniform(0, kTwoPi));
      const SolutionFrame f = propagate_frame(m, decaying_frame(m, g.off_axis(-2, 2, 0.1, 1), 0.0, p.tol),
                                              g.uniform(-2, 2));
      SolutionFrame below = f;
      below.x = std::nextafter(f.x, -1e9);  // x < x' branch
      const int n = f.n;
      CHECK((greens_function(f, f) - greens_function(below, f)).norm() < 1e-6);
      const CMatrix jump = greens_dx(f, f, true) - greens_dx(f, f, false);
      CHECK((jump + CMatrix::Identity(n, n)).norm() < 1e-6);
    });
  }
}

TEST_CASE("half-line integrals against brute-force Simpson sums") {
  for (const char* name : {"sliding_cosine", "modulated_well"}) {
    const PumpProblem p = preset_problem(name, 0.5);
    const double s = 1.3;
    const cplx z(0.4, 0.6);
    const SliceModel m(p, s);
    const SolutionFrame f = decaying_frame(m, z, 0.0, p.tol);
    const HalfLineIntegrals hl = halfline_integrals(m, f);

    // Simpson on each cell half, frames carried point to point until the
    // decaying solution is down by 1e-4 (products by 1e-8); further out, rounding carried by the
    // growing solution would dominate the products
    const double h = 0.5 * m.cell_width();
    auto sweep = [&](int dir) {
      CMatrix j = CMatrix::Zero(f.n, f.n), k = j, hp = j;
      SolutionFrame a = f;
      auto add = [&](const SolutionFrame& x0, const SolutionFrame& x1, const SolutionFrame& x2, double w) {
        if (dir > 0) {
          j += w * (x0.adj_p * x0.psi_p + 4.0 * x1.adj_p * x1.psi_p + x2.adj_p * x2.psi_p);
          hp += w * (x0.psi_p.adjoint() * x0.psi_p + 4.0 * x1.psi_p.adjoint() * x1.psi_p +
                     x2.psi_p.adjoint() * x2.psi_p);
        } else {
          k += w * (x0.adj_m * x0.psi_m + 4.0 * x1.adj_m * x1.psi_m + x2.adj_m * x2.psi_m);
        }
      };
      const double start = (dir > 0 ? f.psi_p : f.psi_m).norm();
      for (double x = 0.0; (dir > 0 ? a.psi_p : a.psi_m).norm() > 1e-4 * start && x < 200.0; x += 2 * h) {
        const SolutionFrame b = propagate_frame(m, a, dir * (x + h));
        const SolutionFrame c = propagate_frame(m, b, dir * (x + 2 * h));
        add(a, b, c, h / 3.0);
        a = c;
      }
      return std::array<CMatrix, 3>{j, k, hp};
    };
    const auto fwd = sweep(+1);
    const auto bwd = sweep(-1);
    CHECK((hl.j_plus - fwd[0]).norm() < 1e-6 * std::max(1.0, fwd[0].norm()));
    CHECK((hl.h_plus - fwd[2]).norm() < 1e-6 * std::max(1.0, fwd[2].norm()));
    CHECK((hl.k_minus - bwd[1]).norm() < 1e-6 * std::max(1.0, bwd[1].norm()));
  }
}

TEST_CASE("constant-outside frames decay into both tails") {
  const PumpProblem p = preset_problem("modulated_well", 0.5);
  const SliceModel m(p, 2.0);
  const SolutionFrame f = decaying_frame(m, cplx(0.5, 0.3), 0.0, p.tol);
  const SolutionFrame far_r = propagate_frame(m, f, 12.0), far_l = propagate_frame(m, f, -12.0);
  CHECK(far_r.psi_p.norm() < 1e-4 * f.psi_p.norm());
  CHECK(far_l.psi_m.norm() < 1e-4 * f.psi_m.norm());
}
