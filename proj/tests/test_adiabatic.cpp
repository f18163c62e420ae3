#include <doctest.h>

#include "qpump/adiabatic.hpp"
#include "support.hpp"

using namespace qpump;
using qtest::for_all;
using qtest::Gen;

namespace {

CMatrix exp_minus_i(const CMatrix& h, double t) {
  Eigen::SelfAdjointEigenSolver<CMatrix> es(h);
  CVector ph(h.rows());
  for (Eigen::Index i = 0; i < ph.size(); ++i) ph(i) = std::exp(-kI * t * es.eigenvalues()(i));
  return es.eigenvectors() * ph.asDiagonal() * es.eigenvectors().adjoint();
}

// sum over states: P0dot mixes filled o and empty u with <u|Hdot|o> / (E_o - E_u);
// P1 solves [H, P1] = i P0dot off the diagonal blocks and vanishes on them
std::pair<CMatrix, CMatrix> sum_over_states(const MatrixFamily& f, double s) {
  Eigen::SelfAdjointEigenSolver<CMatrix> es(f.h(s));
  const CMatrix q = es.eigenvectors();
  const RVector e = es.eigenvalues();
  const CMatrix hd = q.adjoint() * f.h_dot(s) * q;
  const int d = f.dim();
  CMatrix pd = CMatrix::Zero(d, d), p1 = CMatrix::Zero(d, d);
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b) {
      const bool fa = a < f.filled, fb = b < f.filled;
      if (fa == fb) continue;
      const double e_occ = fa ? e(a) : e(b), e_emp = fa ? e(b) : e(a);
      pd(a, b) = hd(a, b) / (e_occ - e_emp);
    }
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b)
      if ((a < f.filled) != (b < f.filled)) p1(a, b) = kI * pd(a, b) / (e(a) - e(b));
  return {q * pd * q.adjoint(), q * p1 * q.adjoint()};
}

MatrixFamily frozen(const CMatrix& a, int filled) {
  MatrixFamily f;
  f.a = a;
  f.b = CMatrix::Zero(a.rows(), a.cols());
  f.c = f.b;
  f.filled = filled;
  return f;
}

}  // namespace

TEST_CASE("random families are reproducible and gapped") {
  const MatrixFamily a = random_family(6, 3, 99), b = random_family(6, 3, 99), c = random_family(6, 3, 100);
  CHECK((a.a - b.a).norm() == 0.0);
  CHECK((a.a - c.a).norm() > 0.0);
  CHECK(a.gap() >= 0.2);
  CHECK(hermitian_defect(a.h(1.0)) < 1e-15);
  CHECK_THROWS_AS(random_family(3, 3, 1), Error);
}

TEST_CASE("P0 is the eigenprojector and P0dot its derivative") {
  for_all(10, 61, [](Gen& g, int i) {
    const MatrixFamily f = random_family(g.integer(3, 6), 1 + i % 2, 500 + i);
    const double s = g.uniform(0, kTwoPi), h = 1e-5;
    CHECK((projector_p0(f, s) - qtest::eigen_projector(f.h(s), f.filled)).norm() < 1e-12);
    const CMatrix fd = (qtest::eigen_projector(f.h(s + h), f.filled) - qtest::eigen_projector(f.h(s - h), f.filled)) /
                       (2 * h);
    CHECK((projector_p0_dot(f, s) - fd).norm() < 1e-7);
    CHECK((projector_p0_dot(f, s) - sum_over_states(f, s).first).norm() < 1e-10);
  });
}

TEST_CASE("both P1 contour formulas equal the sum-over-states P1") {
  for_all(10, 62, [](Gen& g, int i) {
    const MatrixFamily f = random_family(6, 3, 700 + i);
    const double s = g.uniform(0, kTwoPi);
    const CMatrix want = sum_over_states(f, s).second;
    const CMatrix p1 = p1_resolvent(f, s);
    CHECK((p1 - want).norm() < 1e-10);
    CHECK((p1_commutator(f, s) - want).norm() < 1e-10);
    CHECK(conds_residual(f, s, p1).max() < 1e-10);
    CHECK((p1 - p1.adjoint()).norm() < 1e-10);
  });
}

TEST_CASE("a wrong P1 is caught by the residuals") {
  const MatrixFamily f = random_family(5, 2, 3);
  const CMatrix p1 = p1_resolvent(f, 0.4);
  CHECK(conds_residual(f, 0.4, 2.0 * p1).max() > 1e-3);
  CHECK(conds_residual(f, 0.4, p1 + projector_p0(f, 0.4)).max() > 1e-3);
}

TEST_CASE("propagator: autonomous case, composition, reversal") {
  for_all(8, 63, [](Gen& g, int) {
    const CMatrix a = g.hermitian(4);
    const double eps = g.uniform(0.05, 0.5), s0 = g.uniform(0, 1), s1 = s0 + g.uniform(0.1, 1);
    CHECK((propagate(frozen(a, 2), eps, s0, s1) - exp_minus_i(a, (s1 - s0) / eps)).norm() < 1e-9);

    const MatrixFamily f = random_family(4, 2, 800 + static_cast<int>(1000 * eps));
    const double s2 = s1 + g.uniform(0.1, 1);
    const CMatrix u10 = propagate(f, eps, s0, s1), u21 = propagate(f, eps, s1, s2), u20 = propagate(f, eps, s0, s2);
    CHECK((u21 * u10 - u20).norm() < 1e-9);
    CHECK((propagate(f, eps, s1, s0) * u10 - CMatrix::Identity(4, 4)).norm() < 1e-9);
  });
}

TEST_CASE("frozen family: the expansion is exact") {
  Gen g(64);
  const MatrixFamily f = frozen(g.hermitian(6), 3);
  for (double eps : {0.1, 0.01}) CHECK(expansion_error(f, eps, 0.0, 1.5) < 1e-9);
}

TEST_CASE("second order with P1, first order without") {
  for (int seed : {11, 12}) {
    const MatrixFamily f = random_family(6, 3, seed);
    const auto sweep = expansion_sweep(f, {0.01, 0.005, 0.0025}, 0.0, 2.0);
    for (std::size_t i = 1; i < sweep.size(); ++i) {
      const double r = sweep[i - 1].windowed_rms / sweep[i].windowed_rms;
      const double r0 = sweep[i - 1].windowed_rms_p0 / sweep[i].windowed_rms_p0;
      CHECK(r > 3.4);
      CHECK(r < 4.6);
      CHECK(r0 > 1.7);
      CHECK(r0 < 2.3);
    }
  }
}

TEST_CASE("closed window raises GapClosed") {
  MatrixFamily f = random_family(4, 2, 5);
  f.gap_min = 100.0;
  try {
    projector_p0(f, 0.0);
    FAIL("expected GapClosed");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::GapClosed);
  }
}
