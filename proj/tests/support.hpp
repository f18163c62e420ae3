#pragma once

// Seeded generators and independent oracles shared by the unit tests.

#include <cmath>
#include <functional>
#include <random>

#include "qpump/config.hpp"

namespace qtest {

using qpump::CMatrix;
using qpump::cplx;

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(rng_); }

  CMatrix matrix(int n) {
    CMatrix m(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) m(i, j) = cplx(normal(), normal());
    return m;
  }
  CMatrix hermitian(int n) {
    const CMatrix m = matrix(n);
    return 0.5 * (m + m.adjoint());
  }
  CMatrix unitary(int n) { return matrix(n).householderQr().householderQ(); }
  /// point in a box of the complex plane bounded away from the real axis
  cplx off_axis(double re_lo, double re_hi, double im_min, double im_max) {
    const double im = uniform(im_min, im_max);
    return {uniform(re_lo, re_hi), integer(0, 1) ? im : -im};
  }

 private:
  std::mt19937_64 rng_;
};

/// Runs `body` for `count` draws of a fresh generator; the draw index is
/// part of the seed so a failure names a reproducible case.
inline void for_all(int count, std::uint64_t seed, const std::function<void(Gen&, int)>& body) {
  for (int i = 0; i < count; ++i) {
    Gen g(seed * 1000003ull + static_cast<std::uint64_t>(i));
    body(g, i);
  }
}

/// Monodromy of psi'' = (V(x) - z) psi over [x0, x0 + period] by classical
/// RK4 on the smooth potential; unrelated to the library's cell model.
inline CMatrix rk4_monodromy(const std::function<CMatrix(double)>& v, int n, cplx z, double x0, double period,
                             int steps) {
  CMatrix y = CMatrix::Identity(2 * n, 2 * n);
  auto f = [&](double x, const CMatrix& u) {
    CMatrix d(2 * n, 2 * n);
    CMatrix a = v(x);
    a.diagonal().array() -= z;
    d.topRows(n) = u.bottomRows(n);
    d.bottomRows(n) = a * u.topRows(n);
    return d;
  };
  const double h = period / steps;
  for (int i = 0; i < steps; ++i) {
    const double x = x0 + i * h;
    const CMatrix k1 = f(x, y);
    const CMatrix k2 = f(x + 0.5 * h, y + 0.5 * h * k1);
    const CMatrix k3 = f(x + 0.5 * h, y + 0.5 * h * k2);
    const CMatrix k4 = f(x + h, y + h * k3);
    y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return y;
}

/// Hill discriminant tr(M)/2 of a scalar periodic potential at real energy.
inline double discriminant(const std::function<double(double)>& v, double period, double e, int steps = 2000) {
  const CMatrix m = rk4_monodromy([&](double x) { return CMatrix::Constant(1, 1, v(x)); }, 1, e, 0.0, period, steps);
  return 0.5 * m.trace().real();
}

/// Spectral projector onto the `filled` lowest eigenvectors.
inline CMatrix eigen_projector(const CMatrix& h, int filled) {
  Eigen::SelfAdjointEigenSolver<CMatrix> es(h);
  const CMatrix v = es.eigenvectors().leftCols(filled);
  return v * v.adjoint();
}

}  // namespace qtest
