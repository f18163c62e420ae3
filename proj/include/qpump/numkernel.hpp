#pragma once

// Dense complex linear algebra on small matrices, closed-contour quadrature
// and phase tracking. Everything here is a pure function of its inputs.

#include <complex>
#include <numbers>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "qpump/errors.hpp"

namespace qpump {

using cplx = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RVector = Eigen::VectorXd;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline constexpr cplx kI{0.0, 1.0};

/// Tolerance ladder shared by all modules.
struct Tolerances {
  double algebra = 1e-12;
  double decomposition = 1e-10;
  double quadrature = 1e-8;
  double condition_cap = 1e13;
  double cluster = 1e-8;       // relative eigenvalue clustering
  double unit_circle = 1e-8;   // | |rho| - 1 | below this counts as on the spectrum
  double richardson = 1e-3;    // accepted relative transfer-matrix error

  Tolerances scaled(double factor) const;
};

double condition_estimate(const CMatrix& a);
CMatrix inverse(const CMatrix& a, double condition_cap = 1e13);
CMatrix solve(const CMatrix& a, const CMatrix& b, double condition_cap = 1e13);
cplx determinant(const CMatrix& a);

/// Relative anti-Hermitian part ||A - A*|| / max(1, ||A||).
double hermitian_defect(const CMatrix& a);

struct EigenSystem {
  CVector values;    // sorted by ascending modulus
  CMatrix vectors;   // unit-norm columns
  std::vector<std::vector<int>> clusters;  // groups of indices closer than tol.cluster
  double residual = 0.0;                   // max ||A v - lambda v|| / ||A||
};

EigenSystem eig_general(const CMatrix& a, const Tolerances& tol = {});

struct HermitianEigenSystem {
  RVector values;   // ascending
  CMatrix vectors;  // unitary
};

HermitianEigenSystem eig_hermitian(const CMatrix& a, const Tolerances& tol = {});

struct PhaseTrace {
  std::vector<double> phases;  // continuous phase, phases[0] = arg(samples[0])
  long winding = 0;
  double residual = 0.0;       // |total/2pi - winding|
};

/// Continuous phase of a sampled loop. A principal-branch step larger than
/// `max_step` raises PhaseJump (the sampling is too coarse to be trusted).
PhaseTrace unwrap_phase(std::span<const cplx> samples, bool closed = true,
                        double max_step = 0.5 * kPi);

/// Counterclockwise ellipse through `left` and `right` on the real axis,
/// sampled uniformly in its angle parameter (trapezoidal rule).
struct Contour {
  std::vector<double> params;   // angle parameter t_j
  std::vector<cplx> nodes;      // z(t_j)
  std::vector<cplx> tangents;   // dz/dt at t_j
  std::vector<cplx> weights;    // tangent * dt
  int orientation = 1;

  std::size_t size() const { return nodes.size(); }
  double param_step() const { return kTwoPi / static_cast<double>(nodes.size()); }
};

/// `offset` shifts the parameter grid in units of one step; 0 puts a node on
/// the right crossing, 0.5 keeps every node off the real axis.
Contour ellipse_contour(double left, double right, double aspect, int nodes,
                        double offset = 0.0);

cplx quad_closed(std::span<const cplx> values, const Contour& contour);
CMatrix quad_closed(std::span<const CMatrix> values, const Contour& contour);

}  // namespace qpump
