#pragma once

// Adiabatic expansion P0 + eps P1 of the evolved spectral projection on
// finite-dimensional Hermitian families H(s) = A + B cos s + C sin s.

#include <cstdint>

#include "qpump/numkernel.hpp"

namespace qpump {

struct MatrixFamily {
  CMatrix a, b, c;
  int filled = 1;          // projection onto the `filled` lowest eigenvalues
  double gap_min = 0.0;    // required separation from the rest of the spectrum

  int dim() const { return static_cast<int>(a.rows()); }
  CMatrix h(double s) const;
  CMatrix h_dot(double s) const;
  /// min over a uniform s grid of lambda_{filled} - lambda_{filled-1}
  double gap(int samples = 256) const;
};

/// Seeded random family: A Hermitian Gaussian, B and C the same scaled by
/// `modulation`; redrawn (same stream) until the gap is at least gap_min.
MatrixFamily random_family(int dim, int filled, std::uint64_t seed, double gap_min = 0.2,
                           double modulation = 0.35);

/// Ellipse enclosing the `filled` lowest eigenvalues of H(s), crossing the
/// real axis below the spectrum and in the middle of the gap.
Contour window_contour(const MatrixFamily& f, double s, int nodes);

/// -(2 pi i)^-1 oint (H - z)^-1 dz. GapClosed if the gap at s is below gap_min.
CMatrix projector_p0(const MatrixFamily& f, double s, int nodes = 0);

/// d/ds P0 = (2 pi i)^-1 oint R Hdot R dz.
CMatrix projector_p0_dot(const MatrixFamily& f, double s, int nodes = 0);

/// -(1/2 pi) oint R Rdot dz, Rdot = -R Hdot R.
CMatrix p1_resolvent(const MatrixFamily& f, double s, int nodes = 0);

/// -(1/2 pi) oint R [P0dot, P0] R dz.
CMatrix p1_commutator(const MatrixFamily& f, double s, int nodes = 0);

struct CondsResidual {
  double commutator = 0.0;  // ||i P0dot - [H, P1]||
  double splitting = 0.0;   // ||P0 P1 + P1 P0 - P1||
  double diagonal = 0.0;    // max(||P0 P1 P0||, ||(1-P0) P1 (1-P0)||)
  double max() const;
};

CondsResidual conds_residual(const MatrixFamily& f, double s, const CMatrix& p1, int nodes = 0);

/// U(s1, s0) of dU/ds = -(i/eps) H(s) U by the fourth-order Magnus scheme
/// (two Gauss points per step, exact exponential of the Hermitian
/// generator). `steps` <= 0 chooses h <= eps / (8 max ||H||).
CMatrix propagate(const MatrixFamily& f, double eps, double s0, double s1, int steps = 0);

struct ExpansionError {
  double eps = 0.0;
  double at_end = 0.0;        // ||U (P0 + eps P1) U^* - (P0 + eps P1)|| at s1
  double windowed_rms = 0.0;  // RMS of the same over the last `window` of [s0, s1]
  double window_max = 0.0;
  double at_end_p0 = 0.0;     // the same with the eps P1 terms dropped
  double windowed_rms_p0 = 0.0;
};

/// One propagation per eps serves both variants; P0 and P1 on the window
/// are computed once. GapClosed if the window is not isolated somewhere.
std::vector<ExpansionError> expansion_sweep(const MatrixFamily& f, const std::vector<double>& eps, double s0,
                                            double s1, double window = 1.0, int window_samples = 65);

/// Single eps; with `with_p1` false the eps P1 terms are dropped on both sides.
double expansion_error(const MatrixFamily& f, double eps, double s0, double s1, bool with_p1 = true);

}  // namespace qpump
