#pragma once

// Scattering at Fermi energy mu for the potential truncated to
// [x0, x0 + L] (free leads outside), the half-line reflection R(s), the BPT
// charge and variance, and the winding of det R.
//
// Plane waves are referenced to the left end x0 of the truncation interval:
// left incidence psi = e^{ik(x-x0)} + R e^{-ik(x-x0)} for x < x0 and
// T e^{ik(x-x0)} for x > x0 + L; right incidence likewise with R', T'.

#include "qpump/solutions.hpp"

namespace qpump {

struct ScatteringMatrix {
  double s = 0.0;
  double mu = 0.0;
  double k = 0.0;
  double length = 0.0;  // infinity for the half-line limit
  CMatrix r, tp, t, rp;  // R, T', T, R'
  double unitarity = 0.0;  // ||S S^* - 1||

  CMatrix full() const;  // [[R, T'], [T, R']]
};

/// Stable matching: the outgoing subspace is carried through [x0, x0 + L]
/// with re-orthonormalisation, so L of many decay lengths is fine.
/// Raises MatchingSingular when the matching system is singular.
ScatteringMatrix s_matrix_finite(const PumpProblem& problem, double s, double length);

/// The same from the explicit total transfer matrix; only usable while the
/// transfer matrix is well conditioned (short L). Cross-check.
ScatteringMatrix s_matrix_transfer(const PumpProblem& problem, double s, double length);

struct Reflection {
  CMatrix r;
  double residual = 0.0;      // of (psi' + ik psi) + R^*(psi' - ik psi) = 0
  double unitarity = 0.0;
  double matching_gap = 0.0;  // vs direct plane-wave matching at x0
};

/// Reflection off [x0, inf) with a free lead on the left, from the decaying
/// frame at z = mu. SystemSingular when psi_+' - ik psi_+ is singular.
Reflection reflection_halfline(const PumpProblem& problem, double s);

/// Reflection off (-inf, x0 + L] seen from a free lead on the right, with the
/// phase convention of s_matrix_finite.
CMatrix reflection_right(const PumpProblem& problem, double s, double length);

/// The same reflection as reflection_halfline, evaluated at mu + i eta.
CMatrix reflection_regularised(const PumpProblem& problem, double s, double eta = 1e-8);

struct CinqueRow {
  double length = 0.0;
  double t_norm = 0.0, tp_norm = 0.0;
  double r_gap = 0.0, rp_gap = 0.0;  // ||R_L - R||, ||R'_L - R'||
  double unitarity = 0.0;
};

struct CinqueTable {
  double s = 0.0;
  std::vector<CinqueRow> rows;
  double t_slope = 0.0;        // least-squares slope of log||T_L|| per unit length
  double r_slope = 0.0;        // same for ||R_L - R||
  bool t_decreasing = false;   // allowing an oscillation envelope factor 2
};

CinqueTable verify_cinque(const PumpProblem& problem, double s, const std::vector<double>& lengths);

/// (1/2 pi i) oint tr(dS S^* P) ds over samples on a uniform closed grid,
/// dS/ds by fourth-order centred differences. UnderResolved when the result
/// on every other sample differs by more than 1e-3.
struct BptResult {
  double charge = 0.0;
  double imag_residual = 0.0;
  double half_grid_charge = 0.0;
};
BptResult bpt_charge(const std::vector<CMatrix>& samples, int n);

/// Variance with the periodic kernel 1 / (4 sin^2((s - s')/2)), i.e. the
/// image sum of 1/(s - s')^2; even samples serve as s, odd ones as s', so
/// s = s' is never evaluated. Needs an even sample count.
double bpt_variance(const std::vector<CMatrix>& samples, int n);

struct RCrossing {
  double s = 0.0;
  int direction = 0;  // +1 counterclockwise through -1
};

struct WindingResult {
  long winding = 0;
  std::vector<double> s, phase;  // continuous phase of det R
  std::vector<RCrossing> crossings;
  long crossing_sum = 0;
  double residual = 0.0;
};

/// Raises PhaseJump when the sampling is too coarse.
WindingResult winding_det_r(const PumpProblem& problem, int s_samples = 0);
WindingResult winding_det_r(const PumpProblem& problem, const std::vector<CMatrix>& reflections);

}  // namespace qpump
