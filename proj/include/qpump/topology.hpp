#pragma once

// Chern number of the Wronskian bundle over the torus gamma x S^1: plaquette
// products, direct curvature quadrature, the crossing count at z = mu, the
// charge integral in terms of half-line integrals, and the persistent
// current.

#include "qpump/solutions.hpp"

namespace qpump {

struct GapReport {
  double margin = 0.0;       // min over s (see verify_gap)
  double s_worst = 0.0;
  std::vector<double> s, margins;
};

/// Periodic: margin = min_k |log|rho_k(mu)||, the Floquet decay rate per
/// period. Constant outside: needs mu below the tail spectrum; margin is the
/// smallest singular value of the column-normalised fundamental matrix at mu
/// (zero iff mu is an eigenvalue). Raises GapClosed with the offending s.
GapReport verify_gap(const PumpProblem& problem, int s_samples = 0);

/// Contour through e_below and mu with no node on the real axis.
Contour torus_contour(const PumpProblem& problem, int nodes);

struct TorusGrid {
  Contour contour;
  std::vector<double> s_nodes;
  double x0 = 0.0;
  int nz = 0, ns = 0;
  std::vector<SolutionFrame> frames;             // index k * nz + j
  std::vector<HalfLineIntegrals> integrals;      // filled when requested
  double truncation = std::numeric_limits<double>::infinity();

  const SolutionFrame& at(int j, int k) const;
  const HalfLineIntegrals& integrals_at(int j, int k) const;
};

TorusGrid build_torus(const PumpProblem& problem, int nz, int ns, bool with_integrals = false,
                      double x_max = std::numeric_limits<double>::infinity());

struct ChernResult {
  long chern = 0;
  double raw = 0.0;            // -(1/2pi) sum of plaquette phases
  double residual = 0.0;       // |raw - chern|
  double max_phase = 0.0;      // largest |plaquette phase|; admission measure
  cplx flux = 0.0;             // sum of log det over plaquettes
  double min_link_det = 0.0;
};

/// Plaquette products of links U(p -> q) = W(psi~_-^p, psi_+^q) at x0; a
/// reversed edge enters through the inverse link, so each plaquette phase is
/// gauge invariant and the phases add up to a multiple of 2 pi.
/// NotInteger when residual > 0.05 or a plaquette phase exceeds pi/2.
ChernResult chern_plaquette(const TorusGrid& grid);

struct CurvaturePatch {
  double t0 = 0.0, t1 = 1.0;  // contour angle range
  double s0 = 0.0, s1 = 1.0;
  int nt = 17, ns = 17;       // odd: Simpson
};

struct CurvatureResult {
  cplx integral = 0.0;         // int int tr F dz ds by Simpson
  cplx plaquette_flux = 0.0;   // sum log det over the patch plaquettes
  double identity_defect = 0.0;  // max |W(psi~_-, d_z psi_+) - F_+| at x0
  std::vector<cplx> samples;     // integrand at the patch nodes (s-major)
};

/// Gauge psi_+(x0) = 1 on the patch; z-derivatives from the closed forms in
/// terms of half-line integrals, s-derivatives by centred differences.
CurvatureResult curvature_direct(const PumpProblem& problem, const CurvaturePatch& patch);

struct CrossingRecord {
  double s_star = 0.0;
  double lambda_s = 0.0;
  double lambda_z = 0.0;            // finite difference in real z
  double lambda_z_quadratic = 0.0;  // -(u, int psi_+^* psi_+ u)
  int w = 0;
  CVector u;
  double residual = 0.0;            // |lambda| at s_star
};

/// Sign changes of the inertia of L(mu, s) = psi_+'(x0)^* psi_+(x0) on the
/// s grid, refined by bisection. Raises DegenerateCrossing instead of
/// perturbing non-generic configurations.
std::vector<CrossingRecord> find_crossings(const PumpProblem& problem, double x0, int s_samples = 0);

long chern_from_crossings(const std::vector<CrossingRecord>& records);

/// ||L(z,s) - L(conj z, s)^*||, L(z,s) = psi'_(conj z)(x0)^* psi_(z)(x0).
double reflection_defect(const PumpProblem& problem, cplx z, double s, double x0);

struct CurrentResult {
  double value = 0.0;
  double imag_residual = 0.0;
};

/// i tr(d2 K(x0,x0) - d1 K(x0,x0)), K = -(2 pi i)^-1 oint G dz.
CurrentResult persistent_current(const PumpProblem& problem, double s, double x0, int nodes = 0);

struct ChargeResult {
  double charge = 0.0;
  double imag_residual = 0.0;
  double tail_bound = 0.0;
};

/// Charge from the double integral over the torus of
/// tr(W(d_s psi~_-, psi_-) J_+ + W(d_s psi~_+, psi_+) K_-); the grid must
/// carry half-line integrals.
ChargeResult charge_topological(const TorusGrid& grid);

}  // namespace qpump
