#pragma once

// Transfer matrices of u' = A(x) u, u = (psi, psi'), A = [[0, 1], [V - z, 0]],
// decaying solution frames psi_+/-, their adjoints, Wronskians and the
// Green function.
//
// V(., s) is replaced by its cell-midpoint values (piecewise constant); the
// propagator over a cell is then the exact matrix exponential, computed from
// the cell's Hermitian eigendecomposition. Wronskian constancy, composition
// and det M = 1 therefore hold to rounding; the discretisation error with
// respect to the smooth potential is second order in the cell width and is
// estimated by `transfer`.

#include <limits>
#include <optional>

#include "qpump/potential.hpp"

namespace qpump {

class SliceModel {
 public:
  /// `cell_width` <= 0 selects problem.cell_width(). An optional window
  /// [w0, w1] replaces V by V * chi_[w0, w1] (used for truncated scattering).
  SliceModel(const PumpProblem& problem, double s, double cell_width = 0.0,
             std::optional<std::pair<double, double>> window = std::nullopt);

  int n() const { return n_; }
  double s() const { return s_; }
  double cell_width() const { return h_; }
  Structure structure() const { return structure_; }
  double period() const { return period_; }
  double a() const { return a_; }
  double b() const { return b_; }
  const RVector& tail_values() const { return tail_values_; }
  const CMatrix& tail_vectors() const { return tail_vectors_; }

  /// 2n x 2n propagator from xa to xb; xb < xa gives the exact inverse.
  CMatrix propagate(cplx z, double xa, double xb) const;

  /// block <- M(xa -> xb) block, for a 2n x m block.
  void apply(cplx z, double xa, double xb, CMatrix& block) const;

  /// Calls fn(x_left, x_right) for each cell piece of [xa, xb] (xa < xb).
  template <class Fn>
  void for_each_piece(double xa, double xb, Fn&& fn) const {
    double x = xa;
    while (xb - x > edge_eps(x)) {
      const Piece p = locate(x, true);
      const double end = std::min(p.hi, xb);
      fn(x, end);
      x = end;
    }
  }

  /// Exact propagator over a displacement d (of either sign) inside the
  /// cell piece that contains [x, x + d].
  CMatrix step(cplx z, double x, double d) const;

 private:
  struct Cell {
    RVector lambda;
    CMatrix q;
    bool diagonal = false;  // q is the identity
  };
  struct Piece {
    double lo, hi;
    int id;  // >= 0 cell index, -1 zero potential, -2 tail
  };

  Piece locate(double x, bool forward) const;
  const Cell& cell(int id) const;
  double edge_eps(double x) const { return 1e-12 * std::max(1.0, std::abs(x)); }
  void cell_exp(const Cell& c, cplx z, double d, CMatrix& out) const;

  int n_ = 1;
  double s_ = 0.0;
  double h_ = 0.0;
  Structure structure_ = Structure::Periodic;
  double period_ = kTwoPi;
  double a_ = 0.0, b_ = 0.0;
  int cells_ = 0;
  std::optional<std::pair<double, double>> window_;
  std::vector<Cell> cell_data_;
  Cell tail_, zero_;
  RVector tail_values_;
  CMatrix tail_vectors_;
};

struct TransferMatrix {
  CMatrix m;
  double x_a = 0.0, x_b = 0.0;
  cplx z;
  double s = 0.0;
  double error_estimate = 0.0;  // relative, from the cell width vs its half
};

/// Raises StepTooLarge when the Richardson estimate exceeds tol.richardson.
TransferMatrix transfer(const PumpProblem& problem, cplx z, double s, double x_a, double x_b);

struct SolutionFrame {
  cplx z;
  double s = 0.0;
  double x = 0.0;
  int n = 1;
  CMatrix psi_p, dpsi_p, psi_m, dpsi_m;  // psi_+, psi_+', psi_-, psi_-'
  CMatrix adj_p, dadj_p, adj_m, dadj_m;  // psi~_+, psi~_+', psi~_-, psi~_-'
  Structure structure = Structure::Periodic;
  CVector rho_p, rho_m;  // Floquet multipliers of the columns (periodic)
  CVector kappa;         // tail exponents (constant outside)
  bool native = true;    // still in the construction gauge

  CMatrix fundamental() const;  // [[psi_+, psi_-], [psi_+', psi_-']]
  CMatrix fundamental_inverse() const;
};

/// The construction gauge: periodic columns are unit-norm monodromy
/// eigenvectors (largest component real positive), ordered by descending
/// |rho|; constant-outside frames equal the tail eigenvectors at the edges.
SolutionFrame decaying_frame(const SliceModel& model, cplx z, double x0, const Tolerances& tol = {});
SolutionFrame decaying_frame(const PumpProblem& problem, cplx z, double s, double x0);

/// The same solutions evaluated at x.
SolutionFrame propagate_frame(const SliceModel& model, const SolutionFrame& frame, double x);

/// W(psi~, psi) = psi~ psi' - psi~' psi.
CMatrix wronskian(const CMatrix& adj, const CMatrix& dadj, const CMatrix& psi, const CMatrix& dpsi);

struct FrameIdentities {
  double normalisation = 0.0;   // ||W(psi~_-, psi_+) - 1||
  double normalisation2 = 0.0;  // ||W(psi~_+, psi_-) + 1||
  double codecay_plus = 0.0;    // ||W(psi~_+, psi_+)||
  double codecay_minus = 0.0;   // ||W(psi~_-, psi_-)||
  double ids0 = 0.0, ids1 = 0.0, ids2 = 0.0;
  double max() const;
};

FrameIdentities frame_identities(const SolutionFrame& f);

/// psi_+ -> psi_+ tp, psi~_- -> tp^-1 psi~_-, psi_- -> psi_- tm, psi~_+ -> tm^-1 psi~_+.
void regauge(SolutionFrame& f, const CMatrix& tp, const CMatrix& tm);

/// Gauge transforms that bring (psi_+, psi_+') and (psi_-, psi_-') of `f`
/// closest (least squares) to those of `ref`; smooth along grid lines.
std::pair<CMatrix, CMatrix> alignment(const SolutionFrame& f, const SolutionFrame& ref);

/// G(x, x') from frames at x and x'.
CMatrix greens_function(const SolutionFrame& at_x, const SolutionFrame& at_xp);
/// d/dx G(x, x'); `upper` picks the branch x >= x' at the diagonal.
CMatrix greens_dx(const SolutionFrame& at_x, const SolutionFrame& at_xp, bool upper);

struct HalfLineIntegrals {
  CMatrix j_plus;   // int_{x0}^inf psi~_+ psi_+
  CMatrix k_minus;  // int_{-inf}^{x0} psi~_- psi_-
  CMatrix h_plus;   // int_{x0}^inf psi_+^* psi_+
  double tail_bound = 0.0;  // bound on the neglected tail when truncated
};

/// Requires a native frame. Periodic: one period by cellwise Simpson, the
/// rest by Floquet geometric sums, truncated to `x_max` periods' worth of
/// length when finite. Constant outside: interior by Simpson, tails exact.
HalfLineIntegrals halfline_integrals(const SliceModel& model, const SolutionFrame& native,
                                     double x_max = std::numeric_limits<double>::infinity());

/// Transforms native half-line integrals under regauge(tp, tm).
HalfLineIntegrals regauge(const HalfLineIntegrals& h, const CMatrix& tp, const CMatrix& tm);

}  // namespace qpump
