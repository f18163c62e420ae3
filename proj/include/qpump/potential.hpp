#pragma once

// Time-periodic Hermitian matrix potentials V(x,s) and the pump problem
// built on them.

#include <map>
#include <string>
#include <vector>

#include "qpump/numkernel.hpp"

namespace qpump {

enum class Structure { Periodic, ConstantOutside };

/// Spatial profile of one term. Fourier modes are for periodic specs, the
/// compact shapes (bump, step, tilt) for specs constant outside [a, b].
struct SpaceProfile {
  enum class Kind { Constant, Cos, Sin, Bump, Step, Tilt };
  Kind kind = Kind::Constant;
  int mode = 1;          // Cos/Sin: cos(2*pi*mode*x/period)
  double centre = 0.0;   // Bump/Tilt
  double width = 1.0;    // Bump/Tilt: full support width
  double lo = 0.0;       // Step
  double hi = 0.0;

  double operator()(double x, double period) const;
  bool compact() const { return kind == Kind::Bump || kind == Kind::Step || kind == Kind::Tilt; }
};

/// Trigonometric polynomial a0 + sum_m (a_m cos ms + b_m sin ms), stored as
/// [a0, a1, b1, a2, b2, ...].
struct TimeProfile {
  std::vector<double> coeffs{1.0};

  double value(double s) const;
  double derivative(double s) const;
  bool constant() const;
};

struct Term {
  CMatrix coeff;  // Hermitian n x n
  SpaceProfile space;
  TimeProfile time;
};

struct PotentialSpec {
  int n = 1;
  Structure structure = Structure::Periodic;
  double period = kTwoPi;   // Periodic
  double a = -1.0, b = 1.0; // ConstantOutside interval
  CMatrix tail;             // ConstantOutside: V outside [a, b]
  std::vector<Term> terms;
  std::string name;

  bool time_independent() const;
};

/// V(x, s), Hermitian-symmetrised. s is reduced mod 2*pi and, for periodic
/// specs, x mod period before evaluation.
CMatrix evaluate(const PotentialSpec& spec, double x, double s);

/// dV/ds at (x, s).
CMatrix evaluate_ds(const PotentialSpec& spec, double x, double s);

/// Upper bound on sup_{x,s} ||V(x,s)||_2.
double sup_norm_bound(const PotentialSpec& spec);

/// Throws ValidationError when the spec violates its declared invariants.
void validate(const PotentialSpec& spec, double hermitian_tol = 1e-14);

struct PresetInfo {
  std::string name;
  std::string summary;
  std::map<std::string, double> defaults;
};

const std::vector<PresetInfo>& preset_catalog();

/// Built-in potentials. Unknown keys in `params` raise InvalidParameter.
PotentialSpec preset(const std::string& name, const std::map<std::string, double>& params = {});

struct PumpProblem {
  PotentialSpec potential;
  double mu = 1.0;
  double e_below = -8.0;
  double x_step = 0.0;         // 0 -> structure default
  double x0 = 0.0;             // fiducial point
  int s_grid = 256;
  int z_grid = 256;
  int torus_z = 128;
  int torus_s = 128;
  double contour_aspect = 0.5;
  Tolerances tol;

  /// Cell width actually used by the propagator.
  double cell_width() const;
};

/// Eager checks of everything that does not need a spectral computation.
void validate(const PumpProblem& problem);

}  // namespace qpump
