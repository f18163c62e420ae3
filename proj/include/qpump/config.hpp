#pragma once

// Sectioned key = value configuration files.
//
//   [problem]     mu, e_below, x_step, x0, s_grid, z_grid, torus_z, torus_s, contour_aspect
//   [potential]   preset = NAME plus its numeric parameters, or
//                 structure = periodic | constant_outside, channels, period,
//                 interval = a, b, tail = MATRIX, name
//   [term]        (repeatable) matrix = MATRIX, space = PROFILE, time = a0, a1, b1, ...
//   [run]         lengths, length_unit = period | absolute, epsilons, bpt_tolerance,
//                 families, dimension, filled, s_start, s_end, seed, gap_min,
//                 window, window_samples
//   [tolerances]  algebra, decomposition, quadrature, condition_cap, cluster,
//                 unit_circle, richardson
//
// Numbers accept `pi` factors (2*pi, pi/4). MATRIX is [[a, b], [c, d]] with
// complex entries such as 1+2i or -i; a bare number is a 1x1 matrix.
// PROFILE is one of: constant, cos M, sin M, bump CENTRE WIDTH,
// step LO HI, tilt CENTRE WIDTH.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "qpump/potential.hpp"

namespace qpump {

struct RunSettings {
  std::vector<double> lengths{5.0, 10.0, 20.0, 30.0};
  bool lengths_in_periods = true;
  std::vector<double> epsilons{0.01, 0.005, 0.0025};
  double bpt_tolerance = 0.05;
  int families = 20;
  int dimension = 6;
  int filled = 3;
  double s_start = 0.0;
  double s_end = 2.0;
  std::uint64_t seed = 1;
  double gap_min = 0.2;
  double window = 1.0;       // errors are RMS-averaged over [s_end - window, s_end]
  int window_samples = 65;
};

struct RunConfig {
  PumpProblem problem;
  RunSettings run;
  std::uint64_t hash = 0;  // FNV-1a of the config text
  double tol_scale = 1.0;  // already applied to problem.tol and bpt_tolerance
};

std::uint64_t fnv1a(std::string_view text);

/// Parses and validates the problem part of a config.
PumpProblem parse_config(const std::string& text);

/// Problem plus run settings; the problem is validated eagerly.
RunConfig parse_run_config(const std::string& text);

// exposed for tests
double parse_real(const std::string& text);
cplx parse_complex(const std::string& text);
CMatrix parse_matrix(const std::string& text);

}  // namespace qpump
