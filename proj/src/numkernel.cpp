#include "qpump/numkernel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace qpump {

std::string_view error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::SingularMatrix: return "SingularMatrix";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::NotHermitian: return "NotHermitian";
    case ErrorCode::PhaseJump: return "PhaseJump";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ValidationError: return "ValidationError";
    case ErrorCode::UnknownPreset: return "UnknownPreset";
    case ErrorCode::InvalidParameter: return "InvalidParameter";
    case ErrorCode::OnSpectrum: return "OnSpectrum";
    case ErrorCode::DegenerateSplit: return "DegenerateSplit";
    case ErrorCode::StepTooLarge: return "StepTooLarge";
    case ErrorCode::GapClosed: return "GapClosed";
    case ErrorCode::NotInteger: return "NotInteger";
    case ErrorCode::DegenerateLink: return "DegenerateLink";
    case ErrorCode::PatchSingular: return "PatchSingular";
    case ErrorCode::DegenerateCrossing: return "DegenerateCrossing";
    case ErrorCode::MatchingSingular: return "MatchingSingular";
    case ErrorCode::SystemSingular: return "SystemSingular";
    case ErrorCode::UnderResolved: return "UnderResolved";
    case ErrorCode::EquivalenceFailed: return "EquivalenceFailed";
  }
  return "Unknown";
}

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::ParseError:
    case ErrorCode::ValidationError:
    case ErrorCode::UnknownPreset:
    case ErrorCode::InvalidParameter:
      return 2;
    case ErrorCode::GapClosed:
    case ErrorCode::OnSpectrum:
      return 3;
    case ErrorCode::DegenerateSplit:
    case ErrorCode::DegenerateLink:
    case ErrorCode::DegenerateCrossing:
    case ErrorCode::PatchSingular:
    case ErrorCode::SystemSingular:
    case ErrorCode::MatchingSingular:
      return 4;
    case ErrorCode::EquivalenceFailed:
      return 5;
    default:
      return 1;
  }
}

Tolerances Tolerances::scaled(double factor) const {
  Tolerances t = *this;
  t.algebra *= factor;
  t.decomposition *= factor;
  t.quadrature *= factor;
  t.cluster *= factor;
  t.unit_circle *= factor;
  t.richardson *= factor;
  return t;
}

double condition_estimate(const CMatrix& a) {
  if (a.rows() != a.cols()) throw Error(ErrorCode::InvalidParameter, "condition estimate of a non-square matrix");
  if (a.size() == 0) return 1.0;
  Eigen::PartialPivLU<CMatrix> lu(a);
  const double rc = lu.rcond();
  return rc > 0.0 ? 1.0 / rc : std::numeric_limits<double>::infinity();
}

CMatrix inverse(const CMatrix& a, double condition_cap) {
  if (a.rows() != a.cols()) throw Error(ErrorCode::InvalidParameter, "inverse of a non-square matrix");
  Eigen::PartialPivLU<CMatrix> lu(a);
  const double rc = lu.rcond();
  const double cond = rc > 0.0 ? 1.0 / rc : std::numeric_limits<double>::infinity();
  if (!(cond < condition_cap)) throw Error(ErrorCode::SingularMatrix, "matrix is numerically singular", cond);
  return lu.inverse();
}

CMatrix solve(const CMatrix& a, const CMatrix& b, double condition_cap) {
  if (a.rows() != a.cols() || a.rows() != b.rows())
    throw Error(ErrorCode::InvalidParameter, "solve with non-conformable shapes");
  Eigen::PartialPivLU<CMatrix> lu(a);
  const double rc = lu.rcond();
  const double cond = rc > 0.0 ? 1.0 / rc : std::numeric_limits<double>::infinity();
  if (!(cond < condition_cap)) throw Error(ErrorCode::SingularMatrix, "matrix is numerically singular", cond);
  CMatrix x = lu.solve(b);
  // one step of iterative refinement keeps the multiply-back residual at roundoff
  x += lu.solve(b - a * x);
  return x;
}

cplx determinant(const CMatrix& a) {
  if (a.rows() != a.cols()) throw Error(ErrorCode::InvalidParameter, "determinant of a non-square matrix");
  if (a.size() == 0) return 1.0;
  return a.partialPivLu().determinant();
}

double hermitian_defect(const CMatrix& a) {
  if (a.rows() != a.cols()) return std::numeric_limits<double>::infinity();
  const double scale = std::max(1.0, a.norm());
  return (a - a.adjoint()).norm() / scale;
}

EigenSystem eig_general(const CMatrix& a, const Tolerances& tol) {
  if (a.rows() != a.cols()) throw Error(ErrorCode::InvalidParameter, "eigen-decomposition of a non-square matrix");
  const Eigen::Index n = a.rows();
  Eigen::ComplexEigenSolver<CMatrix> solver(a, true);
  if (solver.info() != Eigen::Success) throw Error(ErrorCode::NoConvergence, "complex QR iteration did not converge");

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  const CVector& lam = solver.eigenvalues();
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index i, Eigen::Index j) { return std::abs(lam(i)) < std::abs(lam(j)); });

  EigenSystem out;
  out.values.resize(n);
  out.vectors.resize(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    out.values(k) = lam(order[static_cast<std::size_t>(k)]);
    CVector v = solver.eigenvectors().col(order[static_cast<std::size_t>(k)]);
    out.vectors.col(k) = v / v.norm();
  }

  const double scale = std::max(a.norm(), std::numeric_limits<double>::min());
  for (Eigen::Index k = 0; k < n; ++k) {
    const double r = (a * out.vectors.col(k) - out.values(k) * out.vectors.col(k)).norm() / scale;
    out.residual = std::max(out.residual, r);
  }
  if (out.residual > tol.decomposition)
    throw Error(ErrorCode::NoConvergence, "eigenpair residual above tolerance", out.residual);

  // clusters of nearly equal eigenvalues (relative to their modulus)
  std::vector<bool> used(static_cast<std::size_t>(n), false);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (used[static_cast<std::size_t>(i)]) continue;
    std::vector<int> group{static_cast<int>(i)};
    used[static_cast<std::size_t>(i)] = true;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      if (used[static_cast<std::size_t>(j)]) continue;
      const double ref = std::max({std::abs(out.values(i)), std::abs(out.values(j)), 1e-300});
      if (std::abs(out.values(i) - out.values(j)) <= tol.cluster * ref) {
        group.push_back(static_cast<int>(j));
        used[static_cast<std::size_t>(j)] = true;
      }
    }
    if (group.size() > 1) out.clusters.push_back(std::move(group));
  }
  return out;
}

HermitianEigenSystem eig_hermitian(const CMatrix& a, const Tolerances& tol) {
  if (a.rows() != a.cols()) throw Error(ErrorCode::InvalidParameter, "eigen-decomposition of a non-square matrix");
  const double defect = hermitian_defect(a);
  if (defect > tol.algebra * 100.0) throw Error(ErrorCode::NotHermitian, "matrix is not Hermitian", defect);
  const CMatrix sym = 0.5 * (a + a.adjoint());
  Eigen::SelfAdjointEigenSolver<CMatrix> solver(sym);
  if (solver.info() != Eigen::Success) throw Error(ErrorCode::NoConvergence, "Hermitian eigensolver failed");
  return {solver.eigenvalues(), solver.eigenvectors()};
}

PhaseTrace unwrap_phase(std::span<const cplx> samples, bool closed, double max_step) {
  PhaseTrace out;
  if (samples.empty()) return out;
  for (const cplx& z : samples) {
    if (!(std::abs(z) > 0.0) || !std::isfinite(std::abs(z)))
      throw Error(ErrorCode::InvalidParameter, "phase of a zero or non-finite sample");
  }
  out.phases.reserve(samples.size());
  out.phases.push_back(std::arg(samples[0]));
  auto step = [&](const cplx& from, const cplx& to, std::size_t where) {
    const double d = std::arg(to / from);
    if (std::abs(d) > max_step)
      throw Error(ErrorCode::PhaseJump, "phase step too large at sample " + std::to_string(where), d);
    return d;
  };
  for (std::size_t j = 1; j < samples.size(); ++j)
    out.phases.push_back(out.phases.back() + step(samples[j - 1], samples[j], j));

  double total = out.phases.back() - out.phases.front();
  if (closed && samples.size() > 1) total += step(samples.back(), samples.front(), 0);
  const double turns = total / kTwoPi;
  out.winding = std::lround(turns);
  out.residual = std::abs(turns - static_cast<double>(out.winding));
  return out;
}

Contour ellipse_contour(double left, double right, double aspect, int nodes, double offset) {
  if (!(right > left)) throw Error(ErrorCode::InvalidParameter, "contour needs left < right");
  if (!(aspect > 0.0)) throw Error(ErrorCode::InvalidParameter, "contour aspect must be positive");
  if (nodes < 4) throw Error(ErrorCode::InvalidParameter, "contour needs at least 4 nodes");
  const double centre = 0.5 * (left + right);
  const double a = 0.5 * (right - left);
  const double b = aspect * a;
  Contour c;
  const double dt = kTwoPi / nodes;
  for (int j = 0; j < nodes; ++j) {
    const double t = (j + offset) * dt;
    const cplx z{centre + a * std::cos(t), b * std::sin(t)};
    const cplx dz{-a * std::sin(t), b * std::cos(t)};
    c.params.push_back(t);
    c.nodes.push_back(z);
    c.tangents.push_back(dz);
    c.weights.push_back(dz * dt);
  }
  return c;
}

cplx quad_closed(std::span<const cplx> values, const Contour& contour) {
  if (values.size() != contour.size()) throw Error(ErrorCode::InvalidParameter, "quadrature needs one value per node");
  cplx sum = 0.0;
  for (std::size_t j = 0; j < values.size(); ++j) sum += contour.weights[j] * values[j];
  return sum;
}

CMatrix quad_closed(std::span<const CMatrix> values, const Contour& contour) {
  if (values.size() != contour.size() || values.empty())
    throw Error(ErrorCode::InvalidParameter, "quadrature needs one value per node");
  CMatrix sum = CMatrix::Zero(values[0].rows(), values[0].cols());
  for (std::size_t j = 0; j < values.size(); ++j) sum += contour.weights[j] * values[j];
  return sum;
}

}  // namespace qpump
