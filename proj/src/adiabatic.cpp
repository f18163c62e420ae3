#include "qpump/adiabatic.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace qpump {

namespace {

constexpr int kDefaultNodes = 1024;

CMatrix resolvent(const CMatrix& h, cplx z) {
  CMatrix m = h;
  m.diagonal().array() -= z;
  return m.partialPivLu().inverse();
}

template <class Fn>
CMatrix contour_sum(const MatrixFamily& f, double s, int nodes, Fn&& integrand) {
  const Contour c = window_contour(f, s, nodes > 0 ? nodes : kDefaultNodes);
  const CMatrix h = f.h(s);
  CMatrix sum = CMatrix::Zero(f.dim(), f.dim());
  for (std::size_t j = 0; j < c.size(); ++j) sum += c.weights[j] * integrand(resolvent(h, c.nodes[j]));
  return sum;
}

CMatrix random_hermitian(int d, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  CMatrix m(d, d);
  for (int i = 0; i < d; ++i) {
    m(i, i) = g(rng);
    for (int j = i + 1; j < d; ++j) {
      const double re = g(rng), im = g(rng);
      m(i, j) = cplx(re, im) / std::sqrt(2.0);
      m(j, i) = std::conj(m(i, j));
    }
  }
  return m / std::sqrt(static_cast<double>(d)) * 2.0;
}

CMatrix expi(const CMatrix& k, double t) {
  // exp(-i t K), K Hermitian
  const HermitianEigenSystem es = eig_hermitian(0.5 * (k + k.adjoint()));
  CVector ph(es.values.size());
  for (Eigen::Index i = 0; i < ph.size(); ++i) ph(i) = std::exp(-kI * t * es.values(i));
  return es.vectors * ph.asDiagonal() * es.vectors.adjoint();
}

void check_gap(const MatrixFamily& f, double s) {
  const HermitianEigenSystem es = eig_hermitian(f.h(s));
  const double g = es.values(f.filled) - es.values(f.filled - 1);
  if (g < f.gap_min || g <= 0.0)
    throw Error(ErrorCode::GapClosed, "spectral window is not isolated at s = " + std::to_string(s), s);
}

}  // namespace

CMatrix MatrixFamily::h(double s) const { return a + b * std::cos(s) + c * std::sin(s); }

CMatrix MatrixFamily::h_dot(double s) const { return -b * std::sin(s) + c * std::cos(s); }

double MatrixFamily::gap(int samples) const {
  double g = std::numeric_limits<double>::infinity();
  for (int k = 0; k < samples; ++k) {
    const HermitianEigenSystem es = eig_hermitian(h(kTwoPi * k / samples));
    g = std::min(g, es.values(filled) - es.values(filled - 1));
  }
  return g;
}

MatrixFamily random_family(int dim, int filled, std::uint64_t seed, double gap_min, double modulation) {
  if (dim < 2 || filled < 1 || filled >= dim)
    throw Error(ErrorCode::InvalidParameter, "random family needs 1 <= filled < dim");
  std::mt19937_64 rng(seed);
  for (int attempt = 0; attempt < 10000; ++attempt) {
    MatrixFamily f;
    f.a = random_hermitian(dim, rng);
    f.b = modulation * random_hermitian(dim, rng);
    f.c = modulation * random_hermitian(dim, rng);
    f.filled = filled;
    f.gap_min = gap_min;
    if (f.gap() >= gap_min) return f;
  }
  throw Error(ErrorCode::GapClosed, "no random family with the requested gap");
}

Contour window_contour(const MatrixFamily& f, double s, int nodes) {
  const HermitianEigenSystem es = eig_hermitian(f.h(s));
  const double right = 0.5 * (es.values(f.filled - 1) + es.values(f.filled));
  const double left = es.values(0) - (right - es.values(f.filled - 1));
  return ellipse_contour(left, right, 1.0, nodes, 0.5);
}

CMatrix projector_p0(const MatrixFamily& f, double s, int nodes) {
  check_gap(f, s);
  return -contour_sum(f, s, nodes, [](const CMatrix& r) { return r; }) / (kTwoPi * kI);
}

CMatrix projector_p0_dot(const MatrixFamily& f, double s, int nodes) {
  check_gap(f, s);
  const CMatrix hd = f.h_dot(s);
  return contour_sum(f, s, nodes, [&](const CMatrix& r) -> CMatrix { return r * hd * r; }) / (kTwoPi * kI);
}

CMatrix p1_resolvent(const MatrixFamily& f, double s, int nodes) {
  check_gap(f, s);
  const CMatrix hd = f.h_dot(s);
  return -contour_sum(f, s, nodes, [&](const CMatrix& r) -> CMatrix { return -(r * r * hd * r); }) / kTwoPi;
}

CMatrix p1_commutator(const MatrixFamily& f, double s, int nodes) {
  const CMatrix p0 = projector_p0(f, s, nodes);
  const CMatrix pd = projector_p0_dot(f, s, nodes);
  const CMatrix comm = pd * p0 - p0 * pd;
  return -contour_sum(f, s, nodes, [&](const CMatrix& r) -> CMatrix { return r * comm * r; }) / kTwoPi;
}

double CondsResidual::max() const { return std::max({commutator, splitting, diagonal}); }

CondsResidual conds_residual(const MatrixFamily& f, double s, const CMatrix& p1, int nodes) {
  const CMatrix p0 = projector_p0(f, s, nodes);
  const CMatrix pd = projector_p0_dot(f, s, nodes);
  const CMatrix h = f.h(s);
  const CMatrix q0 = CMatrix::Identity(f.dim(), f.dim()) - p0;
  CondsResidual r;
  r.commutator = (kI * pd - (h * p1 - p1 * h)).norm();
  r.splitting = (p0 * p1 + p1 * p0 - p1).norm();
  r.diagonal = std::max((p0 * p1 * p0).norm(), (q0 * p1 * q0).norm());
  return r;
}

CMatrix propagate(const MatrixFamily& f, double eps, double s0, double s1, int steps) {
  if (!(eps > 0.0)) throw Error(ErrorCode::InvalidParameter, "eps must be positive");
  const int d = f.dim();
  if (s1 == s0) return CMatrix::Identity(d, d);
  if (steps <= 0) {
    const double norm = f.a.norm() + f.b.norm() + f.c.norm();
    steps = std::max(1, static_cast<int>(std::ceil(std::abs(s1 - s0) * 8.0 * norm / eps)));
  }
  const double h = (s1 - s0) / steps;
  const double g = std::sqrt(3.0) / 6.0;
  CMatrix u = CMatrix::Identity(d, d);
  for (int i = 0; i < steps; ++i) {
    const double s = s0 + i * h;
    const CMatrix h1 = f.h(s + (0.5 - g) * h), h2 = f.h(s + (0.5 + g) * h);
    // Omega = -(i/eps) [h/2 (H1 + H2)] + (sqrt3/12) h^2 (-(i/eps))^2 [H2, H1]
    //       = -i h K with K Hermitian:
    const CMatrix k = 0.5 * (h1 + h2) / eps - kI * (std::sqrt(3.0) / 12.0) * h / (eps * eps) * (h2 * h1 - h1 * h2);
    u = expi(k, h) * u;
  }
  const double defect = (u * u.adjoint() - CMatrix::Identity(d, d)).norm();
  if (defect > 1e-10) throw Error(ErrorCode::StepTooLarge, "propagator lost unitarity", defect);
  return u;
}

std::vector<ExpansionError> expansion_sweep(const MatrixFamily& f, const std::vector<double>& eps, double s0,
                                            double s1, double window, int window_samples) {
  const double w0 = std::max(s0, s1 - window);
  const int m = std::max(2, window_samples);
  std::vector<double> grid(m);
  std::vector<CMatrix> p0(m), p1(m);
  for (int i = 0; i < m; ++i) {
    grid[i] = (i + 1 == m) ? s1 : w0 + (s1 - w0) * i / (m - 1);
    p0[i] = projector_p0(f, grid[i]);
    p1[i] = p1_resolvent(f, grid[i]);
  }
  const CMatrix start0 = projector_p0(f, s0), start1 = p1_resolvent(f, s0);

  std::vector<ExpansionError> out(eps.size());
  for (std::size_t k = 0; k < eps.size(); ++k) {
    const double e = eps[k];
    ExpansionError& r = out[k];
    r.eps = e;
    const CMatrix start = start0 + e * start1;
    CMatrix u = propagate(f, e, s0, w0);
    double prev = w0, sq = 0.0, sq0 = 0.0;
    for (int i = 0; i < m; ++i) {
      u = propagate(f, e, prev, grid[i]) * u;
      prev = grid[i];
      const double err = (u * start * u.adjoint() - (p0[i] + e * p1[i])).norm();
      const double err0 = (u * start0 * u.adjoint() - p0[i]).norm();
      sq += err * err;
      sq0 += err0 * err0;
      r.window_max = std::max(r.window_max, err);
      if (i + 1 == m) {
        r.at_end = err;
        r.at_end_p0 = err0;
      }
    }
    r.windowed_rms = std::sqrt(sq / m);
    r.windowed_rms_p0 = std::sqrt(sq0 / m);
  }
  return out;
}

double expansion_error(const MatrixFamily& f, double eps, double s0, double s1, bool with_p1) {
  const ExpansionError r = expansion_sweep(f, {eps}, s0, s1, 0.0, 2).front();
  return with_p1 ? r.at_end : r.at_end_p0;
}

}  // namespace qpump
