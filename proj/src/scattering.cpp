#include "qpump/scattering.hpp"

#include <algorithm>
#include <cmath>

#include "qpump/parallel.hpp"

namespace qpump {

namespace {

struct SpanTrack {
  CMatrix q;               // orthonormal basis at the far end
  std::vector<CMatrix> r;  // triangular factors in order of application
};

// Carries span(y) from xa to xb, re-orthonormalising after every chunk:
// M(xa -> xb) y = q * r.back() * ... * r.front().
SpanTrack carry_span(const SliceModel& model, cplx z, double xa, double xb, CMatrix y, double chunk = 0.5) {
  SpanTrack out;
  const int pieces = std::max(1, static_cast<int>(std::ceil(std::abs(xb - xa) / chunk)));
  const int m = static_cast<int>(y.cols());
  for (int i = 0; i < pieces; ++i) {
    const double a = xa + (xb - xa) * i / pieces;
    const double b = (i + 1 == pieces) ? xb : xa + (xb - xa) * (i + 1) / pieces;
    model.apply(z, a, b, y);
    Eigen::HouseholderQR<CMatrix> qr(y);
    y = qr.householderQ() * CMatrix::Identity(y.rows(), m);
    out.r.push_back(qr.matrixQR().topRows(m).triangularView<Eigen::Upper>());
  }
  out.q = y;
  return out;
}

// (r.back() ... r.front())^-1 x
CMatrix unwind(const SpanTrack& t, CMatrix x) {
  for (auto it = t.r.rbegin(); it != t.r.rend(); ++it) x = it->triangularView<Eigen::Upper>().solve(x);
  return x;
}

CMatrix stack(const CMatrix& top, const CMatrix& bottom) {
  CMatrix s(top.rows() + bottom.rows(), top.cols());
  s << top, bottom;
  return s;
}

CMatrix matching_solve(const CMatrix& a, const CMatrix& b, const Tolerances& tol) {
  try {
    return solve(a, b, tol.condition_cap);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::SingularMatrix)
      throw Error(ErrorCode::MatchingSingular, "plane-wave matching system is singular", e.detail());
    throw;
  }
}

double unitarity_defect(const CMatrix& s) {
  return (s * s.adjoint() - CMatrix::Identity(s.rows(), s.cols())).norm();
}

double fermi_k(const PumpProblem& problem) {
  if (!(problem.mu > 0.0)) throw Error(ErrorCode::ValidationError, "scattering needs mu > 0");
  return std::sqrt(problem.mu);
}

SliceModel truncated(const PumpProblem& problem, double s, double length) {
  if (!(length > 0.0)) throw Error(ErrorCode::InvalidParameter, "truncation length must be positive");
  return SliceModel(problem, s, 0.0, std::make_pair(problem.x0, problem.x0 + length));
}

}  // namespace

CMatrix ScatteringMatrix::full() const {
  const Eigen::Index n = r.rows();
  CMatrix m(2 * n, 2 * n);
  m << r, tp, t, rp;
  return m;
}

ScatteringMatrix s_matrix_finite(const PumpProblem& problem, double s, double length) {
  const SliceModel model = truncated(problem, s, length);
  const int n = model.n();
  const double k = fermi_k(problem);
  const cplx ik = kI * k;
  const double x0 = problem.x0, x1 = problem.x0 + length;
  const CMatrix one = CMatrix::Identity(n, n);
  const cplx e = std::exp(ik * length);

  ScatteringMatrix out;
  out.s = s;
  out.mu = problem.mu;
  out.k = k;
  out.length = length;

  // left incidence: outgoing T e^{ik xi} on the right, carried back to x0
  {
    const SpanTrack tr = carry_span(model, problem.mu, x1, x0, stack(one, ik * one));
    CMatrix a(2 * n, 2 * n);
    a << tr.q, -stack(one, -ik * one);
    const CMatrix sol = matching_solve(a, stack(one, ik * one), problem.tol);
    out.r = sol.bottomRows(n);
    out.t = unwind(tr, sol.topRows(n)) / e;
  }
  // right incidence: outgoing T' e^{-ik xi} on the left, carried to x0 + L
  {
    const SpanTrack tr = carry_span(model, problem.mu, x0, x1, stack(one, -ik * one));
    CMatrix a(2 * n, 2 * n);
    a << tr.q, -stack(one, ik * one) * e;
    const CMatrix sol = matching_solve(a, stack(one, -ik * one) / e, problem.tol);
    out.rp = sol.bottomRows(n);
    out.tp = unwind(tr, sol.topRows(n));
  }
  out.unitarity = unitarity_defect(out.full());
  return out;
}

ScatteringMatrix s_matrix_transfer(const PumpProblem& problem, double s, double length) {
  const SliceModel model = truncated(problem, s, length);
  const int n = model.n();
  const double k = fermi_k(problem);
  const cplx ik = kI * k;
  const CMatrix one = CMatrix::Identity(n, n);
  const cplx e = std::exp(ik * length);
  const CMatrix m = model.propagate(problem.mu, problem.x0, problem.x0 + length);

  // M [1 + R; ik(1 - R)] = e [T; ik T]
  ScatteringMatrix out;
  out.s = s;
  out.mu = problem.mu;
  out.k = k;
  out.length = length;
  {
    CMatrix a(2 * n, 2 * n);
    a << m * stack(one, -ik * one), -e * stack(one, ik * one);
    const CMatrix sol = matching_solve(a, -m * stack(one, ik * one), problem.tol);
    out.r = sol.topRows(n);
    out.t = sol.bottomRows(n);
  }
  // M [T'; -ik T'] = [e^-1 + e R'; ik(-e^-1 + e R')]
  {
    CMatrix a(2 * n, 2 * n);
    a << m * stack(one, -ik * one), -e * stack(one, ik * one);
    const CMatrix sol = matching_solve(a, stack(one, -ik * one) / e, problem.tol);
    out.tp = sol.topRows(n);
    out.rp = sol.bottomRows(n);
  }
  out.unitarity = unitarity_defect(out.full());
  return out;
}

// ----------------------------------------------------------- reflections

Reflection reflection_halfline(const PumpProblem& problem, double s) {
  const double k = fermi_k(problem);
  const cplx ik = kI * k;
  const SolutionFrame f = decaying_frame(problem, problem.mu, s, problem.x0);
  const CMatrix plus = f.dpsi_p + ik * f.psi_p;
  const CMatrix minus = f.dpsi_p - ik * f.psi_p;
  if (condition_estimate(minus) > problem.tol.condition_cap)
    throw Error(ErrorCode::SystemSingular, "psi_+' - ik psi_+ is singular", condition_estimate(minus));
  // R^* minus = -plus  <=>  minus^* R = -plus^*
  Reflection out;
  out.r = solve(minus.adjoint(), -plus.adjoint(), problem.tol.condition_cap);
  out.residual = (plus + out.r.adjoint() * minus).norm() / std::max(1.0, plus.norm());
  out.unitarity = unitarity_defect(out.r);
  // direct matching: [1 + R; ik(1 - R)] in the span of (psi_+; psi_+')
  const CMatrix direct = -minus * inverse(plus, problem.tol.condition_cap);
  out.matching_gap = (direct - out.r).norm();
  return out;
}

CMatrix reflection_right(const PumpProblem& problem, double s, double length) {
  const double k = fermi_k(problem);
  const cplx ik = kI * k;
  const SliceModel model(problem, s);
  const SolutionFrame f = decaying_frame(model, problem.mu, problem.x0, problem.tol);
  // psi_- grows forward: carrying its span forward is stable
  const SpanTrack tr = carry_span(model, problem.mu, problem.x0, problem.x0 + length, stack(f.psi_m, f.dpsi_m));
  const int n = f.n;
  const CMatrix psi = tr.q.topRows(n), dpsi = tr.q.bottomRows(n);
  // e^{-ikL} + e^{ikL} R' = psi C, -ik e^{-ikL} + ik e^{ikL} R' = psi' C
  const CMatrix minus = dpsi - ik * psi;
  if (condition_estimate(minus) > problem.tol.condition_cap)
    throw Error(ErrorCode::SystemSingular, "psi_-' - ik psi_- is singular", condition_estimate(minus));
  return -std::exp(-2.0 * ik * length) * (dpsi + ik * psi) * inverse(minus, problem.tol.condition_cap);
}

CMatrix reflection_regularised(const PumpProblem& problem, double s, double eta) {
  const double k = fermi_k(problem);
  const cplx ik = kI * k;
  const SolutionFrame f = decaying_frame(problem, cplx(problem.mu, eta), s, problem.x0);
  const CMatrix plus = f.dpsi_p + ik * f.psi_p;
  const CMatrix minus = f.dpsi_p - ik * f.psi_p;
  return -minus * inverse(plus, problem.tol.condition_cap);
}

// ------------------------------------------------------------ convergence

CinqueTable verify_cinque(const PumpProblem& problem, double s, const std::vector<double>& lengths) {
  CinqueTable tab;
  tab.s = s;
  const CMatrix r = reflection_halfline(problem, s).r;
  tab.rows.resize(lengths.size());
  parallel_for(static_cast<int>(lengths.size()), [&](int i) {
    const ScatteringMatrix sm = s_matrix_finite(problem, s, lengths[i]);
    CinqueRow& row = tab.rows[i];
    row.length = lengths[i];
    row.t_norm = sm.t.norm();
    row.tp_norm = sm.tp.norm();
    row.r_gap = (sm.r - r).norm();
    row.rp_gap = (sm.rp - reflection_right(problem, s, lengths[i])).norm();
    row.unitarity = sm.unitarity;
  });
  auto slope = [&](auto get) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int m = 0;
    for (const auto& row : tab.rows) {
      const double y = get(row);
      if (!(y > 0.0)) continue;
      const double x = row.length, ly = std::log(y);
      sx += x;
      sy += ly;
      sxx += x * x;
      sxy += x * ly;
      ++m;
    }
    if (m < 2) return 0.0;
    return (m * sxy - sx * sy) / (m * sxx - sx * sx);
  };
  tab.t_slope = slope([](const CinqueRow& row) { return row.t_norm; });
  tab.r_slope = slope([](const CinqueRow& row) { return row.r_gap; });
  tab.t_decreasing = true;
  for (std::size_t i = 1; i < tab.rows.size(); ++i)
    if (tab.rows[i].t_norm > 2.0 * tab.rows[i - 1].t_norm) tab.t_decreasing = false;
  return tab;
}

// -------------------------------------------------------------------- BPT

namespace {

double bpt_sum(const std::vector<CMatrix>& samples, int n, int stride, double& imag) {
  const int m = static_cast<int>(samples.size()) / stride;
  const double ds = kTwoPi / m;
  auto at = [&](int i) -> const CMatrix& { return samples[static_cast<std::size_t>(((i % m + m) % m) * stride)]; };
  cplx total = 0.0;
  for (int i = 0; i < m; ++i) {
    const CMatrix d = ((at(i - 2) - at(i + 2)) + 8.0 * (at(i + 1) - at(i - 1))) / (12.0 * ds);
    const CMatrix prod = d * at(i).adjoint();
    total += prod.topLeftCorner(n, n).trace() * ds;
  }
  const cplx q = total / (kTwoPi * kI);
  imag = std::abs(q.imag());
  return q.real();
}

}  // namespace

BptResult bpt_charge(const std::vector<CMatrix>& samples, int n) {
  if (samples.size() < 16 || samples.size() % 2 != 0)
    throw Error(ErrorCode::InvalidParameter, "BPT charge needs an even number (>= 16) of samples");
  BptResult r;
  double imag_half = 0.0;
  r.charge = bpt_sum(samples, n, 1, r.imag_residual);
  r.half_grid_charge = bpt_sum(samples, n, 2, imag_half);
  if (std::abs(r.charge - r.half_grid_charge) > 1e-3)
    throw Error(ErrorCode::UnderResolved, "BPT charge changes under grid refinement",
                std::abs(r.charge - r.half_grid_charge));
  return r;
}

double bpt_variance(const std::vector<CMatrix>& samples, int n) {
  if (samples.size() < 16 || samples.size() % 2 != 0)
    throw Error(ErrorCode::InvalidParameter, "BPT variance needs an even number (>= 16) of samples");
  const int m = static_cast<int>(samples.size());
  const int half = m / 2;
  const double h = kTwoPi / half;  // spacing of each sub-grid
  std::vector<CMatrix> a(m);
  for (int i = 0; i < m; ++i) {
    const Eigen::Index dim = samples[i].rows();
    CMatrix p = CMatrix::Zero(dim, dim);
    p.topLeftCorner(n, n).setIdentity();
    a[i] = samples[i].adjoint() * p * samples[i];
  }
  std::vector<double> rows(half, 0.0);
  parallel_for(half, [&](int i) {
    double acc = 0.0;
    for (int j = 0; j < half; ++j) {
      const CMatrix d = a[2 * i] - a[2 * j + 1];
      const double sep = kTwoPi * (2 * i - (2 * j + 1)) / m;
      const double kern = 1.0 / (4.0 * std::pow(std::sin(0.5 * sep), 2));
      acc += (d * d).trace().real() * kern;
    }
    rows[i] = acc;
  });
  double total = 0.0;
  for (double v : rows) total += v;
  return std::max(0.0, total * h * h / (kTwoPi * kTwoPi));
}

// ---------------------------------------------------------------- winding

namespace {

// eigenvalue of R closest to -1
cplx nearest_minus_one(const CMatrix& r, const Tolerances& tol) {
  const EigenSystem es = eig_general(r, tol);
  cplx best = es.values(0);
  for (Eigen::Index i = 1; i < es.values.size(); ++i)
    if (std::abs(es.values(i) + 1.0) < std::abs(best + 1.0)) best = es.values(i);
  return best;
}

// number of eigenvalues of R in the upper half plane, near -1
int upper_near_minus_one(const CMatrix& r, const Tolerances& tol, double window) {
  const EigenSystem es = eig_general(r, tol);
  int c = 0;
  for (Eigen::Index i = 0; i < es.values.size(); ++i)
    if (std::abs(es.values(i) + 1.0) < window && es.values(i).imag() > 0.0) ++c;
  return c;
}

}  // namespace

WindingResult winding_det_r(const PumpProblem& problem, int s_samples) {
  const int ns = s_samples > 0 ? s_samples : problem.s_grid;
  std::vector<CMatrix> refl(ns);
  parallel_for(ns, [&](int k) { refl[k] = reflection_halfline(problem, kTwoPi * k / ns).r; });
  return winding_det_r(problem, refl);
}

WindingResult winding_det_r(const PumpProblem& problem, const std::vector<CMatrix>& refl) {
  const int ns = static_cast<int>(refl.size());
  WindingResult w;
  std::vector<cplx> dets(ns);
  w.s.resize(ns);
  for (int k = 0; k < ns; ++k) {
    w.s[k] = kTwoPi * k / ns;
    dets[k] = determinant(refl[k]);
  }
  const PhaseTrace tr = unwrap_phase(dets, true);
  w.phase = tr.phases;
  w.winding = tr.winding;
  w.residual = tr.residual;

  // eigenvalues passing -1 between consecutive samples: an eigenvalue moving
  // counterclockwise goes from the upper to the lower half plane near -1
  const double window = 0.5;
  for (int k = 0; k < ns; ++k) {
    const CMatrix& ra = refl[k];
    const CMatrix& rb = refl[(k + 1) % ns];
    const int ua = upper_near_minus_one(ra, problem.tol, window);
    const int ub = upper_near_minus_one(rb, problem.tol, window);
    const cplx ea = nearest_minus_one(ra, problem.tol), eb = nearest_minus_one(rb, problem.tol);
    if (std::abs(ea + 1.0) > window || std::abs(eb + 1.0) > window) continue;
    if (ua == ub) continue;
    const int dir = ua > ub ? 1 : -1;
    // bisection on the side of the eigenvalue nearest -1
    double lo = w.s[k], hi = lo + kTwoPi / ns;
    const bool upper_lo = ea.imag() > 0.0;
    for (int it = 0; it < 60 && hi - lo > 1e-12; ++it) {
      const double mid = 0.5 * (lo + hi);
      const cplx em = nearest_minus_one(reflection_halfline(problem, mid).r, problem.tol);
      if ((em.imag() > 0.0) == upper_lo) lo = mid;
      else hi = mid;
    }
    w.crossings.push_back({std::fmod(0.5 * (lo + hi), kTwoPi), dir});
    w.crossing_sum += dir;
  }
  return w;
}

}  // namespace qpump
