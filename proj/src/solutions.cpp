#include "qpump/solutions.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace qpump {

namespace {

// unit norm, largest-modulus entry real positive (first one on ties)
CVector fix_phase(CVector v) {
  v /= v.norm();
  Eigen::Index k = 0;
  double best = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double m = std::abs(v(i));
    if (m > best * (1.0 + 1e-12)) {
      best = m;
      k = i;
    }
  }
  return v * (std::conj(v(k)) / std::abs(v(k)));
}

void set_blocks(SolutionFrame& f, const CMatrix& phi, const CMatrix& inv) {
  const int n = f.n;
  f.psi_p = phi.topLeftCorner(n, n);
  f.psi_m = phi.topRightCorner(n, n);
  f.dpsi_p = phi.bottomLeftCorner(n, n);
  f.dpsi_m = phi.bottomRightCorner(n, n);
  // inverse = [[A, B], [C, D]]: the block rows solve the adjoint equation
  f.adj_m = inv.topRightCorner(n, n);
  f.dadj_m = -inv.topLeftCorner(n, n);
  f.adj_p = -inv.bottomRightCorner(n, n);
  f.dadj_p = inv.bottomLeftCorner(n, n);
}

}  // namespace

// ---------------------------------------------------------------- SliceModel

SliceModel::SliceModel(const PumpProblem& problem, double s, double cell_width,
                       std::optional<std::pair<double, double>> window)
    : n_(problem.potential.n), s_(s), structure_(problem.potential.structure), window_(window) {
  const PotentialSpec& spec = problem.potential;
  h_ = cell_width > 0.0 ? cell_width : problem.cell_width();
  auto decompose = [&](const CMatrix& v) {
    Cell c;
    if (n_ == 1) {
      c.lambda = RVector::Constant(1, v(0, 0).real());
      c.q = CMatrix::Identity(1, 1);
      c.diagonal = true;
      return c;
    }
    Eigen::SelfAdjointEigenSolver<CMatrix> es(v);
    c.lambda = es.eigenvalues();
    c.q = es.eigenvectors();
    c.diagonal = (c.q - CMatrix::Identity(n_, n_)).norm() == 0.0;
    return c;
  };
  zero_.lambda = RVector::Zero(n_);
  zero_.q = CMatrix::Identity(n_, n_);
  zero_.diagonal = true;

  if (structure_ == Structure::Periodic) {
    period_ = spec.period;
    cells_ = static_cast<int>(std::lround(period_ / h_));
    h_ = period_ / cells_;
    for (int j = 0; j < cells_; ++j) cell_data_.push_back(decompose(evaluate(spec, (j + 0.5) * h_, s)));
  } else {
    a_ = spec.a;
    b_ = spec.b;
    cells_ = std::max(1, static_cast<int>(std::lround((b_ - a_) / h_)));
    h_ = (b_ - a_) / cells_;
    for (int j = 0; j < cells_; ++j) cell_data_.push_back(decompose(evaluate(spec, a_ + (j + 0.5) * h_, s)));
    Eigen::SelfAdjointEigenSolver<CMatrix> es(0.5 * (spec.tail + spec.tail.adjoint()));
    tail_values_ = es.eigenvalues();
    tail_vectors_ = es.eigenvectors();
    tail_.lambda = tail_values_;
    tail_.q = tail_vectors_;
    tail_.diagonal = n_ == 1;
  }
}

const SliceModel::Cell& SliceModel::cell(int id) const {
  if (id >= 0) return cell_data_[static_cast<std::size_t>(id)];
  return id == -1 ? zero_ : tail_;
}

SliceModel::Piece SliceModel::locate(double x, bool forward) const {
  constexpr double inf = std::numeric_limits<double>::infinity();
  if (window_) {
    const auto [w0, w1] = *window_;
    if (forward) {
      if (x >= w1 - edge_eps(w1)) return {w1, inf, -1};
      if (x < w0 - edge_eps(w0)) return {-inf, w0, -1};
    } else {
      if (x <= w0 + edge_eps(w0)) return {-inf, w0, -1};
      if (x > w1 + edge_eps(w1)) return {w1, inf, -1};
    }
  }
  Piece p{};
  if (structure_ == Structure::Periodic) {
    auto j = static_cast<long>(std::floor(x / h_));
    if (forward && (j + 1) * h_ - x <= edge_eps(x)) ++j;
    if (!forward && x - j * h_ <= edge_eps(x)) --j;
    p = {j * h_, (j + 1) * h_, static_cast<int>(((j % cells_) + cells_) % cells_)};
  } else {
    if (forward ? x >= b_ - edge_eps(b_) : x > b_ + edge_eps(b_)) {
      p = {b_, inf, -2};
    } else if (forward ? x < a_ - edge_eps(a_) : x <= a_ + edge_eps(a_)) {
      p = {-inf, a_, -2};
    } else {
      auto j = static_cast<long>(std::floor((x - a_) / h_));
      if (forward && a_ + (j + 1) * h_ - x <= edge_eps(x)) ++j;
      if (!forward && x - (a_ + j * h_) <= edge_eps(x)) --j;
      j = std::clamp(j, 0L, static_cast<long>(cells_ - 1));
      p = {a_ + j * h_, j == cells_ - 1 ? b_ : a_ + (j + 1) * h_, static_cast<int>(j)};
    }
  }
  if (window_) {
    p.lo = std::max(p.lo, window_->first);
    p.hi = std::min(p.hi, window_->second);
  }
  return p;
}

void SliceModel::cell_exp(const Cell& c, cplx z, double d, CMatrix& out) const {
  const int n = n_;
  CVector ch(n), sh(n), ks(n);
  for (int i = 0; i < n; ++i) {
    const cplx shift = c.lambda(i) - z;  // kappa^2
    const cplx u = shift * (d * d);
    if (std::abs(u) < 1e-6) {
      ch(i) = 1.0 + u / 2.0 + u * u / 24.0 + u * u * u / 720.0;
      sh(i) = d * (1.0 + u / 6.0 + u * u / 120.0 + u * u * u / 5040.0);
    } else {
      const cplx kappa = std::sqrt(shift);
      ch(i) = std::cosh(kappa * d);
      sh(i) = std::sinh(kappa * d) / kappa;
    }
    ks(i) = shift * sh(i);  // kappa sinh(kappa d)
  }
  out.resize(2 * n, 2 * n);
  if (c.diagonal) {
    out.setZero();
    for (int i = 0; i < n; ++i) {
      out(i, i) = ch(i);
      out(i, n + i) = sh(i);
      out(n + i, i) = ks(i);
      out(n + i, n + i) = ch(i);
    }
    return;
  }
  const CMatrix qa = c.q.adjoint();
  const CMatrix cm = c.q * ch.asDiagonal() * qa;
  out.topLeftCorner(n, n) = cm;
  out.bottomRightCorner(n, n) = cm;
  out.topRightCorner(n, n) = c.q * sh.asDiagonal() * qa;
  out.bottomLeftCorner(n, n) = c.q * ks.asDiagonal() * qa;
}

CMatrix SliceModel::step(cplx z, double x, double d) const {
  CMatrix e;
  cell_exp(cell(locate(x, d >= 0.0).id), z, d, e);
  return e;
}

void SliceModel::apply(cplx z, double xa, double xb, CMatrix& block) const {
  CMatrix e, tmp;
  double x = xa;
  if (xb >= xa) {
    while (xb - x > edge_eps(x)) {
      const Piece p = locate(x, true);
      const double end = std::min(p.hi, xb);
      cell_exp(cell(p.id), z, end - x, e);
      tmp.noalias() = e * block;
      block.swap(tmp);
      x = end;
    }
  } else {
    while (x - xb > edge_eps(x)) {
      const Piece p = locate(x, false);
      const double end = std::max(p.lo, xb);
      cell_exp(cell(p.id), z, end - x, e);
      tmp.noalias() = e * block;
      block.swap(tmp);
      x = end;
    }
  }
}

CMatrix SliceModel::propagate(cplx z, double xa, double xb) const {
  CMatrix m = CMatrix::Identity(2 * n_, 2 * n_);
  apply(z, xa, xb, m);
  return m;
}

// ------------------------------------------------------------------ transfer

TransferMatrix transfer(const PumpProblem& problem, cplx z, double s, double x_a, double x_b) {
  if (!(x_b > x_a)) throw Error(ErrorCode::InvalidParameter, "transfer needs x_a < x_b");
  const SliceModel coarse(problem, s);
  const SliceModel fine(problem, s, 0.5 * coarse.cell_width());
  TransferMatrix t;
  t.m = coarse.propagate(z, x_a, x_b);
  const CMatrix mf = fine.propagate(z, x_a, x_b);
  t.x_a = x_a;
  t.x_b = x_b;
  t.z = z;
  t.s = s;
  t.error_estimate = (t.m - mf).norm() / mf.norm();
  if (t.error_estimate > problem.tol.richardson)
    throw Error(ErrorCode::StepTooLarge, "transfer-matrix error estimate above tolerance", t.error_estimate);
  return t;
}

// -------------------------------------------------------------------- frames

CMatrix SolutionFrame::fundamental() const {
  CMatrix phi(2 * n, 2 * n);
  phi << psi_p, psi_m, dpsi_p, dpsi_m;
  return phi;
}

CMatrix SolutionFrame::fundamental_inverse() const {
  CMatrix inv(2 * n, 2 * n);
  inv << -dadj_m, adj_m, dadj_p, -adj_p;
  return inv;
}

SolutionFrame decaying_frame(const SliceModel& model, cplx z, double x0, const Tolerances& tol) {
  const int n = model.n();
  SolutionFrame f;
  f.z = z;
  f.s = model.s();
  f.x = x0;
  f.n = n;
  f.structure = model.structure();
  CMatrix phi(2 * n, 2 * n);

  if (model.structure() == Structure::Periodic) {
    const double ell = model.period();
    const CMatrix mon = model.propagate(z, x0, x0 + ell);
    const CMatrix mon_inv = model.propagate(z, x0 + ell, x0);
    const EigenSystem fw = eig_general(mon, tol);
    const EigenSystem bw = eig_general(mon_inv, tol);
    for (int k = 0; k < 2 * n; ++k) {
      if (std::abs(std::abs(fw.values(k)) - 1.0) < tol.unit_circle)
        throw Error(ErrorCode::OnSpectrum, "Floquet multiplier on the unit circle", std::abs(fw.values(k)));
    }
    if (!(std::abs(fw.values(n - 1)) < 1.0 && std::abs(fw.values(n)) > 1.0) ||
        !(std::abs(bw.values(n - 1)) < 1.0 && std::abs(bw.values(n)) > 1.0))
      throw Error(ErrorCode::DegenerateSplit, "Floquet multipliers do not split n/n about the unit circle");
    // growing at +inf (psi_-) from the dominant part of M, decaying (psi_+)
    // from the dominant part of M^-1; both ordered by descending |rho|
    f.rho_m.resize(n);
    f.rho_p.resize(n);
    for (int k = 0; k < n; ++k) {
      const int im = 2 * n - 1 - k;  // descending |rho| among the growing ones
      const int ip = n + k;          // ascending |1/rho| = descending |rho| among the decaying ones
      f.rho_m(k) = fw.values(im);
      f.rho_p(k) = 1.0 / bw.values(ip);
      phi.col(n + k) = fix_phase(fw.vectors.col(im));
      phi.col(k) = fix_phase(bw.vectors.col(ip));
    }
  } else {
    const RVector& v = model.tail_values();
    const CMatrix& q = model.tail_vectors();
    f.kappa.resize(n);
    for (int i = 0; i < n; ++i) {
      f.kappa(i) = std::sqrt(cplx(v(i)) - z);
      if (f.kappa(i).real() < tol.unit_circle)
        throw Error(ErrorCode::OnSpectrum, "energy in the continuum of the tails", f.kappa(i).real());
    }
    CMatrix plus(2 * n, n), minus(2 * n, n);
    plus << q, -q * f.kappa.asDiagonal();
    minus << q, q * f.kappa.asDiagonal();
    model.apply(z, model.b(), x0, plus);
    model.apply(z, model.a(), x0, minus);
    phi << plus, minus;
  }
  const CMatrix inv = inverse(phi, tol.condition_cap);
  set_blocks(f, phi, inv);
  return f;
}

SolutionFrame decaying_frame(const PumpProblem& problem, cplx z, double s, double x0) {
  return decaying_frame(SliceModel(problem, s), z, x0, problem.tol);
}

SolutionFrame propagate_frame(const SliceModel& model, const SolutionFrame& frame, double x) {
  SolutionFrame f = frame;
  f.x = x;
  const CMatrix phi = model.propagate(frame.z, frame.x, x) * frame.fundamental();
  // Adjoint rows as the inverse of the carried fundamental matrix, with the
  // columns equilibrated first: decaying and growing columns drift apart by
  // exp(2 kappa |x - x0|), and carrying the old inverse backwards loses that
  // factor in the identities.
  RVector scale(phi.cols());
  for (Eigen::Index j = 0; j < phi.cols(); ++j) scale(j) = phi.col(j).norm();
  const CMatrix inv = scale.cwiseInverse().asDiagonal() * inverse(phi * scale.cwiseInverse().asDiagonal());
  set_blocks(f, phi, inv);
  return f;
}

CMatrix wronskian(const CMatrix& adj, const CMatrix& dadj, const CMatrix& psi, const CMatrix& dpsi) {
  return adj * dpsi - dadj * psi;
}

double FrameIdentities::max() const {
  return std::max({normalisation, normalisation2, codecay_plus, codecay_minus, ids0, ids1, ids2});
}

FrameIdentities frame_identities(const SolutionFrame& f) {
  const CMatrix one = CMatrix::Identity(f.n, f.n);
  FrameIdentities r;
  r.normalisation = (wronskian(f.adj_m, f.dadj_m, f.psi_p, f.dpsi_p) - one).norm();
  r.normalisation2 = (wronskian(f.adj_p, f.dadj_p, f.psi_m, f.dpsi_m) + one).norm();
  r.codecay_plus = wronskian(f.adj_p, f.dadj_p, f.psi_p, f.dpsi_p).norm();
  r.codecay_minus = wronskian(f.adj_m, f.dadj_m, f.psi_m, f.dpsi_m).norm();
  r.ids0 = (f.psi_p * f.adj_m - f.psi_m * f.adj_p).norm();
  r.ids1 = (f.psi_p * f.dadj_m - f.psi_m * f.dadj_p + one).norm();
  r.ids2 = (f.dpsi_p * f.adj_m - f.dpsi_m * f.adj_p - one).norm();
  return r;
}

void regauge(SolutionFrame& f, const CMatrix& tp, const CMatrix& tm) {
  const CMatrix tpi = inverse(tp), tmi = inverse(tm);
  f.psi_p = f.psi_p * tp;
  f.dpsi_p = f.dpsi_p * tp;
  f.adj_m = tpi * f.adj_m;
  f.dadj_m = tpi * f.dadj_m;
  f.psi_m = f.psi_m * tm;
  f.dpsi_m = f.dpsi_m * tm;
  f.adj_p = tmi * f.adj_p;
  f.dadj_p = tmi * f.dadj_p;
  f.native = false;
}

std::pair<CMatrix, CMatrix> alignment(const SolutionFrame& f, const SolutionFrame& ref) {
  const int n = f.n;
  auto stack = [n](const CMatrix& a, const CMatrix& b) {
    CMatrix s(2 * n, n);
    s << a, b;
    return s;
  };
  const CMatrix tp = stack(f.psi_p, f.dpsi_p).colPivHouseholderQr().solve(stack(ref.psi_p, ref.dpsi_p));
  const CMatrix tm = stack(f.psi_m, f.dpsi_m).colPivHouseholderQr().solve(stack(ref.psi_m, ref.dpsi_m));
  return {tp, tm};
}

CMatrix greens_function(const SolutionFrame& at_x, const SolutionFrame& at_xp) {
  if (at_x.x >= at_xp.x) return -at_x.psi_p * at_xp.adj_m;
  return -at_x.psi_m * at_xp.adj_p;
}

CMatrix greens_dx(const SolutionFrame& at_x, const SolutionFrame& at_xp, bool upper) {
  const bool above = at_x.x > at_xp.x || (at_x.x == at_xp.x && upper);
  if (above) return -at_x.dpsi_p * at_xp.adj_m;
  return -at_x.dpsi_m * at_xp.adj_p;
}

// -------------------------------------------------------- half-line integrals

namespace {

struct Simpson {
  CMatrix sum;
  void add(double d, const CMatrix& f0, const CMatrix& fm, const CMatrix& f1) {
    if (sum.size() == 0) sum = CMatrix::Zero(f0.rows(), f0.cols());
    sum += (d / 6.0) * (f0 + 4.0 * fm + f1);
  }
  CMatrix value(int n) const { return sum.size() ? sum : CMatrix::Zero(n, n); }
};

// Integrates psi~_+ psi_+ and psi_+^* psi_+ over [xa, xb], propagating
// backward from xb where the decaying data p = (psi_+; psi_+') and rows
// r = (C D) of the inverse fundamental matrix are given. Backward is the
// stable direction for solutions decaying at +inf.
void integrate_plus(const SliceModel& model, cplx z, double xa, double xb, CMatrix p, CMatrix r, Simpson& j,
                    Simpson& h) {
  const int n = model.n();
  std::vector<std::pair<double, double>> pieces;
  model.for_each_piece(xa, xb, [&](double l, double rr) { pieces.emplace_back(l, rr); });
  auto fj = [n](const CMatrix& pp, const CMatrix& rr) -> CMatrix { return -rr.rightCols(n) * pp.topRows(n); };
  auto fh = [n](const CMatrix& pp) -> CMatrix { return pp.topRows(n).adjoint() * pp.topRows(n); };
  for (auto it = pieces.rbegin(); it != pieces.rend(); ++it) {
    const double d = it->second - it->first;
    const CMatrix back = model.step(z, it->second, -0.5 * d);  // x_r -> x_mid
    const CMatrix fwd = model.step(z, it->first, 0.5 * d);     // x_mid -> x_r (same cell)
    const CMatrix j1 = fj(p, r), h1 = fh(p);
    p = back * p;
    r = r * fwd;
    const CMatrix jm = fj(p, r), hm = fh(p);
    p = back * p;
    r = r * fwd;
    j.add(d, fj(p, r), jm, j1);
    h.add(d, fh(p), hm, h1);
  }
}

// Integrates psi~_- psi_- over [xa, xb] forward from xa, given
// p = (psi_-; psi_-') and rows r = (A B) there.
void integrate_minus(const SliceModel& model, cplx z, double xa, double xb, CMatrix p, CMatrix r, Simpson& k) {
  const int n = model.n();
  auto fk = [n](const CMatrix& pp, const CMatrix& rr) -> CMatrix { return rr.rightCols(n) * pp.topRows(n); };
  model.for_each_piece(xa, xb, [&](double l, double rr) {
    const double d = rr - l;
    const CMatrix fwd = model.step(z, l, 0.5 * d);
    const CMatrix back = model.step(z, rr, -0.5 * d);
    const CMatrix k0 = fk(p, r);
    p = fwd * p;
    r = r * back;
    const CMatrix km = fk(p, r);
    p = fwd * p;
    r = r * back;
    k.add(d, k0, km, fk(p, r));
  });
}

CMatrix geometric(const CMatrix& one, const std::function<cplx(int, int)>& ratio, long periods, double& tail) {
  CMatrix out(one.rows(), one.cols());
  for (Eigen::Index i = 0; i < one.rows(); ++i) {
    for (Eigen::Index j = 0; j < one.cols(); ++j) {
      const cplx q = ratio(static_cast<int>(i), static_cast<int>(j));
      if (periods < 0) {
        out(i, j) = one(i, j) / (1.0 - q);
      } else {
        out(i, j) = one(i, j) * (1.0 - std::pow(q, static_cast<double>(periods))) / (1.0 - q);
        const double aq = std::abs(q);
        tail = std::max(tail, std::abs(one(i, j)) * std::pow(aq, static_cast<double>(periods)) / (1.0 - aq));
      }
    }
  }
  return out;
}

}  // namespace

HalfLineIntegrals halfline_integrals(const SliceModel& model, const SolutionFrame& f, double x_max) {
  if (!f.native) throw Error(ErrorCode::InvalidParameter, "half-line integrals need a frame in construction gauge");
  const int n = f.n;
  const double x0 = f.x;
  const cplx z = f.z;
  const CMatrix phi = f.fundamental();
  const CMatrix inv = f.fundamental_inverse();
  HalfLineIntegrals out;
  Simpson j, h, k;

  if (model.structure() == Structure::Periodic) {
    const double ell = model.period();
    // data at x0 + ell from the Floquet property
    const CMatrix p_end = phi.leftCols(n) * f.rho_p.asDiagonal();
    const CMatrix r_end = f.rho_m.cwiseInverse().asDiagonal() * inv.bottomRows(n);
    integrate_plus(model, z, x0, x0 + ell, p_end, r_end, j, h);
    integrate_minus(model, z, x0, x0 + ell, phi.rightCols(n), inv.topRows(n), k);
    const long periods = std::isfinite(x_max) ? std::max(1L, static_cast<long>(std::floor(x_max / ell + 1e-9))) : -1;
    const CVector& rp = f.rho_p;
    const CVector& rm = f.rho_m;
    out.j_plus = geometric(j.value(n), [&](int a, int b) { return rp(b) / rm(a); }, periods, out.tail_bound);
    const CMatrix k1 = rp.asDiagonal() * k.value(n) * rm.cwiseInverse().asDiagonal();
    out.k_minus = geometric(k1, [&](int a, int b) { return rp(a) / rm(b); }, periods, out.tail_bound);
    out.h_plus = geometric(h.value(n), [&](int a, int b) { return std::conj(rp(a)) * rp(b); }, periods,
                           out.tail_bound);
    return out;
  }

  const CMatrix& q = model.tail_vectors();
  const CVector& kap = f.kappa;
  const double xr = std::max(x0, model.b());
  const double xl = std::min(x0, model.a());
  const double reach = std::isfinite(x_max) ? x_max : std::numeric_limits<double>::infinity();

  // right: exact decaying data at xr, growing data propagated forward (stable)
  CMatrix p_r = phi.leftCols(n), m_r = phi.rightCols(n);
  if (xr > x0) {
    p_r.resize(2 * n, n);
    p_r << q, -q * kap.asDiagonal();
    model.apply(z, x0, xr, m_r);
  }
  CMatrix phi_r(2 * n, 2 * n);
  phi_r << p_r, m_r;
  const CMatrix inv_r = inverse(phi_r);
  integrate_plus(model, z, x0, xr, p_r, inv_r.bottomRows(n), j, h);
  {
    const double len = std::max(0.0, x0 + reach - xr);
    CVector wj(n), wh(n);
    for (int i = 0; i < n; ++i) {
      const cplx e = std::isfinite(len) ? std::exp(-2.0 * kap(i) * len) : cplx(0.0);
      wj(i) = (1.0 - e) / (2.0 * kap(i));
      wh(i) = (1.0 - std::abs(e)) / (2.0 * kap(i).real());
      if (std::isfinite(len)) out.tail_bound = std::max(out.tail_bound, std::abs(e) / (2.0 * kap(i).real()));
    }
    const CMatrix adj = -inv_r.bottomRightCorner(n, n);
    const CMatrix psi = p_r.topRows(n);
    out.j_plus = j.value(n) + adj * q * wj.asDiagonal() * q.adjoint() * psi;
    out.h_plus = h.value(n) + psi.adjoint() * q * wh.asDiagonal() * q.adjoint() * psi;
  }

  // left: exact data at xl for psi_-, psi_+ propagated backward (stable)
  CMatrix m_l = phi.rightCols(n), p_l = phi.leftCols(n);
  if (xl < x0) {
    m_l.resize(2 * n, n);
    m_l << q, q * kap.asDiagonal();
    model.apply(z, x0, xl, p_l);
  }
  CMatrix phi_l(2 * n, 2 * n);
  phi_l << p_l, m_l;
  const CMatrix inv_l = inverse(phi_l);
  integrate_minus(model, z, xl, x0, m_l, inv_l.topRows(n), k);
  {
    CVector wk(n);
    for (int i = 0; i < n; ++i) wk(i) = 1.0 / (2.0 * kap(i));
    out.k_minus = k.value(n) + inv_l.topRightCorner(n, n) * q * wk.asDiagonal() * q.adjoint() * m_l.topRows(n);
  }
  return out;
}

HalfLineIntegrals regauge(const HalfLineIntegrals& h, const CMatrix& tp, const CMatrix& tm) {
  HalfLineIntegrals out = h;
  out.j_plus = inverse(tm) * h.j_plus * tp;
  out.k_minus = inverse(tp) * h.k_minus * tm;
  out.h_plus = tp.adjoint() * h.h_plus * tp;
  return out;
}

}  // namespace qpump
