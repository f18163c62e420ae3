#include "qpump/topology.hpp"

#include <algorithm>
#include <cmath>

#include "qpump/parallel.hpp"

namespace qpump {

namespace {

double wrap_s(double s) {
  double r = std::fmod(s, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  return r;
}

// decaying data at real mu without inverting the fundamental matrix
double constant_outside_margin(const SliceModel& model, double mu, double x0) {
  const int n = model.n();
  const RVector& v = model.tail_values();
  const CMatrix& q = model.tail_vectors();
  CVector kap(n);
  for (int i = 0; i < n; ++i) kap(i) = std::sqrt(cplx(v(i) - mu));
  CMatrix plus(2 * n, n), minus(2 * n, n);
  plus << q, -q * kap.asDiagonal();
  minus << q, q * kap.asDiagonal();
  model.apply(mu, model.b(), x0, plus);
  model.apply(mu, model.a(), x0, minus);
  CMatrix phi(2 * n, 2 * n);
  phi << plus, minus;
  for (int c = 0; c < 2 * n; ++c) phi.col(c).normalize();
  Eigen::JacobiSVD<CMatrix> svd(phi);
  return svd.singularValues()(2 * n - 1);
}

double periodic_margin(const SliceModel& model, double mu, double x0, const Tolerances& tol) {
  const CMatrix mon = model.propagate(mu, x0, x0 + model.period());
  const EigenSystem es = eig_general(mon, tol);
  double m = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < es.values.size(); ++k) m = std::min(m, std::abs(std::log(std::abs(es.values(k)))));
  return m;
}

CMatrix link(const SolutionFrame& p, const SolutionFrame& q) {
  return wronskian(p.adj_m, p.dadj_m, q.psi_p, q.dpsi_p);
}

// log det of U1 U2 U3^-1 U4^-1 (the plaquette p1 -> p2 -> p3 -> p4 -> p1 with
// U1 = p1->p2, U2 = p2->p3, U3 = p4->p3, U4 = p1->p4)
cplx plaquette_log(const CMatrix& u1, const CMatrix& u2, const CMatrix& u3, const CMatrix& u4) {
  const cplx d = determinant(u1) * determinant(u2) / (determinant(u3) * determinant(u4));
  return std::log(d);
}

double simpson_weight(int i, int count) {
  if (i == 0 || i == count - 1) return 1.0 / 3.0;
  return (i % 2 == 1) ? 4.0 / 3.0 : 2.0 / 3.0;
}

// lambda branch of L = psi_+'^* psi_+ closest to u, with psi_+ aligned to ref
double aligned_branch(const SolutionFrame& f, const SolutionFrame& ref, const CVector& u, const Tolerances& tol) {
  SolutionFrame g = f;
  const auto [tp, tm] = alignment(f, ref);
  regauge(g, tp, tm);
  CMatrix l = g.dpsi_p.adjoint() * g.psi_p;
  l = 0.5 * (l + l.adjoint()).eval();
  const HermitianEigenSystem es = eig_hermitian(l, tol);
  int best = 0;
  double o1 = -1.0, o2 = -1.0;
  for (int i = 0; i < es.values.size(); ++i) {
    const double o = std::abs(es.vectors.col(i).dot(u));
    if (o > o1) {
      o2 = o1;
      o1 = o;
      best = i;
    } else if (o > o2) {
      o2 = o;
    }
  }
  if (o2 > 0.5 * o1)
    throw Error(ErrorCode::DegenerateCrossing, "eigenvalue branches of L cannot be told apart near the crossing", o2);
  return es.values(best);
}

}  // namespace

// ------------------------------------------------------------------- gap

GapReport verify_gap(const PumpProblem& problem, int s_samples) {
  const int ns = s_samples > 0 ? s_samples : problem.s_grid;
  const PotentialSpec& p = problem.potential;
  const double mu = problem.mu;
  if (p.structure == Structure::ConstantOutside) {
    const HermitianEigenSystem tail = eig_hermitian(p.tail, problem.tol);
    if (!(mu < tail.values(0)))
      throw Error(ErrorCode::GapClosed, "mu lies in the continuum of the tails", 0.0);
  }
  auto margin_at = [&](double s) {
    const SliceModel model(problem, s);
    if (p.structure == Structure::Periodic) return periodic_margin(model, mu, problem.x0, problem.tol);
    return constant_outside_margin(model, mu, problem.x0);
  };

  GapReport r;
  r.s.resize(ns);
  r.margins.resize(ns);
  parallel_for(ns, [&](int k) {
    r.s[k] = kTwoPi * k / ns;
    r.margins[k] = margin_at(r.s[k]);
  });

  // refine every local minimum that is not comfortably open
  r.margin = std::numeric_limits<double>::infinity();
  for (int k = 0; k < ns; ++k) {
    const double m = r.margins[k];
    if (m < r.margin) {
      r.margin = m;
      r.s_worst = r.s[k];
    }
    const double ml = r.margins[(k + ns - 1) % ns], mr = r.margins[(k + 1) % ns];
    if (m > ml || m > mr || m > 0.05) continue;
    // golden section on [s_k - h, s_k + h]
    const double h = kTwoPi / ns;
    double lo = r.s[k] - h, hi = r.s[k] + h;
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = hi - g * (hi - lo), x2 = lo + g * (hi - lo);
    double f1 = margin_at(x1), f2 = margin_at(x2);
    for (int it = 0; it < 60 && hi - lo > 1e-10; ++it) {
      if (f1 < f2) {
        hi = x2;
        x2 = x1;
        f2 = f1;
        x1 = hi - g * (hi - lo);
        f1 = margin_at(x1);
      } else {
        lo = x1;
        x1 = x2;
        f1 = f2;
        x2 = lo + g * (hi - lo);
        f2 = margin_at(x2);
      }
    }
    const double fm = std::min(f1, f2);
    if (fm < r.margin) {
      r.margin = fm;
      r.s_worst = wrap_s(f1 < f2 ? x1 : x2);
    }
  }
  const double closed = p.structure == Structure::Periodic ? problem.tol.unit_circle : 1e-8;
  if (r.margin < closed)
    throw Error(ErrorCode::GapClosed, "mu touches the spectrum at s = " + std::to_string(r.s_worst), r.s_worst);
  return r;
}

Contour torus_contour(const PumpProblem& problem, int nodes) {
  return ellipse_contour(problem.e_below, problem.mu, problem.contour_aspect, nodes, 0.5);
}

// ------------------------------------------------------------------ torus

const SolutionFrame& TorusGrid::at(int j, int k) const {
  j = ((j % nz) + nz) % nz;
  k = ((k % ns) + ns) % ns;
  return frames[static_cast<std::size_t>(k) * nz + j];
}

const HalfLineIntegrals& TorusGrid::integrals_at(int j, int k) const {
  if (integrals.empty()) throw Error(ErrorCode::InvalidParameter, "torus grid was built without half-line integrals");
  j = ((j % nz) + nz) % nz;
  k = ((k % ns) + ns) % ns;
  return integrals[static_cast<std::size_t>(k) * nz + j];
}

TorusGrid build_torus(const PumpProblem& problem, int nz, int ns, bool with_integrals, double x_max) {
  if (nz < 8 || ns < 8) throw Error(ErrorCode::InvalidParameter, "torus grid must be at least 8 x 8");
  TorusGrid g;
  g.contour = torus_contour(problem, nz);
  g.nz = nz;
  g.ns = ns;
  g.x0 = problem.x0;
  g.truncation = x_max;
  g.s_nodes.resize(ns);
  for (int k = 0; k < ns; ++k) g.s_nodes[k] = kTwoPi * k / ns;
  g.frames.resize(static_cast<std::size_t>(nz) * ns);
  if (with_integrals) g.integrals.resize(g.frames.size());
  parallel_for(ns, [&](int k) {
    const SliceModel model(problem, g.s_nodes[k]);
    for (int j = 0; j < nz; ++j) {
      const std::size_t idx = static_cast<std::size_t>(k) * nz + j;
      g.frames[idx] = decaying_frame(model, g.contour.nodes[j], g.x0, problem.tol);
      if (with_integrals) g.integrals[idx] = halfline_integrals(model, g.frames[idx], x_max);
    }
  });
  return g;
}

// -------------------------------------------------------------- plaquette

ChernResult chern_plaquette(const TorusGrid& grid) {
  const int nz = grid.nz, ns = grid.ns;
  const std::size_t cells = static_cast<std::size_t>(nz) * ns;
  std::vector<CMatrix> uz(cells), us(cells);
  std::vector<double> dets(cells);
  parallel_for(ns, [&](int k) {
    for (int j = 0; j < nz; ++j) {
      const std::size_t i = static_cast<std::size_t>(k) * nz + j;
      uz[i] = link(grid.at(j, k), grid.at(j + 1, k));
      us[i] = link(grid.at(j, k), grid.at(j, k + 1));
      dets[i] = std::min(std::abs(determinant(uz[i])), std::abs(determinant(us[i])));
    }
  });
  ChernResult r;
  r.min_link_det = *std::min_element(dets.begin(), dets.end());
  if (r.min_link_det < 1e-8)
    throw Error(ErrorCode::DegenerateLink, "a link matrix is singular; refine the torus grid", r.min_link_det);
  auto id = [nz, ns](int j, int k) {
    return static_cast<std::size_t>((k % ns + ns) % ns) * nz + static_cast<std::size_t>((j % nz + nz) % nz);
  };
  double phase_sum = 0.0;
  cplx flux = 0.0;
  for (int k = 0; k < ns; ++k) {
    for (int j = 0; j < nz; ++j) {
      const cplx lg = plaquette_log(uz[id(j, k)], us[id(j + 1, k)], uz[id(j, k + 1)], us[id(j, k)]);
      flux += lg;
      phase_sum += lg.imag();
      r.max_phase = std::max(r.max_phase, std::abs(lg.imag()));
    }
  }
  r.flux = flux;
  r.raw = -phase_sum / kTwoPi;
  r.chern = std::lround(r.raw);
  r.residual = std::abs(r.raw - static_cast<double>(r.chern));
  if (r.residual > 0.05 || r.max_phase > 0.5 * kPi)
    throw Error(ErrorCode::NotInteger,
                "plaquette sum is not resolved (residual " + std::to_string(r.residual) + ", largest phase " +
                    std::to_string(r.max_phase) + ")",
                r.residual);
  return r;
}

// ------------------------------------------------------- direct curvature

namespace {

struct GaugedNode {
  SolutionFrame f;          // gauge psi_+(x0) = 1
  CMatrix dz_dpsi_p;        // d_z psi_+'(x0); d_z psi_+(x0) = 0 in this gauge
  CMatrix dz_adj_m, dz_dadj_m;
  CMatrix f_plus;
};

SolutionFrame unit_gauge(const SliceModel& model, cplx z, double x0, const Tolerances& tol) {
  SolutionFrame f = decaying_frame(model, z, x0, tol);
  if (condition_estimate(f.psi_p) > 1e8)
    throw Error(ErrorCode::PatchSingular, "psi_+(x0) is close to singular on the patch", condition_estimate(f.psi_p));
  const CMatrix tp = inverse(f.psi_p, tol.condition_cap);
  regauge(f, tp, CMatrix::Identity(f.n, f.n));
  return f;
}

GaugedNode gauged_node(const SliceModel& model, cplx z, double x0, const Tolerances& tol) {
  SolutionFrame native = decaying_frame(model, z, x0, tol);
  if (condition_estimate(native.psi_p) > 1e8)
    throw Error(ErrorCode::PatchSingular, "psi_+(x0) is close to singular on the patch",
                condition_estimate(native.psi_p));
  const HalfLineIntegrals hl = halfline_integrals(model, native);
  const CMatrix one = CMatrix::Identity(native.n, native.n);
  const CMatrix tp = inverse(native.psi_p, tol.condition_cap);
  GaugedNode g;
  g.f = native;
  regauge(g.f, tp, one);
  const HalfLineIntegrals h = regauge(hl, tp, one);
  // d_z psi_+ = psi_+ F_+ - psi_- J_+, F_+(x0) = psi_-(x0) J_+
  g.f_plus = g.f.psi_m * h.j_plus;
  g.dz_dpsi_p = g.f.dpsi_p * g.f_plus - g.f.dpsi_m * h.j_plus;
  // d_z psi~_- = -F_+ psi~_- - K_- psi~_+
  g.dz_adj_m = -g.f_plus * g.f.adj_m - h.k_minus * g.f.adj_p;
  g.dz_dadj_m = -g.f_plus * g.f.dadj_m - h.k_minus * g.f.dadj_p;
  return g;
}

}  // namespace

CurvatureResult curvature_direct(const PumpProblem& problem, const CurvaturePatch& patch) {
  if (patch.nt < 3 || patch.ns < 3 || patch.nt % 2 == 0 || patch.ns % 2 == 0)
    throw Error(ErrorCode::InvalidParameter, "curvature patch needs odd node counts >= 3");
  const double left = problem.e_below, right = problem.mu;
  const double centre = 0.5 * (left + right), a = 0.5 * (right - left), b = problem.contour_aspect * a;
  const double dt = (patch.t1 - patch.t0) / (patch.nt - 1);
  const double ds = (patch.s1 - patch.s0) / (patch.ns - 1);
  const double x0 = problem.x0;
  const Tolerances& tol = problem.tol;
  const double hs = 1e-3;

  const std::size_t count = static_cast<std::size_t>(patch.nt) * patch.ns;
  std::vector<SolutionFrame> frames(count);
  std::vector<cplx> values(count);
  std::vector<double> defects(count);
  parallel_for(patch.ns, [&](int kb) {
    const double s = patch.s0 + kb * ds;
    const SliceModel m0(problem, s);
    SliceModel const* models[4];
    const SliceModel m1(problem, s - 2 * hs), m2(problem, s - hs), m3(problem, s + hs), m4(problem, s + 2 * hs);
    models[0] = &m1;
    models[1] = &m2;
    models[2] = &m3;
    models[3] = &m4;
    for (int ja = 0; ja < patch.nt; ++ja) {
      const double t = patch.t0 + ja * dt;
      const cplx z{centre + a * std::cos(t), b * std::sin(t)};
      const cplx dzdt{-a * std::sin(t), b * std::cos(t)};
      const GaugedNode g = gauged_node(m0, z, x0, tol);
      // s-derivatives in the same gauge, fourth order
      SolutionFrame nb[4];
      for (int q = 0; q < 4; ++q) nb[q] = unit_gauge(*models[q], z, x0, tol);
      auto d4 = [&](auto get) -> CMatrix {
        return ((get(nb[0]) - get(nb[3])) + 8.0 * (get(nb[2]) - get(nb[1]))) / (12.0 * hs);
      };
      const CMatrix ds_dpsi_p = d4([](const SolutionFrame& f) { return f.dpsi_p; });
      const CMatrix ds_adj_m = d4([](const SolutionFrame& f) { return f.adj_m; });
      // with psi_+(x0) = 1 the undifferentiated-value parts drop out
      const cplx val = (g.dz_adj_m * ds_dpsi_p - ds_adj_m * g.dz_dpsi_p).trace();
      const std::size_t idx = static_cast<std::size_t>(kb) * patch.nt + ja;
      values[idx] = val * dzdt;
      frames[idx] = g.f;
      // closed form of d_z psi_+ against a difference quotient in z
      const double hz = 1e-4;
      const SolutionFrame zp = unit_gauge(m0, z + hz, x0, tol), zm = unit_gauge(m0, z - hz, x0, tol);
      const CMatrix fd_dpsi = (zp.dpsi_p - zm.dpsi_p) / (2.0 * hz);
      const CMatrix fd_psi = (zp.psi_p - zm.psi_p) / (2.0 * hz);
      const CMatrix w = wronskian(g.f.adj_m, g.f.dadj_m, fd_psi, fd_dpsi);
      defects[idx] = (w - g.f_plus).norm() / std::max(1.0, g.f_plus.norm());
    }
  });

  CurvatureResult r;
  r.samples.resize(count);
  for (int kb = 0; kb < patch.ns; ++kb) {
    for (int ja = 0; ja < patch.nt; ++ja) {
      const std::size_t idx = static_cast<std::size_t>(kb) * patch.nt + ja;
      r.samples[idx] = values[idx];
      r.integral += simpson_weight(ja, patch.nt) * simpson_weight(kb, patch.ns) * dt * ds * values[idx];
      r.identity_defect = std::max(r.identity_defect, defects[idx]);
    }
  }
  auto at = [&](int ja, int kb) -> const SolutionFrame& {
    return frames[static_cast<std::size_t>(kb) * patch.nt + ja];
  };
  for (int kb = 0; kb + 1 < patch.ns; ++kb) {
    for (int ja = 0; ja + 1 < patch.nt; ++ja) {
      r.plaquette_flux += plaquette_log(link(at(ja, kb), at(ja + 1, kb)), link(at(ja + 1, kb), at(ja + 1, kb + 1)),
                                        link(at(ja, kb + 1), at(ja + 1, kb + 1)), link(at(ja, kb), at(ja, kb + 1)));
    }
  }
  return r;
}

// -------------------------------------------------------------- crossings

namespace {

struct LSample {
  CMatrix l;
  int inertia = 0;
  HermitianEigenSystem eig;
};

LSample l_matrix(const PumpProblem& problem, double s, double x0, SolutionFrame* frame_out = nullptr) {
  const SliceModel model(problem, s);
  SolutionFrame f = decaying_frame(model, problem.mu, x0, problem.tol);
  LSample out;
  out.l = f.dpsi_p.adjoint() * f.psi_p;
  if (hermitian_defect(out.l) > 1e-8)
    throw Error(ErrorCode::NotHermitian, "L(mu, s) is not Hermitian", hermitian_defect(out.l));
  out.l = 0.5 * (out.l + out.l.adjoint()).eval();
  out.eig = eig_hermitian(out.l, problem.tol);
  for (int i = 0; i < out.eig.values.size(); ++i)
    if (out.eig.values(i) < 0.0) ++out.inertia;
  if (frame_out) *frame_out = std::move(f);
  return out;
}

}  // namespace

std::vector<CrossingRecord> find_crossings(const PumpProblem& problem, double x0, int s_samples) {
  const int ns = s_samples > 0 ? s_samples : problem.s_grid;
  PumpProblem pr = problem;
  pr.x0 = x0;
  std::vector<int> inertia(ns);
  parallel_for(ns, [&](int k) { inertia[k] = l_matrix(pr, kTwoPi * k / ns, x0).inertia; });

  std::vector<CrossingRecord> out;
  for (int k = 0; k < ns; ++k) {
    const int nk = inertia[(k + 1) % ns];
    if (nk == inertia[k]) continue;
    if (std::abs(nk - inertia[k]) > 1)
      throw Error(ErrorCode::DegenerateCrossing, "several eigenvalues of L cross at once", kTwoPi * k / ns);
    double lo = kTwoPi * k / ns, hi = kTwoPi * (k + 1) / ns;
    const int nlo = inertia[k];
    LSample mid;
    double sm = 0.5 * (lo + hi);
    for (int it = 0; it < 100; ++it) {
      sm = 0.5 * (lo + hi);
      mid = l_matrix(pr, sm, x0);
      const double lam = mid.eig.values.cwiseAbs().minCoeff();
      if (lam <= 1e-10 * std::max(1.0, mid.l.norm()) || hi - lo < 1e-13) break;
      if (mid.inertia == nlo) lo = sm;
      else hi = sm;
    }
    SolutionFrame centre;
    mid = l_matrix(pr, sm, x0, &centre);
    const RVector absval = mid.eig.values.cwiseAbs();
    int i0 = 0;
    absval.minCoeff(&i0);
    const double scale = std::max(1.0, mid.l.norm());
    for (int i = 0; i < absval.size(); ++i)
      if (i != i0 && absval(i) < 1e-6 * scale)
        throw Error(ErrorCode::DegenerateCrossing, "L has a multiple kernel at the crossing", sm);
    // L u = 0 also when psi_+'(x0) u = 0; only psi_+(x0) u = 0 is a crossing
    const CVector u = mid.eig.vectors.col(i0);
    const double dirichlet = (centre.psi_p * u).norm(), neumann = (centre.dpsi_p * u).norm();
    if (!(dirichlet < neumann)) continue;
    Eigen::JacobiSVD<CMatrix> svd(centre.dpsi_p);
    const RVector sv = svd.singularValues();
    if (sv(sv.size() - 1) < 1e-8)
      throw Error(ErrorCode::DegenerateCrossing, "psi_+'(x0) is singular at the crossing", sm);

    CrossingRecord rec;
    rec.s_star = wrap_s(sm);
    rec.u = u;
    rec.residual = absval(i0);
    const SliceModel m0(pr, sm);
    const double hs = 1e-4, hz = 1e-4;
    {
      const SliceModel mp(pr, sm + hs), mm(pr, sm - hs);
      const double lp = aligned_branch(decaying_frame(mp, pr.mu, x0, pr.tol), centre, rec.u, pr.tol);
      const double lm = aligned_branch(decaying_frame(mm, pr.mu, x0, pr.tol), centre, rec.u, pr.tol);
      rec.lambda_s = (lp - lm) / (2.0 * hs);
    }
    {
      const double lp = aligned_branch(decaying_frame(m0, pr.mu + hz, x0, pr.tol), centre, rec.u, pr.tol);
      const double lm = aligned_branch(decaying_frame(m0, pr.mu - hz, x0, pr.tol), centre, rec.u, pr.tol);
      rec.lambda_z = (lp - lm) / (2.0 * hz);
    }
    const HalfLineIntegrals hl = halfline_integrals(m0, centre);
    rec.lambda_z_quadratic = -(rec.u.adjoint() * hl.h_plus * rec.u)(0, 0).real();
    if (rec.lambda_s == 0.0 || rec.lambda_z == 0.0)
      throw Error(ErrorCode::DegenerateCrossing, "crossing is not transversal", sm);
    rec.w = (rec.lambda_s * rec.lambda_z > 0.0) ? -1 : 1;
    out.push_back(std::move(rec));
  }
  return out;
}

long chern_from_crossings(const std::vector<CrossingRecord>& records) {
  long sum = 0;
  for (const auto& r : records) sum += r.w;
  return -sum;
}

double reflection_defect(const PumpProblem& problem, cplx z, double s, double x0) {
  const SliceModel model(problem, s);
  const SolutionFrame fz = decaying_frame(model, z, x0, problem.tol);
  const SolutionFrame fc = decaying_frame(model, std::conj(z), x0, problem.tol);
  const CMatrix lz = fc.dpsi_p.adjoint() * fz.psi_p;
  const CMatrix lc = fz.dpsi_p.adjoint() * fc.psi_p;
  return (lz - lc.adjoint()).norm() / std::max(1.0, lz.norm());
}

// ------------------------------------------------------ persistent current

CurrentResult persistent_current(const PumpProblem& problem, double s, double x0, int nodes) {
  const int nz = nodes > 0 ? nodes : problem.z_grid;
  const Contour c = torus_contour(problem, nz);
  const SliceModel model(problem, s);
  std::vector<cplx> terms(nz);
  parallel_for(nz, [&](int j) {
    const SolutionFrame f = decaying_frame(model, c.nodes[j], x0, problem.tol);
    // d1 G(x0+, x0) = -psi_+' psi~_-,  d2 G(x0-, x0) = -psi_- psi~_+'
    const CMatrix d1 = -f.dpsi_p * f.adj_m;
    const CMatrix d2 = -f.psi_m * f.dadj_p;
    terms[j] = c.weights[j] * (kI * (d2 - d1)).trace();
  });
  cplx sum = 0.0;
  for (const cplx& t : terms) sum += t;
  const cplx value = -sum / (kTwoPi * kI);
  return {value.real(), std::abs(value.imag())};
}

// ---------------------------------------------------------------- charge

ChargeResult charge_topological(const TorusGrid& grid) {
  const int nz = grid.nz, ns = grid.ns;
  const double ds = kTwoPi / ns;
  std::vector<cplx> rows(ns);
  std::vector<double> tails(ns, 0.0);
  parallel_for(ns, [&](int k) {
    cplx row = 0.0;
    for (int j = 0; j < nz; ++j) {
      const SolutionFrame& c = grid.at(j, k);
      const HalfLineIntegrals& h = grid.integrals_at(j, k);
      tails[k] = std::max(tails[k], h.tail_bound);
      SolutionFrame nb[4];
      const int off[4] = {-2, -1, 1, 2};
      for (int q = 0; q < 4; ++q) {
        nb[q] = grid.at(j, k + off[q]);
        const auto [tp, tm] = alignment(nb[q], c);
        regauge(nb[q], tp, tm);
      }
      auto d4 = [&](auto get) -> CMatrix {
        return ((get(nb[0]) - get(nb[3])) + 8.0 * (get(nb[2]) - get(nb[1]))) / (12.0 * ds);
      };
      const CMatrix adj_m = d4([](const SolutionFrame& f) { return f.adj_m; });
      const CMatrix dadj_m = d4([](const SolutionFrame& f) { return f.dadj_m; });
      const CMatrix adj_p = d4([](const SolutionFrame& f) { return f.adj_p; });
      const CMatrix dadj_p = d4([](const SolutionFrame& f) { return f.dadj_p; });
      const CMatrix t1 = wronskian(adj_m, dadj_m, c.psi_m, c.dpsi_m) * h.j_plus;
      const CMatrix t2 = wronskian(adj_p, dadj_p, c.psi_p, c.dpsi_p) * h.k_minus;
      row += grid.contour.weights[j] * (t1 + t2).trace();
    }
    rows[k] = row * ds;
  });
  cplx total = 0.0;
  for (const cplx& r : rows) total += r;
  const cplx q = kI / kTwoPi * total;
  ChargeResult out;
  out.charge = q.real();
  out.imag_residual = std::abs(q.imag());
  out.tail_bound = *std::max_element(tails.begin(), tails.end());
  return out;
}

}  // namespace qpump
