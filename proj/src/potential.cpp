#include "qpump/potential.hpp"

#include <algorithm>
#include <cmath>

namespace qpump {

namespace {

double reduce(double x, double period) { return x - period * std::floor(x / period); }

CMatrix unit(int n, int i, int j) {
  CMatrix m = CMatrix::Zero(n, n);
  m(i, j) = 1.0;
  return m;
}

double get(const std::map<std::string, double>& params, const std::map<std::string, double>& defaults,
           const std::string& key) {
  auto it = params.find(key);
  return it != params.end() ? it->second : defaults.at(key);
}

void check_keys(const std::string& name, const std::map<std::string, double>& params,
                const std::map<std::string, double>& defaults) {
  for (const auto& [key, value] : params) {
    if (!defaults.count(key)) throw Error(ErrorCode::InvalidParameter, name + ": unknown parameter '" + key + "'");
    if (!std::isfinite(value)) throw Error(ErrorCode::InvalidParameter, name + ": parameter '" + key + "' is not finite");
  }
}

}  // namespace

double SpaceProfile::operator()(double x, double period) const {
  switch (kind) {
    case Kind::Constant: return 1.0;
    case Kind::Cos: return std::cos(kTwoPi * mode * reduce(x, period) / period);
    case Kind::Sin: return std::sin(kTwoPi * mode * reduce(x, period) / period);
    case Kind::Bump: {
      const double u = x - centre;
      if (std::abs(u) > 0.5 * width) return 0.0;
      const double c = std::cos(kPi * u / width);
      return c * c;
    }
    case Kind::Step: return (x >= lo && x <= hi) ? 1.0 : 0.0;
    case Kind::Tilt: {
      const double u = x - centre;
      if (std::abs(u) > 0.5 * width) return 0.0;
      const double c = std::cos(kPi * u / width);
      return (u / (0.5 * width)) * c * c;
    }
  }
  return 0.0;
}

double TimeProfile::value(double s) const {
  s = reduce(s, kTwoPi);
  double v = coeffs.empty() ? 0.0 : coeffs[0];
  for (std::size_t k = 1; k < coeffs.size(); ++k) {
    const int m = static_cast<int>((k + 1) / 2);
    v += coeffs[k] * ((k % 2 == 1) ? std::cos(m * s) : std::sin(m * s));
  }
  return v;
}

double TimeProfile::derivative(double s) const {
  s = reduce(s, kTwoPi);
  double v = 0.0;
  for (std::size_t k = 1; k < coeffs.size(); ++k) {
    const int m = static_cast<int>((k + 1) / 2);
    v += coeffs[k] * ((k % 2 == 1) ? -m * std::sin(m * s) : m * std::cos(m * s));
  }
  return v;
}

bool TimeProfile::constant() const {
  for (std::size_t k = 1; k < coeffs.size(); ++k)
    if (coeffs[k] != 0.0) return false;
  return true;
}

bool PotentialSpec::time_independent() const {
  return std::all_of(terms.begin(), terms.end(), [](const Term& t) { return t.time.constant(); });
}

CMatrix evaluate(const PotentialSpec& spec, double x, double s) {
  if (spec.structure == Structure::ConstantOutside) {
    if (x < spec.a || x > spec.b) return spec.tail;
    CMatrix v = spec.tail;
    for (const Term& t : spec.terms) {
      const double f = t.space(x, 0.0);
      if (f != 0.0) v += (f * t.time.value(s)) * t.coeff;
    }
    return 0.5 * (v + v.adjoint());
  }
  CMatrix v = CMatrix::Zero(spec.n, spec.n);
  for (const Term& t : spec.terms) v += (t.space(x, spec.period) * t.time.value(s)) * t.coeff;
  return 0.5 * (v + v.adjoint());
}

CMatrix evaluate_ds(const PotentialSpec& spec, double x, double s) {
  CMatrix v = CMatrix::Zero(spec.n, spec.n);
  if (spec.structure == Structure::ConstantOutside && (x < spec.a || x > spec.b)) return v;
  const double period = spec.structure == Structure::Periodic ? spec.period : 0.0;
  for (const Term& t : spec.terms) v += (t.space(x, period) * t.time.derivative(s)) * t.coeff;
  return 0.5 * (v + v.adjoint());
}

double sup_norm_bound(const PotentialSpec& spec) {
  // sampled on a fine (x, s) grid; the spaces here are smooth or piecewise
  // constant so the grid maximum is within a hair of the true supremum
  const int nx = 512, ns = 128;
  const double x_lo = spec.structure == Structure::Periodic ? 0.0 : spec.a;
  const double x_hi = spec.structure == Structure::Periodic ? spec.period : spec.b;
  double sup = spec.structure == Structure::ConstantOutside ? spec.tail.operatorNorm() : 0.0;
  for (int k = 0; k < ns; ++k) {
    const double s = kTwoPi * k / ns;
    for (int j = 0; j <= nx; ++j) {
      const double x = x_lo + (x_hi - x_lo) * j / nx;
      sup = std::max(sup, evaluate(spec, x, s).operatorNorm());
    }
  }
  return sup;
}

void validate(const PotentialSpec& spec, double hermitian_tol) {
  if (spec.n < 1 || spec.n > 8) throw Error(ErrorCode::ValidationError, "channel count must be in 1..8");
  if (spec.structure == Structure::Periodic) {
    if (!(spec.period > 0.0) || !std::isfinite(spec.period))
      throw Error(ErrorCode::ValidationError, "period must be positive");
  } else {
    if (!(spec.b > spec.a)) throw Error(ErrorCode::ValidationError, "interval needs a < b");
    if (spec.tail.rows() != spec.n || spec.tail.cols() != spec.n)
      throw Error(ErrorCode::ValidationError, "tail matrix must be n x n");
    if (hermitian_defect(spec.tail) > hermitian_tol)
      throw Error(ErrorCode::ValidationError, "tail matrix is not Hermitian", hermitian_defect(spec.tail));
  }
  for (std::size_t k = 0; k < spec.terms.size(); ++k) {
    const Term& t = spec.terms[k];
    const std::string where = "term " + std::to_string(k + 1) + ": ";
    if (t.coeff.rows() != spec.n || t.coeff.cols() != spec.n)
      throw Error(ErrorCode::ValidationError, where + "coefficient must be n x n");
    if (!t.coeff.allFinite()) throw Error(ErrorCode::ValidationError, where + "non-finite coefficient");
    const double defect = hermitian_defect(t.coeff);
    if (defect > hermitian_tol) throw Error(ErrorCode::ValidationError, where + "coefficient is not Hermitian", defect);
    if (t.time.coeffs.empty()) throw Error(ErrorCode::ValidationError, where + "empty time profile");
    for (double c : t.time.coeffs)
      if (!std::isfinite(c)) throw Error(ErrorCode::ValidationError, where + "non-finite time coefficient");
    if (spec.structure == Structure::Periodic) {
      if (t.space.compact()) throw Error(ErrorCode::ValidationError, where + "compact profile in a periodic potential");
      if (t.space.kind != SpaceProfile::Kind::Constant && t.space.mode < 1)
        throw Error(ErrorCode::ValidationError, where + "Fourier mode must be >= 1");
    } else {
      if (!t.space.compact()) throw Error(ErrorCode::ValidationError, where + "Fourier profile outside a periodic potential");
      double lo = t.space.lo, hi = t.space.hi;
      if (t.space.kind != SpaceProfile::Kind::Step) {
        if (!(t.space.width > 0.0)) throw Error(ErrorCode::ValidationError, where + "profile width must be positive");
        lo = t.space.centre - 0.5 * t.space.width;
        hi = t.space.centre + 0.5 * t.space.width;
      } else if (!(hi > lo)) {
        throw Error(ErrorCode::ValidationError, where + "step needs lo < hi");
      }
      if (lo < spec.a - 1e-12 || hi > spec.b + 1e-12)
        throw Error(ErrorCode::ValidationError, where + "profile support leaves the interval [a, b]");
    }
  }
}

const std::vector<PresetInfo>& preset_catalog() {
  static const std::vector<PresetInfo> catalog = {
      {"sliding_cosine", "n=1, V = offset + v0 cos(2 pi x/period - s)",
       {{"v0", 4.0}, {"period", kTwoPi}, {"offset", 3.0}}},
      {"sliding_multichannel",
       "offset + n channels of sliding cosines (channel c shifted by c*phase_step) with constant real "
       "nearest-neighbour coupling and an imaginary coupling modulated by sin(2 pi x/period)",
       {{"channels", 2.0}, {"v0", 4.0}, {"period", kTwoPi}, {"offset", 3.0}, {"phase_step", 0.0}, {"coupling", 0.3},
        {"coupling_mod", 0.3}}},
      {"modulated_well",
       "n=1, V = v_inf - (depth + depth_mod cos s) bump + tilt sin s x-odd bump on [-half_width, half_width]",
       {{"v_inf", 3.0}, {"depth", 6.0}, {"depth_mod", 1.0}, {"tilt", 1.5}, {"half_width", 3.0}}},
  };
  return catalog;
}

PotentialSpec preset(const std::string& name, const std::map<std::string, double>& params) {
  const auto& catalog = preset_catalog();
  auto it = std::find_if(catalog.begin(), catalog.end(), [&](const PresetInfo& p) { return p.name == name; });
  if (it == catalog.end()) throw Error(ErrorCode::UnknownPreset, "no preset named '" + name + "'");
  check_keys(name, params, it->defaults);
  auto par = [&](const char* key) { return get(params, it->defaults, key); };

  PotentialSpec spec;
  spec.name = name;
  if (name == "sliding_cosine") {
    const double v0 = par("v0");
    spec.period = par("period");
    if (!(spec.period > 0.0)) throw Error(ErrorCode::InvalidParameter, "period must be positive");
    spec.n = 1;
    if (par("offset") != 0.0)
      spec.terms.push_back({CMatrix::Constant(1, 1, par("offset")), {SpaceProfile::Kind::Constant}, {{1.0}}});
    if (v0 != 0.0) {
      // v0 cos(kx - s) = v0 cos(kx) cos s + v0 sin(kx) sin s
      spec.terms.push_back({CMatrix::Constant(1, 1, v0), {SpaceProfile::Kind::Cos, 1}, {{0.0, 1.0, 0.0}}});
      spec.terms.push_back({CMatrix::Constant(1, 1, v0), {SpaceProfile::Kind::Sin, 1}, {{0.0, 0.0, 1.0}}});
    }
  } else if (name == "sliding_multichannel") {
    const double channels = par("channels");
    if (channels < 2 || channels > 8 || channels != std::floor(channels))
      throw Error(ErrorCode::InvalidParameter, "channels must be an integer in 2..8");
    const int n = static_cast<int>(channels);
    const double v0 = par("v0"), step = par("phase_step"), g = par("coupling"), gm = par("coupling_mod");
    spec.period = par("period");
    if (!(spec.period > 0.0)) throw Error(ErrorCode::InvalidParameter, "period must be positive");
    spec.n = n;
    if (par("offset") != 0.0)
      spec.terms.push_back({par("offset") * CMatrix::Identity(n, n), {SpaceProfile::Kind::Constant}, {{1.0}}});
    for (int c = 0; c < n && v0 != 0.0; ++c) {
      // cos(kx - s - phi) = cos(kx)[cos phi cos s - sin phi sin s] + sin(kx)[sin phi cos s + cos phi sin s]
      const double phi = c * step;
      const CMatrix e = v0 * unit(n, c, c);
      spec.terms.push_back({e, {SpaceProfile::Kind::Cos, 1}, {{0.0, std::cos(phi), -std::sin(phi)}}});
      spec.terms.push_back({e, {SpaceProfile::Kind::Sin, 1}, {{0.0, std::sin(phi), std::cos(phi)}}});
    }
    for (int c = 0; c + 1 < n; ++c) {
      if (g != 0.0) {
        const CMatrix m = g * (unit(n, c, c + 1) + unit(n, c + 1, c));
        spec.terms.push_back({m, {SpaceProfile::Kind::Constant}, {{1.0}}});
      }
      if (gm != 0.0) {
        CMatrix m = CMatrix::Zero(n, n);
        m(c, c + 1) = cplx(0.0, -gm);
        m(c + 1, c) = cplx(0.0, gm);
        spec.terms.push_back({m, {SpaceProfile::Kind::Sin, 1}, {{1.0}}});
      }
    }
  } else {  // modulated_well
    const double w = par("half_width");
    if (!(w > 0.0)) throw Error(ErrorCode::InvalidParameter, "half_width must be positive");
    spec.n = 1;
    spec.structure = Structure::ConstantOutside;
    spec.a = -w;
    spec.b = w;
    spec.tail = CMatrix::Constant(1, 1, par("v_inf"));
    SpaceProfile bump{SpaceProfile::Kind::Bump};
    bump.centre = 0.0;
    bump.width = 2.0 * w;
    SpaceProfile tilt = bump;
    tilt.kind = SpaceProfile::Kind::Tilt;
    const double depth = par("depth"), mod = par("depth_mod"), tl = par("tilt");
    if (depth != 0.0 || mod != 0.0)
      spec.terms.push_back({CMatrix::Constant(1, 1, -1.0), bump, {{depth, mod, 0.0}}});
    if (tl != 0.0) spec.terms.push_back({CMatrix::Constant(1, 1, tl), tilt, {{0.0, 0.0, 1.0}}});
  }
  validate(spec);
  return spec;
}

double PumpProblem::cell_width() const {
  const PotentialSpec& p = potential;
  if (p.structure == Structure::Periodic) {
    const double step = x_step > 0.0 ? x_step : p.period / 256.0;
    return p.period / std::ceil(p.period / step - 1e-9);
  }
  const double step = x_step > 0.0 ? x_step : 0.01;
  const double width = p.b - p.a;
  return width / std::ceil(width / step - 1e-9);
}

void validate(const PumpProblem& problem) {
  validate(problem.potential);
  const PotentialSpec& p = problem.potential;
  if (!(problem.mu > 0.0)) throw Error(ErrorCode::ValidationError, "mu must be positive");
  if (!(problem.x_step >= 0.0)) throw Error(ErrorCode::ValidationError, "x_step must be positive");
  if (problem.s_grid < 8) throw Error(ErrorCode::ValidationError, "s_grid must be >= 8");
  if (problem.z_grid < 8) throw Error(ErrorCode::ValidationError, "z_grid must be >= 8");
  if (problem.torus_z < 8 || problem.torus_s < 8) throw Error(ErrorCode::ValidationError, "torus grid must be >= 8 x 8");
  if (!(problem.contour_aspect > 0.0)) throw Error(ErrorCode::ValidationError, "contour_aspect must be positive");
  const double sup = sup_norm_bound(p);
  if (!(problem.e_below < -sup))
    throw Error(ErrorCode::ValidationError, "e_below must lie below -sup ||V|| = " + std::to_string(-sup), sup);
  if (p.structure == Structure::ConstantOutside) {
    const double vmin = eig_hermitian(p.tail).values.minCoeff();
    if (!(problem.mu < vmin))
      throw Error(ErrorCode::ValidationError, "mu must lie below the smallest eigenvalue of the tail matrix", vmin);
  }
}

}  // namespace qpump
