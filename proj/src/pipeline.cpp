#include "qpump/pipeline.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <random>

#include "qpump/adiabatic.hpp"
#include "qpump/parallel.hpp"
#include "qpump/scattering.hpp"
#include "qpump/topology.hpp"

namespace qpump {

namespace {

using Json = nlohmann::ordered_json;

// admission thresholds that are not part of Tolerances but decide outcomes
constexpr double kPlaquetteResidualMax = 0.05;
constexpr double kRatioLo = 3.4, kRatioHi = 4.6;
constexpr double kRatioP0Lo = 1.7, kRatioP0Hi = 2.3;
constexpr double kVarianceEnvelope = 0.1;
constexpr double kVarianceFloor = 1e-12;  // below this the variance is rounding noise

std::vector<std::pair<std::string, double>> ladder(const RunConfig& cfg) {
  const Tolerances& t = cfg.problem.tol;
  return {{"tol_algebra", t.algebra},
          {"tol_decomposition", t.decomposition},
          {"tol_quadrature", t.quadrature},
          {"tol_condition_cap", t.condition_cap},
          {"tol_cluster", t.cluster},
          {"tol_unit_circle", t.unit_circle},
          {"tol_richardson", t.richardson},
          {"tol_bpt", cfg.run.bpt_tolerance},
          {"tol_plaquette_residual", kPlaquetteResidualMax}};
}

Report start(const std::string& command, const RunConfig& cfg) {
  Report r;
  r.command = command;
  Json& j = r.fields;
  j["command"] = command;
  j["status"] = "ok";
  j["exit_code"] = 0;
  j["config_hash"] = hash_hex(cfg.hash);
  j["seed"] = cfg.run.seed;
  j["tol_scale"] = cfg.tol_scale;
  for (const auto& [k, v] : ladder(cfg)) j[k] = v;
  const PumpProblem& p = cfg.problem;
  j["potential"] = p.potential.name.empty() ? "custom" : p.potential.name;
  j["structure"] = p.potential.structure == Structure::Periodic ? "periodic" : "constant_outside";
  j["channels"] = p.potential.n;
  j["mu"] = p.mu;
  j["x0"] = p.x0;
  return r;
}

void fail(Report& r, ErrorCode code, const std::string& status) {
  r.exit_status = exit_code(code);
  r.fields["status"] = status;
  r.fields["exit_code"] = r.exit_status;
}

double circular_distance(double a, double b) {
  const double d = std::fmod(std::abs(a - b), kTwoPi);
  return std::min(d, kTwoPi - d);
}

// ------------------------------------------------------------ topological

struct ChernPart {
  GapReport gap;
  ChernResult plaquette;
  std::vector<CrossingRecord> crossings;
  long from_crossings = 0;
  ChargeResult charge;
  long charge_rounded = 0;
  double reflection_defect_max = 0.0;
  double current_max = 0.0;
  int torus_z = 0, torus_s = 0;

  bool agree() const { return plaquette.chern == from_crossings && plaquette.chern == charge_rounded; }
  bool lambda_z_negative() const {
    return std::all_of(crossings.begin(), crossings.end(), [](const CrossingRecord& c) { return c.lambda_z < 0.0; });
  }
};

ChernPart chern_part(const PumpProblem& p, const GapReport& gap) {
  ChernPart c;
  c.gap = gap;
  c.torus_z = p.torus_z;
  c.torus_s = p.torus_s;
  const TorusGrid grid = build_torus(p, p.torus_z, p.torus_s, true);
  c.plaquette = chern_plaquette(grid);
  c.charge = charge_topological(grid);
  c.charge_rounded = std::lround(c.charge.charge);
  c.crossings = find_crossings(p, p.x0);
  c.from_crossings = chern_from_crossings(c.crossings);

  // spot checks at eight phases
  constexpr int m = 8;
  std::vector<double> defect(m), current(m);
  parallel_for(m, [&](int i) {
    const double s = kTwoPi * i / m;
    const cplx z = grid.contour.nodes[(grid.contour.size() * i) / m];
    defect[i] = reflection_defect(p, z, s, p.x0);
    current[i] = std::abs(persistent_current(p, s, p.x0, p.z_grid).value);
  });
  c.reflection_defect_max = *std::max_element(defect.begin(), defect.end());
  c.current_max = *std::max_element(current.begin(), current.end());
  return c;
}

void chern_fields(Json& j, const ChernPart& c) {
  j["gap_margin"] = c.gap.margin;
  j["gap_s_worst"] = c.gap.s_worst;
  j["torus_z"] = c.torus_z;
  j["torus_s"] = c.torus_s;
  j["chern_plaquette"] = c.plaquette.chern;
  j["chern_plaquette_raw"] = c.plaquette.raw;
  j["chern_plaquette_residual"] = c.plaquette.residual;
  j["plaquette_max_phase"] = c.plaquette.max_phase;
  j["plaquette_min_link_det"] = c.plaquette.min_link_det;
  j["chern_crossings"] = c.from_crossings;
  j["crossing_count"] = c.crossings.size();
  j["charge_topological"] = c.charge.charge;
  j["charge_topological_imag"] = c.charge.imag_residual;
  j["charge_topological_rounded"] = c.charge_rounded;
  j["topological_integers_agree"] = c.agree();
  j["crossings_lambda_z_negative"] = c.lambda_z_negative();
  j["reflection_defect_max"] = c.reflection_defect_max;
  j["persistent_current_max"] = c.current_max;
}

void chern_tables(Report& r, const ChernPart& c) {
  CsvTable gap{"gap", {"s", "margin"}, {}};
  for (std::size_t i = 0; i < c.gap.s.size(); ++i) gap.rows.push_back({c.gap.s[i], c.gap.margins[i]});
  CsvTable cr{"crossings", {"s_star", "lambda_s", "lambda_z", "lambda_z_quadratic", "w", "residual"}, {}};
  for (const auto& x : c.crossings)
    cr.rows.push_back({x.s_star, x.lambda_s, x.lambda_z, x.lambda_z_quadratic, static_cast<double>(x.w), x.residual});
  r.tables.push_back(std::move(gap));
  r.tables.push_back(std::move(cr));
}

// ------------------------------------------------------------- scattering

struct LengthRow {
  double length = 0.0;
  BptResult bpt;
  double variance = 0.0;
  double unitarity_max = 0.0;
  double r_gap_max = 0.0;
};

struct ScatterPart {
  GapReport gap;
  std::vector<LengthRow> rows;
  CinqueTable cinque;
  WindingResult winding;
  double halfline_unitarity_max = 0.0;
  double halfline_residual_max = 0.0;
  int s_samples = 0;

  bool variance_decreasing() const {
    for (std::size_t i = 1; i < rows.size(); ++i)
      if (rows[i].variance > (1.0 + kVarianceEnvelope) * rows[i - 1].variance + kVarianceFloor) return false;
    return true;
  }
};

std::vector<double> physical_lengths(const RunConfig& cfg) {
  std::vector<double> out = cfg.run.lengths;
  const PotentialSpec& v = cfg.problem.potential;
  if (cfg.run.lengths_in_periods && v.structure == Structure::Periodic)
    for (double& L : out) L *= v.period;
  return out;
}

ScatterPart scatter_part(const RunConfig& cfg, const GapReport& gap) {
  const PumpProblem& p = cfg.problem;
  ScatterPart sp;
  sp.gap = gap;
  const int ns = p.s_grid + p.s_grid % 2;  // BPT quadrature wants an even count
  sp.s_samples = ns;
  const int n = p.potential.n;

  std::vector<Reflection> half(ns);
  parallel_for(ns, [&](int k) { half[k] = reflection_halfline(p, kTwoPi * k / ns); });
  std::vector<CMatrix> refl(ns);
  for (int k = 0; k < ns; ++k) {
    refl[k] = half[k].r;
    sp.halfline_unitarity_max = std::max(sp.halfline_unitarity_max, half[k].unitarity);
    sp.halfline_residual_max = std::max(sp.halfline_residual_max, half[k].residual);
  }
  sp.winding = winding_det_r(p, refl);

  const std::vector<double> lengths = physical_lengths(cfg);
  for (double L : lengths) {
    std::vector<CMatrix> samples(ns);
    std::vector<double> unit(ns), gapr(ns);
    parallel_for(ns, [&](int k) {
      const ScatteringMatrix sm = s_matrix_finite(p, kTwoPi * k / ns, L);
      samples[k] = sm.full();
      unit[k] = sm.unitarity;
      gapr[k] = (sm.r - refl[k]).norm();
    });
    LengthRow row;
    row.length = L;
    row.bpt = bpt_charge(samples, n);
    row.variance = bpt_variance(samples, n);
    row.unitarity_max = *std::max_element(unit.begin(), unit.end());
    row.r_gap_max = *std::max_element(gapr.begin(), gapr.end());
    sp.rows.push_back(row);
  }
  sp.cinque = verify_cinque(p, 0.0, lengths);
  return sp;
}

void scatter_fields(Json& j, const ScatterPart& sp) {
  j["gap_margin"] = sp.gap.margin;
  j["gap_s_worst"] = sp.gap.s_worst;
  j["s_samples"] = sp.s_samples;
  j["winding_det_r"] = sp.winding.winding;
  j["winding_residual"] = sp.winding.residual;
  j["r_crossing_count"] = sp.winding.crossings.size();
  j["r_crossing_sum"] = sp.winding.crossing_sum;
  j["halfline_unitarity_max"] = sp.halfline_unitarity_max;
  j["halfline_residual_max"] = sp.halfline_residual_max;
  const LengthRow& last = sp.rows.back();
  j["length_max"] = last.length;
  j["bpt_charge"] = last.bpt.charge;
  j["bpt_imag_residual"] = last.bpt.imag_residual;
  j["bpt_half_grid_charge"] = last.bpt.half_grid_charge;
  j["bpt_variance"] = last.variance;
  j["bpt_variance_decreasing"] = sp.variance_decreasing();
  j["r_gap_max"] = last.r_gap_max;
  double unit = 0.0;
  for (const auto& row : sp.rows) unit = std::max(unit, row.unitarity_max);
  j["unitarity_max"] = unit;
  j["transmission_s"] = sp.cinque.s;
  j["transmission_log_slope"] = sp.cinque.t_slope;
  j["reflection_gap_log_slope"] = sp.cinque.r_slope;
  j["transmission_decreasing"] = sp.cinque.t_decreasing;
}

void scatter_tables(Report& r, const ScatterPart& sp) {
  CsvTable phase{"det_r_phase", {"s", "phase"}, {}};
  for (std::size_t k = 0; k < sp.winding.s.size(); ++k) phase.rows.push_back({sp.winding.s[k], sp.winding.phase[k]});
  CsvTable cross{"r_crossings", {"s", "direction"}, {}};
  for (const auto& c : sp.winding.crossings) cross.rows.push_back({c.s, static_cast<double>(c.direction)});
  CsvTable trans{"transmission", {"length", "t_norm", "tp_norm", "r_gap", "rp_gap", "unitarity"}, {}};
  for (const auto& row : sp.cinque.rows)
    trans.rows.push_back({row.length, row.t_norm, row.tp_norm, row.r_gap, row.rp_gap, row.unitarity});
  CsvTable bpt{"bpt",
               {"length", "charge", "imag_residual", "half_grid_charge", "variance", "unitarity_max", "r_gap_max"},
               {}};
  for (const auto& row : sp.rows)
    bpt.rows.push_back({row.length, row.bpt.charge, row.bpt.imag_residual, row.bpt.half_grid_charge, row.variance,
                        row.unitarity_max, row.r_gap_max});
  r.tables.push_back(std::move(phase));
  r.tables.push_back(std::move(cross));
  r.tables.push_back(std::move(trans));
  r.tables.push_back(std::move(bpt));
}

// each crossing s_star is matched to one R crossing within one s cell,
// travelling in the direction -sgn(lambda_s)
struct Colocation {
  bool located = true;
  bool directions = true;
  double max_distance = 0.0;
};

Colocation colocate(const std::vector<CrossingRecord>& cr, const std::vector<RCrossing>& rc, int ns) {
  Colocation out;
  if (cr.size() != rc.size()) out.located = false;
  std::vector<bool> used(rc.size(), false);
  const double cell = kTwoPi / ns;
  for (const auto& c : cr) {
    int best = -1;
    double dist = kTwoPi;
    for (std::size_t i = 0; i < rc.size(); ++i) {
      const double d = circular_distance(c.s_star, rc[i].s);
      if (!used[i] && d < dist) {
        dist = d;
        best = static_cast<int>(i);
      }
    }
    if (best < 0 || dist > cell) {
      out.located = false;
      continue;
    }
    used[best] = true;
    out.max_distance = std::max(out.max_distance, dist);
    if (rc[best].direction != (c.lambda_s < 0.0 ? 1 : -1)) out.directions = false;
  }
  return out;
}

// -------------------------------------------------------------- adiabatic

std::uint64_t family_seed(std::uint64_t seed, int k) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(k)};
  std::uint32_t w[2];
  seq.generate(w, w + 2);
  return (static_cast<std::uint64_t>(w[0]) << 32) | w[1];
}

struct FamilyRun {
  double gap = 0.0;
  double p1_difference = 0.0;
  double conds = 0.0;
  std::vector<ExpansionError> sweep;
};

}  // namespace

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void apply_overrides(RunConfig& cfg, std::optional<std::uint64_t> seed, double tol_scale) {
  if (!(tol_scale > 0.0) || !std::isfinite(tol_scale))
    throw Error(ErrorCode::ValidationError, "--tol-scale must be positive");
  if (seed) cfg.run.seed = *seed;
  cfg.problem.tol = cfg.problem.tol.scaled(tol_scale);
  cfg.run.bpt_tolerance *= tol_scale;
  cfg.tol_scale *= tol_scale;
}

Report run_chern(const RunConfig& cfg) {
  Report r = start("chern", cfg);
  const ChernPart c = chern_part(cfg.problem, verify_gap(cfg.problem));
  chern_fields(r.fields, c);
  chern_tables(r, c);
  if (!c.agree()) fail(r, ErrorCode::EquivalenceFailed, "disagreement");
  return r;
}

Report run_scatter(const RunConfig& cfg) {
  Report r = start("scatter", cfg);
  const ScatterPart sp = scatter_part(cfg, verify_gap(cfg.problem));
  scatter_fields(r.fields, sp);
  scatter_tables(r, sp);
  return r;
}

Report run_compare(const RunConfig& cfg) {
  Report r = start("compare", cfg);
  const GapReport gap = verify_gap(cfg.problem);
  const ChernPart c = chern_part(cfg.problem, gap);
  const ScatterPart sp = scatter_part(cfg, gap);
  chern_fields(r.fields, c);
  scatter_fields(r.fields, sp);
  chern_tables(r, c);
  scatter_tables(r, sp);

  const long chern = c.plaquette.chern;
  const bool integers = c.agree() && sp.winding.winding == chern;
  const double deviation = std::abs(sp.rows.back().bpt.charge - static_cast<double>(chern));
  const bool bpt_ok = deviation <= cfg.run.bpt_tolerance;
  const Colocation co = colocate(c.crossings, sp.winding.crossings, sp.s_samples);
  Json& j = r.fields;
  j["integers_agree"] = integers;
  j["bpt_deviation"] = deviation;
  j["bpt_within_tolerance"] = bpt_ok;
  j["crossings_colocated"] = co.located;
  j["crossing_directions_match"] = co.directions;
  j["crossing_max_distance"] = co.max_distance;
  j["equivalence"] = integers && bpt_ok;
  if (!(integers && bpt_ok)) fail(r, ErrorCode::EquivalenceFailed, "equivalence_failed");
  return r;
}

Report run_adiabatic(const RunConfig& cfg) {
  Report r = start("adiabatic", cfg);
  const RunSettings& rs = cfg.run;
  std::vector<FamilyRun> runs(rs.families);
  parallel_for(rs.families, [&](int k) {
    const MatrixFamily f = random_family(rs.dimension, rs.filled, family_seed(rs.seed, k), rs.gap_min);
    FamilyRun& fr = runs[k];
    fr.gap = f.gap();
    for (double s : {rs.s_start, rs.s_end}) {
      const CMatrix p1 = p1_resolvent(f, s);
      fr.p1_difference = std::max(fr.p1_difference, (p1 - p1_commutator(f, s)).norm());
      fr.conds = std::max(fr.conds, conds_residual(f, s, p1).max());
    }
    fr.sweep = expansion_sweep(f, rs.epsilons, rs.s_start, rs.s_end, rs.window, rs.window_samples);
  });

  CsvTable fam{"families", {"family", "gap", "p1_difference", "conds_residual"}, {}};
  CsvTable exp{"expansion",
               {"family", "eps", "windowed_rms", "windowed_rms_p0", "window_max", "at_end", "at_end_p0", "ratio",
                "ratio_p0"},
               {}};
  double p1_max = 0.0, conds_max = 0.0;
  double rmin = INFINITY, rmax = -INFINITY, r0min = INFINITY, r0max = -INFINITY;
  int fails = 0, fails0 = 0, passing = 0;
  const double nan = std::nan("");
  for (int k = 0; k < rs.families; ++k) {
    const FamilyRun& fr = runs[k];
    p1_max = std::max(p1_max, fr.p1_difference);
    conds_max = std::max(conds_max, fr.conds);
    fam.rows.push_back({static_cast<double>(k), fr.gap, fr.p1_difference, fr.conds});
    bool ok = true;
    for (std::size_t i = 0; i < fr.sweep.size(); ++i) {
      const ExpansionError& e = fr.sweep[i];
      double ratio = nan, ratio0 = nan;
      if (i > 0) {
        ratio = fr.sweep[i - 1].windowed_rms / e.windowed_rms;
        ratio0 = fr.sweep[i - 1].windowed_rms_p0 / e.windowed_rms_p0;
        rmin = std::min(rmin, ratio);
        rmax = std::max(rmax, ratio);
        r0min = std::min(r0min, ratio0);
        r0max = std::max(r0max, ratio0);
        if (!(ratio >= kRatioLo && ratio <= kRatioHi)) {
          ++fails;
          ok = false;
        }
        if (!(ratio0 >= kRatioP0Lo && ratio0 <= kRatioP0Hi)) {
          ++fails0;
          ok = false;
        }
      }
      exp.rows.push_back({static_cast<double>(k), e.eps, e.windowed_rms, e.windowed_rms_p0, e.window_max, e.at_end,
                          e.at_end_p0, ratio, ratio0});
    }
    if (ok) ++passing;
  }
  Json& j = r.fields;
  j["families"] = rs.families;
  j["dimension"] = rs.dimension;
  j["filled"] = rs.filled;
  j["gap_min"] = rs.gap_min;
  j["s_start"] = rs.s_start;
  j["s_end"] = rs.s_end;
  j["window"] = rs.window;
  j["window_samples"] = rs.window_samples;
  j["eps_count"] = rs.epsilons.size();
  j["eps_max"] = *std::max_element(rs.epsilons.begin(), rs.epsilons.end());
  j["eps_min"] = *std::min_element(rs.epsilons.begin(), rs.epsilons.end());
  j["p1_difference_max"] = p1_max;
  j["conds_residual_max"] = conds_max;
  if (rs.epsilons.size() > 1) {
    j["ratio_min"] = rmin;
    j["ratio_max"] = rmax;
    j["ratio_p0_min"] = r0min;
    j["ratio_p0_max"] = r0max;
  }
  j["ratio_window_lo"] = kRatioLo;
  j["ratio_window_hi"] = kRatioHi;
  j["ratio_p0_window_lo"] = kRatioP0Lo;
  j["ratio_p0_window_hi"] = kRatioP0Hi;
  j["ratio_failures"] = fails;
  j["ratio_p0_failures"] = fails0;
  j["families_passing"] = passing;
  r.tables.push_back(std::move(fam));
  r.tables.push_back(std::move(exp));
  return r;
}

Report run_presets() {
  RunConfig cfg;
  cfg.hash = fnv1a("");
  Report r = start("presets", cfg);
  for (const char* key : {"potential", "structure", "channels", "mu", "x0", "seed"}) r.fields.erase(key);
  const auto& cat = preset_catalog();
  r.fields["preset_count"] = cat.size();
  for (const PresetInfo& p : cat) {
    r.fields[p.name + "_summary"] = p.summary;
    for (const auto& [k, v] : p.defaults) r.fields[p.name + "_" + k] = v;
  }
  return r;
}

Report error_report(const std::string& command, const RunConfig* cfg, const Error& err) {
  Report r;
  if (cfg) {
    r = start(command, *cfg);
  } else {
    r.command = command;
    r.fields["command"] = command;
  }
  r.exit_status = exit_code(err.code());
  r.fields["status"] = std::string(error_name(err.code()));
  r.fields["exit_code"] = r.exit_status;
  r.fields["message"] = err.what();
  if (std::isfinite(err.detail())) r.fields["detail"] = err.detail();
  return r;
}

std::string json_text(const Report& report) { return report.fields.dump(2) + "\n"; }

std::string csv_text(const Report& report, const CsvTable& table) {
  std::string out;
  const Json& j = report.fields;
  if (j.contains("config_hash")) out += "# config_hash " + j["config_hash"].get<std::string>() + "\n";
  std::string tol;
  for (const auto& [k, v] : j.items())
    if (k.rfind("tol_", 0) == 0 && v.is_number()) tol += (tol.empty() ? "" : " ") + k + "=" + format_number(v.get<double>());
  if (!tol.empty()) out += "# " + tol + "\n";
  for (std::size_t c = 0; c < table.columns.size(); ++c) out += (c ? "," : "") + table.columns[c];
  out += "\n";
  for (const auto& row : table.rows) {
    for (std::size_t c = 0; c < row.size(); ++c) out += (c ? "," : "") + format_number(row[c]);
    out += "\n";
  }
  return out;
}

std::vector<std::filesystem::path> write_report(const Report& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  auto put = [&](const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    f << text;
    if (!f) throw Error(ErrorCode::ValidationError, "cannot write " + path.string());
    written.push_back(path);
  };
  put(dir / (report.command + ".json"), json_text(report));
  for (const CsvTable& t : report.tables) put(dir / (report.command + "_" + t.name + ".csv"), csv_text(report, t));
  return written;
}

}  // namespace qpump
