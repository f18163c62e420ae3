#include <doctest.h>

#include <fstream>
#include <sstream>

#include "qpump/pipeline.hpp"
#include "support.hpp"

using namespace qpump;

namespace {

const char* kSmallSliding =
    "[potential]\npreset = sliding_cosine\n"
    "[problem]\nmu = 1\ns_grid = 128\ntorus_z = 24\ntorus_s = 24\nz_grid = 64\n"
    "[run]\nlengths = 2, 4\n";

const char* kSmallStatic =
    "[potential]\nstructure = periodic\nperiod = 2*pi\n"
    "[term]\nmatrix = 3\nspace = constant\n[term]\nmatrix = 4\nspace = cos 1\n"
    "[problem]\nmu = 1\ns_grid = 32\ntorus_z = 16\ntorus_s = 16\nz_grid = 32\n"
    "[run]\nlengths = 1, 2\n";

bool flat(const nlohmann::ordered_json& j) {
  for (const auto& [k, v] : j.items()) {
    if (v.is_object() || v.is_array()) return false;
    for (char c : k)
      if (!(std::islower(static_cast<unsigned char>(c)) || std::isdigit(static_cast<unsigned char>(c)) || c == '_'))
        return false;
  }
  return true;
}

}  // namespace

TEST_CASE("numbers carry 17 significant digits") {
  CHECK(format_number(0.1) == "0.10000000000000001");
  CHECK(format_number(1.0) == "1");
  CHECK(format_number(-0.5) == "-0.5");
  qtest::for_all(50, 71, [](qtest::Gen& g, int) {
    const double v = g.normal() * std::pow(10.0, g.integer(-20, 20));
    CHECK(std::stod(format_number(v)) == v);
  });
  CHECK(hash_hex(0xabcull) == "0000000000000abc");
}

TEST_CASE("csv text: hash and tolerance comments, header, rows") {
  RunConfig cfg = parse_run_config(kSmallStatic);
  Report r = error_report("chern", &cfg, Error(ErrorCode::GapClosed, "x", 0.5));
  r.tables.push_back({"t", {"a", "b"}, {{1.0, 0.25}, {2.0, -1.0}}});
  std::istringstream in(csv_text(r, r.tables[0]));
  std::string line;
  std::getline(in, line);
  CHECK(line == "# config_hash " + hash_hex(cfg.hash));
  std::getline(in, line);
  CHECK(line.find("tol_algebra=") != std::string::npos);
  CHECK(line.find("tol_bpt=") != std::string::npos);
  std::getline(in, line);
  CHECK(line == "a,b");
  std::getline(in, line);
  CHECK(line == "1,0.25");
}

TEST_CASE("error reports carry the exit code and stay flat") {
  RunConfig cfg = parse_run_config(kSmallStatic);
  const Report r = error_report("scatter", &cfg, Error(ErrorCode::GapClosed, "closed", 1.25));
  CHECK(r.exit_status == 3);
  CHECK(r.fields["status"] == "GapClosed");
  CHECK(r.fields["detail"] == 1.25);
  CHECK(flat(r.fields));
  const Report bare = error_report("chern", nullptr, Error(ErrorCode::ParseError, "bad"));
  CHECK(bare.exit_status == 2);
  CHECK(flat(bare.fields));
}

TEST_CASE("overrides: seed and tolerance scale") {
  RunConfig cfg = parse_run_config(kSmallStatic);
  const double alg = cfg.problem.tol.algebra, bpt = cfg.run.bpt_tolerance;
  apply_overrides(cfg, 42u, 2.0);
  CHECK(cfg.run.seed == 42);
  CHECK(cfg.problem.tol.algebra == doctest::Approx(2 * alg));
  CHECK(cfg.run.bpt_tolerance == doctest::Approx(2 * bpt));
  CHECK(cfg.tol_scale == 2.0);
  CHECK_THROWS_AS(apply_overrides(cfg, std::nullopt, -1.0), Error);
}

TEST_CASE("static config: every charge is zero") {
  const RunConfig cfg = parse_run_config(kSmallStatic);
  const Report r = run_compare(cfg);
  CHECK(r.exit_status == 0);
  CHECK(r.fields["chern_plaquette"] == 0);
  CHECK(r.fields["chern_crossings"] == 0);
  CHECK(r.fields["winding_det_r"] == 0);
  CHECK(std::abs(r.fields["bpt_charge"].get<double>()) < 1e-12);
  CHECK(flat(r.fields));
}

TEST_CASE("small sliding cosine: compare agrees and is deterministic") {
  const RunConfig cfg = parse_run_config(kSmallSliding);
  const Report a = run_compare(cfg), b = run_compare(cfg);
  CHECK(a.exit_status == 0);
  CHECK(a.fields["equivalence"] == true);
  CHECK(a.fields["chern_plaquette"] == 1);
  CHECK(json_text(a) == json_text(b));
  REQUIRE(a.tables.size() == b.tables.size());
  for (std::size_t i = 0; i < a.tables.size(); ++i) CHECK(csv_text(a, a.tables[i]) == csv_text(b, b.tables[i]));
}

TEST_CASE("an impossible BPT tolerance fails the comparison with exit 5") {
  const RunConfig cfg = parse_run_config(std::string(kSmallSliding) + "bpt_tolerance = 1e-12\n");
  const Report r = run_compare(cfg);
  CHECK(r.exit_status == 5);
  CHECK(r.fields["status"] == "equivalence_failed");
}

TEST_CASE("gapless config raises GapClosed") {
  const RunConfig cfg = parse_run_config("[potential]\npreset = sliding_cosine\n[problem]\nmu = 5.1\ns_grid = 32\n");
  try {
    run_chern(cfg);
    FAIL("expected GapClosed");
  } catch (const Error& e) {
    CHECK(exit_code(e.code()) == 3);
  }
}

TEST_CASE("adiabatic report on two families") {
  RunConfig cfg = parse_run_config("[potential]\npreset = sliding_cosine\n[run]\nfamilies = 2\ndimension = 4\nfilled = 2\n");
  const Report r = run_adiabatic(cfg);
  CHECK(r.fields["p1_difference_max"].get<double>() < 1e-10);
  CHECK(r.fields["conds_residual_max"].get<double>() < 1e-8);
  CHECK(r.tables.size() == 2);
  CHECK(r.tables[1].rows.size() == 2 * cfg.run.epsilons.size());
  CHECK(flat(r.fields));
}

TEST_CASE("presets report and written files") {
  const Report r = run_presets();
  CHECK(r.fields["preset_count"] == preset_catalog().size());
  CHECK(r.fields.contains("sliding_cosine_v0"));
  CHECK(flat(r.fields));
  const auto dir = std::filesystem::temp_directory_path() / "qpump_test_out";
  std::filesystem::remove_all(dir);
  const auto files = write_report(r, dir);
  REQUIRE(files.size() == 1);
  std::ifstream f(files[0]);
  std::stringstream ss;
  ss << f.rdbuf();
  CHECK(ss.str() == json_text(r));
  std::filesystem::remove_all(dir);
}
