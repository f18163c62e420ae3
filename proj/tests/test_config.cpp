#include <doctest.h>

#include "qpump/config.hpp"
#include "support.hpp"

using namespace qpump;

TEST_CASE("numbers with pi factors") {
  CHECK(parse_real("2*pi") == doctest::Approx(kTwoPi));
  CHECK(parse_real("pi/4") == doctest::Approx(kPi / 4));
  CHECK(parse_real("-1.5e-3") == doctest::Approx(-1.5e-3));
  CHECK_THROWS_AS(parse_real("two"), Error);
  CHECK_THROWS_AS(parse_real(""), Error);
}

TEST_CASE("complex entries and matrices") {
  CHECK(parse_complex("1+2i") == cplx(1, 2));
  CHECK(parse_complex("-i") == cplx(0, -1));
  CHECK(parse_complex("3") == cplx(3, 0));
  const CMatrix m = parse_matrix("[[1, 2-i], [2+i, -3]]");
  REQUIRE(m.rows() == 2);
  CHECK(m(0, 1) == cplx(2, -1));
  CHECK(m(1, 0) == cplx(2, 1));
  CHECK(parse_matrix("0.5").rows() == 1);
  CHECK_THROWS_AS(parse_matrix("[[1, 2], [3]]"), Error);
}

TEST_CASE("a preset config round-trips into the preset") {
  const std::string text =
      "[potential]\npreset = sliding_cosine\nv0 = 3\n\n[problem]\nmu = 0.9\ntorus_z = 64\n"
      "[run]\nlengths = 1, 2\nepsilons = 0.1, 0.05\nseed = 7\n";
  const RunConfig cfg = parse_run_config(text);
  CHECK(cfg.problem.mu == 0.9);
  CHECK(cfg.problem.torus_z == 64);
  CHECK(cfg.run.seed == 7);
  CHECK(cfg.run.lengths.size() == 2);
  CHECK(cfg.run.epsilons[1] == 0.05);
  const PotentialSpec want = preset("sliding_cosine", {{"v0", 3.0}});
  for (double x : {0.0, 0.7, 2.2})
    CHECK((evaluate(cfg.problem.potential, x, 0.4) - evaluate(want, x, 0.4)).norm() < 1e-15);
  CHECK(cfg.hash == fnv1a(text));
}

TEST_CASE("hash changes with any byte") {
  CHECK(fnv1a("[potential]\npreset = a") != fnv1a("[potential]\npreset = b"));
  CHECK(fnv1a("") == 14695981039346656037ull);  // published FNV-1a 64 vectors
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cull);
  CHECK(fnv1a("foobar") == 0x85944171f73967e8ull);
}

TEST_CASE("custom terms") {
  const std::string text =
      "[potential]\nstructure = constant_outside\ninterval = -1, 1\ntail = 2\n"
      "[term]\nmatrix = 1\nspace = bump 0 2\ntime = 0, 1, 0\n"
      "[problem]\nmu = 0.5\n";
  const PumpProblem p = parse_config(text);
  CHECK(p.potential.structure == Structure::ConstantOutside);
  // tail plus a bump of width 2 at 0, cos^2(pi x / 2), with time profile cos s
  CHECK(evaluate(p.potential, 0.5, 0.3)(0, 0).real() ==
        doctest::Approx(2.0 + std::pow(std::cos(kPi * 0.25), 2) * std::cos(0.3)));
  CHECK(evaluate(p.potential, 1.5, 0.3)(0, 0).real() == 2.0);
}

TEST_CASE("config errors name the line") {
  auto code_of = [](const std::string& text) {
    try {
      parse_run_config(text);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::NoConvergence;
  };
  CHECK(code_of("mu = 1\n") == ErrorCode::ParseError);
  CHECK(code_of("[potential]\npreset = sliding_cosine\n[bogus]\n") == ErrorCode::ParseError);
  CHECK(code_of("[potential]\npreset = sliding_cosine\n[problem]\nmu = 1\nmu = 2\n") == ErrorCode::ParseError);
  CHECK(code_of("[potential]\npreset = nope\n") == ErrorCode::UnknownPreset);
  CHECK(code_of("[potential]\npreset = sliding_cosine\n[problem]\nmu = -1\n") == ErrorCode::ValidationError);
  CHECK(code_of("[potential]\npreset = sliding_cosine\n[run]\nfilled = 6\n") == ErrorCode::ValidationError);
  try {
    parse_run_config("[potential]\npreset = sliding_cosine\n[problem]\nmu = x\n");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("line 4") != std::string::npos);
  }
}

TEST_CASE("default run settings") {
  const RunConfig cfg = parse_run_config("[potential]\npreset = sliding_cosine\n");
  CHECK(cfg.run.families == 20);
  CHECK(cfg.run.epsilons.size() == 3);
  CHECK(cfg.problem.s_grid == 256);
  CHECK(cfg.problem.torus_s == 128);
}
