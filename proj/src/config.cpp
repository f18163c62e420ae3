#include "qpump/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <map>
#include <sstream>

namespace qpump {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  int depth = 0;
  for (char c : s) {
    if (c == '[') ++depth;
    if (c == ']') --depth;
    if (c == sep && depth == 0) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

[[noreturn]] void bad(const std::string& what) { throw Error(ErrorCode::ParseError, what); }

double parse_factor(const std::string& f) {
  if (f.empty()) bad("empty number");
  if (lower(f) == "pi") return kPi;
  double v = 0.0;
  const char* first = f.data();
  const char* last = f.data() + f.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) bad("cannot read number '" + f + "'");
  return v;
}

struct Entry {
  int line = 0;
  std::string key, value;
};

struct Section {
  std::string name;
  int line = 0;
  std::vector<Entry> entries;
};

std::vector<Section> read_sections(const std::string& text) {
  std::vector<Section> sections;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find_first_of("#;");
    const std::string s = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (s.empty()) continue;
    if (s.front() == '[' && s.back() == ']' && s.find('=') == std::string::npos) {
      sections.push_back({lower(trim(s.substr(1, s.size() - 2))), line, {}});
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) bad("line " + std::to_string(line) + ": expected 'key = value'");
    if (sections.empty()) bad("line " + std::to_string(line) + ": entry before any [section]");
    Entry e{line, lower(trim(s.substr(0, eq))), trim(s.substr(eq + 1))};
    if (e.key.empty()) bad("line " + std::to_string(line) + ": empty key");
    for (const Entry& prev : sections.back().entries)
      if (prev.key == e.key) bad("line " + std::to_string(line) + ": duplicate key '" + e.key + "'");
    sections.back().entries.push_back(std::move(e));
  }
  return sections;
}

// Runs `fn` and re-throws parse/validation failures with line and key context.
template <class Fn>
auto with_context(const Entry& e, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& err) {
    if (err.code() != ErrorCode::ParseError) throw;
    std::string msg = err.what();
    const auto colon = msg.find(": ");
    if (colon != std::string::npos) msg = msg.substr(colon + 2);
    bad("line " + std::to_string(e.line) + ", key '" + e.key + "': " + msg);
  }
}

int parse_int(const std::string& text) {
  const double v = parse_real(text);
  if (v != std::floor(v) || std::abs(v) > 1e9) bad("expected an integer, got '" + text + "'");
  return static_cast<int>(v);
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  for (const auto& item : split(text, ',')) out.push_back(parse_real(item));
  return out;
}

SpaceProfile parse_space(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> words;
  for (std::string w; in >> w;) words.push_back(w);
  if (words.empty()) bad("empty space profile");
  const std::string kind = lower(words[0]);
  auto need = [&](std::size_t count) {
    if (words.size() != count + 1) bad("profile '" + kind + "' takes " + std::to_string(count) + " argument(s)");
  };
  SpaceProfile p;
  if (kind == "constant") {
    need(0);
    p.kind = SpaceProfile::Kind::Constant;
  } else if (kind == "cos" || kind == "sin") {
    need(1);
    p.kind = kind == "cos" ? SpaceProfile::Kind::Cos : SpaceProfile::Kind::Sin;
    p.mode = parse_int(words[1]);
  } else if (kind == "bump" || kind == "tilt") {
    need(2);
    p.kind = kind == "bump" ? SpaceProfile::Kind::Bump : SpaceProfile::Kind::Tilt;
    p.centre = parse_real(words[1]);
    p.width = parse_real(words[2]);
  } else if (kind == "step") {
    need(2);
    p.kind = SpaceProfile::Kind::Step;
    p.lo = parse_real(words[1]);
    p.hi = parse_real(words[2]);
  } else {
    bad("unknown space profile '" + words[0] + "'");
  }
  return p;
}

const Section* find_section(const std::vector<Section>& sections, const std::string& name) {
  const Section* found = nullptr;
  for (const Section& s : sections) {
    if (s.name != name) continue;
    if (found) bad("line " + std::to_string(s.line) + ": duplicate section [" + name + "]");
    found = &s;
  }
  return found;
}

void apply_problem(const Section& sec, PumpProblem& p) {
  for (const Entry& e : sec.entries) {
    with_context(e, [&] {
      if (e.key == "mu") p.mu = parse_real(e.value);
      else if (e.key == "e_below") p.e_below = parse_real(e.value);
      else if (e.key == "x_step") p.x_step = parse_real(e.value);
      else if (e.key == "x0") p.x0 = parse_real(e.value);
      else if (e.key == "s_grid") p.s_grid = parse_int(e.value);
      else if (e.key == "z_grid") p.z_grid = parse_int(e.value);
      else if (e.key == "torus_z") p.torus_z = parse_int(e.value);
      else if (e.key == "torus_s") p.torus_s = parse_int(e.value);
      else if (e.key == "contour_aspect") p.contour_aspect = parse_real(e.value);
      else bad("unknown key in [problem]");
    });
  }
}

void apply_tolerances(const Section& sec, Tolerances& t) {
  for (const Entry& e : sec.entries) {
    with_context(e, [&] {
      const double v = parse_real(e.value);
      if (!(v > 0.0)) bad("tolerances must be positive");
      if (e.key == "algebra") t.algebra = v;
      else if (e.key == "decomposition") t.decomposition = v;
      else if (e.key == "quadrature") t.quadrature = v;
      else if (e.key == "condition_cap") t.condition_cap = v;
      else if (e.key == "cluster") t.cluster = v;
      else if (e.key == "unit_circle") t.unit_circle = v;
      else if (e.key == "richardson") t.richardson = v;
      else bad("unknown key in [tolerances]");
    });
  }
}

PotentialSpec build_potential(const std::vector<Section>& sections) {
  const Section* pot = find_section(sections, "potential");
  if (!pot) bad("missing [potential] section");
  std::vector<const Section*> terms;
  for (const Section& s : sections)
    if (s.name == "term") terms.push_back(&s);

  auto preset_entry = std::find_if(pot->entries.begin(), pot->entries.end(), [](const Entry& e) { return e.key == "preset"; });
  if (preset_entry != pot->entries.end()) {
    if (!terms.empty()) bad("line " + std::to_string(terms.front()->line) + ": [term] sections cannot extend a preset");
    std::map<std::string, double> params;
    for (const Entry& e : pot->entries) {
      if (e.key == "preset") continue;
      params[e.key] = with_context(e, [&] { return parse_real(e.value); });
    }
    try {
      return preset(preset_entry->value, params);
    } catch (const Error& err) {
      throw Error(err.code(), "line " + std::to_string(preset_entry->line) + ": " + err.what());
    }
  }

  PotentialSpec spec;
  spec.name = "custom";
  bool have_tail = false;
  for (const Entry& e : pot->entries) {
    with_context(e, [&] {
      if (e.key == "structure") {
        const std::string v = lower(e.value);
        if (v == "periodic") spec.structure = Structure::Periodic;
        else if (v == "constant_outside") spec.structure = Structure::ConstantOutside;
        else bad("structure must be periodic or constant_outside");
      } else if (e.key == "channels") {
        spec.n = parse_int(e.value);
      } else if (e.key == "period") {
        spec.period = parse_real(e.value);
      } else if (e.key == "interval") {
        const auto v = parse_list(e.value);
        if (v.size() != 2) bad("interval needs two numbers");
        spec.a = v[0];
        spec.b = v[1];
      } else if (e.key == "tail") {
        spec.tail = parse_matrix(e.value);
        have_tail = true;
      } else if (e.key == "name") {
        spec.name = e.value;
      } else {
        bad("unknown key in [potential]");
      }
    });
  }
  if (spec.structure == Structure::ConstantOutside && !have_tail)
    bad("line " + std::to_string(pot->line) + ": constant_outside potential needs a tail matrix");
  if (spec.n < 1 || spec.n > 8) throw Error(ErrorCode::ValidationError, "channels must be in 1..8");

  for (const Section* sec : terms) {
    Term t;
    bool have_matrix = false;
    for (const Entry& e : sec->entries) {
      with_context(e, [&] {
        if (e.key == "matrix") {
          t.coeff = parse_matrix(e.value);
          have_matrix = true;
        } else if (e.key == "space") {
          t.space = parse_space(e.value);
        } else if (e.key == "time") {
          t.time.coeffs = parse_list(e.value);
        } else {
          bad("unknown key in [term]");
        }
      });
    }
    if (!have_matrix) bad("line " + std::to_string(sec->line) + ": [term] needs a matrix");
    spec.terms.push_back(std::move(t));
  }
  try {
    validate(spec);
  } catch (const Error& err) {
    throw Error(ErrorCode::ValidationError, std::string("[potential]: ") + err.what());
  }
  return spec;
}

}  // namespace

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

double parse_real(const std::string& text) {
  std::string s;
  for (char c : text)
    if (!std::isspace(static_cast<unsigned char>(c))) s += c;
  if (s.empty()) bad("empty number");
  double sign = 1.0;
  std::size_t pos = 0;
  while (pos < s.size() && (s[pos] == '+' || s[pos] == '-')) {
    if (s[pos] == '-') sign = -sign;
    ++pos;
  }
  // product/quotient of factors: 2*pi, pi/4, 1.5e-3
  double value = 1.0;
  char op = '*';
  std::string cur;
  auto flush = [&] {
    const double f = parse_factor(cur);
    if (op == '*') value *= f;
    else {
      if (f == 0.0) bad("division by zero in '" + text + "'");
      value /= f;
    }
    cur.clear();
  };
  for (; pos < s.size(); ++pos) {
    const char c = s[pos];
    if (c == '*' || c == '/') {
      flush();
      op = c;
    } else {
      cur += c;
    }
  }
  flush();
  return sign * value;
}

cplx parse_complex(const std::string& text) {
  std::string s;
  for (char c : text)
    if (!std::isspace(static_cast<unsigned char>(c))) s += c;
  if (s.empty()) bad("empty complex number");
  // split into signed summands, keeping exponent signs (1e-3) attached
  std::vector<std::string> parts;
  std::string cur;
  for (std::size_t k = 0; k < s.size(); ++k) {
    const char c = s[k];
    const bool exponent = k > 0 && (s[k - 1] == 'e' || s[k - 1] == 'E') && k >= 2 &&
                          (std::isdigit(static_cast<unsigned char>(s[k - 2])) || s[k - 2] == '.');
    if ((c == '+' || c == '-') && !cur.empty() && !exponent && cur != "+" && cur != "-") {
      parts.push_back(cur);
      cur.clear();
    }
    cur += c;
  }
  parts.push_back(cur);
  cplx z = 0.0;
  for (std::string p : parts) {
    if (!p.empty() && (p.back() == 'i' || p.back() == 'j')) {
      p.pop_back();
      if (p.empty() || p == "+") p += "1";
      else if (p == "-") p += "1";
      else if (p.back() == '*') p.pop_back();
      z += cplx(0.0, parse_real(p));
    } else {
      z += parse_real(p);
    }
  }
  return z;
}

CMatrix parse_matrix(const std::string& text) {
  const std::string s = trim(text);
  if (s.empty()) bad("empty matrix");
  if (s.front() != '[') return CMatrix::Constant(1, 1, parse_complex(s));
  if (s.size() < 4 || s[1] != '[' || s.back() != ']' || s[s.size() - 2] != ']')
    bad("matrix must look like [[a, b], [c, d]]");
  const auto rows = split(s.substr(1, s.size() - 2), ',');
  std::vector<std::vector<cplx>> data;
  for (const auto& r : rows) {
    if (r.size() < 2 || r.front() != '[' || r.back() != ']') bad("malformed matrix row '" + r + "'");
    std::vector<cplx> row;
    for (const auto& item : split(r.substr(1, r.size() - 2), ',')) row.push_back(parse_complex(item));
    data.push_back(std::move(row));
  }
  const std::size_t n = data.size();
  CMatrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    if (data[i].size() != n) bad("matrix must be square");
    for (std::size_t j = 0; j < n; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = data[i][j];
  }
  return m;
}

RunConfig parse_run_config(const std::string& text) {
  const auto sections = read_sections(text);
  for (const Section& s : sections) {
    static const std::vector<std::string> known{"problem", "potential", "term", "run", "tolerances"};
    if (std::find(known.begin(), known.end(), s.name) == known.end())
      bad("line " + std::to_string(s.line) + ": unknown section [" + s.name + "]");
  }
  RunConfig cfg;
  cfg.hash = fnv1a(text);
  cfg.problem.potential = build_potential(sections);
  if (const Section* sec = find_section(sections, "problem")) apply_problem(*sec, cfg.problem);
  if (const Section* sec = find_section(sections, "tolerances")) apply_tolerances(*sec, cfg.problem.tol);
  if (const Section* sec = find_section(sections, "run")) {
    RunSettings& r = cfg.run;
    for (const Entry& e : sec->entries) {
      with_context(e, [&] {
        if (e.key == "lengths") r.lengths = parse_list(e.value);
        else if (e.key == "length_unit") {
          const std::string v = lower(e.value);
          if (v != "period" && v != "absolute") bad("length_unit must be period or absolute");
          r.lengths_in_periods = v == "period";
        } else if (e.key == "epsilons") r.epsilons = parse_list(e.value);
        else if (e.key == "bpt_tolerance") r.bpt_tolerance = parse_real(e.value);
        else if (e.key == "families") r.families = parse_int(e.value);
        else if (e.key == "dimension") r.dimension = parse_int(e.value);
        else if (e.key == "filled") r.filled = parse_int(e.value);
        else if (e.key == "s_start") r.s_start = parse_real(e.value);
        else if (e.key == "s_end") r.s_end = parse_real(e.value);
        else if (e.key == "seed") {
          const double v = parse_real(e.value);
          if (v < 0 || v != std::floor(v) || v > 9.007199254740992e15) bad("seed must be a non-negative integer");
          r.seed = static_cast<std::uint64_t>(v);
        } else if (e.key == "gap_min") r.gap_min = parse_real(e.value);
        else if (e.key == "window") r.window = parse_real(e.value);
        else if (e.key == "window_samples") r.window_samples = parse_int(e.value);
        else bad("unknown key in [run]");
      });
    }
    if (r.lengths.empty()) throw Error(ErrorCode::ValidationError, "[run] lengths must not be empty");
    for (double L : r.lengths)
      if (!(L > 0.0)) throw Error(ErrorCode::ValidationError, "[run] lengths must be positive");
    for (double eps : r.epsilons)
      if (!(eps > 0.0)) throw Error(ErrorCode::ValidationError, "[run] epsilons must be positive");
    if (!(r.bpt_tolerance > 0.0)) throw Error(ErrorCode::ValidationError, "[run] bpt_tolerance must be positive");
    if (r.families < 1) throw Error(ErrorCode::ValidationError, "[run] families must be >= 1");
    if (r.dimension < 2 || r.filled < 1 || r.filled >= r.dimension)
      throw Error(ErrorCode::ValidationError, "[run] need 1 <= filled < dimension");
    if (!(r.s_end > r.s_start)) throw Error(ErrorCode::ValidationError, "[run] need s_start < s_end");
    if (!(r.gap_min > 0.0)) throw Error(ErrorCode::ValidationError, "[run] gap_min must be positive");
    if (!(r.window >= 0.0)) throw Error(ErrorCode::ValidationError, "[run] window must be non-negative");
    if (r.window_samples < 2) throw Error(ErrorCode::ValidationError, "[run] window_samples must be >= 2");
  }
  validate(cfg.problem);
  return cfg;
}

PumpProblem parse_config(const std::string& text) { return parse_run_config(text).problem; }

}  // namespace qpump
