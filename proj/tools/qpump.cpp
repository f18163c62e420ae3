// qpump: pumped charge from the Chern number of the Wronskian bundle and
// from the scattering matrix, and the adiabatic expansion check.
//
//   qpump chern|scatter|compare|adiabatic --config FILE [--out DIR]
//         [--threads N] [--seed N] [--tol-scale X]
//   qpump presets list

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "qpump/parallel.hpp"
#include "qpump/pipeline.hpp"

namespace {

struct Options {
  std::string config;
  std::string out = "qpump_out";
  int threads = 0;
  std::optional<std::uint64_t> seed;
  double tol_scale = 1.0;
};

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw qpump::Error(qpump::ErrorCode::ValidationError, "cannot read config " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

int finish(const qpump::Report& report, const std::string& out) {
  for (const auto& path : qpump::write_report(report, out)) std::cout << path.string() << "\n";
  const auto& f = report.fields;
  std::cout << report.command << ": " << f["status"].get<std::string>() << "\n";
  return report.exit_status;
}

int run(const std::string& command, const Options& opt, qpump::Report (*fn)(const qpump::RunConfig&)) {
  qpump::set_threads(opt.threads);
  std::optional<qpump::RunConfig> cfg;
  try {
    cfg = qpump::parse_run_config(read_file(opt.config));
    qpump::apply_overrides(*cfg, opt.seed, opt.tol_scale);
    return finish(fn(*cfg), opt.out);
  } catch (const qpump::Error& e) {
    std::cerr << "qpump " << command << ": " << e.what() << "\n";
    try {
      qpump::write_report(qpump::error_report(command, cfg ? &*cfg : nullptr, e), opt.out);
    } catch (const std::exception& w) {
      std::cerr << "qpump: " << w.what() << "\n";
    }
    return qpump::exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "qpump " << command << ": " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adiabatic pump charge: Chern number vs scattering"};
  app.require_subcommand(1);
  Options opt;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config, "config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", opt.out, "output directory")->capture_default_str();
    sub->add_option("--threads", opt.threads, "worker threads (0: runtime default)")->check(CLI::NonNegativeNumber);
    sub->add_option("--seed", opt.seed, "overrides [run] seed");
    sub->add_option("--tol-scale", opt.tol_scale, "multiplies the tolerance ladder")->capture_default_str();
  };

  struct Cmd {
    const char* name;
    const char* help;
    qpump::Report (*fn)(const qpump::RunConfig&);
  };
  const Cmd cmds[] = {
      {"chern", "plaquette Chern number, crossing count and the charge integral", qpump::run_chern},
      {"scatter", "finite-L scattering, BPT charge and variance, winding of det R", qpump::run_scatter},
      {"compare", "both routes; exit 5 unless they agree", qpump::run_compare},
      {"adiabatic", "P0 + eps P1 expansion on random matrix families", qpump::run_adiabatic},
  };
  std::vector<std::pair<CLI::App*, const Cmd*>> subs;
  for (const Cmd& c : cmds) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    add_common(sub);
    subs.emplace_back(sub, &c);
  }

  CLI::App* presets = app.add_subcommand("presets", "built-in potentials");
  presets->require_subcommand(1);
  CLI::App* list = presets->add_subcommand("list", "print the preset catalog");
  std::string presets_out;
  list->add_option("--out", presets_out, "also write presets.json here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  if (*list) {
    const qpump::Report r = qpump::run_presets();
    std::cout << qpump::json_text(r);
    if (!presets_out.empty()) qpump::write_report(r, presets_out);
    return 0;
  }
  for (const auto& [sub, cmd] : subs)
    if (*sub) return run(cmd->name, opt, cmd->fn);
  return 2;
}
