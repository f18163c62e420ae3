#pragma once

// The four runs behind the command line. Each returns a flat report plus
// plot tables; nothing here touches the file system except write_report.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "qpump/config.hpp"

namespace qpump {

struct CsvTable {
  std::string name;  // file stem
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};

struct Report {
  std::string command;
  nlohmann::ordered_json fields = nlohmann::ordered_json::object();
  std::vector<CsvTable> tables;
  int exit_status = 0;
};

/// Seed and tolerance scale from the command line; the config hash is kept.
void apply_overrides(RunConfig& cfg, std::optional<std::uint64_t> seed, double tol_scale);

Report run_chern(const RunConfig& cfg);
Report run_scatter(const RunConfig& cfg);
Report run_compare(const RunConfig& cfg);
Report run_adiabatic(const RunConfig& cfg);
Report run_presets();

/// Report for a command that raised; cfg may be null when parsing failed.
Report error_report(const std::string& command, const RunConfig* cfg, const Error& err);

std::string hash_hex(std::uint64_t h);
std::string format_number(double v);  // %.17g
std::string csv_text(const Report& report, const CsvTable& table);
std::string json_text(const Report& report);

/// <dir>/<command>.json and <dir>/<command>_<table>.csv.
std::vector<std::filesystem::path> write_report(const Report& report, const std::filesystem::path& dir);

}  // namespace qpump
