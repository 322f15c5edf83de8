#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rpfgsm/tensor.hpp"

namespace rpfgsm::eval {

struct ReportRow {
  std::string attack;
  std::string variant_mode;
  std::string seen_set;
  std::string eval_model;
  std::string defense;
  double top1_misleading = 0;
  double top5_misleading = 0;
  double detectability = 0;
  double psnr_mean = 0;
  double psnr_std = 0;

  friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

struct AttackFailure {
  std::string attack;
  std::size_t image = 0;
  std::string message;
};

struct EvalReport {
  std::vector<ReportRow> rows;
  std::map<std::string, double> thresholds;  // defense kind -> tau
  nlohmann::json config;                     // echo of the run config
  std::uint64_t seed = 0;
  std::vector<AttackFailure> failures;
  nlohmann::json notes = nlohmann::json::object();
};

inline constexpr const char* kReportHeader =
    "attack,variant_mode,seen_set,eval_model,defense,top1_misleading,top5_misleading,"
    "detectability,psnr_mean,psnr_std";

namespace detail {

inline std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  std::string s = buf;
  if (s == "-0.0" || s == "-0.00") s.erase(0, 1);
  return s;
}

inline void check_field(const std::string& f) {
  if (f.find_first_of(",\n\r\"") != std::string::npos) {
    throw Error("report field '" + f + "' contains a CSV delimiter");
  }
}

}  // namespace detail

/// CSV text: header, then one line per row; rates with one decimal, PSNR with
/// two; LF line endings.
inline std::string format_csv(const EvalReport& report) {
  std::string out = std::string(kReportHeader) + "\n";
  for (const auto& r : report.rows) {
    for (const auto* f : {&r.attack, &r.variant_mode, &r.seen_set, &r.eval_model, &r.defense}) {
      detail::check_field(*f);
    }
    out += r.attack + "," + r.variant_mode + "," + r.seen_set + "," + r.eval_model + "," +
           r.defense + "," + detail::fixed(r.top1_misleading, 1) + "," +
           detail::fixed(r.top5_misleading, 1) + "," + detail::fixed(r.detectability, 1) + "," +
           detail::fixed(r.psnr_mean, 2) + "," + detail::fixed(r.psnr_std, 2) + "\n";
  }
  return out;
}

inline std::vector<ReportRow> parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kReportHeader) throw Error("report CSV: bad header");
  std::vector<ReportRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 10) throw Error("report CSV: expected 10 fields in '" + line + "'");
    ReportRow r{f[0], f[1], f[2], f[3], f[4]};
    r.top1_misleading = std::stod(f[5]);
    r.top5_misleading = std::stod(f[6]);
    r.detectability = std::stod(f[7]);
    r.psnr_mean = std::stod(f[8]);
    r.psnr_std = std::stod(f[9]);
    rows.push_back(std::move(r));
  }
  return rows;
}

inline nlohmann::json report_metadata(const EvalReport& report) {
  nlohmann::json j;
  j["thresholds"] = report.thresholds;
  j["config"] = report.config;
  j["seed"] = report.seed;
  j["failures"] = nlohmann::json::array();
  for (const auto& f : report.failures) {
    j["failures"].push_back({{"attack", f.attack}, {"image", f.image}, {"message", f.message}});
  }
  j["notes"] = report.notes;
  return j;
}

/// Writes the CSV to `csv_path` and the metadata JSON next to it (same stem,
/// .json extension).
inline void write_report(const EvalReport& report, const std::filesystem::path& csv_path) {
  if (csv_path.has_parent_path()) std::filesystem::create_directories(csv_path.parent_path());
  {
    std::ofstream out(csv_path, std::ios::binary);
    if (!out) throw Error("cannot write report '" + csv_path.string() + "'");
    out << format_csv(report);
  }
  std::filesystem::path json_path = csv_path;
  json_path.replace_extension(".json");
  std::ofstream out(json_path, std::ios::binary);
  if (!out) throw Error("cannot write report metadata '" + json_path.string() + "'");
  out << report_metadata(report).dump(2) << "\n";
}

}  // namespace rpfgsm::eval
