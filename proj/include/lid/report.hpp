#pragma once

// Machine-readable run reports and the per-epoch metrics stream. Reports
// round-trip through JSON without loss; epoch records are also emitted as
// line-delimited JSON so cost curves can be plotted by any external tool.

#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lid/error.hpp"
#include "lid/training.hpp"

namespace lid {

struct RunReport {
  std::string command;
  std::map<std::string, std::string> config;  // echo of the effective configuration
  uint64_t seed = 0;
  std::vector<EpochRecord> epochs;
  std::optional<double> final_challenge_cost;  // report scale
  std::optional<double> oos_ratio_before;
  std::optional<double> oos_ratio_after;
  double wall_clock_seconds = 0;
};

inline nlohmann::json epoch_to_json(const EpochRecord& r) {
  nlohmann::json j{{"epoch", r.epoch}, {"c1", r.c1},       {"c2", r.c2},
                   {"cd_total", r.cd_total}, {"total", r.total}};
  if (std::isnan(r.eval_cost))
    j["eval_cost"] = nullptr;
  else
    j["eval_cost"] = r.eval_cost;
  return j;
}

inline EpochRecord epoch_from_json(const nlohmann::json& j) {
  EpochRecord r;
  r.epoch = j.at("epoch").get<size_t>();
  r.c1 = j.at("c1").get<double>();
  r.c2 = j.at("c2").get<double>();
  r.cd_total = j.at("cd_total").get<double>();
  r.total = j.at("total").get<double>();
  r.eval_cost = j.at("eval_cost").is_null() ? std::numeric_limits<double>::quiet_NaN()
                                            : j.at("eval_cost").get<double>();
  return r;
}

inline nlohmann::json report_to_json(const RunReport& r) {
  nlohmann::json j;
  j["format"] = "lidnet-report-1";
  j["command"] = r.command;
  j["config"] = r.config;
  j["seed"] = r.seed;
  j["epochs"] = nlohmann::json::array();
  for (const auto& e : r.epochs) j["epochs"].push_back(epoch_to_json(e));
  auto opt = [](const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  j["final_challenge_cost"] = opt(r.final_challenge_cost);
  j["oos_ratio_before"] = opt(r.oos_ratio_before);
  j["oos_ratio_after"] = opt(r.oos_ratio_after);
  j["wall_clock_seconds"] = r.wall_clock_seconds;
  return j;
}

inline RunReport report_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "lidnet-report-1")
    throw DataError("report: unknown format '" + j.value("format", "") + "'");
  RunReport r;
  r.command = j.at("command").get<std::string>();
  r.config = j.at("config").get<std::map<std::string, std::string>>();
  r.seed = j.at("seed").get<uint64_t>();
  for (const auto& e : j.at("epochs")) r.epochs.push_back(epoch_from_json(e));
  auto opt = [&](const char* key) -> std::optional<double> {
    if (j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<double>();
  };
  r.final_challenge_cost = opt("final_challenge_cost");
  r.oos_ratio_before = opt("oos_ratio_before");
  r.oos_ratio_after = opt("oos_ratio_after");
  r.wall_clock_seconds = j.at("wall_clock_seconds").get<double>();
  return r;
}

inline void save_report(const RunReport& r, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write report '" + path + "'");
  f << report_to_json(r).dump(2) << "\n";
}

inline RunReport load_report(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open report '" + path + "'");
  nlohmann::json j;
  f >> j;
  return report_from_json(j);
}

class WallClock {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

}  // namespace lid
