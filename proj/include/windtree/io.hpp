#pragma once

// File formats. CSV reals are written with 17 significant digits so that a
// read/write cycle reproduces the text exactly.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "windtree/billiard.hpp"
#include "windtree/experiment.hpp"
#include "windtree/hmm.hpp"

namespace windtree::io {

using nlohmann::json;

std::string format_real(double v);
/// Strict parse of a full field; throws FormatError otherwise.
double parse_real(std::string_view field);
std::int64_t parse_int(std::string_view field);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

/// Splits on ',' and '\n'; every row must have as many fields as the header.
CsvTable parse_csv(std::string_view text);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

// Trajectory: header k,x,y,t,wall; row k = 0 is the initial state.
std::string trajectory_csv(const TrajectoryLog& log);
struct TrajectoryRow {
  std::int64_t k = 0;
  Vec2 point;
  double t = 0.0;
  std::string wall;  // empty for k = 0
};
std::vector<TrajectoryRow> parse_trajectory_csv(std::string_view text);
std::string trajectory_csv(const std::vector<TrajectoryRow>& rows);

json trajectory_json(const TrajectoryLog& log);
TrajectoryLog trajectory_from_json(const json& j);

std::string trajectory_svg(const TrajectoryLog& log);

// Sweep: header t,slope,D,logD.
std::string sweep_csv(const std::vector<SlopeObservation>& obs);
std::vector<SlopeObservation> parse_sweep_csv(std::string_view text);

// Residuals: header t,x,u.
struct ResidualRow {
  std::int64_t t = 0;
  double x = 0.0;
  double u = 0.0;
};
std::string residuals_csv(const std::vector<ResidualRow>& rows);
std::vector<ResidualRow> parse_residuals_csv(std::string_view text);

json params_json(const HmmParams& params);
HmmParams params_from_json(const json& j);

/// Serialised JSON text as written to disk.
std::string dump(const json& j);

}  // namespace windtree::io
