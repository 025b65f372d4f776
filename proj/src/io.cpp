#include "windtree/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "windtree/errors.hpp"

namespace windtree::io {

namespace {

void expect_header(const CsvTable& table, const std::vector<std::string>& want) {
  if (table.header != want) {
    std::string joined;
    for (const auto& h : want) joined += (joined.empty() ? "" : ",") + h;
    throw FormatError("expected CSV header " + joined);
  }
}

json vec_json(Vec2 v) { return {{"x", v.x}, {"y", v.y}}; }
Vec2 vec_from(const json& j) { return {j.at("x").get<double>(), j.at("y").get<double>()}; }

json state_json(const ParticleState& s) {
  return {{"position", vec_json(s.position)},
          {"velocity", vec_json(s.velocity)},
          {"elapsed_time", s.elapsed_time}};
}

ParticleState state_from(const json& j) {
  return {vec_from(j.at("position")), vec_from(j.at("velocity")),
          j.at("elapsed_time").get<double>()};
}

}  // namespace

std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_real(std::string_view field) {
  double v = 0.0;
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw FormatError("not a real number: '" + std::string(field) + "'");
  }
  return v;
}

std::int64_t parse_int(std::string_view field) {
  std::int64_t v = 0;
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw FormatError("not an integer: '" + std::string(field) + "'");
  }
  return v;
}

CsvTable parse_csv(std::string_view text) {
  CsvTable table;
  bool first = true;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const std::size_t nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;

    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
      const std::size_t comma = line.find(',', start);
      fields.emplace_back(line.substr(start, comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (first) {
      table.header = std::move(fields);
      first = false;
    } else {
      if (fields.size() != table.header.size()) {
        throw FormatError("CSV line " + std::to_string(line_no) + " has " +
                          std::to_string(fields.size()) + " fields, expected " +
                          std::to_string(table.header.size()));
      }
      table.rows.push_back(std::move(fields));
    }
  }
  if (first) throw FormatError("CSV is empty");
  return table;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

std::string trajectory_csv(const std::vector<TrajectoryRow>& rows) {
  std::string out = "k,x,y,t,wall\n";
  for (const auto& r : rows) {
    out += std::to_string(r.k) + ',' + format_real(r.point.x) + ',' + format_real(r.point.y) +
           ',' + format_real(r.t) + ',' + r.wall + '\n';
  }
  return out;
}

std::string trajectory_csv(const TrajectoryLog& log) {
  std::vector<TrajectoryRow> rows;
  rows.reserve(log.events.size() + 1);
  rows.push_back({0, log.initial.position, log.initial.elapsed_time, ""});
  for (const auto& e : log.events) {
    rows.push_back({e.index, e.point, e.time, std::string(to_string(e.wall))});
  }
  return trajectory_csv(rows);
}

std::vector<TrajectoryRow> parse_trajectory_csv(std::string_view text) {
  const CsvTable table = parse_csv(text);
  expect_header(table, {"k", "x", "y", "t", "wall"});
  std::vector<TrajectoryRow> rows;
  for (const auto& f : table.rows) {
    TrajectoryRow r{parse_int(f[0]), {parse_real(f[1]), parse_real(f[2])}, parse_real(f[3]), f[4]};
    if (r.k != 0 && !wall_from_string(r.wall)) throw FormatError("unknown wall '" + r.wall + "'");
    rows.push_back(std::move(r));
  }
  return rows;
}

json trajectory_json(const TrajectoryLog& log) {
  json events = json::array();
  for (const auto& e : log.events) {
    events.push_back({{"index", e.index},
                      {"point", vec_json(e.point)},
                      {"time", e.time},
                      {"wall", std::string(to_string(e.wall))},
                      {"obstacle_center", {e.obstacle_center.x, e.obstacle_center.y}}});
  }
  json states = json::array();
  for (const auto& s : log.post_collision_states) states.push_back(state_json(s));
  json j = {{"initial", state_json(log.initial)},
            {"events", std::move(events)},
            {"post_collision_states", std::move(states)}};
  j["truncation_reason"] = log.truncation_reason ? json(*log.truncation_reason) : json(nullptr);
  return j;
}

TrajectoryLog trajectory_from_json(const json& j) {
  TrajectoryLog log;
  log.initial = state_from(j.at("initial"));
  for (const auto& e : j.at("events")) {
    CollisionEvent ev;
    ev.index = e.at("index").get<std::int64_t>();
    ev.point = vec_from(e.at("point"));
    ev.time = e.at("time").get<double>();
    const auto wall = wall_from_string(e.at("wall").get<std::string>());
    if (!wall) throw FormatError("unknown wall in trajectory JSON");
    ev.wall = *wall;
    ev.obstacle_center = {e.at("obstacle_center").at(0).get<std::int64_t>(),
                          e.at("obstacle_center").at(1).get<std::int64_t>()};
    log.events.push_back(ev);
  }
  for (const auto& s : j.at("post_collision_states")) log.post_collision_states.push_back(state_from(s));
  if (log.events.size() != log.post_collision_states.size()) {
    throw FormatError("events and post-collision states are misaligned");
  }
  if (!j.at("truncation_reason").is_null()) {
    log.truncation_reason = j.at("truncation_reason").get<std::string>();
  }
  return log;
}

std::string trajectory_svg(const TrajectoryLog& log) {
  std::vector<Vec2> pts{log.initial.position};
  for (const auto& e : log.events) pts.push_back(e.point);
  double lo_x = pts[0].x, hi_x = pts[0].x, lo_y = pts[0].y, hi_y = pts[0].y;
  for (Vec2 p : pts) {
    lo_x = std::min(lo_x, p.x);
    hi_x = std::max(hi_x, p.x);
    lo_y = std::min(lo_y, p.y);
    hi_y = std::max(hi_y, p.y);
  }
  lo_x = std::floor(lo_x) - 2.0;
  lo_y = std::floor(lo_y) - 2.0;
  hi_x = std::ceil(hi_x) + 2.0;
  hi_y = std::ceil(hi_y) + 2.0;
  const double w = hi_x - lo_x;
  const double h = hi_y - lo_y;

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"" << lo_x << ' ' << -hi_y << ' '
      << w << ' ' << h << "\" width=\"800\" height=\"" << std::max(1.0, 800.0 * h / w)
      << "\">\n";
  // y is flipped so that the plane's y axis points up.
  svg << "<g transform=\"scale(1,-1)\">\n";
  const double cells = (w / 2.0) * (h / 2.0);
  if (cells <= 50000.0) {
    svg << "<g fill=\"#2e7d32\">\n";
    const auto first_x = static_cast<std::int64_t>(std::floor(lo_x)) | 1;
    const auto first_y = static_cast<std::int64_t>(std::floor(lo_y)) | 1;
    for (std::int64_t cx = first_x; static_cast<double>(cx) <= hi_x; cx += 2) {
      for (std::int64_t cy = first_y; static_cast<double>(cy) <= hi_y; cy += 2) {
        svg << "<rect x=\"" << static_cast<double>(cx) - 0.5 << "\" y=\""
            << static_cast<double>(cy) - 0.5 << "\" width=\"1\" height=\"1\"/>\n";
      }
    }
    svg << "</g>\n";
  } else {
    svg << "<!-- obstacles omitted: region too large -->\n";
  }
  svg << "<polyline fill=\"none\" stroke=\"#c62828\" stroke-width=\"" << std::max(w, h) / 800.0
      << "\" points=\"";
  for (std::size_t i = 0; i < pts.size(); ++i) {
    svg << (i ? " " : "") << format_real(pts[i].x) << ',' << format_real(pts[i].y);
  }
  svg << "\"/>\n</g>\n</svg>\n";
  return svg.str();
}

std::string sweep_csv(const std::vector<SlopeObservation>& obs) {
  std::string out = "t,slope,D,logD\n";
  for (const auto& o : obs) {
    out += std::to_string(o.t) + ',' + format_real(o.slope) + ',' + format_real(o.D) + ',' +
           format_real(o.x) + '\n';
  }
  return out;
}

std::vector<SlopeObservation> parse_sweep_csv(std::string_view text) {
  const CsvTable table = parse_csv(text);
  expect_header(table, {"t", "slope", "D", "logD"});
  std::vector<SlopeObservation> obs;
  for (const auto& f : table.rows) {
    obs.push_back({static_cast<int>(parse_int(f[0])), parse_real(f[1]), parse_real(f[2]),
                   parse_real(f[3])});
  }
  return obs;
}

std::string residuals_csv(const std::vector<ResidualRow>& rows) {
  std::string out = "t,x,u\n";
  for (const auto& r : rows) {
    out += std::to_string(r.t) + ',' + format_real(r.x) + ',' + format_real(r.u) + '\n';
  }
  return out;
}

std::vector<ResidualRow> parse_residuals_csv(std::string_view text) {
  const CsvTable table = parse_csv(text);
  expect_header(table, {"t", "x", "u"});
  std::vector<ResidualRow> rows;
  for (const auto& f : table.rows) rows.push_back({parse_int(f[0]), parse_real(f[1]), parse_real(f[2])});
  return rows;
}

json params_json(const HmmParams& p) {
  json gamma = json::array();
  for (std::size_t i = 0; i < p.m; ++i) {
    const auto row = p.gamma.row(i);
    gamma.push_back(std::vector<double>(row.begin(), row.end()));
  }
  return {{"m", p.m}, {"delta", p.delta}, {"gamma", std::move(gamma)},
          {"mu", p.mu}, {"sigma", p.sigma}, {"sigma_floor", p.sigma_floor}};
}

HmmParams params_from_json(const json& j) {
  HmmParams p;
  p.m = j.at("m").get<std::size_t>();
  p.delta = j.at("delta").get<std::vector<double>>();
  p.mu = j.at("mu").get<std::vector<double>>();
  p.sigma = j.at("sigma").get<std::vector<double>>();
  p.sigma_floor = j.at("sigma_floor").get<double>();
  const auto& g = j.at("gamma");
  if (g.size() != p.m) throw FormatError("gamma must have m rows");
  p.gamma = Matrix(p.m, p.m);
  for (std::size_t i = 0; i < p.m; ++i) {
    const auto row = g.at(i).get<std::vector<double>>();
    if (row.size() != p.m) throw FormatError("gamma must be m x m");
    for (std::size_t k = 0; k < p.m; ++k) p.gamma(i, k) = row[k];
  }
  return p;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

}  // namespace windtree::io
