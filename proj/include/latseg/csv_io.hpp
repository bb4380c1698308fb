#pragma once

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "latseg/error.hpp"
#include "latseg/json_io.hpp"
#include "latseg/trajectory.hpp"

namespace latseg {

/// 17 significant digits; parses back to the identical double.
inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::string csv_header(std::size_t dim) {
  std::string h = "t";
  for (std::size_t d = 0; d < dim; ++d) h += ",dim_" + std::to_string(d);
  return h + ",mask,is_changepoint";
}

/// Header `t,dim_0,…,dim_{D−1},mask,is_changepoint`, one row per observation.
inline void write_trajectory_csv(std::ostream& out, const Trajectory& tr) {
  tr.validate();
  out << csv_header(tr.dim()) << '\n';
  std::size_t k = 0;
  for (std::size_t i = 0; i < tr.size(); ++i) {
    const bool cp = k < tr.changepoints.size() && tr.changepoints[k] == i;
    if (cp) ++k;
    out << format_double(tr.times[i]);
    for (std::size_t d = 0; d < tr.dim(); ++d) out << ',' << format_double(tr.values.at(i, d));
    out << ',' << static_cast<int>(tr.mask[i]) << ',' << (cp ? 1 : 0) << '\n';
  }
}

inline std::string trajectory_to_csv(const Trajectory& tr) {
  std::ostringstream s;
  write_trajectory_csv(s, tr);
  return s.str();
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> f;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      f.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  f.push_back(cur);
  return f;
}

inline double parse_double(const std::string& s, const std::string& where) {
  if (s.empty()) throw MalformedFile(where + ": empty number");
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || errno == ERANGE) throw MalformedFile(where + ": bad number '" + s + "'");
  return v;
}

}  // namespace detail

/// Parses the CSV trajectory format. `where` prefixes error messages.
inline Trajectory read_trajectory_csv(std::istream& in, const std::string& where = "csv") {
  std::string line;
  if (!std::getline(in, line)) throw MalformedFile(where + ": empty file");
  const std::vector<std::string> head = detail::split_csv_line(line);
  if (head.size() < 4) throw MalformedFile(where + ": header needs t, at least one dimension, mask, is_changepoint");
  const std::size_t dim = head.size() - 3;
  if (detail::split_csv_line(csv_header(dim)) != head) throw MalformedFile(where + ": unexpected header '" + line + "'");
  Trajectory tr;
  std::vector<double> flat;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const std::string at = where + " line " + std::to_string(row + 2);
    const std::vector<std::string> f = detail::split_csv_line(line);
    if (f.size() != dim + 3) throw MalformedFile(at + ": expected " + std::to_string(dim + 3) + " fields");
    tr.times.push_back(detail::parse_double(f[0], at));
    for (std::size_t d = 0; d < dim; ++d) flat.push_back(detail::parse_double(f[1 + d], at));
    const std::string& m = f[dim + 1];
    if (m != "0" && m != "1" && m != "2") throw MalformedFile(at + ": mask must be 0, 1 or 2");
    tr.mask.push_back(static_cast<MaskClass>(m[0] - '0'));
    const std::string& c = f[dim + 2];
    if (c != "0" && c != "1") throw MalformedFile(at + ": is_changepoint must be 0 or 1");
    if (c == "1") tr.changepoints.push_back(row);
    ++row;
  }
  if (row == 0) throw MalformedFile(where + ": no observations");
  tr.values = Tensor::matrix(row, dim, std::move(flat));
  try {
    tr.validate();
  } catch (const InvalidArgument& e) {
    throw MalformedFile(where + ": " + e.what());
  }
  return tr;
}

inline Trajectory trajectory_from_csv(const std::string& text, const std::string& where = "csv") {
  std::istringstream s(text);
  return read_trajectory_csv(s, where);
}

inline void save_trajectory_csv(const Trajectory& tr, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  write_trajectory_csv(out, tr);
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

inline Trajectory load_trajectory_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return read_trajectory_csv(in, path.string());
}

// ---------------------------------------------------------------- datasets

inline constexpr const char* dataset_format = "latseg-dataset";
inline constexpr int dataset_format_version = 1;

struct Dataset {
  std::vector<Trajectory> trajectories;
  Json manifest;
};

inline std::string dataset_file_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "traj_%06zu.csv", i);
  return buf;
}

/// Writes numbered CSV files plus manifest.json. `info` (generator spec, seed,
/// masking) is stored under "generator".
inline void save_dataset(const std::vector<Trajectory>& data, const std::filesystem::path& dir, const Json& info = Json::object()) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
  Json files = Json::array(), params = Json::array();
  std::size_t changepoints = 0, observations = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::string name = dataset_file_name(i);
    save_trajectory_csv(data[i], dir / name);
    files.push_back(name);
    params.push_back(data[i].segment_params);
    changepoints += data[i].changepoints.size();
    observations += data[i].size();
  }
  Json m{{"format", dataset_format},
         {"format_version", dataset_format_version},
         {"count", data.size()},
         {"dim", data.empty() ? 0 : data.front().dim()},
         {"observations", observations},
         {"changepoints", changepoints},
         {"files", files},
         {"segment_params", params},
         {"generator", info}};
  std::ofstream out(dir / "manifest.json");
  if (!out) throw IoError("cannot write manifest in '" + dir.string() + "'");
  out << m.dump(2) << '\n';
  if (!out) throw IoError("failed writing manifest in '" + dir.string() + "'");
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  const std::filesystem::path mpath = dir / "manifest.json";
  std::ifstream in(mpath);
  if (!in) throw IoError("cannot open dataset manifest '" + mpath.string() + "'");
  Dataset ds;
  try {
    ds.manifest = Json::parse(in);
    if (ds.manifest.at("format").get<std::string>() != dataset_format) throw MalformedFile(mpath.string() + ": not a dataset manifest");
    if (ds.manifest.at("format_version").get<int>() != dataset_format_version)
      throw MalformedFile(mpath.string() + ": unsupported dataset version");
    const Json& files = ds.manifest.at("files");
    const Json* params = ds.manifest.contains("segment_params") ? &ds.manifest["segment_params"] : nullptr;
    for (std::size_t i = 0; i < files.size(); ++i) {
      Trajectory tr = load_trajectory_csv(dir / files[i].get<std::string>());
      if (params && i < params->size())
        tr.segment_params = (*params)[i].get<std::vector<std::map<std::string, double>>>();
      ds.trajectories.push_back(std::move(tr));
    }
    if (ds.manifest.at("count").get<std::size_t>() != ds.trajectories.size())
      throw MalformedFile(mpath.string() + ": count does not match file list");
  } catch (const nlohmann::json::exception& e) {
    throw MalformedFile(mpath.string() + ": " + e.what());
  }
  return ds;
}

}  // namespace latseg
