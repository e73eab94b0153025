#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "almh/pde_solver.hpp"

namespace almh {

inline std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::uint64_t file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::ios_base::failure("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return fnv1a64(ss.str());
}

// Shortest text that parses back to the same double.
inline std::string fmt_double(double v) {
  char buf[32];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

inline void write_csv(const std::string& path, const CsvTable& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::ios_base::failure("cannot write '" + path + "'");
  for (std::size_t i = 0; i < t.header.size(); ++i) out << (i ? "," : "") << t.header[i];
  out << '\n';
  for (const auto& r : t.rows) {
    for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << fmt_double(r[i]);
    out << '\n';
  }
  if (!out) throw std::ios_base::failure("write failed for '" + path + "'");
}

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::ios_base::failure("cannot read '" + path + "'");
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) return t;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) t.header.push_back(cell);
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      char* end = nullptr;
      double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str()) throw std::runtime_error("read_csv: non-numeric cell '" + cell + "' in " + path);
      row.push_back(v);
    }
    if (row.size() != t.header.size()) throw std::runtime_error("read_csv: ragged row in " + path);
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline std::vector<std::string> memory_columns(int d) {
  std::vector<std::string> c;
  for (int k = 1; k <= d; ++k) c.push_back("m" + std::to_string(k));
  return c;
}

// Long format t,a,m1..md,rho; `complement` maps internal m' to 1 - m'.
inline CsvTable density_table(const std::vector<GridDensity>& snaps, bool complement = false) {
  CsvTable t;
  if (snaps.empty()) return t;
  const int d = snaps[0].axis.d;
  t.header = {"t", "a"};
  for (auto& c : memory_columns(d)) t.header.push_back(c);
  t.header.push_back("rho");
  for (const auto& r : snaps)
    for (int i = 0; i < r.n_a; ++i)
      for (std::size_t c = 0; c < r.axis.cells(); ++c) {
        std::vector<double> row = {r.t, r.age_center(i)};
        Mem m = r.axis.point(c);
        for (int k = 0; k < d; ++k) row.push_back(complement ? 1.0 - m[k] : m[k]);
        row.push_back(r.at(i, c));
        t.rows.push_back(std::move(row));
      }
  return t;
}

// Binary grid dump: magic "ALMHGRD1", uint64 little-endian header length, JSON header,
// then float64 little-endian values ordered [snapshot][age][memory...].
inline void write_grid_dump(const std::string& path, const std::vector<GridDensity>& snaps, double dt) {
  static_assert(sizeof(double) == 8);
  const std::uint16_t probe = 1;
  if (*reinterpret_cast<const unsigned char*>(&probe) != 1)
    throw std::runtime_error("write_grid_dump: big-endian hosts are not supported");
  nlohmann::json h;
  h["endianness"] = "little";
  h["dtype"] = "float64";
  h["dt"] = dt;
  std::vector<double> times;
  for (const auto& r : snaps) times.push_back(r.t);
  h["t"] = times;
  if (!snaps.empty()) {
    const auto& r = snaps[0];
    std::vector<int> dims = {r.n_a};
    std::vector<double> dm, lo;
    for (int k = 0; k < r.axis.d; ++k) {
      dims.push_back(r.axis.n[k]);
      dm.push_back(r.axis.dm[k]);
      lo.push_back(r.axis.lo[k]);
    }
    h["dims"] = dims;
    h["da"] = r.da;
    h["dm"] = dm;
    h["m_lo"] = lo;
    h["age_convention"] = "cell-average";
  }
  std::string hs = h.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::ios_base::failure("cannot write '" + path + "'");
  out.write("ALMHGRD1", 8);
  std::uint64_t len = hs.size();
  out.write(reinterpret_cast<const char*>(&len), 8);
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& r : snaps) out.write(reinterpret_cast<const char*>(r.values.data()), r.values.size() * 8);
  if (!out) throw std::ios_base::failure("write failed for '" + path + "'");
}

inline std::pair<nlohmann::json, std::vector<double>> read_grid_dump(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::ios_base::failure("cannot read '" + path + "'");
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, "ALMHGRD1", 8) != 0) throw std::runtime_error("read_grid_dump: bad magic");
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), 8);
  std::string hs(len, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(len));
  auto h = nlohmann::json::parse(hs);
  std::vector<double> v;
  double x;
  while (in.read(reinterpret_cast<char*>(&x), 8)) v.push_back(x);
  return {h, v};
}

inline void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::ios_base::failure("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
  if (!out) throw std::ios_base::failure("write failed for '" + path + "'");
}

}  // namespace almh
