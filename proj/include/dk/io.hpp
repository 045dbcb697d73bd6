#pragma once

// On-disk formats.
//
// "DKF1" field container, one record per snapshot, records concatenated:
//   4 bytes  magic "DKF1"
//   u64      number of axes r
//   u64 x r  extent of each axis (cells per axis; for particle snapshots [N, dims])
//   f64      time stamp
//   f64 x prod(extents)  values, row-major (axis 0 slowest)
// All integers and floats little-endian.
//
// Diagnostics CSV: header row, one row per sample time, values printed with
// 17 significant digits so they parse back to the same doubles.

#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dk/diagnostics.hpp"
#include "dk/error.hpp"
#include "dk/grid.hpp"

namespace dk {

struct ArrayRecord {
  std::vector<std::uint64_t> shape;
  double t = 0.0;
  std::vector<double> values;
};

namespace detail {

inline void put_u64(std::ostream& os, std::uint64_t v) {
  std::array<char, 8> b;
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(b.data(), 8);
}

inline void put_f64(std::ostream& os, double v) { put_u64(os, std::bit_cast<std::uint64_t>(v)); }

inline bool get_u64(std::istream& is, std::uint64_t& v) {
  std::array<unsigned char, 8> b;
  if (!is.read(reinterpret_cast<char*>(b.data()), 8)) return false;
  v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return true;
}

inline bool get_f64(std::istream& is, double& v) {
  std::uint64_t u;
  if (!get_u64(is, u)) return false;
  v = std::bit_cast<double>(u);
  return true;
}

}  // namespace detail

inline constexpr char kFieldMagic[4] = {'D', 'K', 'F', '1'};

inline void write_record(std::ostream& os, const ArrayRecord& r) {
  std::uint64_t count = 1;
  for (auto e : r.shape) count *= e;
  if (count != r.values.size()) throw ConfigError("write_record: shape does not match value count");
  os.write(kFieldMagic, 4);
  detail::put_u64(os, r.shape.size());
  for (auto e : r.shape) detail::put_u64(os, e);
  detail::put_f64(os, r.t);
  for (double v : r.values) detail::put_f64(os, v);
}

/// Reads every record in the stream; throws on a truncated or foreign record.
inline std::vector<ArrayRecord> read_records(std::istream& is) {
  std::vector<ArrayRecord> out;
  while (true) {
    char magic[4];
    is.read(magic, 4);
    if (is.gcount() == 0) break;
    if (is.gcount() != 4 || std::memcmp(magic, kFieldMagic, 4) != 0)
      throw ConfigError("DKF1: bad magic bytes");
    ArrayRecord r;
    std::uint64_t rank = 0;
    if (!detail::get_u64(is, rank) || rank == 0 || rank > 8) throw ConfigError("DKF1: bad rank");
    r.shape.resize(rank);
    std::uint64_t count = 1;
    for (auto& e : r.shape) {
      if (!detail::get_u64(is, e)) throw ConfigError("DKF1: truncated shape");
      count *= e;
    }
    if (!detail::get_f64(is, r.t)) throw ConfigError("DKF1: truncated time stamp");
    r.values.resize(count);
    for (auto& v : r.values)
      if (!detail::get_f64(is, v)) throw ConfigError("DKF1: truncated values");
    out.push_back(std::move(r));
  }
  return out;
}

inline ArrayRecord to_record(const CellField& f, double t) {
  ArrayRecord r;
  for (int ax = 0; ax < f.grid.dims(); ++ax) r.shape.push_back(f.grid.cells(ax));
  r.t = t;
  r.values = f.values;
  return r;
}

inline CellField from_record(const ArrayRecord& r, const Grid& g) {
  if (r.shape.size() != static_cast<std::size_t>(g.dims())) throw ConfigError("DKF1: rank does not match grid");
  for (int ax = 0; ax < g.dims(); ++ax)
    if (r.shape[ax] != g.cells(ax)) throw ConfigError("DKF1: shape does not match grid");
  return CellField(g, r.values);
}

inline void write_records_file(const std::filesystem::path& p, const std::vector<ArrayRecord>& records) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw ConfigError("cannot open " + p.string() + " for writing");
  for (const auto& r : records) write_record(os, r);
}

inline std::vector<ArrayRecord> read_records_file(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw ConfigError("cannot open " + p.string());
  return read_records(is);
}

inline std::vector<std::string> diagnostics_columns(const std::vector<DiagnosticsRecord>& recs) {
  std::vector<std::string> cols{"t",           "mass",         "l2_sq",         "entropy",
                                "hminus1_sq",  "log_int",      "large_part",    "sigma_log_int",
                                "dissipation", "boundary_min", "clipped_mass"};
  if (!recs.empty())
    for (const auto& [beta, v] : recs.front().q_bands) {
      char buf[48];
      std::snprintf(buf, sizeof buf, "q_band_%.10g", beta);
      cols.emplace_back(buf);
    }
  return cols;
}

inline std::vector<double> diagnostics_row(const DiagnosticsRecord& r) {
  std::vector<double> row{r.t,          r.mass,       r.l2_sq,         r.entropy,
                          r.hminus1_sq, r.log_int,    r.large_part,    r.sigma_log_int,
                          r.dissipation, r.boundary_min, r.clipped_mass};
  for (const auto& [beta, v] : r.q_bands) row.push_back(v);
  return row;
}

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == name) return i;
    throw ConfigError("table: no column '" + name + "'");
  }
};

inline void write_table(std::ostream& os, const Table& t) {
  for (std::size_t i = 0; i < t.columns.size(); ++i) os << (i ? "," : "") << t.columns[i];
  os << '\n';
  char buf[40];
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", row[i]);
      os << (i ? "," : "") << buf;
    }
    os << '\n';
  }
}

inline Table read_table(std::istream& is) {
  Table t;
  std::string line;
  if (!std::getline(is, line)) throw ConfigError("csv: empty input");
  std::stringstream hs(line);
  for (std::string cell; std::getline(hs, cell, ',');) t.columns.push_back(cell);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) row.push_back(std::strtod(cell.c_str(), nullptr));
    if (row.size() != t.columns.size()) throw ConfigError("csv: ragged row");
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline Table diagnostics_table(const std::vector<DiagnosticsRecord>& recs) {
  Table t{diagnostics_columns(recs), {}};
  for (const auto& r : recs) t.rows.push_back(diagnostics_row(r));
  return t;
}

inline void write_table_file(const std::filesystem::path& p, const Table& t) {
  std::ofstream os(p);
  if (!os) throw ConfigError("cannot open " + p.string() + " for writing");
  write_table(os, t);
}

inline Table read_table_file(const std::filesystem::path& p) {
  std::ifstream is(p);
  if (!is) throw ConfigError("cannot open " + p.string());
  return read_table(is);
}

}  // namespace dk
