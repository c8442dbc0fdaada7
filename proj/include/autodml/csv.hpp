#pragma once

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "autodml/core.hpp"
#include "autodml/error.hpp"
#include "autodml/surrogate.hpp"

namespace autodml::csv {

// 17 significant digits, enough to round-trip every double.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::vector<std::string> split_line(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    std::string_view cell = line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) cell.remove_prefix(1);
    while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t')) cell.remove_suffix(1);
    out.emplace_back(cell);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline double parse_double(std::string_view cell, std::string_view where) {
  double v = 0.0;
  if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size())
    throw ValidationError(std::string(where) + ": cannot parse '" + std::string(cell) + "' as a number");
  return v;
}

inline int parse_code(std::string_view cell, std::string_view where) {
  const double v = parse_double(cell, where);
  if (v != static_cast<double>(static_cast<long long>(v)) || v < 0 || v > 1e9)
    throw ValidationError(std::string(where) + ": treatment code '" + std::string(cell) +
                          "' is not a nonnegative integer");
  return static_cast<int>(v);
}

// Parsed header plus rows of raw cells.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::map<std::string, std::size_t> index;

  std::optional<std::size_t> find(const std::string& name) const {
    const auto it = index.find(name);
    if (it == index.end()) return std::nullopt;
    return it->second;
  }
  std::size_t require(const std::string& name) const {
    const auto c = find(name);
    if (!c) throw ValidationError("missing column '" + name + "'");
    return *c;
  }
};

inline Table read_table(std::istream& in, const std::string& source) {
  Table t;
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(source + ": empty file");
  t.header = split_line(line);
  for (std::size_t j = 0; j < t.header.size(); ++j) {
    if (t.header[j].empty()) throw ValidationError(source + ": empty column name at position " + std::to_string(j + 1));
    if (!t.index.emplace(t.header[j], j).second)
      throw ValidationError(source + ": duplicate column '" + t.header[j] + "'");
  }
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto cells = split_line(line);
    if (cells.size() != t.header.size())
      throw ValidationError(source + " line " + std::to_string(lineno) + ": expected " +
                            std::to_string(t.header.size()) + " fields, got " + std::to_string(cells.size()));
    t.rows.push_back(std::move(cells));
  }
  return t;
}

inline Table read_table_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  return read_table(in, path);
}

inline std::string state_column(int t, int j) { return "s" + std::to_string(t) + "_" + std::to_string(j); }
inline std::string treatment_column(int t) { return "t" + std::to_string(t); }

// Header: every s{t}_{j} in period order, then t1..tM, then y.
inline void write_panel(std::ostream& out, const PanelDataset& data) {
  const int m = data.periods();
  bool first = true;
  auto sep = [&] {
    if (!first) out << ',';
    first = false;
  };
  for (int t = 1; t <= m; ++t)
    for (int j = 1; j <= data.state_dim(t); ++j) {
      sep();
      out << state_column(t, j);
    }
  for (int t = 1; t <= m; ++t) {
    sep();
    out << treatment_column(t);
  }
  sep();
  out << "y\n";
  for (const auto& z : data.trajectories()) {
    first = true;
    for (int t = 1; t <= m; ++t)
      for (double v : z.state(t)) {
        sep();
        out << format_double(v);
      }
    for (int t = 1; t <= m; ++t) {
      sep();
      out << z.treatment(t);
    }
    sep();
    out << format_double(z.outcome) << '\n';
  }
}

struct PanelSchema {
  std::optional<int> periods;                  // required when known (from the plan)
  std::vector<int> treatment_arities;          // empty: max(observed + 1, 2) per period
};

// Columns are located by name; the number of periods is the plan's when
// given, otherwise the largest t with a column t{t}.
inline PanelDataset read_panel(std::istream& in, const std::string& source, const PanelSchema& schema = {}) {
  const Table table = read_table(in, source);
  int m = 0;
  if (schema.periods) {
    m = *schema.periods;
  } else {
    while (table.find(treatment_column(m + 1))) ++m;
    if (m == 0) throw ValidationError(source + ": missing column 't1'");
  }
  std::vector<int> dims(static_cast<std::size_t>(m));
  std::vector<std::size_t> state_cols, treat_cols;
  for (int t = 1; t <= m; ++t) {
    if (!table.find(state_column(t, 1))) throw ValidationError(source + ": missing column '" + state_column(t, 1) + "'");
    int d = 0;
    while (const auto c = table.find(state_column(t, d + 1))) {
      state_cols.push_back(*c);
      ++d;
    }
    dims[static_cast<std::size_t>(t - 1)] = d;
  }
  for (int t = 1; t <= m; ++t) {
    const auto c = table.find(treatment_column(t));
    if (!c) throw ValidationError(source + ": missing column '" + treatment_column(t) + "'");
    treat_cols.push_back(*c);
  }
  const auto ycol = table.find("y");
  if (!ycol) throw ValidationError(source + ": missing column 'y'");
  if (table.rows.empty()) throw ValidationError(source + ": no data rows");
  if (!schema.treatment_arities.empty() && static_cast<int>(schema.treatment_arities.size()) != m)
    throw ValidationError(source + ": treatment_arity must list one entry per period");

  std::vector<Trajectory> rows;
  rows.reserve(table.rows.size());
  std::vector<int> max_code(static_cast<std::size_t>(m), 0);
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& cells = table.rows[i];
    const std::string where = source + " row " + std::to_string(i + 1);
    Trajectory z;
    std::size_t k = 0;
    for (int t = 0; t < m; ++t) {
      std::vector<double> s;
      for (int j = 0; j < dims[t]; ++j) s.push_back(parse_double(cells[state_cols[k++]], where));
      z.states.push_back(std::move(s));
      const int code = parse_code(cells[treat_cols[t]], where);
      max_code[t] = std::max(max_code[t], code);
      z.treatments.push_back(code);
    }
    z.outcome = parse_double(cells[*ycol], where);
    rows.push_back(std::move(z));
  }
  std::vector<int> arities = schema.treatment_arities;
  if (arities.empty())
    for (int t = 0; t < m; ++t) arities.push_back(std::max(max_code[t] + 1, 2));
  return PanelDataset(std::move(rows), std::move(dims), std::move(arities));
}

inline PanelDataset read_panel_file(const std::string& path, const PanelSchema& schema = {}) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  return read_panel(in, path, schema);
}

namespace detail {

inline std::vector<std::size_t> numbered_columns(const Table& t, const std::string& prefix) {
  std::vector<std::size_t> cols;
  while (const auto c = t.find(prefix + std::to_string(cols.size() + 1))) cols.push_back(*c);
  return cols;
}

inline std::vector<double> read_cells(const std::vector<std::string>& row, const std::vector<std::size_t>& cols,
                                      const std::string& where) {
  std::vector<double> v;
  v.reserve(cols.size());
  for (std::size_t c : cols) v.push_back(parse_double(row[c], where));
  return v;
}

inline void write_numbered(std::ostream& out, const std::string& prefix, std::size_t count, bool& first) {
  for (std::size_t j = 1; j <= count; ++j) {
    out << (first ? "" : ",") << prefix << j;
    first = false;
  }
}

}  // namespace detail

// Short schema x_1..x_p,t,s_1..s_q; long schema x_1..x_p,s_1..s_q,y.
inline SurrogatePair read_surrogate(std::istream& short_in, const std::string& short_name, std::istream& long_in,
                                    const std::string& long_name) {
  const Table st = read_table(short_in, short_name);
  const Table lt = read_table(long_in, long_name);
  const auto sx = detail::numbered_columns(st, "x_"), ss = detail::numbered_columns(st, "s_");
  const auto lx = detail::numbered_columns(lt, "x_"), ls = detail::numbered_columns(lt, "s_");
  if (ss.empty()) throw ValidationError(short_name + ": missing column 's_1'");
  if (ls.empty()) throw ValidationError(long_name + ": missing column 's_1'");
  const std::size_t tcol = [&] {
    const auto c = st.find("t");
    if (!c) throw ValidationError(short_name + ": missing column 't'");
    return *c;
  }();
  const std::size_t ycol = [&] {
    const auto c = lt.find("y");
    if (!c) throw ValidationError(long_name + ": missing column 'y'");
    return *c;
  }();
  if (sx.size() != lx.size()) throw ValidationError("short and long samples have different numbers of x_ columns");
  if (ss.size() != ls.size()) throw ValidationError("short and long samples have different numbers of s_ columns");
  std::vector<ShortRecord> shorts;
  for (std::size_t i = 0; i < st.rows.size(); ++i) {
    const std::string where = short_name + " row " + std::to_string(i + 1);
    const int t = parse_code(st.rows[i][tcol], where);
    shorts.push_back({detail::read_cells(st.rows[i], sx, where), t, detail::read_cells(st.rows[i], ss, where)});
  }
  std::vector<LongRecord> longs;
  for (std::size_t i = 0; i < lt.rows.size(); ++i) {
    const std::string where = long_name + " row " + std::to_string(i + 1);
    longs.push_back({detail::read_cells(lt.rows[i], lx, where), detail::read_cells(lt.rows[i], ls, where),
                     parse_double(lt.rows[i][ycol], where)});
  }
  return SurrogatePair(std::move(shorts), std::move(longs));
}

inline SurrogatePair read_surrogate_files(const std::string& short_path, const std::string& long_path) {
  std::ifstream s(short_path), l(long_path);
  if (!s) throw ValidationError("cannot open " + short_path);
  if (!l) throw ValidationError("cannot open " + long_path);
  return read_surrogate(s, short_path, l, long_path);
}

inline void write_surrogate_short(std::ostream& out, const SurrogatePair& data) {
  bool first = true;
  detail::write_numbered(out, "x_", static_cast<std::size_t>(data.x_dim()), first);
  out << (first ? "" : ",") << "t";
  first = false;
  detail::write_numbered(out, "s_", static_cast<std::size_t>(data.s_dim()), first);
  out << '\n';
  for (const auto& r : data.short_sample()) {
    for (double v : r.x) out << format_double(v) << ',';
    out << r.t;
    for (double v : r.s) out << ',' << format_double(v);
    out << '\n';
  }
}

inline void write_surrogate_long(std::ostream& out, const SurrogatePair& data) {
  bool first = true;
  detail::write_numbered(out, "x_", static_cast<std::size_t>(data.x_dim()), first);
  detail::write_numbered(out, "s_", static_cast<std::size_t>(data.s_dim()), first);
  out << ",y\n";
  for (const auto& r : data.long_sample()) {
    for (double v : r.x) out << format_double(v) << ',';
    for (double v : r.s) out << format_double(v) << ',';
    out << format_double(r.y) << '\n';
  }
}

}  // namespace autodml::csv
