#pragma once

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "hdid/model.hpp"

namespace hdid {

/// File could not be opened, read or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Round-trippable number formatting ("%.17g"); output is bit-stable for a given value.
inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Fixed-precision formatting for report tables.
inline std::string format_fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

namespace csv {

struct Row {
  std::size_t line = 0;  // 1-based line number in the file
  std::vector<std::string> cells;
};

/// Comma-separated fields with optional double quotes ("" escapes a quote). Unquoted
/// fields are trimmed of surrounding blanks.
inline std::vector<std::string> split(const std::string& text, std::size_t line) {
  std::vector<std::string> out;
  std::string cur;
  bool in_quotes = false, was_quoted = false;
  auto finish = [&] {
    if (!was_quoted) {
      const auto b = cur.find_first_not_of(" \t");
      const auto e = cur.find_last_not_of(" \t");
      cur = b == std::string::npos ? std::string() : cur.substr(b, e - b + 1);
    }
    out.push_back(cur);
    cur.clear();
    was_quoted = false;
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        in_quotes = false;
      } else {
        cur += c;
      }
    } else if (c == '"' && cur.find_first_not_of(" \t") == std::string::npos) {
      in_quotes = was_quoted = true;
      cur.clear();
    } else if (c == ',') {
      finish();
    } else if (!was_quoted) {
      cur += c;
    }
  }
  if (in_quotes) throw DataError("unterminated quoted field", line);
  finish();
  return out;
}

/// Reads a CSV file: blank lines and lines starting with '#' are skipped; the first
/// remaining line is the header.
inline std::pair<Row, std::vector<Row>> read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string text;
  std::size_t line = 0;
  bool have_header = false;
  Row header;
  std::vector<Row> rows;
  while (std::getline(in, text)) {
    ++line;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    if (line == 1 && text.rfind("\xEF\xBB\xBF", 0) == 0) text.erase(0, 3);
    if (text.find_first_not_of(" \t") == std::string::npos || text[text.find_first_not_of(" \t")] == '#') continue;
    Row r{line, split(text, line)};
    if (!have_header) {
      header = std::move(r);
      have_header = true;
    } else {
      rows.push_back(std::move(r));
    }
  }
  if (!have_header) throw DataError("missing header row in " + path.string());
  return {header, rows};
}

inline double parse_double(const std::string& s, std::size_t line, const std::string& column) {
  if (s.empty()) throw DataError("empty value in column '" + column + "'", line);
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || errno == ERANGE) {
    throw DataError("non-numeric value '" + s + "' in column '" + column + "'", line);
  }
  return v;
}

inline std::string quote(const std::string& s) {
  if (s.find_first_of(",\"\n#") == std::string::npos && (s.empty() || s[0] != ' ')) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

/// "# " prefixed lines; embedded newlines are split into further comment lines.
inline std::string comment_block(const std::vector<std::string>& lines) {
  std::string out;
  for (const auto& l : lines) {
    std::istringstream ss(l);
    std::string part;
    while (std::getline(ss, part)) out += "# " + part + "\n";
  }
  return out;
}

}  // namespace csv

/// One individual outcome. `individual` is the optional fourth column ("" if absent).
struct IndividualRecord {
  std::string group_id;
  int period = 0;
  double y = 0.0;
  std::string individual;
  std::size_t line = 0;
};

struct GroupTable {
  std::vector<std::string> group_ids;
  VectorXd T;
  MatrixXd X;
  std::vector<std::string> covariate_names;
  std::vector<std::size_t> lines;
};

/// Individuals CSV: group_id,period,y[,individual]. Period must be 0 or 1. With an
/// individual column, a repeated (group, period, individual) is an error.
inline std::vector<IndividualRecord> read_individuals_csv(const std::filesystem::path& path) {
  auto [header, rows] = csv::read(path);
  const auto& h = header.cells;
  const bool has_id = h.size() == 4 && h[3] == "individual";
  if (h.size() < 3 || h[0] != "group_id" || h[1] != "period" || h[2] != "y" || (h.size() == 4 && !has_id) ||
      h.size() > 4) {
    throw DataError("expected header 'group_id,period,y' (optionally ',individual')", header.line);
  }
  std::vector<IndividualRecord> out;
  std::set<std::tuple<std::string, int, std::string>> seen;
  for (const auto& r : rows) {
    if (r.cells.size() != h.size()) {
      throw DataError("expected " + std::to_string(h.size()) + " fields, found " + std::to_string(r.cells.size()),
                      r.line);
    }
    IndividualRecord rec;
    rec.line = r.line;
    rec.group_id = r.cells[0];
    if (rec.group_id.empty()) throw DataError("missing group id", r.line);
    const double period = csv::parse_double(r.cells[1], r.line, "period");
    if (period != 0.0 && period != 1.0) throw DataError("period must be 0 or 1, found '" + r.cells[1] + "'", r.line);
    rec.period = static_cast<int>(period);
    rec.y = csv::parse_double(r.cells[2], r.line, "y");
    if (has_id) {
      rec.individual = r.cells[3];
      if (!seen.insert({rec.group_id, rec.period, rec.individual}).second) {
        throw DataError("duplicate row for group '" + rec.group_id + "', period " + std::to_string(rec.period) +
                            ", individual '" + rec.individual + "'",
                        r.line);
      }
    }
    out.push_back(std::move(rec));
  }
  return out;
}

/// Groups CSV: group_id,T,<covariate names...>.
inline GroupTable read_groups_csv(const std::filesystem::path& path) {
  auto [header, rows] = csv::read(path);
  const auto& h = header.cells;
  if (h.size() < 2 || h[0] != "group_id" || h[1] != "T") {
    throw DataError("expected header 'group_id,T[,covariates...]'", header.line);
  }
  GroupTable g;
  g.covariate_names.assign(h.begin() + 2, h.end());
  for (const auto& n : g.covariate_names) {
    if (n.empty()) throw DataError("empty covariate name in header", header.line);
  }
  const Index K = static_cast<Index>(g.covariate_names.size());
  g.T.resize(static_cast<Index>(rows.size()));
  g.X.resize(static_cast<Index>(rows.size()), K);
  std::map<std::string, std::size_t> seen;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.cells.size() != h.size()) {
      throw DataError("expected " + std::to_string(h.size()) + " fields, found " + std::to_string(r.cells.size()),
                      r.line);
    }
    if (r.cells[0].empty()) throw DataError("missing group id", r.line);
    if (const auto it = seen.find(r.cells[0]); it != seen.end()) {
      throw DataError("duplicate group id '" + r.cells[0] + "' (first on line " + std::to_string(it->second) + ")",
                      r.line);
    }
    seen[r.cells[0]] = r.line;
    g.group_ids.push_back(r.cells[0]);
    g.lines.push_back(r.line);
    const auto row = static_cast<Index>(i);
    g.T(row) = csv::parse_double(r.cells[1], r.line, "T");
    for (Index k = 0; k < K; ++k) {
      g.X(row, k) = csv::parse_double(r.cells[static_cast<std::size_t>(k) + 2], r.line,
                                      g.covariate_names[static_cast<std::size_t>(k)]);
    }
  }
  if (g.group_ids.empty()) throw DataError("groups file has no data rows", header.line);
  return g;
}

/// Joins the two tables; groups keep the order of the groups file.
inline HdidDataset assemble_dataset(const std::vector<IndividualRecord>& individuals, const GroupTable& groups) {
  HdidDataset d;
  d.group_ids = groups.group_ids;
  d.X = groups.X;
  d.T = groups.T;
  d.covariate_names = groups.covariate_names;
  d.y_pre.assign(groups.group_ids.size(), {});
  d.y_post.assign(groups.group_ids.size(), {});
  std::map<std::string, std::size_t> index;
  for (std::size_t j = 0; j < groups.group_ids.size(); ++j) index[groups.group_ids[j]] = j;
  for (const auto& r : individuals) {
    const auto it = index.find(r.group_id);
    if (it == index.end()) throw DataError("group id '" + r.group_id + "' not present in the groups file", r.line);
    (r.period == 0 ? d.y_pre : d.y_post)[it->second].push_back(r.y);
  }
  return d;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

/// Individuals CSV text (group_id,period,y), pre-period rows of each group first.
inline std::string individuals_csv(const HdidDataset& d, const std::vector<std::string>& comments = {}) {
  std::string out = csv::comment_block(comments) + "group_id,period,y\n";
  for (Index j = 0; j < d.num_groups(); ++j) {
    const auto js = static_cast<std::size_t>(j);
    const std::string id = csv::quote(d.group_ids.empty() ? "g" + std::to_string(j + 1) : d.group_ids[js]);
    for (double y : d.y_pre[js]) out += id + ",0," + format_number(y) + "\n";
    for (double y : d.y_post[js]) out += id + ",1," + format_number(y) + "\n";
  }
  return out;
}

inline std::string groups_csv(const HdidDataset& d, const std::vector<std::string>& comments = {}) {
  std::string out = csv::comment_block(comments) + "group_id,T";
  for (Index k = 0; k < d.num_covariates(); ++k) {
    out += "," + csv::quote(d.covariate_names.empty() ? "X" + std::to_string(k + 1)
                                                      : d.covariate_names[static_cast<std::size_t>(k)]);
  }
  out += "\n";
  for (Index j = 0; j < d.num_groups(); ++j) {
    out += csv::quote(d.group_ids.empty() ? "g" + std::to_string(j + 1) : d.group_ids[static_cast<std::size_t>(j)]);
    out += "," + format_number(d.T(j));
    for (Index k = 0; k < d.num_covariates(); ++k) out += "," + format_number(d.X(j, k));
    out += "\n";
  }
  return out;
}

}  // namespace hdid
