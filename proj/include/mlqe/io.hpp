#ifndef MLQE_IO_HPP
#define MLQE_IO_HPP

// Dataset and result files.
//
//   locations   CSV, header "x,y", one point per line.
//   replicates  CSV, header "loc_id,rep_id,value" (long format, 0-based ids);
//               every (loc_id, rep_id) pair must appear exactly once.
//   records     "key=value" lines; '#' starts a comment line.
//
// Numbers are written in shortest round-trip form, so write-then-read is
// bit-exact. Parse failures raise DataError naming the file, line and column.

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <type_traits>
#include <utility>
#include <vector>

#include "mlqe/errors.hpp"
#include "mlqe/gauss_lik.hpp"
#include "mlqe/matern.hpp"

namespace mlqe::io {

/// Shortest decimal text that parses back to exactly v.
inline std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

namespace detail {

inline std::string where(const std::string& source, std::size_t line, std::size_t col) {
  return source + ":" + std::to_string(line) + ":" + std::to_string(col);
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

// Splits a CSV line, remembering the 1-based column at which each field starts.
inline std::vector<std::pair<std::string_view, std::size_t>> split_csv(std::string_view line) {
  std::vector<std::pair<std::string_view, std::size_t>> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    const auto end = comma == std::string_view::npos ? line.size() : comma;
    out.emplace_back(trim(line.substr(start, end - start)), start + 1);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline double parse_double(std::string_view s, const std::string& loc) {
  double v = 0.0;
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw DataError(loc + ": cannot parse '" + std::string(s) + "' as a number");
  }
  if (!std::isfinite(v)) {
    throw DataError(loc + ": non-finite value '" + std::string(s) + "'");
  }
  return v;
}

inline std::uint64_t parse_index(std::string_view s, const std::string& loc) {
  std::uint64_t v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw DataError(loc + ": cannot parse '" + std::string(s) + "' as a non-negative integer");
  }
  return v;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "' for reading");
  return in;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  return out;
}

inline void expect_header(std::istream& in, const std::string& source,
                          const std::vector<std::string>& names) {
  std::string line;
  std::string expected;
  for (const auto& n : names) expected += (expected.empty() ? "" : ",") + n;
  if (!std::getline(in, line)) {
    throw DataError(where(source, 1, 1) + ": missing header '" + expected + "'");
  }
  const auto fields = split_csv(line);
  bool ok = fields.size() == names.size();
  for (std::size_t i = 0; ok && i < names.size(); ++i) ok = fields[i].first == names[i];
  if (!ok) {
    throw DataError(where(source, 1, 1) + ": missing header '" + expected + "', found '" +
                    std::string(trim(line)) + "'");
  }
}

}  // namespace detail

// ---- locations -------------------------------------------------------------

inline void write_locations(std::ostream& out, const LocationSet& locs) {
  out << "x,y\n";
  for (const auto& p : locs.coords()) out << format_double(p.x) << ',' << format_double(p.y) << '\n';
}

inline LocationSet read_locations(std::istream& in, const std::string& source = "<locations>") {
  detail::expect_header(in, source, {"x", "y"});
  std::vector<Point> pts;
  std::string line;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split_csv(line);
    if (f.size() != 2) {
      throw DataError(detail::where(source, lineno, 1) + ": expected 2 fields, found " +
                      std::to_string(f.size()));
    }
    pts.push_back({detail::parse_double(f[0].first, detail::where(source, lineno, f[0].second)),
                   detail::parse_double(f[1].first, detail::where(source, lineno, f[1].second))});
  }
  if (pts.empty()) throw DataError(source + ": no locations");
  try {
    return LocationSet(std::move(pts));
  } catch (const DataError& e) {
    throw DataError(source + ": " + e.what());
  }
}

// ---- replicates ------------------------------------------------------------

inline void write_replicates(std::ostream& out, const ReplicateSet& reps) {
  out << "loc_id,rep_id,value\n";
  const auto& z = reps.data();
  for (Eigen::Index r = 0; r < z.cols(); ++r) {
    for (Eigen::Index l = 0; l < z.rows(); ++l) {
      out << l << ',' << r << ',' << format_double(z(l, r)) << '\n';
    }
  }
}

inline ReplicateSet read_replicates(std::istream& in, const std::string& source = "<replicates>") {
  detail::expect_header(in, source, {"loc_id", "rep_id", "value"});
  struct Entry {
    std::uint64_t loc, rep;
    double value;
    std::size_t line;
  };
  std::vector<Entry> entries;
  std::uint64_t n = 0;
  std::uint64_t m = 0;
  std::string line;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split_csv(line);
    if (f.size() != 3) {
      throw DataError(detail::where(source, lineno, 1) + ": expected 3 fields, found " +
                      std::to_string(f.size()));
    }
    Entry e{detail::parse_index(f[0].first, detail::where(source, lineno, f[0].second)),
            detail::parse_index(f[1].first, detail::where(source, lineno, f[1].second)),
            detail::parse_double(f[2].first, detail::where(source, lineno, f[2].second)), lineno};
    n = std::max(n, e.loc + 1);
    m = std::max(m, e.rep + 1);
    entries.push_back(e);
  }
  if (entries.empty()) throw DataError(source + ": no values");
  if (entries.size() != n * m) {
    throw DataError(source + ": expected " + std::to_string(n) + " x " + std::to_string(m) +
                    " = " + std::to_string(n * m) + " values, found " +
                    std::to_string(entries.size()));
  }
  Eigen::MatrixXd z(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
  std::vector<bool> seen(n * m, false);
  for (const auto& e : entries) {
    const auto idx = e.rep * n + e.loc;
    if (seen[idx]) {
      throw DataError(detail::where(source, e.line, 1) + ": duplicate entry for loc_id " +
                      std::to_string(e.loc) + ", rep_id " + std::to_string(e.rep));
    }
    seen[idx] = true;
    z(static_cast<Eigen::Index>(e.loc), static_cast<Eigen::Index>(e.rep)) = e.value;
  }
  return ReplicateSet(std::move(z));
}

inline void save_locations(const std::string& path, const LocationSet& locs) {
  auto out = detail::open_out(path);
  write_locations(out, locs);
}

inline LocationSet load_locations(const std::string& path) {
  auto in = detail::open_in(path);
  return read_locations(in, path);
}

inline void save_replicates(const std::string& path, const ReplicateSet& reps) {
  auto out = detail::open_out(path);
  write_replicates(out, reps);
}

inline ReplicateSet load_replicates(const std::string& path) {
  auto in = detail::open_in(path);
  return read_replicates(in, path);
}

// ---- key=value records -----------------------------------------------------

/// Ordered key=value record. Keys keep insertion order on output.
class Record {
 public:
  void set(const std::string& key, const std::string& value) {
    if (index_.emplace(key, items_.size()).second) {
      items_.emplace_back(key, value);
    } else {
      items_[index_[key]].second = value;
    }
  }
  void set(const std::string& key, double value) { set(key, format_double(value)); }
  void set(const std::string& key, bool value) {
    set(key, std::string(value ? "true" : "false"));
  }
  void set(const std::string& key, const char* value) { set(key, std::string(value)); }
  template <typename I>
    requires std::is_integral_v<I>
  void set(const std::string& key, I value) {
    set(key, std::to_string(value));
  }

  bool has(const std::string& key) const { return index_.count(key) > 0; }

  const std::string& get(const std::string& key) const {
    auto it = index_.find(key);
    if (it == index_.end()) throw DataError(source_ + ": missing key '" + key + "'");
    return items_[it->second].second;
  }

  double get_double(const std::string& key) const {
    return detail::parse_double(get(key), source_ + ": key '" + key + "'");
  }

  long long get_int(const std::string& key) const {
    const auto& s = get(key);
    long long v = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size()) {
      throw DataError(source_ + ": key '" + key + "': cannot parse '" + s + "' as an integer");
    }
    return v;
  }

  bool get_bool(const std::string& key) const {
    const auto& s = get(key);
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw DataError(source_ + ": key '" + key + "': expected true or false, got '" + s + "'");
  }

  std::vector<double> get_list(const std::string& key) const {
    std::vector<double> out;
    for (const auto& [field, col] : detail::split_csv(get(key))) {
      out.push_back(detail::parse_double(field, source_ + ": key '" + key + "'"));
    }
    return out;
  }

  const std::vector<std::pair<std::string, std::string>>& items() const noexcept { return items_; }
  void set_source(std::string s) { source_ = std::move(s); }

  void write(std::ostream& out) const {
    for (const auto& [k, v] : items_) out << k << '=' << v << '\n';
  }

  static Record parse(std::istream& in, const std::string& source = "<record>") {
    Record rec;
    rec.source_ = source;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto t = detail::trim(line);
      if (t.empty() || t.front() == '#') continue;
      const auto eq = t.find('=');
      if (eq == std::string_view::npos || eq == 0) {
        throw DataError(detail::where(source, lineno, 1) + ": expected key=value, got '" +
                        std::string(t) + "'");
      }
      const auto key = std::string(detail::trim(t.substr(0, eq)));
      if (rec.has(key)) {
        throw DataError(detail::where(source, lineno, 1) + ": duplicate key '" + key + "'");
      }
      rec.set(key, std::string(detail::trim(t.substr(eq + 1))));
    }
    return rec;
  }

  static Record load(const std::string& path) {
    auto in = detail::open_in(path);
    return parse(in, path);
  }

  void save(const std::string& path) const {
    auto out = detail::open_out(path);
    write(out);
  }

 private:
  std::vector<std::pair<std::string, std::string>> items_;
  std::map<std::string, std::size_t> index_;
  std::string source_ = "<record>";
};

inline std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_double(v[i]);
  return s;
}

inline void put_theta(Record& rec, const std::string& prefix, const MaternParams& t) {
  rec.set(prefix + "sigma2", t.sigma2);
  rec.set(prefix + "beta", t.beta);
  rec.set(prefix + "nu", t.nu);
}

inline MaternParams get_theta(const Record& rec, const std::string& prefix) {
  return {rec.get_double(prefix + "sigma2"), rec.get_double(prefix + "beta"),
          rec.get_double(prefix + "nu")};
}

}  // namespace mlqe::io

#endif  // MLQE_IO_HPP
