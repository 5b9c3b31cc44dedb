#pragma once

#include <cmath>
#include <cstddef>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "vot/error.hpp"

namespace vot {

enum class Version { None, A, B };

// Which arm carries the version labels. Versions of control and versions of
// treatment are symmetric.
enum class VersionArm { Control, Treated };

struct Unit {
  std::string id;
  bool treated = false;
  Version version = Version::None;
  double outcome = 0.0;
  std::vector<double> covariates;

  friend bool operator==(const Unit&, const Unit&) = default;
};

struct MatchedSet {
  int set_id = 0;
  std::vector<std::size_t> members;  // indices into Cohort::units
  int treated_count = 0;             // m_i
  int size = 0;                      // n_i

  friend bool operator==(const MatchedSet&, const MatchedSet&) = default;
};

// Immutable after construction/validation; safe for concurrent reads.
struct Cohort {
  std::vector<Unit> units;
  std::vector<MatchedSet> sets;  // empty before matching
  std::vector<std::string> covariate_names;
  VersionArm version_arm = VersionArm::Control;
  bool has_versions = false;

  std::size_t num_sets() const { return sets.size(); }  // I
  std::size_t num_units() const { return units.size(); }  // N over sets == units when fully matched
  std::size_t total_in_sets() const {
    std::size_t n = 0;
    for (const auto& s : sets) n += static_cast<std::size_t>(s.size);
    return n;
  }
  std::size_t total_treated_in_sets() const {
    std::size_t m = 0;
    for (const auto& s : sets) m += static_cast<std::size_t>(s.treated_count);
    return m;
  }
  std::size_t treated_count() const {
    std::size_t m = 0;
    for (const auto& u : units) m += u.treated ? 1u : 0u;
    return m;
  }

  bool on_version_arm(const Unit& u) const {
    return (version_arm == VersionArm::Control) ? !u.treated : u.treated;
  }

  friend bool operator==(const Cohort&, const Cohort&) = default;
};

struct ColumnSpec {
  std::string id = "id";
  std::string treated = "treated";
  std::string outcome = "outcome";
  std::string version = "version";  // column may be absent from the file
  std::string set_id = "set_id";    // optional column
  std::vector<std::string> covariates;  // empty: all remaining columns
  // Free-string version labels mapped onto {A, B}.
  std::string version_a = "a";
  std::string version_b = "b";
  VersionArm version_arm = VersionArm::Control;
};

namespace detail {

// Minimal CSV reader: comma separated, double quotes with "" escapes,
// no embedded newlines.
inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(field);
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  out.push_back(field);
  return out;
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += '"';
  return out;
}

inline double parse_double(const std::string& s, const std::string& what, std::size_t row) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    fail(errc::invalid_input,
         "row " + std::to_string(row) + ": cannot parse " + what + " value '" + s + "'");
  }
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

// Rebuilds MatchedSet bookkeeping (m_i, n_i) from membership and checks every
// cohort invariant. Violations are rejected, never repaired.
inline void validate(const Cohort& c) {
  std::unordered_set<std::string> ids;
  ids.reserve(c.units.size());
  for (const auto& u : c.units) {
    require(std::isfinite(u.outcome), errc::invalid_input,
            "unit '" + u.id + "' has non-finite outcome");
    require(u.covariates.size() == c.covariate_names.size(), errc::invalid_input,
            "unit '" + u.id + "' has wrong covariate count");
    for (double x : u.covariates)
      require(std::isfinite(x), errc::invalid_input,
              "unit '" + u.id + "' has non-finite covariate");
    require(ids.insert(u.id).second, errc::invalid_input, "duplicate id '" + u.id + "'");
    if (c.has_versions) {
      if (c.on_version_arm(u)) {
        require(u.version != Version::None, errc::invalid_input,
                "unit '" + u.id + "' on the version arm lacks a version label");
      } else {
        require(u.version == Version::None, errc::invalid_input,
                "unit '" + u.id + "' carries a version label on the non-version arm");
      }
    } else {
      require(u.version == Version::None, errc::invalid_input,
              "unit '" + u.id + "' has a version label but the cohort has no versions");
    }
  }
  std::vector<bool> seen(c.units.size(), false);
  for (const auto& s : c.sets) {
    int m = 0;
    int n = 0;
    for (std::size_t idx : s.members) {
      require(idx < c.units.size(), errc::invalid_input, "matched set references unknown unit");
      require(!seen[idx], errc::invalid_input,
              "unit '" + c.units[idx].id + "' appears in more than one matched set");
      seen[idx] = true;
      ++n;
      if (c.units[idx].treated) ++m;
    }
    require(m == s.treated_count && n == s.size, errc::invalid_input,
            "set " + std::to_string(s.set_id) + " has inconsistent counts");
    const std::string label = "set " + std::to_string(s.set_id);
    require(n >= 2, errc::invalid_input, label + " has fewer than two members");
    require(m >= 1 && m <= n - 1, errc::invalid_input,
            label + " must contain at least one treated and one control");
    require(std::min(m, n - m) == 1, errc::invalid_input,
            label + " violates min(m, n-m)=1");
  }
}

inline Cohort load_csv(const std::string& path, const ColumnSpec& spec = {}) {
  std::ifstream in(path);
  require(in.good(), errc::io, "cannot open '" + path + "'");
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), errc::invalid_input,
          "'" + path + "' is empty");
  const auto header = detail::split_csv_line(line);

  std::unordered_map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  auto find_col = [&](const std::string& name, bool required) -> std::optional<std::size_t> {
    auto it = col.find(name);
    if (it == col.end()) {
      require(!required, errc::invalid_input, "missing column '" + name + "'");
      return std::nullopt;
    }
    return it->second;
  };

  const std::size_t id_col = *find_col(spec.id, true);
  const std::size_t treated_col = *find_col(spec.treated, true);
  const std::size_t outcome_col = *find_col(spec.outcome, true);
  const auto version_col = find_col(spec.version, false);
  const auto set_col = find_col(spec.set_id, false);

  Cohort c;
  c.version_arm = spec.version_arm;
  c.has_versions = version_col.has_value();

  std::vector<std::size_t> cov_cols;
  if (!spec.covariates.empty()) {
    for (const auto& name : spec.covariates) {
      cov_cols.push_back(*find_col(name, true));
      c.covariate_names.push_back(name);
    }
  } else {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (i == id_col || i == treated_col || i == outcome_col) continue;
      if (version_col && i == *version_col) continue;
      if (set_col && i == *set_col) continue;
      cov_cols.push_back(i);
      c.covariate_names.push_back(header[i]);
    }
  }

  std::unordered_map<int, std::vector<std::size_t>> set_members;
  std::vector<int> set_order;  // first-appearance order, for stable output
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
    const auto fields = detail::split_csv_line(line);
    require(fields.size() >= header.size(), errc::invalid_input,
            "row " + std::to_string(row) + " has too few fields");
    Unit u;
    u.id = fields[id_col];
    const std::string& t = fields[treated_col];
    require(t == "0" || t == "1", errc::invalid_input,
            "row " + std::to_string(row) + ": treated must be 0 or 1, got '" + t + "'");
    u.treated = (t == "1");
    require(!fields[outcome_col].empty(), errc::invalid_input,
            "row " + std::to_string(row) + ": missing outcome");
    u.outcome = detail::parse_double(fields[outcome_col], "outcome", row);
    if (version_col) {
      const std::string& v = fields[*version_col];
      if (v == spec.version_a) u.version = Version::A;
      else if (v == spec.version_b) u.version = Version::B;
      else if (v.empty()) u.version = Version::None;
      else
        fail(errc::invalid_input,
             "row " + std::to_string(row) + ": unknown version label '" + v + "'");
    }
    for (std::size_t k : cov_cols)
      u.covariates.push_back(detail::parse_double(fields[k], "covariate", row));
    c.units.push_back(std::move(u));
    if (set_col && !fields[*set_col].empty()) {
      int sid = 0;
      try {
        sid = std::stoi(fields[*set_col]);
      } catch (const std::exception&) {
        fail(errc::invalid_input, "row " + std::to_string(row) + ": bad set_id");
      }
      auto [it, inserted] = set_members.try_emplace(sid);
      if (inserted) set_order.push_back(sid);
      it->second.push_back(c.units.size() - 1);
    }
  }

  if (c.has_versions) {
    // A version column whose values are all empty is treated as absent.
    bool any = false;
    for (const auto& u : c.units) any = any || u.version != Version::None;
    c.has_versions = any;
  }

  for (int sid : set_order) {
    MatchedSet s;
    s.set_id = sid;
    s.members = set_members[sid];
    for (std::size_t idx : s.members) {
      ++s.size;
      if (c.units[idx].treated) ++s.treated_count;
    }
    c.sets.push_back(std::move(s));
  }

  validate(c);
  return c;
}

inline void save_csv(const Cohort& c, std::ostream& out) {
  out << "id,treated,version,outcome";
  for (const auto& name : c.covariate_names) out << ',' << detail::csv_escape(name);
  out << ",set_id\n";
  std::vector<std::optional<int>> set_of(c.units.size());
  for (const auto& s : c.sets)
    for (std::size_t idx : s.members) set_of[idx] = s.set_id;
  for (std::size_t i = 0; i < c.units.size(); ++i) {
    const Unit& u = c.units[i];
    out << detail::csv_escape(u.id) << ',' << (u.treated ? '1' : '0') << ',';
    if (u.version == Version::A) out << 'a';
    else if (u.version == Version::B) out << 'b';
    out << ',' << detail::format_double(u.outcome);
    for (double x : u.covariates) out << ',' << detail::format_double(x);
    out << ',';
    if (set_of[i]) out << *set_of[i];
    out << '\n';
  }
}

inline void save_csv(const Cohort& c, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), errc::io, "cannot write '" + path + "'");
  save_csv(c, out);
}

// Keeps every unit of the non-version arm plus only version-v units of the
// version arm. Matched sets are dropped: per-version analyses of real data
// re-match from scratch.
inline Cohort subset_by_version(const Cohort& c, Version v) {
  require(v == Version::A || v == Version::B, errc::invalid_input,
          "subset_by_version: version must be A or B");
  require(c.has_versions, errc::invalid_input, "version column absent");
  Cohort out;
  out.covariate_names = c.covariate_names;
  out.version_arm = c.version_arm;
  out.has_versions = true;
  for (const auto& u : c.units) {
    if (!c.on_version_arm(u) || u.version == v) out.units.push_back(u);
  }
  return out;
}

// Version subsetting that keeps sets, restricting the version arm within each
// set to version v. Used for balanced simulated designs where every set holds
// both versions; errors if a set would lose its last version-arm member.
inline Cohort filter_within_sets(const Cohort& c, Version v) {
  require(v == Version::A || v == Version::B, errc::invalid_input,
          "filter_within_sets: version must be A or B");
  require(c.has_versions, errc::invalid_input, "version column absent");
  require(!c.sets.empty(), errc::invalid_input, "filter_within_sets requires matched sets");
  Cohort out;
  out.covariate_names = c.covariate_names;
  out.version_arm = c.version_arm;
  out.has_versions = true;
  std::vector<std::size_t> new_index(c.units.size(), static_cast<std::size_t>(-1));
  for (const auto& s : c.sets) {
    MatchedSet ns;
    ns.set_id = s.set_id;
    for (std::size_t idx : s.members) {
      const Unit& u = c.units[idx];
      if (c.on_version_arm(u) && u.version != v) continue;
      if (new_index[idx] == static_cast<std::size_t>(-1)) {
        new_index[idx] = out.units.size();
        out.units.push_back(u);
      }
      ns.members.push_back(new_index[idx]);
      ++ns.size;
      if (u.treated) ++ns.treated_count;
    }
    require(ns.treated_count >= 1 && ns.size - ns.treated_count >= 1, errc::invalid_input,
            "set " + std::to_string(s.set_id) + " has no version-" +
                (v == Version::A ? std::string("a") : std::string("b")) + " members left");
    out.sets.push_back(std::move(ns));
  }
  validate(out);
  return out;
}

}  // namespace vot
