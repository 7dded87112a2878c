// SPDX-License-Identifier: Apache-2.0
/**
 * @file report_io.hpp
 * @brief Report rows, verdict rules and deterministic CSV/JSON output.
 */
#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include <json.hpp>

#include "dynamics.hpp"
#include "errors.hpp"

namespace msqg {

enum class Verdict { kPass, kFail, kInconclusive };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::kPass:
      return "pass";
    case Verdict::kFail:
      return "fail";
    case Verdict::kInconclusive:
      return "inconclusive";
  }
  return "fail";
}

/// How a row compares its estimate with the target.
enum class Relation {
  kWithin,   ///< |estimate - target| <= tolerance
  kAtLeast,  ///< estimate >= target - tolerance
  kAtMost,   ///< estimate <= target + tolerance
};

inline const char* to_string(Relation r) {
  switch (r) {
    case Relation::kWithin:
      return "within";
    case Relation::kAtLeast:
      return "at_least";
    case Relation::kAtMost:
      return "at_most";
  }
  return "within";
}

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct ReportRow {
  std::string name;
  double estimate = kNaN;
  double stderr_value = kNaN;
  double p_value = kNaN;
  double target = kNaN;
  double tolerance = 0.0;
  Relation relation = Relation::kWithin;
  Verdict verdict = Verdict::kFail;
};

/// Pass when the relation holds; a miss is inconclusive only when the
/// standard error exceeds the tolerance. Non-finite estimates are
/// inconclusive.
inline Verdict judge(double estimate, double stderr_value, double target, double tolerance,
                     Relation rel) {
  if (!std::isfinite(estimate)) return Verdict::kInconclusive;
  bool ok = false;
  switch (rel) {
    case Relation::kWithin:
      ok = std::abs(estimate - target) <= tolerance;
      break;
    case Relation::kAtLeast:
      ok = estimate >= target - tolerance;
      break;
    case Relation::kAtMost:
      ok = estimate <= target + tolerance;
      break;
  }
  if (ok) return Verdict::kPass;
  if (std::isfinite(stderr_value) && stderr_value > tolerance) return Verdict::kInconclusive;
  return Verdict::kFail;
}

struct SeriesPoint {
  std::string series;
  double x = 0.0;
  double y = 0.0;
  double yerr = kNaN;
};

struct Report {
  std::string experiment;
  std::uint64_t seed = 0;
  std::string input_hash;
  nlohmann::json config = nlohmann::json::object();
  std::vector<ReportRow> rows;
  std::vector<SeriesPoint> series;
  std::size_t guard_events = 0;
  std::size_t runs = 0;

  ReportRow& add(std::string name, double estimate, double stderr_value, double p_value,
                 double target, double tolerance, Relation rel) {
    ReportRow r;
    r.name = std::move(name);
    r.estimate = estimate;
    r.stderr_value = stderr_value;
    r.p_value = p_value;
    r.target = target;
    r.tolerance = tolerance;
    r.relation = rel;
    r.verdict = judge(estimate, stderr_value, target, tolerance, rel);
    rows.push_back(std::move(r));
    return rows.back();
  }

  /// Row for a significance test: the estimate is the test statistic and
  /// the relation applies to the p-value, which must reach alpha.
  ReportRow& add_test(std::string name, double statistic, double p_value, double alpha) {
    ReportRow r;
    r.name = std::move(name);
    r.estimate = statistic;
    r.p_value = p_value;
    r.target = alpha;
    r.relation = Relation::kAtLeast;
    r.verdict = judge(p_value, kNaN, alpha, 0.0, Relation::kAtLeast);
    rows.push_back(std::move(r));
    return rows.back();
  }

  void add_series(const std::string& s, double x, double y, double yerr = kNaN) {
    series.push_back({s, x, y, yerr});
  }

  [[nodiscard]] bool passed() const {
    for (const auto& r : rows) {
      if (r.verdict != Verdict::kPass) return false;
    }
    return !rows.empty();
  }
  [[nodiscard]] bool any_failed() const {
    for (const auto& r : rows) {
      if (r.verdict == Verdict::kFail) return true;
    }
    return false;
  }
};

/// Shortest round-trip decimal form; "nan" and "inf" spelled out.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline nlohmann::json number_json(double v) {
  if (std::isfinite(v)) return v;
  return format_number(v);
}

inline void write_report_csv(const Report& r, std::ostream& out) {
  out << "experiment,name,estimate,stderr,p_value,target,tolerance,relation,verdict\n";
  for (const auto& row : r.rows) {
    out << r.experiment << ',' << row.name << ',' << format_number(row.estimate) << ','
        << format_number(row.stderr_value) << ',' << format_number(row.p_value) << ','
        << format_number(row.target) << ',' << format_number(row.tolerance) << ','
        << to_string(row.relation) << ',' << to_string(row.verdict) << '\n';
  }
}

inline void write_series_csv(const Report& r, std::ostream& out) {
  out << "series,x,y,yerr\n";
  for (const auto& s : r.series) {
    out << s.series << ',' << format_number(s.x) << ',' << format_number(s.y) << ','
        << format_number(s.yerr) << '\n';
  }
}

inline nlohmann::json report_json(const Report& r) {
  nlohmann::json j;
  j["experiment"] = r.experiment;
  j["seed"] = r.seed;
  j["input_hash"] = r.input_hash;
  j["config"] = r.config;
  j["runs"] = r.runs;
  j["guard_events"] = r.guard_events;
  j["passed"] = r.passed();
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"name", row.name},
                    {"estimate", number_json(row.estimate)},
                    {"stderr", number_json(row.stderr_value)},
                    {"p_value", number_json(row.p_value)},
                    {"target", number_json(row.target)},
                    {"tolerance", number_json(row.tolerance)},
                    {"relation", to_string(row.relation)},
                    {"verdict", to_string(row.verdict)}});
  }
  j["rows"] = rows;
  return j;
}

/// Git blob hash: SHA-1 of "blob <size>\0" followed by the content.
inline std::string git_blob_hash(const std::string& content) {
  const std::string header = "blob " + std::to_string(content.size()) + std::string(1, '\0');
  const std::string data = header + content;
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha1(), nullptr) != 1) {
    throw Error("SHA-1 digest failed");
  }
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) {
    os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  }
  return os.str();
}

/// Writes through a temporary file and renames, so readers never observe a
/// partially written file.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

/// Trajectory CSV with columns t,i,x,y,xi over recorded snapshots.
inline void write_trajectory_csv(const Trajectory& tr, std::ostream& out) {
  out << "t,i,x,y,xi\n";
  for (std::size_t s = 0; s < tr.snapshots.size(); ++s) {
    for (std::size_t i = 0; i < tr.snapshots[s].size(); ++i) {
      out << format_number(tr.times[s]) << ',' << i << ',' << format_number(tr.snapshots[s][i].u())
          << ',' << format_number(tr.snapshots[s][i].v()) << ',' << format_number(tr.xi[i]) << '\n';
    }
  }
}

}  // namespace msqg
