#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "pocusiq/core/error.hpp"
#include "pocusiq/core/rng.hpp"

namespace pocusiq {

inline constexpr const char* kManifestHeader = "id,low_path,high_path,specimen_type,session_id,split,excluded,reason";

struct ManifestRow {
  std::string id;
  std::string low_path;
  std::string high_path;
  std::string specimen_type;
  std::string session_id;
  std::string split;  ///< train | val | test, or empty before splitting
  bool excluded = false;
  std::string reason;
  bool missing = false;  ///< set at load time when a referenced file is absent
};

struct PairManifest {
  std::vector<ManifestRow> rows;
  std::filesystem::path base_dir;  ///< relative paths resolve against this

  std::filesystem::path resolve(const std::string& p) const {
    std::filesystem::path path(p);
    return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
  }

  bool usable(const ManifestRow& r) const { return !r.excluded && !r.missing; }

  std::vector<const ManifestRow*> in_split(const std::string& split) const {
    std::vector<const ManifestRow*> out;
    for (const auto& r : rows) {
      if (usable(r) && r.split == split) out.push_back(&r);
    }
    return out;
  }

  std::size_t count(const std::string& split) const { return in_split(split).size(); }
};

namespace manifest_detail {

// One CSV record with double-quote escaping; embedded newlines are not supported.
inline std::vector<std::string> split_csv_line(const std::string& line, const std::string& where) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) throw DataError(where + ": unterminated quoted field");
  out.push_back(std::move(cur));
  return out;
}

inline std::string csv_field(const std::string& v) {
  if (v.find_first_of(",\"") == std::string::npos) return v;
  std::string out = "\"";
  for (char c : v) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

inline bool parse_flag(const std::string& v, const std::string& where) {
  if (v.empty() || v == "0" || v == "false" || v == "no") return false;
  if (v == "1" || v == "true" || v == "yes") return true;
  throw DataError(where + ": excluded must be 0/1/true/false, got '" + v + "'");
}

}  // namespace manifest_detail

inline const std::set<std::string>& specimen_types() {
  static const std::set<std::string> s{"breast", "sarcoma", "colorectal", "phantom"};
  return s;
}

/// Parses manifest CSV text. When `check_files` is set, rows whose image
/// files are absent are flagged `missing` rather than rejected.
inline PairManifest parse_manifest(const std::string& text, const std::string& origin,
                                   const std::filesystem::path& base_dir, bool check_files = true) {
  PairManifest m;
  m.base_dir = base_dir;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  bool header_seen = false;
  std::set<std::string> ids;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(lineno);
    if (!header_seen) {
      if (line != kManifestHeader) {
        throw DataError(where + ": expected header '" + std::string(kManifestHeader) + "'");
      }
      header_seen = true;
      continue;
    }
    auto f = manifest_detail::split_csv_line(line, where);
    if (f.size() != 8) {
      throw DataError(where + ": expected 8 fields, got " + std::to_string(f.size()));
    }
    ManifestRow r{f[0], f[1], f[2], f[3], f[4], f[5], manifest_detail::parse_flag(f[6], where), f[7]};
    if (r.id.empty()) throw DataError(where + ": empty id");
    if (!ids.insert(r.id).second) throw DataError(where + ": duplicate id '" + r.id + "'");
    if (r.low_path.empty() || r.high_path.empty()) throw DataError(where + ": empty image path");
    if (!specimen_types().count(r.specimen_type)) {
      throw DataError(where + ": unknown specimen_type '" + r.specimen_type + "'");
    }
    if (!r.split.empty() && r.split != "train" && r.split != "val" && r.split != "test") {
      throw DataError(where + ": split must be train, val, test or empty, got '" + r.split + "'");
    }
    if (check_files) {
      r.missing = !std::filesystem::exists(m.resolve(r.low_path)) || !std::filesystem::exists(m.resolve(r.high_path));
    }
    m.rows.push_back(std::move(r));
  }
  if (!header_seen) throw DataError(origin + ": empty manifest");
  return m;
}

inline PairManifest load_manifest(const std::filesystem::path& path, bool check_files = true) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open manifest " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_manifest(ss.str(), path.string(), path.parent_path(), check_files);
}

inline std::string format_manifest(const PairManifest& m) {
  using manifest_detail::csv_field;
  std::string out = std::string(kManifestHeader) + "\n";
  for (const auto& r : m.rows) {
    out += csv_field(r.id) + "," + csv_field(r.low_path) + "," + csv_field(r.high_path) + "," +
           csv_field(r.specimen_type) + "," + csv_field(r.session_id) + "," + csv_field(r.split) + "," +
           (r.excluded ? "1" : "0") + "," + csv_field(r.reason) + "\n";
  }
  return out;
}

inline void write_manifest(const std::filesystem::path& path, const PairManifest& m) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("cannot write manifest " + path.string());
  f << format_manifest(m);
}

/// Seeded split of the usable rows: `fixed_val_n` validation rows first, then
/// round((1 - train_frac) * rest) test rows, the remainder train. Unusable
/// rows get an empty split.
inline PairManifest make_split(const PairManifest& in, double train_frac = 0.9, int fixed_val_n = 10,
                               std::uint64_t seed = 0) {
  if (!(train_frac > 0.0 && train_frac <= 1.0)) throw UsageError("train_frac must lie in (0, 1]");
  if (fixed_val_n < 0) throw UsageError("fixed_val_n must be non-negative");
  PairManifest out = in;
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < out.rows.size(); ++i) {
    if (out.usable(out.rows[i])) idx.push_back(i);
    out.rows[i].split.clear();
  }
  if (idx.size() < 12) {
    throw DataError("manifest has " + std::to_string(idx.size()) + " usable rows; at least 12 are needed to split");
  }
  Rng rng(derive_seed(seed, "split"));
  rng.shuffle(idx.begin(), idx.end());
  const std::size_t n_val = std::min<std::size_t>(static_cast<std::size_t>(fixed_val_n), idx.size() - 2);
  const std::size_t rest = idx.size() - n_val;
  const auto n_test = static_cast<std::size_t>(std::lround((1.0 - train_frac) * static_cast<double>(rest)));
  for (std::size_t k = 0; k < idx.size(); ++k) {
    out.rows[idx[k]].split = k < n_val ? "val" : (k < n_val + n_test ? "test" : "train");
  }
  return out;
}

}  // namespace pocusiq
