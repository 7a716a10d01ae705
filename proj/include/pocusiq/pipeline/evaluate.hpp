#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pocusiq/image_io.hpp"
#include "pocusiq/metrics/full_reference.hpp"
#include "pocusiq/metrics/niqe.hpp"
#include "pocusiq/metrics/piqe.hpp"
#include "pocusiq/metrics/stats.hpp"
#include "pocusiq/pipeline/manifest.hpp"
#include "pocusiq/preprocess.hpp"

namespace pocusiq {

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

struct MetricRow {
  std::string group;  ///< low | enhanced | reference
  std::string image;
  double ssim = kMissing;
  double psnr_db = kMissing;
  double niqe = kMissing;
  double piqe = kMissing;
};

struct GroupSummary {
  std::string group;
  MeanStd ssim, psnr_db, niqe, piqe;
  int count = 0;
};

struct MetricReport {
  std::vector<MetricRow> rows;
  std::vector<std::string> gaps;  ///< missing files or metrics that could not be computed
  std::vector<std::pair<std::string, TTestResult>> tests;  ///< enhanced vs low, per metric
};

inline const std::vector<std::string>& report_groups() {
  static const std::vector<std::string> g{"low", "enhanced", "reference"};
  return g;
}

/// Mean and sample std of one metric over a group, skipping gaps.
inline MeanStd summarize(const MetricReport& r, const std::string& group, double MetricRow::*field, int* count = nullptr) {
  std::vector<double> v;
  for (const auto& row : r.rows) {
    if (row.group == group && std::isfinite(row.*field)) v.push_back(row.*field);
  }
  if (count) *count = static_cast<int>(v.size());
  if (v.empty()) return {kMissing, kMissing};
  return mean_std(v);
}

inline std::optional<std::filesystem::path> find_enhanced(const std::filesystem::path& dir, const std::string& id) {
  for (const char* ext : {".png", ".pgm"}) {
    auto p = dir / (id + ext);
    if (std::filesystem::exists(p)) return p;
  }
  return std::nullopt;
}

/// Table-style metrics for the low-quality inputs, the enhanced outputs
/// (`<enhanced_dir>/<id>.png|pgm`, skipped when the directory is empty) and
/// the references of the chosen split. Metrics are computed in 0..255.
/// Missing files become gaps; the rest of the report is still produced.
inline MetricReport evaluate_pairs(const PairManifest& m, const std::filesystem::path& enhanced_dir,
                                   const NiqeModel* model, const std::string& split = "test") {
  MetricReport rep;
  auto to_u8 = [](const Image& img) {
    return img.domain() == IntensityDomain::U8_0_255 ? img : normalize(img, IntensityDomain::U8_0_255);
  };
  auto no_ref = [&](MetricRow& row, const Image& img) {
    if (model) {
      try {
        row.niqe = niqe(img, *model);
      } catch (const Error& e) {
        rep.gaps.push_back(row.group + "/" + row.image + ": niqe: " + e.what());
      }
    }
    try {
      row.piqe = piqe(img);
    } catch (const Error& e) {
      rep.gaps.push_back(row.group + "/" + row.image + ": piqe: " + e.what());
    }
  };
  for (const auto& r : m.rows) {
    if (r.excluded || r.split != split) continue;
    if (r.missing) {
      rep.gaps.push_back(r.id + ": low or high image file is missing");
      continue;
    }
    const Image high = to_u8(load_image(m.resolve(r.high_path).string()));
    const Image low = to_u8(load_image(m.resolve(r.low_path).string()));
    std::vector<std::pair<std::string, std::optional<Image>>> tests{{"low", low}};
    if (!enhanced_dir.empty()) {
      auto p = find_enhanced(enhanced_dir, r.id);
      if (p) {
        tests.emplace_back("enhanced", to_u8(load_image(p->string())));
      } else {
        rep.gaps.push_back(r.id + ": no enhanced image in " + enhanced_dir.string());
        tests.emplace_back("enhanced", std::nullopt);
      }
    }
    for (auto& [group, img] : tests) {
      MetricRow row{group, r.id};
      if (img) {
        if (img->same_shape(high)) {
          row.ssim = ssim(high, *img);
          row.psnr_db = psnr(high, *img);
        } else {
          rep.gaps.push_back(group + "/" + r.id + ": size differs from the reference");
        }
        no_ref(row, *img);
      }
      rep.rows.push_back(row);
    }
    MetricRow ref{"reference", r.id};
    no_ref(ref, high);
    rep.rows.push_back(ref);
  }
  if (!enhanced_dir.empty()) {
    for (auto [name, field] : {std::pair{"ssim", &MetricRow::ssim}, std::pair{"psnr_db", &MetricRow::psnr_db},
                               std::pair{"niqe", &MetricRow::niqe}, std::pair{"piqe", &MetricRow::piqe}}) {
      std::map<std::string, double> low_v, enh_v;
      for (const auto& row : rep.rows) {
        if (!std::isfinite(row.*field)) continue;
        if (row.group == "low") low_v[row.image] = row.*field;
        if (row.group == "enhanced") enh_v[row.image] = row.*field;
      }
      std::vector<double> a, b;
      for (const auto& [id, v] : enh_v) {
        auto it = low_v.find(id);
        if (it == low_v.end()) continue;
        a.push_back(v);
        b.push_back(it->second);
      }
      try {
        rep.tests.emplace_back(name, paired_t_test(a, b));
      } catch (const Error& e) {
        rep.gaps.push_back(std::string("t-test ") + name + ": " + e.what());
      }
    }
  }
  return rep;
}

namespace evaluate_detail {

inline std::string num(double v, int prec = 6) {
  if (!std::isfinite(v)) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

inline std::string cell(const MeanStd& s, int prec) {
  if (!std::isfinite(s.mean)) return "-";
  return num(s.mean, prec) + " +/- " + num(s.std, prec);
}

}  // namespace evaluate_detail

/// CSV rows followed by a `# `-prefixed summary table and t-tests.
inline std::string format_report(const MetricReport& r) {
  using evaluate_detail::cell;
  using evaluate_detail::num;
  std::string out = "group,image,ssim,psnr_db,niqe,piqe\n";
  for (const auto& row : r.rows) {
    out += row.group + "," + row.image + "," + num(row.ssim) + "," + num(row.psnr_db) + "," + num(row.niqe) + "," +
           num(row.piqe) + "\n";
  }
  char line[256];
  out += "# summary (mean +/- sample std)\n";
  std::snprintf(line, sizeof line, "# %-10s %5s  %-18s %-20s %-18s %-20s\n", "group", "n", "SSIM", "PSNR (dB)", "NIQE",
                "PIQE");
  out += line;
  for (const auto& g : report_groups()) {
    int n = 0;
    for (const auto& row : r.rows) n += row.group == g;
    if (n == 0) continue;
    std::snprintf(line, sizeof line, "# %-10s %5d  %-18s %-20s %-18s %-20s\n", g.c_str(), n,
                  cell(summarize(r, g, &MetricRow::ssim), 2).c_str(), cell(summarize(r, g, &MetricRow::psnr_db), 2).c_str(),
                  cell(summarize(r, g, &MetricRow::niqe), 2).c_str(), cell(summarize(r, g, &MetricRow::piqe), 2).c_str());
    out += line;
  }
  for (const auto& [name, t] : r.tests) {
    std::snprintf(line, sizeof line, "# paired t-test enhanced vs low %s: t=%.4f dof=%d p=%.3g\n", name.c_str(), t.t,
                  static_cast<int>(t.dof), t.p);
    out += line;
  }
  for (const auto& g : r.gaps) out += "# gap: " + g + "\n";
  return out;
}

inline void write_report(const std::filesystem::path& path, const MetricReport& r) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("cannot write report " + path.string());
  f << format_report(r);
}

}  // namespace pocusiq
