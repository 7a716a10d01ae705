#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "pocusiq/core/error.hpp"
#include "pocusiq/core/rng.hpp"
#include "pocusiq/filter.hpp"
#include "pocusiq/image.hpp"
#include "pocusiq/preprocess.hpp"

// Physical coordinates throughout this module put pixel (i, j) at
// ((i + 0.5) * spacing_x, (j + 0.5) * spacing_y) mm, i.e. the origin is the
// outer corner of the first pixel. This keeps pyramid levels aligned.
namespace pocusiq {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point2&, const Point2&) = default;
};

/// Planar affine map p -> A p + t, with t in millimetres.
struct AffineTransform2D {
  double a11 = 1.0, a12 = 0.0;
  double a21 = 0.0, a22 = 1.0;
  double tx = 0.0, ty = 0.0;

  static constexpr AffineTransform2D identity() noexcept { return {}; }

  static constexpr AffineTransform2D translation(double x, double y) noexcept {
    return {1.0, 0.0, 0.0, 1.0, x, y};
  }

  /// Rotation by `degrees` and isotropic `scale` about `centre`, then shifted by (x, y).
  static AffineTransform2D similarity(double degrees, double scale, Point2 centre, double x = 0.0,
                                      double y = 0.0) noexcept {
    const double r = degrees * 3.14159265358979323846 / 180.0;
    const double c = scale * std::cos(r);
    const double s = scale * std::sin(r);
    AffineTransform2D t{c, -s, s, c, 0.0, 0.0};
    t.tx = centre.x - (c * centre.x - s * centre.y) + x;
    t.ty = centre.y - (s * centre.x + c * centre.y) + y;
    return t;
  }

  double determinant() const noexcept { return a11 * a22 - a12 * a21; }

  bool invertible(double tolerance = 1e-9) const noexcept {
    return std::abs(determinant()) > tolerance;
  }

  Point2 apply(Point2 p) const noexcept {
    return {a11 * p.x + a12 * p.y + tx, a21 * p.x + a22 * p.y + ty};
  }

  AffineTransform2D inverse() const {
    const double det = determinant();
    if (!(std::abs(det) > 1e-9)) throw NumericError("affine transform is singular");
    AffineTransform2D inv{a22 / det, -a12 / det, -a21 / det, a11 / det, 0.0, 0.0};
    inv.tx = -(inv.a11 * tx + inv.a12 * ty);
    inv.ty = -(inv.a21 * tx + inv.a22 * ty);
    return inv;
  }

  std::array<double, 6> params() const noexcept { return {a11, a12, a21, a22, tx, ty}; }

  static AffineTransform2D from_params(const std::array<double, 6>& p) noexcept {
    return {p[0], p[1], p[2], p[3], p[4], p[5]};
  }

  friend bool operator==(const AffineTransform2D&, const AffineTransform2D&) = default;
};

/// outer ∘ inner: apply `inner` first, then `outer`.
inline AffineTransform2D compose(const AffineTransform2D& outer, const AffineTransform2D& inner) {
  AffineTransform2D r;
  r.a11 = outer.a11 * inner.a11 + outer.a12 * inner.a21;
  r.a12 = outer.a11 * inner.a12 + outer.a12 * inner.a22;
  r.a21 = outer.a21 * inner.a11 + outer.a22 * inner.a21;
  r.a22 = outer.a21 * inner.a12 + outer.a22 * inner.a22;
  r.tx = outer.a11 * inner.tx + outer.a12 * inner.ty + outer.tx;
  r.ty = outer.a21 * inner.tx + outer.a22 * inner.ty + outer.ty;
  return r;
}

inline Point2 pixel_to_mm(const Image& img, double px, double py) noexcept {
  return {(px + 0.5) * img.spacing_x(), (py + 0.5) * img.spacing_y()};
}

inline Point2 mm_to_pixel(const Image& img, Point2 p) noexcept {
  return {p.x / img.spacing_x() - 0.5, p.y / img.spacing_y() - 0.5};
}

/// Three corresponding landmarks in millimetres.
struct FiducialSet {
  std::array<Point2, 3> points{};
  std::string source_image;

  double triangle_area() const noexcept {
    const auto& [a, b, c] = points;
    return 0.5 * std::abs((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y));
  }

  bool collinear(double tolerance = 1e-9) const noexcept { return triangle_area() <= tolerance; }
};

/// Exact affine taking each `src` point onto the matching `dst` point.
inline AffineTransform2D affine_from_fiducials(const FiducialSet& src, const FiducialSet& dst) {
  if (src.collinear()) throw NumericError("source fiducials are collinear");
  if (dst.collinear()) throw NumericError("destination fiducials are collinear");
  Eigen::Matrix3d m;
  Eigen::Vector3d bx, by;
  for (int i = 0; i < 3; ++i) {
    m(i, 0) = src.points[i].x;
    m(i, 1) = src.points[i].y;
    m(i, 2) = 1.0;
    bx(i) = dst.points[i].x;
    by(i) = dst.points[i].y;
  }
  const Eigen::FullPivLU<Eigen::Matrix3d> lu(m);
  if (!lu.isInvertible()) throw NumericError("fiducial system is singular");
  const Eigen::Vector3d rx = lu.solve(bx);
  const Eigen::Vector3d ry = lu.solve(by);
  return {rx(0), rx(1), ry(0), ry(1), rx(2), ry(2)};
}

/// Backward-mapping bilinear warp. `t` maps input-image millimetres onto
/// output millimetres; the output grid shares the input spacing. Samples that
/// fall outside the input take the domain minimum.
inline Image warp(const Image& img, const AffineTransform2D& t, int out_width, int out_height) {
  if (!t.invertible()) throw NumericError("cannot warp with a singular transform");
  if (out_width <= 0 || out_height <= 0) throw UsageError("warp output size must be positive");
  const AffineTransform2D inv = t.inverse();
  Image out(out_width, out_height, img.domain(), img.spacing_x(), img.spacing_y());
  const double fill = img.bounds().lo;
  for (int y = 0; y < out_height; ++y) {
    auto dst = out.row(y);
    for (int x = 0; x < out_width; ++x) {
      const Point2 src = mm_to_pixel(img, inv.apply(pixel_to_mm(out, x, y)));
      // Snap near-integer coordinates so pure integer shifts are exact.
      const double sx = std::abs(src.x - std::round(src.x)) < 1e-9 ? std::round(src.x) : src.x;
      const double sy = std::abs(src.y - std::round(src.y)) < 1e-9 ? std::round(src.y) : src.y;
      dst[x] = img.sample_bilinear(sx, sy, fill);
    }
  }
  return out;
}

inline Image warp(const Image& img, const AffineTransform2D& t) {
  return warp(img, t, img.width(), img.height());
}

/// Pearson correlation of two equally sized value sets. Returns 0 when
/// exactly one side is constant; throws when both are.
inline double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw UsageError("correlation inputs differ in length");
  const auto n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double saa = 0.0, sbb = 0.0, sab = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    saa += da * da;
    sbb += db * db;
    sab += da * db;
  }
  if (saa == 0.0 && sbb == 0.0) throw NumericError("normalized correlation of two constant images");
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

/// Normalized cross-correlation of two equally sized images.
inline double ncc(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw UsageError("ncc: image dimensions differ");
  return pearson(a.pixels(), b.pixels());
}

struct OffsetSelection {
  std::size_t index = 0;
  double score = 0.0;
};

/// Candidate with the highest NCC against `reference`; ties go to the lowest index.
inline OffsetSelection select_y_offset(const Image& reference, const std::vector<Image>& candidates) {
  if (candidates.empty()) throw UsageError("select_y_offset: no candidates");
  OffsetSelection best{0, -std::numeric_limits<double>::infinity()};
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (!candidates[i].same_shape(reference)) {
      throw UsageError("select_y_offset: candidate " + std::to_string(i) +
                       " differs in size from the reference");
    }
    const double s = ncc(reference, candidates[i]);
    if (s > best.score) best = {i, s};
  }
  return best;
}

struct RegistrationConfig {
  int max_iterations = 200;   ///< per pyramid level
  int pyramid_levels = 4;
  int spatial_samples = 2000; ///< random fixed-image positions per iteration
  std::uint64_t seed = 0;
  double initial_step_px = 2.0;
  double min_step_px = 1e-3;
  double gradient_delta_px = 0.05;

  void validate() const {
    if (max_iterations < 1 || pyramid_levels < 1 || spatial_samples < 1) {
      throw UsageError("registration counts must all be >= 1");
    }
  }
};

struct RegistrationResult {
  AffineTransform2D transform;
  double initial_ncc = 0.0;
  double final_ncc = 0.0;
  int iterations = 0;
};

namespace reg_detail {

inline Image downsample(const Image& img, int factor) {
  if (factor <= 1) return img;
  const auto k = filter::gaussian_kernel(0.5 * factor, static_cast<int>(std::ceil(1.5 * factor)));
  std::vector<double> src(img.pixels().begin(), img.pixels().end());
  auto smoothed = filter::separable_same(src, img.width(), img.height(), k, filter::Border::Replicate);
  Image blurred = Image::from_pixels(img.width(), img.height(), std::move(smoothed), img.domain(),
                                     img.spacing_x(), img.spacing_y());
  const int w = std::max(1, static_cast<int>(std::lround(static_cast<double>(img.width()) / factor)));
  const int h = std::max(1, static_cast<int>(std::lround(static_cast<double>(img.height()) / factor)));
  return resample(blurred, w, h);
}

// Optimizer coordinates: six values measured in pixels of displacement at the
// current level. Matrix entries are scaled by the fixed image's half-diagonal
// so a unit change in any coordinate moves image corners by about one pixel.
// The transform maps fixed-image millimetres into moving-image millimetres,
// linearized about the fixed image centre.
struct Parametrization {
  Point2 centre;
  double radius_mm = 1.0;
  double pixel_mm = 1.0;

  AffineTransform2D to_fixed_to_moving(const std::array<double, 6>& th) const {
    const double ms = pixel_mm / radius_mm;
    AffineTransform2D m{th[0] * ms, th[1] * ms, th[2] * ms, th[3] * ms, 0.0, 0.0};
    const double sx = th[4] * pixel_mm;
    const double sy = th[5] * pixel_mm;
    m.tx = centre.x + sx - (m.a11 * centre.x + m.a12 * centre.y);
    m.ty = centre.y + sy - (m.a21 * centre.x + m.a22 * centre.y);
    return m;
  }

  std::array<double, 6> from_fixed_to_moving(const AffineTransform2D& m) const {
    const double ms = pixel_mm / radius_mm;
    const Point2 c = m.apply(centre);
    return {m.a11 / ms, m.a12 / ms, m.a21 / ms, m.a22 / ms, (c.x - centre.x) / pixel_mm,
            (c.y - centre.y) / pixel_mm};
  }
};

// NCC between fixed samples and the moving image pulled back through the
// fixed->moving map. Samples landing outside the moving image are dropped.
inline double sampled_ncc(const Image& fixed, const Image& moving, const AffineTransform2D& f2m,
                          const std::vector<Point2>& samples_px) {
  double sf = 0, sm = 0, sff = 0, smm = 0, sfm = 0;
  std::size_t n = 0;
  for (const Point2& s : samples_px) {
    const Point2 p = mm_to_pixel(moving, f2m.apply(pixel_to_mm(fixed, s.x, s.y)));
    if (!(p.x >= 0.0 && p.y >= 0.0 && p.x <= moving.width() - 1 && p.y <= moving.height() - 1)) {
      continue;
    }
    const double fv = fixed.sample_bilinear(s.x, s.y, 0.0);
    const double mv = moving.sample_bilinear(p.x, p.y, 0.0);
    sf += fv;
    sm += mv;
    sff += fv * fv;
    smm += mv * mv;
    sfm += fv * mv;
    ++n;
  }
  if (n < 16) return std::numeric_limits<double>::quiet_NaN();
  const double dn = static_cast<double>(n);
  const double cov = sfm - sf * sm / dn;
  const double vf = sff - sf * sf / dn;
  const double vm = smm - sm * sm / dn;
  if (!(vf > 0.0) || !(vm > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  return cov / std::sqrt(vf * vm);
}

inline std::vector<Point2> full_grid(const Image& img) {
  std::vector<Point2> pts;
  pts.reserve(img.size());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) pts.push_back({static_cast<double>(x), static_cast<double>(y)});
  }
  return pts;
}

}  // namespace reg_detail

/// Multi-resolution affine registration maximizing NCC between `fixed` and
/// `moving` warped by the result. The returned transform maps moving-image
/// millimetres onto fixed-image millimetres, so warp(moving, result) lands on
/// the fixed grid. Deterministic for a given config seed.
inline RegistrationResult register_affine_report(const Image& fixed, const Image& moving,
                                                 const AffineTransform2D& init,
                                                 const RegistrationConfig& cfg) {
  cfg.validate();
  if (fixed.width() < 32 || fixed.height() < 32 || moving.width() < 32 || moving.height() < 32) {
    throw UsageError("registration requires images of at least 32x32");
  }
  if (!init.invertible()) throw NumericError("initial transform is singular");

  AffineTransform2D f2m = init.inverse();
  const auto full_fixed = reg_detail::full_grid(fixed);
  RegistrationResult result;
  result.initial_ncc = reg_detail::sampled_ncc(fixed, moving, f2m, full_fixed);
  if (!std::isfinite(result.initial_ncc)) {
    throw NumericError("registration objective is not finite at the initial transform");
  }

  for (int level = 0; level < cfg.pyramid_levels; ++level) {
    int factor = 1 << (cfg.pyramid_levels - 1 - level);
    while (factor > 1 && (fixed.width() / factor < 16 || fixed.height() / factor < 16)) factor /= 2;
    const Image f = reg_detail::downsample(fixed, factor);
    const Image m = reg_detail::downsample(moving, factor);

    reg_detail::Parametrization par;
    par.centre = {0.5 * f.width() * f.spacing_x(), 0.5 * f.height() * f.spacing_y()};
    par.radius_mm = 0.5 * std::hypot(f.width() * f.spacing_x(), f.height() * f.spacing_y());
    par.pixel_mm = 0.5 * (f.spacing_x() + f.spacing_y());

    auto theta = par.from_fixed_to_moving(f2m);
    double step = cfg.initial_step_px;
    std::vector<Point2> samples(static_cast<std::size_t>(cfg.spatial_samples));

    for (int it = 0; it < cfg.max_iterations; ++it) {
      Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(level) * 1000003ULL + it));
      for (auto& s : samples) {
        s = {rng.uniform(0.0, f.width() - 1.0), rng.uniform(0.0, f.height() - 1.0)};
      }
      auto objective = [&](const std::array<double, 6>& th) {
        return reg_detail::sampled_ncc(f, m, par.to_fixed_to_moving(th), samples);
      };
      const double f0 = objective(theta);
      if (!std::isfinite(f0)) {
        throw NumericError("registration objective became non-finite (transform left the image)");
      }
      std::array<double, 6> grad{};
      double norm = 0.0;
      for (int k = 0; k < 6; ++k) {
        auto hi = theta;
        auto lo = theta;
        hi[k] += cfg.gradient_delta_px;
        lo[k] -= cfg.gradient_delta_px;
        const double fh = objective(hi);
        const double fl = objective(lo);
        grad[k] = (std::isfinite(fh) && std::isfinite(fl))
                      ? (fh - fl) / (2.0 * cfg.gradient_delta_px)
                      : 0.0;
        norm += grad[k] * grad[k];
      }
      ++result.iterations;
      norm = std::sqrt(norm);
      if (norm == 0.0) break;
      auto trial = theta;
      for (int k = 0; k < 6; ++k) trial[k] += step * grad[k] / norm;
      const double f1 = objective(trial);
      if (std::isfinite(f1) && f1 > f0) {
        theta = trial;
        step = std::min(step * 1.2, 4.0 * cfg.initial_step_px);
      } else {
        step *= 0.5;
      }
      if (step < cfg.min_step_px) break;
    }
    f2m = par.to_fixed_to_moving(theta);
  }

  const double final_ncc = reg_detail::sampled_ncc(fixed, moving, f2m, full_fixed);
  if (std::isfinite(final_ncc) && final_ncc >= result.initial_ncc && f2m.invertible()) {
    result.transform = f2m.inverse();
    result.final_ncc = final_ncc;
  } else {
    result.transform = init;
    result.final_ncc = result.initial_ncc;
  }
  return result;
}

inline AffineTransform2D register_affine(const Image& fixed, const Image& moving,
                                         const AffineTransform2D& init,
                                         const RegistrationConfig& cfg = {}) {
  return register_affine_report(fixed, moving, init, cfg).transform;
}

// --- text formats -----------------------------------------------------------

/// Three lines of `x_mm y_mm`.
inline FiducialSet read_fiducials(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open fiducial file '" + path + "'");
  FiducialSet set;
  set.source_image = path;
  std::string line;
  int count = 0;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    Point2 p;
    if (!(ls >> p.x >> p.y)) {
      throw DataError(path + ":" + std::to_string(lineno) + ": expected 'x_mm y_mm'");
    }
    if (count >= 3) throw DataError("'" + path + "': more than 3 fiducial points");
    set.points[count++] = p;
  }
  if (count != 3) throw DataError("'" + path + "': expected exactly 3 fiducial points");
  return set;
}

inline void write_fiducials(const std::string& path, const FiducialSet& set) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write fiducial file '" + path + "'");
  out << std::setprecision(17);
  for (const auto& p : set.points) out << p.x << " " << p.y << "\n";
}

/// Six numbers: `a11 a12 a21 a22 tx ty`.
inline AffineTransform2D read_transform(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open transform file '" + path + "'");
  std::array<double, 6> p{};
  for (double& v : p) {
    if (!(in >> v)) throw DataError("'" + path + "': expected 6 numbers 'a11 a12 a21 a22 tx ty'");
  }
  double extra;
  if (in >> extra) throw DataError("'" + path + "': trailing data after 6 transform values");
  return AffineTransform2D::from_params(p);
}

inline void write_transform(const std::string& path, const AffineTransform2D& t) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write transform file '" + path + "'");
  out << std::setprecision(17) << t.a11 << " " << t.a12 << " " << t.a21 << " " << t.a22 << " "
      << t.tx << " " << t.ty << "\n";
}

}  // namespace pocusiq
