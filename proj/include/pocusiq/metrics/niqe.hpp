#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <vector>

#include "pocusiq/core/error.hpp"
#include "pocusiq/image.hpp"
#include "pocusiq/metrics/nss.hpp"

namespace pocusiq {

inline constexpr int kNiqeFeatureCount = 36;

/// Multivariate Gaussian over NSS patch features of a pristine corpus.
struct NiqeModel {
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(kNiqeFeatureCount);
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(kNiqeFeatureCount, kNiqeFeatureCount);
  int patch_size = 96;
  double sharpness_threshold = 0.75;
  int patch_count = 0;  ///< patches the model was fitted on

  void validate() const {
    if (mu.size() != kNiqeFeatureCount || sigma.rows() != kNiqeFeatureCount ||
        sigma.cols() != kNiqeFeatureCount) {
      throw DataError("NIQE model has inconsistent dimensions");
    }
    if (patch_size < 16 || patch_size % 2 != 0) throw DataError("NIQE patch size must be even and >= 16");
  }
};

namespace niqe_detail {

// 18 features from one MSCN patch: the AGGD fit of the coefficients (shape,
// mean scale) and, for each of four neighbour orientations, the AGGD fit of
// pairwise products (shape, mean, left scale, right scale).
inline bool patch_features(const Field& mscn, int x0, int y0, int size, double* out) {
  std::vector<double> v;
  v.reserve(static_cast<std::size_t>(size) * size);
  for (int y = y0; y < y0 + size; ++y)
    for (int x = x0; x < x0 + size; ++x) v.push_back(mscn(x, y));
  auto base = try_fit_aggd(v);
  if (!base) return false;
  out[0] = base->alpha;
  out[1] = 0.5 * (base->beta_l + base->beta_r);
  static constexpr int kShifts[4][2] = {{1, 0}, {0, 1}, {1, 1}, {1, -1}};
  int f = 2;
  for (const auto& s : kShifts) {
    v.clear();
    for (int y = y0; y < y0 + size; ++y) {
      const int yy = y + s[1];
      if (yy < y0 || yy >= y0 + size) continue;
      for (int x = x0; x + s[0] < x0 + size; ++x) v.push_back(mscn(x, y) * mscn(x + s[0], yy));
    }
    auto fit = try_fit_aggd(v);
    if (!fit) return false;
    out[f++] = fit->alpha;
    out[f++] = fit->mean();
    out[f++] = fit->beta_l;
    out[f++] = fit->beta_r;
  }
  return true;
}

inline std::vector<double> half_size(const std::vector<double>& v, int w, int h, int& ow, int& oh) {
  ow = w / 2;
  oh = h / 2;
  std::vector<double> out(static_cast<std::size_t>(ow) * oh);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      const std::size_t i = static_cast<std::size_t>(2 * y) * w + 2 * x;
      out[static_cast<std::size_t>(y) * ow + x] = 0.25 * (v[i] + v[i + 1] + v[i + w] + v[i + w + 1]);
    }
  return out;
}

struct PatchFeatures {
  std::vector<Eigen::VectorXd> rows;
  std::vector<double> sharpness;
};

// Features of every complete patch on the patch grid (two scales), in raster
// order. Patches whose statistics are degenerate are skipped.
inline PatchFeatures image_features(const Image& img, int patch) {
  const int cols = img.width() / patch;
  const int rows = img.height() / patch;
  PatchFeatures pf;
  if (cols == 0 || rows == 0) return pf;
  const int w = cols * patch;
  const int h = rows * patch;
  std::vector<double> u8 = to_u8_scale(img);
  std::vector<double> cropped(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) cropped[static_cast<std::size_t>(y) * w + x] = u8[static_cast<std::size_t>(y) * img.width() + x];

  const MscnResult s1 = mscn_full(cropped, w, h);
  int w2 = 0, h2 = 0;
  const auto half = half_size(cropped, w, h, w2, h2);
  const MscnResult s2 = mscn_full(half, w2, h2);
  const int p2 = patch / 2;

  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      Eigen::VectorXd feat(kNiqeFeatureCount);
      if (!patch_features(s1.coefficients, c * patch, r * patch, patch, feat.data())) continue;
      if (!patch_features(s2.coefficients, c * p2, r * p2, p2, feat.data() + 18)) continue;
      double sharp = 0.0;
      for (int y = r * patch; y < (r + 1) * patch; ++y)
        for (int x = c * patch; x < (c + 1) * patch; ++x) sharp += s1.local_sigma(x, y);
      pf.rows.push_back(std::move(feat));
      pf.sharpness.push_back(sharp / (static_cast<double>(patch) * patch));
    }
  }
  return pf;
}

inline void mean_cov(const std::vector<Eigen::VectorXd>& rows, Eigen::VectorXd& mean, Eigen::MatrixXd& cov) {
  const auto n = static_cast<double>(rows.size());
  mean = Eigen::VectorXd::Zero(kNiqeFeatureCount);
  for (const auto& r : rows) mean += r;
  mean /= n;
  cov = Eigen::MatrixXd::Zero(kNiqeFeatureCount, kNiqeFeatureCount);
  if (rows.size() < 2) return;
  for (const auto& r : rows) {
    const Eigen::VectorXd d = r - mean;
    cov += d * d.transpose();
  }
  cov /= (n - 1.0);
}

}  // namespace niqe_detail

/// Fits the pristine MVG from sharp patches: in each image, patches whose
/// mean local deviation exceeds `sharpness_threshold` x the image maximum.
inline NiqeModel fit_niqe_model(const std::vector<Image>& pristine, int patch_size = 96,
                                double sharpness_threshold = 0.75) {
  if (pristine.size() < 10) {
    throw UsageError("fit_niqe_model: need at least 10 pristine images, got " + std::to_string(pristine.size()));
  }
  NiqeModel model;
  model.patch_size = patch_size;
  model.sharpness_threshold = sharpness_threshold;
  model.validate();
  std::vector<Eigen::VectorXd> selected;
  for (std::size_t i = 0; i < pristine.size(); ++i) {
    const Image& img = pristine[i];
    if ((img.width() / patch_size) * (img.height() / patch_size) < 2) {
      throw UsageError("fit_niqe_model: image " + std::to_string(i) + " (" + std::to_string(img.width()) +
                       "x" + std::to_string(img.height()) + ") holds fewer than 2 patches of " +
                       std::to_string(patch_size) + "px");
    }
    const auto pf = niqe_detail::image_features(img, patch_size);
    if (pf.rows.empty()) continue;
    const double max_sharp = *std::max_element(pf.sharpness.begin(), pf.sharpness.end());
    for (std::size_t k = 0; k < pf.rows.size(); ++k) {
      if (pf.sharpness[k] > sharpness_threshold * max_sharp || pf.sharpness[k] == max_sharp) {
        selected.push_back(pf.rows[k]);
      }
    }
  }
  if (selected.size() < 2) {
    throw NumericError("fit_niqe_model: too few sharp patches (" + std::to_string(selected.size()) + ")");
  }
  niqe_detail::mean_cov(selected, model.mu, model.sigma);
  model.sigma = 0.5 * (model.sigma + model.sigma.transpose());
  model.patch_count = static_cast<int>(selected.size());
  return model;
}

/// Distance between the image's patch-feature MVG and the pristine model;
/// lower is better.
inline double niqe(const Image& img, const NiqeModel& model) {
  model.validate();
  const auto pf = niqe_detail::image_features(img, model.patch_size);
  if (pf.rows.empty()) {
    throw NumericError("niqe: no valid " + std::to_string(model.patch_size) + "px patches in " +
                       std::to_string(img.width()) + "x" + std::to_string(img.height()) + " image");
  }
  Eigen::VectorXd mu_d;
  Eigen::MatrixXd cov_d;
  niqe_detail::mean_cov(pf.rows, mu_d, cov_d);
  const Eigen::MatrixXd pooled = 0.5 * (model.sigma + cov_d);
  const Eigen::VectorXd diff = model.mu - mu_d;
  // Pseudo-inverse through the symmetric eigendecomposition.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(pooled);
  const Eigen::VectorXd& ev = eig.eigenvalues();
  const double tol = std::max(1.0, ev.cwiseAbs().maxCoeff()) * kNiqeFeatureCount *
                     std::numeric_limits<double>::epsilon();
  const Eigen::VectorXd proj = eig.eigenvectors().transpose() * diff;
  double q = 0.0;
  for (int i = 0; i < ev.size(); ++i) {
    if (ev(i) > tol) q += proj(i) * proj(i) / ev(i);
  }
  return std::sqrt(std::max(0.0, q));
}

}  // namespace pocusiq
