#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <unistd.h>
#include <vector>

#include "pocusiq/core/rng.hpp"
#include "pocusiq/image.hpp"
#include "pocusiq/neural/tensor.hpp"

namespace testsupport {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("pocusiq_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline pocusiq::Image random_image(int w, int h, pocusiq::IntensityDomain d, std::uint64_t seed) {
  pocusiq::Rng rng(seed);
  pocusiq::Image img(w, h, d);
  const auto b = img.bounds();
  for (auto& v : img.pixels()) v = rng.uniform(b.lo, b.hi);
  return img;
}

inline pocusiq::Image random_u8_image(int w, int h, std::uint64_t seed) {
  pocusiq::Rng rng(seed);
  pocusiq::Image img(w, h, pocusiq::IntensityDomain::U8_0_255);
  for (auto& v : img.pixels()) v = static_cast<double>(rng.below(256));
  return img;
}

// Smooth Gaussian blob on a dim background, unit domain.
inline pocusiq::Image blob_image(int w, int h, double cx, double cy, double sigma) {
  pocusiq::Image img(w, h, pocusiq::IntensityDomain::Unit_0_1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double r2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
      img(x, y) = 0.1 + 0.8 * std::exp(-r2 / (2 * sigma * sigma));
    }
  return img;
}

inline pocusiq::nn::Tensor<double> random_tensor(pocusiq::nn::Shape s, std::uint64_t seed, double scale = 1.0) {
  pocusiq::nn::Tensor<double> t(std::move(s));
  pocusiq::Rng rng(seed);
  for (auto& v : t.data()) v = scale * rng.uniform(-1.0, 1.0);
  return t;
}

// Largest elementwise |a - n| / max(|a|, |n|, floor) between an analytic
// gradient and central differences of f over every entry of `x`.
inline double max_rel_error(const std::function<double()>& f, std::vector<double*> xs, const std::vector<double>& analytic,
                            double h = 1e-6, double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double& v = *xs[i];
    const double keep = v;
    v = keep + h;
    const double fp = f();
    v = keep - h;
    const double fm = f();
    v = keep;
    const double num = (fp - fm) / (2 * h);
    const double denom = std::max({std::abs(num), std::abs(analytic[i]), floor});
    worst = std::max(worst, std::abs(num - analytic[i]) / denom);
  }
  return worst;
}

inline std::vector<double*> entries(pocusiq::nn::Tensor<double>& t) {
  std::vector<double*> out;
  for (auto& v : t.data()) out.push_back(&v);
  return out;
}

inline std::vector<double> to_vec(std::span<const double> s) { return {s.begin(), s.end()}; }

}  // namespace testsupport
