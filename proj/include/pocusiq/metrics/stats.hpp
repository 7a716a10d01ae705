#pragma once

#include <boost/math/distributions/students_t.hpp>

#include <cmath>
#include <span>

#include "pocusiq/core/error.hpp"

namespace pocusiq {

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  ///< sample standard deviation (n - 1); 0 for n < 2
  std::size_t n = 0;
};

inline MeanStd mean_std(std::span<const double> v) {
  MeanStd r;
  r.n = v.size();
  if (v.empty()) return r;
  for (double x : v) r.mean += x;
  r.mean /= static_cast<double>(v.size());
  if (v.size() < 2) return r;
  double s = 0.0;
  for (double x : v) s += (x - r.mean) * (x - r.mean);
  r.std = std::sqrt(s / static_cast<double>(v.size() - 1));
  return r;
}

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  std::size_t dof = 0;
};

/// Two-sided paired t-test on a - b.
inline TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw UsageError("paired_t_test: samples differ in length");
  if (a.size() < 2) throw UsageError("paired_t_test: need at least 2 pairs");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  const MeanStd ms = mean_std(d);
  if (!(ms.std > 0.0)) throw NumericError("paired_t_test: differences have zero variance");
  TTestResult r;
  r.dof = a.size() - 1;
  r.t = ms.mean * std::sqrt(static_cast<double>(a.size())) / ms.std;
  const boost::math::students_t dist(static_cast<double>(r.dof));
  r.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t)));
  return r;
}

}  // namespace pocusiq
