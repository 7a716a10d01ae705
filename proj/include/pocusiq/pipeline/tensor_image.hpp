#pragma once

#include <vector>

#include "pocusiq/image.hpp"
#include "pocusiq/neural/tensor.hpp"
#include "pocusiq/preprocess.hpp"

namespace pocusiq {

/// Image -> [1,1,H,W] float tensor in (-1, 1).
inline nn::Tensor<float> image_to_tensor(const Image& img) {
  const Image s = img.domain() == IntensityDomain::Symm_Neg1_1 ? img : normalize(img, IntensityDomain::Symm_Neg1_1);
  nn::Tensor<float> t({1, 1, s.height(), s.width()});
  auto px = s.pixels();
  for (std::size_t i = 0; i < px.size(); ++i) t[i] = static_cast<float>(px[i]);
  return t;
}

/// Plane `n` of an NCHW tensor as a symmetric-domain image with `like`'s spacing.
inline Image tensor_to_image(const nn::Tensor<float>& t, const Image& like, int n = 0) {
  Image out(t.w(), t.h(), IntensityDomain::Symm_Neg1_1, like.spacing_x(), like.spacing_y());
  auto px = out.pixels();
  const float* src = &t.at(n, 0, 0, 0);
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<double>(src[i]);
  out.clamp_to_domain();
  return out;
}

/// Stacks equally sized [1,1,H,W] tensors along the batch axis.
inline nn::Tensor<float> stack_batch(const std::vector<nn::Tensor<float>>& items) {
  if (items.empty()) throw UsageError("cannot stack an empty batch");
  const int h = items[0].h(), w = items[0].w();
  nn::Tensor<float> out({static_cast<int>(items.size()), 1, h, w});
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].h() != h || items[i].w() != w) {
      throw DataError("batch items differ in size; use batch_size 1 or preprocess to a common size");
    }
    std::copy_n(items[i].ptr(), hw, out.ptr() + i * hw);
  }
  return out;
}

}  // namespace pocusiq
