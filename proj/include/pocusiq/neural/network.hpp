#pragma once

#include <cstdint>
#include <deque>
#include <string>
#include <string_view>
#include <vector>

#include "pocusiq/core/rng.hpp"
#include "pocusiq/neural/ops.hpp"

namespace pocusiq::nn {

/// Ordered collection of named parameter tensors, each carrying a gradient.
/// References stay valid as entries are added.
template <typename T>
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    Tensor<T> tensor;
  };

  Tensor<T>& add(std::string name, Shape shape) {
    for (const auto& e : entries_) {
      if (e.name == name) throw UsageError("duplicate parameter name '" + name + "'");
    }
    entries_.push_back({std::move(name), Tensor<T>(std::move(shape))});
    entries_.back().tensor.set_requires_grad(true);
    return entries_.back().tensor;
  }

  std::deque<Entry>& entries() noexcept { return entries_; }
  const std::deque<Entry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }

  Tensor<T>& operator[](std::size_t i) { return entries_[i].tensor; }
  const Tensor<T>& operator[](std::size_t i) const { return entries_[i].tensor; }

  Tensor<T>* find(std::string_view name) {
    for (auto& e : entries_) {
      if (e.name == name) return &e.tensor;
    }
    return nullptr;
  }
  const Tensor<T>* find(std::string_view name) const {
    for (const auto& e : entries_) {
      if (e.name == name) return &e.tensor;
    }
    return nullptr;
  }

  std::size_t parameter_count() const noexcept {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.tensor.numel();
    return n;
  }

  void zero_grad() {
    for (auto& e : entries_) e.tensor.zero_grad();
  }

  /// Weights ~ N(0, stddev), biases zero, drawn in declaration order.
  void initialize(std::uint64_t seed, double stddev = 0.02) {
    Rng rng(seed);
    for (auto& e : entries_) {
      const bool is_bias = e.name.size() >= 5 && e.name.compare(e.name.size() - 5, 5, ".bias") == 0;
      for (auto& v : e.tensor.data()) v = is_bias ? T(0) : static_cast<T>(rng.normal(0.0, stddev));
    }
  }

  template <typename U>
  void copy_values_from(const ParameterSet<U>& other) {
    if (other.size() != size()) throw UsageError("parameter sets differ in size");
    for (std::size_t i = 0; i < size(); ++i) {
      if (other.entries()[i].name != entries_[i].name || !(other[i].shape() == entries_[i].tensor.shape())) {
        throw UsageError("parameter '" + entries_[i].name + "' does not match");
      }
      for (std::size_t k = 0; k < other[i].numel(); ++k) entries_[i].tensor[k] = static_cast<T>(other[i][k]);
    }
  }

 private:
  std::deque<Entry> entries_;
};

namespace net_detail {

template <typename T>
struct ConvLayer {
  Tensor<T>* w = nullptr;
  Tensor<T>* b = nullptr;
  ConvGeometry g;
  bool transposed = false;

  Tensor<T> forward(const Tensor<T>& x) const {
    return transposed ? conv_transpose2d_forward(x, *w, *b, g) : conv2d_forward(x, *w, *b, g);
  }

  // Accumulates parameter gradients when `params` is set; returns dx when `want_dx`.
  Tensor<T> backward(const Tensor<T>& x, const Tensor<T>& dy, bool params, bool want_dx) const {
    Tensor<T> dx;
    std::span<T> dw = params ? w->grad() : std::span<T>{};
    std::span<T> db = params ? b->grad() : std::span<T>{};
    if (transposed) {
      conv_transpose2d_backward(x, *w, dy, g, want_dx ? &dx : nullptr, dw, db);
    } else {
      conv2d_backward(x, *w, dy, g, want_dx ? &dx : nullptr, dw, db);
    }
    return dx;
  }
};

template <typename T>
ConvLayer<T> make_conv(ParameterSet<T>& ps, const std::string& name, int cin, int cout, int k, ConvGeometry g,
                       bool transposed) {
  ConvLayer<T> l;
  l.w = &ps.add(name + ".weight", transposed ? Shape{cin, cout, k, k} : Shape{cout, cin, k, k});
  l.b = &ps.add(name + ".bias", Shape{cout});
  l.g = g;
  l.transposed = transposed;
  return l;
}

inline constexpr double kLeakySlope = 0.2;

}  // namespace net_detail

/// Depth-3 U-Net with base 8 channels. 3x3 stride-2 convolutions down,
/// 3x3 stride-2 transposed convolutions up, skip concatenation at every
/// level, instance norm on all but the first and last layers.
template <typename T>
class UNetGenerator {
 public:
  static constexpr int kDepth = 3;
  static constexpr int kBase = 8;

  struct Tape {
    Tensor<T> x, c0, e0, c1, e1, c2, e2, t2, d2, s1, t1, d1, s0, y;
    Tensor<T> n1, n2, nt2, nt1;  // normalized, pre-activation
    InstanceNormCache<T> in1, in2, int2, int1;
  };

  UNetGenerator() {
    const ConvGeometry down{2, 1, 0};
    const ConvGeometry up{2, 1, 1};
    const int b = kBase;
    conv0_ = net_detail::make_conv(params_, "enc0", 1, b, 3, down, false);
    conv1_ = net_detail::make_conv(params_, "enc1", b, 2 * b, 3, down, false);
    conv2_ = net_detail::make_conv(params_, "enc2", 2 * b, 4 * b, 3, down, false);
    up2_ = net_detail::make_conv(params_, "dec2", 4 * b, 2 * b, 3, up, true);
    up1_ = net_detail::make_conv(params_, "dec1", 4 * b, b, 3, up, true);
    up0_ = net_detail::make_conv(params_, "dec0", 2 * b, 1, 3, up, true);
  }
  UNetGenerator(const UNetGenerator& o) : UNetGenerator() { params_.copy_values_from(o.params_); }
  UNetGenerator& operator=(const UNetGenerator& o) {
    params_.copy_values_from(o.params_);
    return *this;
  }

  ParameterSet<T>& params() noexcept { return params_; }
  const ParameterSet<T>& params() const noexcept { return params_; }
  void initialize(std::uint64_t seed) { params_.initialize(seed); }

  static void check_input(const Tensor<T>& x) {
    require_rank4(x, "generator");
    if (x.c() != 1) throw UsageError("generator expects a single-channel input, got " + shape_string(x.shape()));
    constexpr int m = 1 << kDepth;
    if (x.h() % m != 0 || x.w() % m != 0 || x.h() == 0 || x.w() == 0) {
      throw UsageError("generator input " + std::to_string(x.w()) + "x" + std::to_string(x.h()) +
                       " is not divisible by " + std::to_string(m) + "; resize with fit_divisible_32 first");
    }
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    Tape tape;
    forward(x, tape);
    return std::move(tape.y);
  }

  const Tensor<T>& forward(const Tensor<T>& x, Tape& t) const {
    check_input(x);
    const T a = static_cast<T>(net_detail::kLeakySlope);
    t.x = x;
    t.c0 = conv0_.forward(x);
    t.e0 = leaky_relu_forward(t.c0, a);
    t.c1 = conv1_.forward(t.e0);
    t.n1 = instance_norm_forward(t.c1, &t.in1);
    t.e1 = leaky_relu_forward(t.n1, a);
    t.c2 = conv2_.forward(t.e1);
    t.n2 = instance_norm_forward(t.c2, &t.in2);
    t.e2 = leaky_relu_forward(t.n2, a);
    t.t2 = up2_.forward(t.e2);
    t.nt2 = instance_norm_forward(t.t2, &t.int2);
    t.d2 = relu_forward(t.nt2);
    t.s1 = concat_channels(t.d2, t.e1);
    t.t1 = up1_.forward(t.s1);
    t.nt1 = instance_norm_forward(t.t1, &t.int1);
    t.d1 = relu_forward(t.nt1);
    t.s0 = concat_channels(t.d1, t.e0);
    t.y = tanh_forward(up0_.forward(t.s0));
    return t.y;
  }

  /// Accumulates parameter gradients for dL/dy; returns dL/dx when requested.
  Tensor<T> backward(const Tape& t, const Tensor<T>& dy, bool want_dx = false) const {
    require_same_shape(dy, t.y, "generator backward");
    const T a = static_cast<T>(net_detail::kLeakySlope);
    Tensor<T> g = tanh_backward(t.y, dy);
    g = up0_.backward(t.s0, g, true, true);
    Tensor<T> g_d1, g_e0, g_d2, g_e1;
    concat_channels_backward(g, t.d1.c(), g_d1, g_e0);
    g = relu_backward(t.nt1, g_d1);
    g = instance_norm_backward(g, t.int1);
    g = up1_.backward(t.s1, g, true, true);
    concat_channels_backward(g, t.d2.c(), g_d2, g_e1);
    g = relu_backward(t.nt2, g_d2);
    g = instance_norm_backward(g, t.int2);
    g = up2_.backward(t.e2, g, true, true);
    g = leaky_relu_backward(t.n2, g, a);
    g = instance_norm_backward(g, t.in2);
    g = conv2_.backward(t.e1, g, true, true);
    for (std::size_t i = 0; i < g.numel(); ++i) g_e1[i] += g[i];
    g = leaky_relu_backward(t.n1, g_e1, a);
    g = instance_norm_backward(g, t.in1);
    g = conv1_.backward(t.e0, g, true, true);
    for (std::size_t i = 0; i < g.numel(); ++i) g_e0[i] += g[i];
    g = leaky_relu_backward(t.c0, g_e0, a);
    return conv0_.backward(t.x, g, true, want_dx);
  }

 private:
  ParameterSet<T> params_;
  net_detail::ConvLayer<T> conv0_, conv1_, conv2_, up2_, up1_, up0_;
};

/// Conditional patch discriminator on cat(x, y): three 4x4 stride-2 blocks
/// (8, 16, 32 channels) then a 3x3 stride-1 conv to one logit channel.
/// Receptive field of each logit: 38 px.
template <typename T>
class PatchDiscriminator {
 public:
  static constexpr int kBase = 8;
  static constexpr int kReceptiveField = 38;

  struct Tape {
    Tensor<T> in, c0, a0, c1, n1, a1, c2, n2, a2, logits;
    InstanceNormCache<T> in1, in2;
  };

  PatchDiscriminator() {
    const ConvGeometry down{2, 1, 0};
    const int b = kBase;
    conv0_ = net_detail::make_conv(params_, "conv0", 2, b, 4, down, false);
    conv1_ = net_detail::make_conv(params_, "conv1", b, 2 * b, 4, down, false);
    conv2_ = net_detail::make_conv(params_, "conv2", 2 * b, 4 * b, 4, down, false);
    head_ = net_detail::make_conv(params_, "head", 4 * b, 1, 3, ConvGeometry{1, 1, 0}, false);
  }
  PatchDiscriminator(const PatchDiscriminator& o) : PatchDiscriminator() { params_.copy_values_from(o.params_); }
  PatchDiscriminator& operator=(const PatchDiscriminator& o) {
    params_.copy_values_from(o.params_);
    return *this;
  }

  ParameterSet<T>& params() noexcept { return params_; }
  const ParameterSet<T>& params() const noexcept { return params_; }
  void initialize(std::uint64_t seed) { params_.initialize(seed); }

  Tensor<T> forward(const Tensor<T>& x, const Tensor<T>& y) const {
    Tape tape;
    forward(x, y, tape);
    return std::move(tape.logits);
  }

  const Tensor<T>& forward(const Tensor<T>& x, const Tensor<T>& y, Tape& t) const {
    require_same_shape(x, y, "discriminator");
    require_rank4(x, "discriminator");
    if (x.c() != 1) throw UsageError("discriminator expects single-channel images");
    const T a = static_cast<T>(net_detail::kLeakySlope);
    t.in = concat_channels(x, y);
    t.c0 = conv0_.forward(t.in);
    t.a0 = leaky_relu_forward(t.c0, a);
    t.c1 = conv1_.forward(t.a0);
    t.n1 = instance_norm_forward(t.c1, &t.in1);
    t.a1 = leaky_relu_forward(t.n1, a);
    t.c2 = conv2_.forward(t.a1);
    t.n2 = instance_norm_forward(t.c2, &t.in2);
    t.a2 = leaky_relu_forward(t.n2, a);
    t.logits = head_.forward(t.a2);
    return t.logits;
  }

  struct InputGrads {
    Tensor<T> dx, dy;
  };

  /// `param_grads` selects whether parameter gradients accumulate (D step) or
  /// only the input gradient is propagated (G step).
  InputGrads backward(const Tape& t, const Tensor<T>& dlogits, bool param_grads, bool want_input = true) const {
    require_same_shape(dlogits, t.logits, "discriminator backward");
    const T a = static_cast<T>(net_detail::kLeakySlope);
    Tensor<T> g = head_.backward(t.a2, dlogits, param_grads, true);
    g = leaky_relu_backward(t.n2, g, a);
    g = instance_norm_backward(g, t.in2);
    g = conv2_.backward(t.a1, g, param_grads, true);
    g = leaky_relu_backward(t.n1, g, a);
    g = instance_norm_backward(g, t.in1);
    g = conv1_.backward(t.a0, g, param_grads, true);
    g = leaky_relu_backward(t.c0, g, a);
    g = conv0_.backward(t.in, g, param_grads, want_input);
    InputGrads out;
    if (want_input) concat_channels_backward(g, 1, out.dx, out.dy);
    return out;
  }

 private:
  ParameterSet<T> params_;
  net_detail::ConvLayer<T> conv0_, conv1_, conv2_, head_;
};

}  // namespace pocusiq::nn
