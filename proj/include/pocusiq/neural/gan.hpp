#pragma once

#include "pocusiq/neural/losses.hpp"
#include "pocusiq/neural/network.hpp"

namespace pocusiq::nn {

struct LossWeights {
  double adversarial = 1.0;
  double l1 = 70.0;
  double ssim = 30.0;
};

template <typename T>
struct ObjectiveTerms {
  T total = 0;
  T adversarial = 0;
  T l1 = 0;
  T ssim = 0;  ///< 1 - SSIM
};

/// Loss terms for a generator output `fake` and the gradient d(total)/d(fake).
/// The discriminator is only read.
template <typename T>
ObjectiveTerms<T> generator_loss(const Tensor<T>& x, const Tensor<T>& y_true, const Tensor<T>& fake,
                                 const PatchDiscriminator<T>& D, const LossWeights& w, Tensor<T>& dfake) {
  require_same_shape(x, y_true, "generator_objective");
  require_same_shape(fake, y_true, "generator_objective");
  dfake = Tensor<T>(fake.shape());
  ObjectiveTerms<T> r;
  if (w.adversarial != 0.0) {
    typename PatchDiscriminator<T>::Tape dt;
    const auto& logits = D.forward(x, fake, dt);
    auto adv = adversarial_loss(logits, true);
    r.adversarial = adv.value;
    for (auto& v : adv.grad.data()) v *= static_cast<T>(w.adversarial);
    auto dg = D.backward(dt, adv.grad, false);
    for (std::size_t i = 0; i < dfake.numel(); ++i) dfake[i] += dg.dy[i];
  }
  if (w.l1 != 0.0) {
    auto l1 = l1_loss(fake, y_true);
    r.l1 = l1.value;
    for (std::size_t i = 0; i < dfake.numel(); ++i) dfake[i] += static_cast<T>(w.l1) * l1.grad[i];
  }
  if (w.ssim != 0.0) {
    auto s = ssim_loss(fake, y_true);
    r.ssim = s.value;
    for (std::size_t i = 0; i < dfake.numel(); ++i) dfake[i] += static_cast<T>(w.ssim) * s.grad[i];
  }
  r.total = static_cast<T>(w.adversarial) * r.adversarial + static_cast<T>(w.l1) * r.l1 +
            static_cast<T>(w.ssim) * r.ssim;
  return r;
}

/// Generator loss L_adv(D(x, G(x)) -> real) + l1 * |G(x) - y| + ssim * (1 - SSIM).
/// Accumulates gradients into the generator's parameters only.
template <typename T>
ObjectiveTerms<T> generator_objective(const Tensor<T>& x, const Tensor<T>& y_true, UNetGenerator<T>& G,
                                      const PatchDiscriminator<T>& D, const LossWeights& w = {}) {
  typename UNetGenerator<T>::Tape gt;
  const Tensor<T>& fake = G.forward(x, gt);
  Tensor<T> dfake;
  auto r = generator_loss(x, y_true, fake, D, w, dfake);
  G.backward(gt, dfake);
  return r;
}

/// Discriminator loss 0.5 * (BCE(D(x, y), real) + BCE(D(x, fake), fake)).
/// Accumulates gradients into the discriminator's parameters.
template <typename T>
T discriminator_objective(const Tensor<T>& x, const Tensor<T>& y_true, const Tensor<T>& fake,
                          PatchDiscriminator<T>& D) {
  typename PatchDiscriminator<T>::Tape tr, tf;
  auto lr = adversarial_loss(D.forward(x, y_true, tr), true);
  auto lf = adversarial_loss(D.forward(x, fake, tf), false);
  for (auto& v : lr.grad.data()) v *= T(0.5);
  for (auto& v : lf.grad.data()) v *= T(0.5);
  D.backward(tr, lr.grad, true, false);
  D.backward(tf, lf.grad, true, false);
  return T(0.5) * (lr.value + lf.value);
}

}  // namespace pocusiq::nn
