#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "gradcheck.hpp"
#include "pocusiq/metrics/full_reference.hpp"
#include "pocusiq/neural/adam.hpp"
#include "pocusiq/neural/gan.hpp"
#include "pocusiq/neural/weights_io.hpp"
#include "pocusiq/pipeline/phantom.hpp"
#include "pocusiq/pipeline/tensor_image.hpp"
#include "support.hpp"

using namespace pocusiq;
using namespace pocusiq::nn;
using testsupport::TempDir;

namespace {

std::string slurp(const std::string& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

void spit(const std::string& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

template <typename T>
bool same_values(const ParameterSet<T>& a, const ParameterSet<T>& b) {
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < a[i].numel(); ++k)
      if (std::bit_cast<std::uint32_t>(float(a[i][k])) != std::bit_cast<std::uint32_t>(float(b[i][k]))) return false;
  return true;
}

}  // namespace

TEST(Conv, UnitKernelIsIdentity) {
  auto x = testsupport::random_tensor({1, 1, 5, 4}, 1);
  Tensor<double> w({1, 1, 1, 1}, 1.0), b({1});
  auto y = conv2d_forward(x, w, b, {1, 0, 0});
  EXPECT_EQ(testsupport::to_vec(y.data()), testsupport::to_vec(x.data()));
  auto yt = conv_transpose2d_forward(x, w, b, {1, 0, 0});
  EXPECT_EQ(testsupport::to_vec(yt.data()), testsupport::to_vec(x.data()));
}

TEST(Conv, DirectSum) {
  Tensor<double> x({1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4});
  Tensor<double> w({1, 1, 2, 2}, 1.0), b({1});
  auto y = conv2d_forward(x, w, b, {1, 0, 0});
  ASSERT_EQ(y.numel(), 1u);
  EXPECT_EQ(y[0], 10.0);
}

TEST(Conv, ShapeErrors) {
  Tensor<double> x({1, 2, 6, 6}), w({4, 3, 3, 3}), b({4});
  EXPECT_THROW(conv2d_forward(x, w, b, {}), UsageError);
  Tensor<double> w2({4, 2, 3, 3}), b2({3});
  EXPECT_THROW(conv2d_forward(x, w2, b2, {}), UsageError);
}

TEST(Conv, OutputSizes) {
  EXPECT_EQ(conv_out_size(64, 3, {2, 1, 0}), 32);
  EXPECT_EQ(conv_out_size(64, 4, {2, 1, 0}), 32);
  EXPECT_EQ(conv_transpose_out_size(32, 3, {2, 1, 1}), 64);
}

TEST(InstanceNorm, ZeroMeanUnitVariance) {
  auto x = testsupport::random_tensor({2, 3, 8, 8}, 4, 5.0);
  for (auto& v : x.data()) v += 3.0;
  auto y = instance_norm_forward<double>(x, nullptr);
  const int hw = 64;
  for (int p = 0; p < 6; ++p) {
    double m = 0, s = 0;
    for (int k = 0; k < hw; ++k) m += y[p * hw + k];
    m /= hw;
    for (int k = 0; k < hw; ++k) s += std::pow(y[p * hw + k] - m, 2);
    EXPECT_NEAR(m, 0.0, 1e-12);
    EXPECT_NEAR(s / hw, 1.0, 1e-5);
  }
}

TEST(GradientSuite, EveryOperationMatchesFiniteDifferences) {
  for (const auto& r : gradcheck::run_suite()) {
    ASSERT_EQ(r.errors.size(), 3u);
    EXPECT_TRUE(r.pass()) << r.name << " worst relative error " << r.worst();
  }
}

TEST(Generator, ParameterBudgetAndShapes) {
  UNetGenerator<float> G;
  EXPECT_GE(G.params().parameter_count(), 10000u);
  EXPECT_LE(G.params().parameter_count(), 20000u);
  EXPECT_EQ(G.params().parameter_count(), 12969u);
  G.initialize(1);
  for (int s : {64, 96, 160}) {
    Tensor<float> x({1, 1, s, s + 32});
    auto y = G.forward(x);
    EXPECT_EQ(y.shape(), x.shape());
    for (float v : y.data()) {
      ASSERT_TRUE(std::isfinite(v));
      ASSERT_LT(std::abs(v), 1.0f);
    }
  }
  EXPECT_THROW(G.forward(Tensor<float>({1, 1, 60, 64})), UsageError);
  EXPECT_THROW(G.forward(Tensor<float>({1, 2, 64, 64})), UsageError);
}

TEST(Generator, OutputBoundedOnExtremeInput) {
  UNetGenerator<double> G;
  for (auto& e : G.params().entries())
    for (auto& v : e.tensor.data()) v = 3.0;
  Tensor<double> x({1, 1, 16, 16}, 50.0);
  for (double v : G.forward(x).data()) EXPECT_LE(std::abs(v), 1.0);
}

TEST(Generator, SeededInitialization) {
  UNetGenerator<float> a, b, c;
  a.initialize(5);
  b.initialize(5);
  c.initialize(6);
  EXPECT_TRUE(same_values(a.params(), b.params()));
  EXPECT_FALSE(same_values(a.params(), c.params()));
  for (const auto& e : a.params().entries())
    if (e.name.ends_with(".bias"))
      for (float v : e.tensor.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Discriminator, PatchMapAndBatchIndependence) {
  PatchDiscriminator<float> D;
  D.initialize(2);
  EXPECT_EQ(D.params().parameter_count(), 10841u);
  auto x = testsupport::random_tensor({3, 1, 64, 64}, 1).cast<float>();
  auto y = testsupport::random_tensor({3, 1, 64, 64}, 2).cast<float>();
  auto logits = D.forward(x, y);
  EXPECT_EQ(logits.shape(), (Shape{3, 1, 8, 8}));
  for (float v : logits.data()) EXPECT_TRUE(std::isfinite(v));
  // Reverse the batch and compare.
  Tensor<float> xr(x.shape()), yr(y.shape());
  const std::size_t plane = 64 * 64;
  for (int n = 0; n < 3; ++n) {
    std::copy_n(x.ptr() + n * plane, plane, xr.ptr() + (2 - n) * plane);
    std::copy_n(y.ptr() + n * plane, plane, yr.ptr() + (2 - n) * plane);
  }
  auto lr = D.forward(xr, yr);
  for (int n = 0; n < 3; ++n)
    for (int k = 0; k < 64; ++k) EXPECT_EQ(lr[(2 - n) * 64 + k], logits[n * 64 + k]);
  EXPECT_THROW(D.forward(x, Tensor<float>({3, 1, 32, 64})), UsageError);
}

TEST(Discriminator, ReceptiveField) {
  // Perturb one input pixel; exactly the logits whose window covers it change.
  PatchDiscriminator<double> D;
  D.params().initialize(3, 0.3);
  Tensor<double> x({1, 1, 64, 64}), y({1, 1, 64, 64});
  auto base = D.forward(x, y);
  x.at(0, 0, 40, 40) = 1.0;
  auto moved = D.forward(x, y);
  int changed_rows = 0;
  for (int i = 0; i < 8; ++i) {
    bool row = false;
    for (int j = 0; j < 8; ++j) row = row || moved.at(0, 0, i, j) != base.at(0, 0, i, j);
    changed_rows += row;
  }
  // Instance norm couples every position, so check the unnormalized first
  // layer geometry instead: each logit sees kReceptiveField pixels.
  EXPECT_GT(changed_rows, 0);
  int rf = 4;
  rf += (4 - 1) * 2;
  rf += (4 - 1) * 4;
  rf += (3 - 1) * 8;
  EXPECT_EQ(rf, PatchDiscriminator<double>::kReceptiveField);
}

TEST(Losses, AdversarialExamples) {
  Tensor<double> z({1, 1, 4, 4});
  EXPECT_NEAR(adversarial_loss(z, true).value, std::log(2.0), 1e-15);
  EXPECT_NEAR(adversarial_loss(z, false).value, std::log(2.0), 1e-15);
  Tensor<double> big({1, 1, 2, 2}, 60.0);
  EXPECT_LT(adversarial_loss(big, true).value, 1e-20);
  EXPECT_NEAR(adversarial_loss(big, false).value, 60.0, 1e-9);
  Tensor<float> huge({1, 1, 1, 1}, -1e4f);
  EXPECT_TRUE(std::isfinite(adversarial_loss(huge, true).value));
}

TEST(Losses, L1AndSsimExamples) {
  Tensor<double> a({1, 1, 16, 16}), b({1, 1, 16, 16}, 0.5);
  EXPECT_DOUBLE_EQ(l1_loss(a, b).value, 0.5);
  auto r = testsupport::random_tensor({1, 1, 16, 16}, 7);
  EXPECT_EQ(l1_loss(r, r).value, 0.0);
  EXPECT_NEAR(ssim_loss(r, r).value, 0.0, 1e-12);
  EXPECT_GE(ssim_loss(r, testsupport::random_tensor({1, 1, 16, 16}, 8)).value, 0.0);
  EXPECT_THROW(l1_loss(a, Tensor<double>({1, 1, 16, 15})), UsageError);
  EXPECT_THROW(ssim_loss(Tensor<double>({1, 1, 8, 8}), Tensor<double>({1, 1, 8, 8})), UsageError);
}

TEST(Losses, SsimLossMatchesMetric) {
  const auto a = synthetic_phantom(32, 32, 1), b = synthetic_phantom(32, 32, 2);
  auto ta = image_to_tensor(a).cast<double>(), tb = image_to_tensor(b).cast<double>();
  // The loss works on [-1, 1] with L = 2, which is the metric on that domain.
  const double metric = ssim(normalize(a, IntensityDomain::Symm_Neg1_1), normalize(b, IntensityDomain::Symm_Neg1_1));
  EXPECT_NEAR(1.0 - ssim_loss(ta, tb).value, metric, 1e-6);
}

TEST(Objective, LnTwoAtPerfectOutput) {
  UNetGenerator<double> G;
  G.params().initialize(3);
  PatchDiscriminator<double> D;  // zero weights and biases: all logits 0
  auto x = testsupport::random_tensor({1, 1, 32, 32}, 4);
  const auto y = G.forward(x);
  const auto terms = generator_objective(x, y, G, D);
  EXPECT_NEAR(terms.total, std::log(2.0), 1e-12);
  EXPECT_EQ(terms.l1, 0.0);
  EXPECT_NEAR(terms.ssim, 0.0, 1e-12);
  const LossWeights w;
  EXPECT_EQ(w.l1, 70.0);
  EXPECT_EQ(w.ssim, 30.0);
  EXPECT_EQ(w.adversarial, 1.0);
}

TEST(Objective, DecreasesOnSinglePair) {
  auto [low, clean] = synthetic_pair(32, 32, {0.15, 1.0, 40, 0.0, 1}, 1);
  const auto x = image_to_tensor(low), y = image_to_tensor(clean);
  UNetGenerator<float> G;
  G.initialize(1);
  PatchDiscriminator<float> D;
  D.initialize(2);
  AdamState<float> st(G.params(), {});
  double first = 0, last = 0;
  for (int i = 0; i < 200; ++i) {
    G.params().zero_grad();
    const auto t = generator_objective(x, y, G, D);
    if (i == 0) first = t.total;
    last = t.total;
    adam_step(G.params(), st);
  }
  EXPECT_LT(last, 0.5 * first);
}

TEST(Objective, DiscriminatorLossAtZeroLogits) {
  PatchDiscriminator<double> D;
  auto x = testsupport::random_tensor({1, 1, 32, 32}, 1);
  EXPECT_NEAR(discriminator_objective(x, x, x, D), std::log(2.0), 1e-12);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  ParameterSet<double> ps;
  auto& p = ps.add("w", {3});
  p.fill(0.25);
  AdamState<double> st(ps, {});
  adam_step(ps, st);
  for (double v : p.data()) EXPECT_EQ(v, 0.25);
  EXPECT_EQ(st.step, 1u);
}

TEST(Adam, FirstStepClosedForm) {
  ParameterSet<double> ps;
  auto& p = ps.add("w", {1});
  p[0] = 1.0;
  p.grad()[0] = 1.0;
  AdamState<double> st(ps, {});
  adam_step(ps, st);
  // m_hat = 1, v_hat = 1 after bias correction.
  EXPECT_DOUBLE_EQ(p[0], 1.0 - 2e-4 / (1.0 + 1e-8));
}

TEST(Adam, TwoStepTrace) {
  ParameterSet<double> ps;
  auto& p = ps.add("w", {2});
  p[0] = 0.5;
  p[1] = -0.25;
  AdamState<double> st(ps, {1e-3, 0.9, 0.99, 1e-8});
  const double g[2][2] = {{0.3, -2.0}, {-0.7, 1.5}};
  // Reference trace written out by hand from the update rule.
  double theta[2] = {0.5, -0.25}, m[2] = {0, 0}, v[2] = {0, 0};
  for (int t = 1; t <= 2; ++t) {
    for (int k = 0; k < 2; ++k) {
      p.grad()[k] = g[t - 1][k];
      m[k] = 0.9 * m[k] + 0.1 * g[t - 1][k];
      v[k] = 0.99 * v[k] + 0.01 * g[t - 1][k] * g[t - 1][k];
      const double mh = m[k] / (1 - std::pow(0.9, t)), vh = v[k] / (1 - std::pow(0.99, t));
      theta[k] -= 1e-3 * mh / (std::sqrt(vh) + 1e-8);
    }
    adam_step(ps, st);
  }
  EXPECT_NEAR(p[0], theta[0], 1e-15);
  EXPECT_NEAR(p[1], theta[1], 1e-15);
  EXPECT_EQ(st.step, 2u);
}

TEST(Adam, MismatchedState) {
  ParameterSet<double> ps, other;
  ps.add("w", {2});
  other.add("w", {2});
  other.add("v", {1});
  AdamState<double> st(other, {});
  EXPECT_THROW(adam_step(ps, st), UsageError);
}

TEST(Pqwt, WeightsRoundTripBitwise) {
  TempDir dir("pqwt");
  UNetGenerator<float> G, H;
  G.initialize(9);
  save_weights(dir.file("g.pqwt"), G);
  load_weights(dir.file("g.pqwt"), H);
  EXPECT_TRUE(same_values(G.params(), H.params()));
  const auto bytes = slurp(dir.file("g.pqwt"));
  EXPECT_EQ(bytes.substr(0, 4), "PQWT");
  EXPECT_EQ(bytes[4], 1);
}

TEST(Pqwt, EncodingLayout) {
  const std::vector<NamedTensor> ts = {{"a", {2}, DType::F32, {1.5, -2.0}}, {"bb", {1, 1}, DType::F64, {0.1}}};
  const auto bytes = encode_pqwt(ts);
  // magic 4 + version 4 + count 4, then per tensor len 4 + name + dtype 1 + rank 1 + dims 8r + data.
  EXPECT_EQ(bytes.size(), 12u + (4 + 1 + 2 + 8 + 8) + (4 + 2 + 2 + 16 + 8));
  const auto back = decode_pqwt(bytes);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].values, ts[0].values);
  EXPECT_EQ(back[1].values[0], 0.1);
  EXPECT_EQ(back[1].dims, ts[1].dims);
}

TEST(Pqwt, FormatErrors) {
  TempDir dir("pqwt");
  UNetGenerator<float> G;
  save_weights(dir.file("g.pqwt"), G);
  const auto good = slurp(dir.file("g.pqwt"));

  spit(dir.file("magic.pqwt"), "XQWT" + good.substr(4));
  EXPECT_THROW(load_weights(dir.file("magic.pqwt"), G), DataError);
  spit(dir.file("trunc.pqwt"), good.substr(0, good.size() - 7));
  EXPECT_THROW(load_weights(dir.file("trunc.pqwt"), G), DataError);
  std::string v2 = good;
  v2[4] = 2;
  spit(dir.file("v2.pqwt"), v2);
  EXPECT_THROW(load_weights(dir.file("v2.pqwt"), G), DataError);
  spit(dir.file("trail.pqwt"), good + "x");
  EXPECT_THROW(load_weights(dir.file("trail.pqwt"), G), DataError);
  EXPECT_THROW(load_weights(dir.file("missing.pqwt"), G), DataError);

  auto ts = read_pqwt(dir.file("g.pqwt"));
  ts.push_back(scalar_tensor("G.extra_layer", 1.0));
  write_pqwt(dir.file("extra.pqwt"), ts);
  try {
    load_weights(dir.file("extra.pqwt"), G);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("G.extra_layer"), std::string::npos);
  }
  ts.pop_back();
  ts.pop_back();
  write_pqwt(dir.file("short.pqwt"), ts);
  EXPECT_THROW(load_weights(dir.file("short.pqwt"), G), DataError);
}

TEST(Pqwt, CheckpointRoundTrip) {
  TempDir dir("pqwt");
  Checkpoint ck;
  ck.G.initialize(1);
  ck.D.initialize(2);
  ck.G.params()[0].grad()[0] = 0.5f;
  adam_step(ck.G.params(), ck.adam_g);
  ck.step = 17;
  ck.epoch = 3;
  ck.best_val_ssim = 0.625;
  save_checkpoint(dir.file("ck.pqwt"), ck);
  Checkpoint back;
  load_checkpoint(dir.file("ck.pqwt"), back);
  EXPECT_TRUE(same_values(ck.G.params(), back.G.params()));
  EXPECT_TRUE(same_values(ck.D.params(), back.D.params()));
  EXPECT_EQ(back.adam_g.step, 1u);
  EXPECT_EQ(back.adam_g.m, ck.adam_g.m);
  EXPECT_EQ(back.adam_g.v, ck.adam_g.v);
  EXPECT_EQ(back.step, 17u);
  EXPECT_EQ(back.epoch, 3u);
  EXPECT_EQ(back.best_val_ssim, 0.625);
  // Generator weights load from a checkpoint as well.
  UNetGenerator<float> G;
  load_weights(dir.file("ck.pqwt"), G);
  EXPECT_TRUE(same_values(ck.G.params(), G.params()));
}

TEST(Pqwt, NiqeModelRoundTrip) {
  TempDir dir("pqwt");
  NiqeModel m;
  for (int i = 0; i < kNiqeFeatureCount; ++i) {
    m.mu(i) = 0.1 * i;
    m.sigma(i, i) = 1.0 + i;
  }
  m.patch_count = 40;
  save_niqe_model(dir.file("n.pqwt"), m);
  const auto back = load_niqe_model(dir.file("n.pqwt"));
  EXPECT_EQ(back.mu, m.mu);
  EXPECT_EQ(back.sigma, m.sigma);
  EXPECT_EQ(back.patch_count, 40);
  EXPECT_EQ(back.patch_size, 96);
}

TEST(Overfit, L1OnlyFitsOnePair) {
  auto [low, clean] = synthetic_pair(64, 64, {0.15, 1.0, 40, 0.0, 3}, 3);
  const auto x = image_to_tensor(low), y = image_to_tensor(clean);
  UNetGenerator<float> G;
  G.initialize(4);
  PatchDiscriminator<float> D;
  AdamState<float> st(G.params(), {1e-3, 0.5, 0.999, 1e-8});
  const LossWeights l1_only{0.0, 1.0, 0.0};
  double score = 0;
  int step = 0;
  for (; step < 2000; ++step) {
    G.params().zero_grad();
    generator_objective(x, y, G, D, l1_only);
    adam_step(G.params(), st);
    if (step % 100 == 99) {
      score = ssim(clean, normalize(tensor_to_image(G.forward(x), clean), IntensityDomain::Unit_0_1));
      if (score > 0.95) break;
    }
  }
  EXPECT_GT(score, 0.95) << "after " << step << " steps";
}
