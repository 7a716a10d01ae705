// Acceptance runner: one PASS/FAIL/SKIP line per criterion, nonzero exit on
// any FAIL. POCUSIQ_ACCEPT_ONLY=3,5 restricts the run to those criteria.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "harness.hpp"
#include "pocusiq/core/parallel.hpp"
#include "pocusiq/metrics/full_reference.hpp"
#include "pocusiq/metrics/stats.hpp"
#include "pocusiq/pipeline/augment.hpp"
#include "pocusiq/pipeline/enhance.hpp"
#include "pocusiq/pipeline/evaluate.hpp"
#include "pocusiq/pipeline/train.hpp"
#include "support.hpp"

using namespace pocusiq;
namespace fs = std::filesystem;

namespace {

enum class Status { Pass, Fail, Skip };

struct Outcome {
  Status status = Status::Fail;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string f(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", prec, v);
  return buf;
}

Outcome verdict(bool ok, std::string detail) { return {ok ? Status::Pass : Status::Fail, std::move(detail)}; }

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double mean_ssim(const std::vector<TrainingPair>& pairs, const std::function<Image(const Image&)>& fn) {
  double s = 0;
  for (const auto& p : pairs) s += ssim(p.high, normalize(fn(p.low), p.high.domain()));
  return s / static_cast<double>(pairs.size());
}

// ---------------------------------------------------------------------------

Outcome gradients() {
  const auto t0 = Clock::now();
  const auto results = gradcheck::run_suite({1, 2, 3});
  const double secs = seconds_since(t0);
  bool ok = secs < 120.0;
  std::string worst_name;
  double worst_ratio = 0;
  for (const auto& r : results) {
    ok = ok && r.pass();
    const double ratio = r.worst() / r.tolerance;
    if (ratio >= worst_ratio) {
      worst_ratio = ratio;
      worst_name = r.name + " " + f(r.worst(), 3) + " (tol " + f(r.tolerance, 1) + ")";
    }
  }
  return verdict(ok, std::to_string(results.size()) + " ops x 3 seeds, worst " + worst_name + ", " + f(secs, 3) + " s");
}

Outcome metric_oracles() {
  double ssim_err = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto a = testsupport::random_image(32, 32, IntensityDomain::Unit_0_1, 7000 + 2 * seed);
    const auto n = testsupport::random_image(32, 32, IntensityDomain::Unit_0_1, 7001 + 2 * seed);
    Image b = a;
    const double mix = 0.2 + 0.6 * static_cast<double>(seed) / 49.0;
    for (std::size_t i = 0; i < b.size(); ++i) b.pixels()[i] = (1 - mix) * a.pixels()[i] + mix * n.pixels()[i];
    ssim_err = std::max(ssim_err, std::abs(ssim(a, b) - harness::brute_force_ssim(a, b, 1.0)));
  }
  double psnr_err = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto a = testsupport::random_u8_image(24, 24, 100 + seed);
    const auto b = testsupport::random_u8_image(24, 24, 200 + seed);
    psnr_err = std::max(psnr_err, std::abs(psnr(a, b) - harness::psnr_closed_form(a, b)));
  }
  double t_err = 0;
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> a(8 + trial), b(8 + trial);
    for (std::size_t i = 0; i < a.size(); ++i) {
      b[i] = rng.uniform();
      a[i] = b[i] + 0.05 * (trial % 4) + 0.1 * rng.normal();
    }
    const auto got = paired_t_test(a, b);
    const auto ref = harness::textbook_paired_t(a, b);
    t_err = std::max({t_err, std::abs(got.t - ref.t), std::abs(got.p - ref.p)});
  }
  return verdict(ssim_err < 1e-3 && psnr_err < 1e-9 && t_err < 1e-9,
                 "SSIM vs brute force max " + f(ssim_err, 3) + " (50 pairs), PSNR max " + f(psnr_err, 3) +
                     ", t-test max " + f(t_err, 3));
}

Outcome noise_monotonicity() {
  const auto model = fit_niqe_model(harness::phantom_corpus(12, 192, 500));
  const auto sweep = harness::noise_sweep(harness::phantom_corpus(10, 192, 9000), model, {0, 5, 15});
  bool ok = true;
  for (std::size_t i = 1; i < sweep.sigmas_u8.size(); ++i) {
    ok = ok && sweep.mean_niqe[i] > sweep.mean_niqe[i - 1] && sweep.mean_piqe[i] > sweep.mean_piqe[i - 1];
  }
  std::string d = "sigma {0,5,15}: NIQE";
  for (double v : sweep.mean_niqe) d += " " + f(v);
  d += ", PIQE";
  for (double v : sweep.mean_piqe) d += " " + f(v);
  return verdict(ok, d + " (10 images)");
}

Outcome registration() {
  double worst = 0, sum = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto c = harness::registration_recovery(seed);
    worst = std::max(worst, c.corner_error_px);
    sum += c.corner_error_px;
  }
  Rng rng(77);
  double fid = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const AffineTransform2D t{rng.uniform(0.5, 1.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5),
                              rng.uniform(0.5, 1.5), rng.uniform(-20, 20), rng.uniform(-20, 20)};
    FiducialSet src, dst;
    do {
      for (auto& p : src.points) p = {rng.uniform(0, 50), rng.uniform(0, 50)};
    } while (src.triangle_area() < 10);
    dst = src;
    for (auto& p : dst.points) p = t.apply(p);
    const auto got = affine_from_fiducials(src, dst).params();
    const auto want = t.params();
    for (int i = 0; i < 6; ++i) fid = std::max(fid, std::abs(got[i] - want[i]));
  }
  return verdict(worst < 1.0 && fid < 1e-9, "20 affines: worst corner error " + f(worst, 3) + " px, mean " +
                                                 f(sum / 20, 3) + " px; fiducial max error " + f(fid, 3));
}

Outcome desk_enhancement() {
  const auto t0 = Clock::now();
  const auto all = harness::desk_pairs(110, 128, 1);
  const std::vector<TrainingPair> train_set(all.begin(), all.begin() + 100), held(all.begin() + 100, all.end());
  const double base = mean_ssim(held, [](const Image& i) { return i; });
  std::vector<double> enhanced;
  for (std::uint64_t seed : {1, 2, 3}) {
    TrainConfig cfg;
    cfg.epochs = 20;
    cfg.seed = seed;
    cfg.checkpoint_every = 0;
    const auto out = train(train_set, {}, cfg, fresh_checkpoint(seed));
    if (out.aborted) return {Status::Fail, "seed " + std::to_string(seed) + " aborted: " + out.abort_reason};
    enhanced.push_back(mean_ssim(held, [&](const Image& i) { return enhance(i, out.last.G); }));
  }
  const double secs = seconds_since(t0);
  const double med = median(enhanced);
  return verdict(med - base >= 0.05 && secs <= 1800.0,
                 "held-out SSIM degraded " + f(base) + " -> enhanced median " + f(med) + " (seeds " + f(enhanced[0]) +
                     ", " + f(enhanced[1]) + ", " + f(enhanced[2]) + "), delta " + f(med - base, 3) +
                     " (need >= 0.05); 3 x 2000 steps at 128x128 in " + f(secs, 4) + " s");
}

Outcome pretraining_ablation() {
  constexpr int kSize = 64;
  constexpr long long kBudget = 600, kEvery = 25;
  const auto t0 = Clock::now();
  const auto finetune = harness::desk_pairs(20, kSize, 3000);
  const auto val = harness::desk_pairs(10, kSize, 3100);
  const auto pristine = harness::phantom_corpus(30, kSize, 3200);
  const double target = mean_ssim(val, [](const Image& i) { return i; }) + 0.05;

  auto steps_to_target = [&](const TrainOutcome& o) {
    for (const auto& [step, v] : o.val_curve) {
      if (v >= target) return static_cast<double>(step);
    }
    return static_cast<double>(kBudget + 1);
  };
  std::vector<double> pre_steps, cold_steps;
  for (std::uint64_t seed : {1, 2, 3}) {
    TrainConfig cfg;
    cfg.seed = seed;
    cfg.checkpoint_every = 0;
    cfg.max_steps = kBudget;
    auto pre = pretrain(pristine, harness::desk_ranges(), cfg, fresh_checkpoint(seed));
    if (pre.aborted) return {Status::Fail, "pretraining aborted: " + pre.abort_reason};
    reset_training_state(pre.checkpoint, cfg.adam);

    cfg.epochs = static_cast<int>(kBudget / static_cast<long long>(finetune.size()));
    cfg.val_every = kEvery;
    pre_steps.push_back(steps_to_target(train(finetune, val, cfg, std::move(pre.checkpoint))));
    cold_steps.push_back(steps_to_target(train(finetune, val, cfg, fresh_checkpoint(seed))));
  }
  const double mp = median(pre_steps), mc = median(cold_steps);
  auto show = [&](double v) { return v > kBudget ? std::string(">") + std::to_string(kBudget) : f(v); };
  return verdict(mp <= kBudget && mp <= mc,
                 "steps to val SSIM " + f(target) + ": pretrained median " + show(mp) + " (" + show(pre_steps[0]) + ", " +
                     show(pre_steps[1]) + ", " + show(pre_steps[2]) + "), cold start median " + show(mc) + " (" +
                     show(cold_steps[0]) + ", " + show(cold_steps[1]) + ", " + show(cold_steps[2]) + "); " +
                     f(seconds_since(t0), 3) + " s");
}

Outcome latency() {
  nn::UNetGenerator<float> G;
  G.initialize(derive_seed(0, "generator"));
  const auto one = bench_latency(G, 256, 192, 1, 100);
  const auto four = bench_latency(G, 256, 192, 4, 100);
  const bool ok = four.mean_ms <= 50.0 && four.mean_ms <= 1.10 * one.mean_ms;
  return verdict(ok, "256x192, " + std::to_string(G.params().parameter_count()) + " params, 100 repeats: 4 threads " +
                         f(four.mean_ms) + " +/- " + f(four.std_ms, 2) + " ms (" + std::to_string(four.workers) + " workers), 1 thread " + f(one.mean_ms) + " +/- " +
                         f(one.std_ms, 2) + " ms (limit 50 ms, 4-thread <= 1.10 x 1-thread; " + std::to_string(hardware_threads()) +
                         " hardware threads; reference 16.1 +/- 1.5 ms)");
}

Outcome determinism() {
  const int previous = compute_threads();
  set_compute_threads(1);
  testsupport::TempDir dir("accept_det");
  const auto pairs = harness::desk_pairs(12, 32, 40);
  std::vector<std::string> blobs;
  for (const char* run : {"a", "b"}) {
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.seed = 7;
    cfg.out_dir = (dir.path() / run).string();
    train(pairs, {}, cfg, fresh_checkpoint(7));
    blobs.push_back(slurp(dir.path() / run / "last.pqwt"));
  }
  set_compute_threads(previous);
  const bool train_same = !blobs[0].empty() && blobs[0] == blobs[1];

  const Image clean = synthetic_phantom(96, 96, 41);
  const DegradationSpec spec{0.15, 1.0, 30, 1.5, 99};
  const bool degrade_same = degrade(clean, spec) == degrade(clean, spec);
  const auto [lo, hi] = synthetic_pair(96, 96, spec, 42);
  const auto a = augment_pair(lo, hi, AugmentSpec{}, 5);
  const auto b = augment_pair(lo, hi, AugmentSpec{}, 5);
  const bool augment_same = a.first == b.first && a.second == b.second;
  return verdict(train_same && degrade_same && augment_same,
                 std::string("train checkpoints ") + (train_same ? "identical" : "DIFFER") + " (" +
                     std::to_string(blobs[0].size()) + " bytes), degrade " + (degrade_same ? "identical" : "DIFFERS") +
                     ", augment " + (augment_same ? "identical" : "DIFFERS"));
}

Outcome dataset_baseline() {
  const char* root = std::getenv("POCUSIQ_DATA");
  if (!root || !*root) return {Status::Skip, "set POCUSIQ_DATA to a directory holding manifest.csv with a test split"};
  const auto m = load_manifest(fs::path(root) / "manifest.csv");
  const auto rep = evaluate_pairs(m, {}, nullptr, "test");
  int n = 0;
  const auto s = summarize(rep, "low", &MetricRow::ssim, &n);
  const auto p = summarize(rep, "low", &MetricRow::psnr_db);
  if (n == 0) return {Status::Fail, "no usable test pairs"};
  return verdict(std::abs(s.mean - 0.29) <= 0.05 && std::abs(p.mean - 19.15) <= 1.0,
                 std::to_string(n) + " test pairs: low-quality SSIM " + f(s.mean, 3) + " +/- " + f(s.std, 2) +
                     " (target 0.29 +/- 0.05), PSNR " + f(p.mean, 4) + " +/- " + f(p.std, 3) +
                     " dB (target 19.15 +/- 1.0)");
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient checks", gradients},
      {"metric oracles", metric_oracles},
      {"NIQE/PIQE noise monotonicity", noise_monotonicity},
      {"registration recovery", registration},
      {"desk-scale enhancement", desk_enhancement},
      {"pretraining ablation", pretraining_ablation},
      {"latency", latency},
      {"determinism", determinism},
      {"dataset baseline", dataset_baseline},
  };
  std::set<int> only;
  if (const char* sel = std::getenv("POCUSIQ_ACCEPT_ONLY")) {
    std::istringstream in(sel);
    std::string tok;
    while (std::getline(in, tok, ',')) {
      if (!tok.empty()) only.insert(std::stoi(tok));
    }
  }
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {Status::Fail, std::string("exception: ") + e.what()};
    }
    const char* tag = o.status == Status::Pass ? "PASS" : o.status == Status::Fail ? "FAIL" : "SKIP";
    failures += o.status == Status::Fail;
    std::printf("criterion %d %s: %s: %s\n", id, tag, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
