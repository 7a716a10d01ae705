#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "pocusiq/core/kvconfig.hpp"
#include "pocusiq/core/rng.hpp"
#include "pocusiq/degrade.hpp"
#include "pocusiq/image_io.hpp"
#include "pocusiq/metrics/full_reference.hpp"
#include "pocusiq/neural/adam.hpp"
#include "pocusiq/neural/gan.hpp"
#include "pocusiq/neural/weights_io.hpp"
#include "pocusiq/pipeline/augment.hpp"
#include "pocusiq/pipeline/manifest.hpp"
#include "pocusiq/pipeline/tensor_image.hpp"

namespace pocusiq {

struct TrainConfig {
  int epochs = 300;
  nn::AdamConfig adam;
  nn::LossWeights weights;
  int batch_size = 1;
  std::uint64_t seed = 0;
  bool augment = true;
  AugmentSpec augment_spec;
  int checkpoint_every = 10;   ///< epochs; 0 disables periodic checkpoints
  long long max_steps = 0;     ///< 0 = no step cap
  long long val_every = 0;     ///< steps between extra validation points; 0 = per epoch only
  std::string out_dir;         ///< checkpoints and logs; empty = keep in memory only

  void validate() const {
    if (epochs < 1) throw UsageError("epochs must be positive");
    if (batch_size < 1) throw UsageError("batch_size must be positive");
    if (!(adam.lr > 0.0) || !(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0) ||
        !(adam.eps > 0.0)) {
      throw UsageError("invalid Adam hyper-parameters");
    }
    if (weights.adversarial < 0.0 || weights.l1 < 0.0 || weights.ssim < 0.0) {
      throw UsageError("loss weights must be non-negative");
    }
    if (checkpoint_every < 0 || max_steps < 0 || val_every < 0) throw UsageError("counts must be non-negative");
    augment_spec.validate();
  }

  static TrainConfig from_config(const KeyValueConfig& c) {
    TrainConfig t;
    t.epochs = static_cast<int>(c.get_int("epochs", t.epochs));
    t.adam.lr = c.get_double("lr", t.adam.lr);
    t.adam.beta1 = c.get_double("beta1", t.adam.beta1);
    t.adam.beta2 = c.get_double("beta2", t.adam.beta2);
    t.adam.eps = c.get_double("adam_eps", t.adam.eps);
    t.weights.adversarial = c.get_double("lambda_adv", t.weights.adversarial);
    t.weights.l1 = c.get_double("lambda_l1", t.weights.l1);
    t.weights.ssim = c.get_double("lambda_ssim", t.weights.ssim);
    t.batch_size = static_cast<int>(c.get_int("batch_size", t.batch_size));
    t.seed = static_cast<std::uint64_t>(c.get_int("seed", static_cast<long long>(t.seed)));
    t.augment = c.get_int("augment", t.augment ? 1 : 0) != 0;
    t.augment_spec = AugmentSpec::from_config(c);
    t.checkpoint_every = static_cast<int>(c.get_int("checkpoint_every", t.checkpoint_every));
    t.max_steps = c.get_int("max_steps", t.max_steps);
    t.val_every = c.get_int("val_every", t.val_every);
    t.out_dir = c.get("out").value_or(t.out_dir);
    t.validate();
    return t;
  }

  KeyValueConfig to_config() const {
    KeyValueConfig c;
    auto num = [](double v) {
      std::ostringstream s;
      s << std::setprecision(17) << v;
      return s.str();
    };
    c.set("epochs", std::to_string(epochs));
    c.set("lr", num(adam.lr));
    c.set("beta1", num(adam.beta1));
    c.set("beta2", num(adam.beta2));
    c.set("adam_eps", num(adam.eps));
    c.set("lambda_adv", num(weights.adversarial));
    c.set("lambda_l1", num(weights.l1));
    c.set("lambda_ssim", num(weights.ssim));
    c.set("batch_size", std::to_string(batch_size));
    c.set("seed", std::to_string(seed));
    c.set("augment", augment ? "1" : "0");
    c.set("augment_brightness", num(augment_spec.brightness));
    c.set("augment_contrast_min", num(augment_spec.contrast[0]));
    c.set("augment_contrast_max", num(augment_spec.contrast[1]));
    c.set("augment_geometric", num(augment_spec.geometric));
    c.set("checkpoint_every", std::to_string(checkpoint_every));
    c.set("max_steps", std::to_string(max_steps));
    c.set("val_every", std::to_string(val_every));
    c.set("out", out_dir);
    return c;
  }
};

struct StepRecord {
  long long step = 0;
  double g_total = 0, l1 = 0, ssim_loss = 0, adversarial = 0, d_loss = 0;
};

struct EpochRecord {
  int epoch = 0;        ///< 1-based
  long long step = 0;   ///< global step count at the end of the epoch
  double g_total = 0, l1 = 0, ssim_loss = 0, adversarial = 0, d_loss = 0;
  double val_ssim = 0;
};

struct TrainingPair {
  std::string id;
  Image low;
  Image high;
};

/// Fresh networks: N(0, 0.02) weights from `seed`, zeroed optimizer state.
inline nn::Checkpoint fresh_checkpoint(std::uint64_t seed, const nn::AdamConfig& adam = {}) {
  nn::Checkpoint ck;
  ck.G.initialize(derive_seed(seed, "generator"));
  ck.D.initialize(derive_seed(seed, "discriminator"));
  ck.adam_g = nn::AdamState<float>(ck.G.params(), adam);
  ck.adam_d = nn::AdamState<float>(ck.D.params(), adam);
  return ck;
}

/// Keeps network weights, resets optimizer state and counters (fine-tuning).
inline void reset_training_state(nn::Checkpoint& ck, const nn::AdamConfig& adam) {
  ck.adam_g = nn::AdamState<float>(ck.G.params(), adam);
  ck.adam_d = nn::AdamState<float>(ck.D.params(), adam);
  ck.step = 0;
  ck.epoch = 0;
  ck.best_val_ssim = -1.0;
}

/// One pix2pix iteration: discriminator update on (real, G(x)), then a
/// generator update against the updated discriminator. Throws NumericError
/// on a non-finite loss before the offending update is applied.
inline StepRecord gan_step(nn::Checkpoint& ck, const nn::Tensor<float>& x, const nn::Tensor<float>& y,
                           const nn::LossWeights& w) {
  typename nn::UNetGenerator<float>::Tape tape;
  const auto& fake = ck.G.forward(x, tape);
  StepRecord r;
  r.step = static_cast<long long>(ck.step) + 1;
  if (w.adversarial != 0.0) {
    ck.D.params().zero_grad();
    r.d_loss = nn::discriminator_objective(x, y, fake, ck.D);
    if (!std::isfinite(r.d_loss)) {
      throw NumericError("discriminator loss became non-finite at step " + std::to_string(r.step));
    }
    nn::adam_step(ck.D.params(), ck.adam_d);
  }
  nn::Tensor<float> dfake;
  const auto terms = nn::generator_loss(x, y, fake, ck.D, w, dfake);
  r.g_total = terms.total;
  r.l1 = terms.l1;
  r.ssim_loss = terms.ssim;
  r.adversarial = terms.adversarial;
  if (!std::isfinite(r.g_total)) {
    throw NumericError("generator loss became non-finite at step " + std::to_string(r.step));
  }
  ck.G.params().zero_grad();
  ck.G.backward(tape, dfake);
  nn::adam_step(ck.G.params(), ck.adam_g);
  ++ck.step;
  return r;
}

/// Mean SSIM between G(low) and high over the given pairs, on the [0,1] scale.
inline double validation_ssim(const nn::UNetGenerator<float>& G, const std::vector<TrainingPair>& pairs) {
  if (pairs.empty()) throw UsageError("validation set is empty");
  double sum = 0.0;
  for (const auto& p : pairs) {
    const auto y = G.forward(image_to_tensor(p.low));
    const Image out = normalize(tensor_to_image(y, p.high), IntensityDomain::Unit_0_1);
    sum += ssim(normalize(p.high, IntensityDomain::Unit_0_1), out);
  }
  return sum / static_cast<double>(pairs.size());
}

namespace train_detail {

inline std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(9) << v;
  return s.str();
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::trunc);
  if (!f) throw DataError("cannot write " + p.string());
  f << text;
}

}  // namespace train_detail

inline std::string format_history(const std::vector<EpochRecord>& h) {
  std::string out = "epoch,step,g_total,l1,ssim_loss,adversarial,d_loss,val_ssim\n";
  for (const auto& e : h) {
    using train_detail::fmt;
    out += std::to_string(e.epoch) + "," + std::to_string(e.step) + "," + fmt(e.g_total) + "," + fmt(e.l1) + "," +
           fmt(e.ssim_loss) + "," + fmt(e.adversarial) + "," + fmt(e.d_loss) + "," + fmt(e.val_ssim) + "\n";
  }
  return out;
}

inline std::string format_step_log(const std::vector<StepRecord>& log) {
  std::string out = "step,g_total,l1,ssim_loss,adversarial,d_loss\n";
  for (const auto& r : log) {
    using train_detail::fmt;
    out += std::to_string(r.step) + "," + fmt(r.g_total) + "," + fmt(r.l1) + "," + fmt(r.ssim_loss) + "," +
           fmt(r.adversarial) + "," + fmt(r.d_loss) + "\n";
  }
  return out;
}

struct TrainOutcome {
  nn::Checkpoint last;
  nn::Checkpoint best;  ///< highest validation SSIM seen at an epoch end
  std::vector<EpochRecord> history;
  std::vector<StepRecord> steps;
  std::vector<std::pair<long long, double>> val_curve;  ///< (step, val SSIM)
  bool aborted = false;
  std::string abort_reason;
};

/// Trains from `start` (fresh, fine-tune or resumed checkpoint). Epochs run
/// from start.epoch to cfg.epochs; the step counter continues from start.step.
/// With an empty validation set the first (up to 10) training pairs stand in.
inline TrainOutcome train(const std::vector<TrainingPair>& train_set, const std::vector<TrainingPair>& val_set,
                          const TrainConfig& cfg, nn::Checkpoint start) {
  cfg.validate();
  if (train_set.empty()) throw DataError("training split is empty");
  for (const auto& p : train_set) {
    if (!p.low.same_shape(p.high)) throw DataError("pair '" + p.id + "': low and high images differ in size");
  }
  std::vector<TrainingPair> fallback_val;
  const auto& val = val_set.empty()
                        ? (fallback_val = std::vector<TrainingPair>(train_set.begin(),
                                                                    train_set.begin() + std::min<std::size_t>(10, train_set.size())))
                        : val_set;
  const std::filesystem::path out_dir = cfg.out_dir;
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

  TrainOutcome out;
  out.last = std::move(start);
  nn::Checkpoint& ck = out.last;
  out.best = ck;
  nn::Checkpoint last_good = ck;

  std::vector<nn::Tensor<float>> plain_low, plain_high;
  if (!cfg.augment) {
    for (const auto& p : train_set) {
      plain_low.push_back(image_to_tensor(p.low));
      plain_high.push_back(image_to_tensor(p.high));
    }
  }

  const std::uint64_t order_seed = derive_seed(cfg.seed, "order");
  const std::uint64_t augment_seed = derive_seed(cfg.seed, "augment");
  bool stop = false;
  for (int epoch = static_cast<int>(ck.epoch); epoch < cfg.epochs && !stop; ++epoch) {
    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng order_rng(derive_seed(order_seed, static_cast<std::uint64_t>(epoch)));
    order_rng.shuffle(order.begin(), order.end());

    EpochRecord rec;
    rec.epoch = epoch + 1;
    int batches = 0;
    try {
      for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
        if (cfg.max_steps > 0 && static_cast<long long>(ck.step) >= cfg.max_steps) {
          stop = true;
          break;
        }
        std::vector<nn::Tensor<float>> xs, ys;
        for (std::size_t k = b; k < std::min(order.size(), b + cfg.batch_size); ++k) {
          const std::size_t i = order[k];
          if (cfg.augment) {
            const auto s = derive_seed(derive_seed(augment_seed, ck.step), train_set[i].id);
            auto [lo, hi] = augment_pair(train_set[i].low, train_set[i].high, cfg.augment_spec, s);
            xs.push_back(image_to_tensor(lo));
            ys.push_back(image_to_tensor(hi));
          } else {
            xs.push_back(plain_low[i]);
            ys.push_back(plain_high[i]);
          }
        }
        const auto x = xs.size() == 1 ? std::move(xs[0]) : stack_batch(xs);
        const auto y = ys.size() == 1 ? std::move(ys[0]) : stack_batch(ys);
        const StepRecord r = gan_step(ck, x, y, cfg.weights);
        out.steps.push_back(r);
        rec.g_total += r.g_total;
        rec.l1 += r.l1;
        rec.ssim_loss += r.ssim_loss;
        rec.adversarial += r.adversarial;
        rec.d_loss += r.d_loss;
        ++batches;
        if (cfg.val_every > 0 && static_cast<long long>(ck.step) % cfg.val_every == 0) {
          out.val_curve.emplace_back(static_cast<long long>(ck.step), validation_ssim(ck.G, val));
        }
      }
    } catch (const NumericError& e) {
      out.aborted = true;
      out.abort_reason = e.what();
      out.last = last_good;
      if (!out_dir.empty()) nn::save_checkpoint(out_dir / "last_good.pqwt", last_good);
      break;
    }
    if (batches == 0) break;
    const double inv = 1.0 / batches;
    rec.g_total *= inv;
    rec.l1 *= inv;
    rec.ssim_loss *= inv;
    rec.adversarial *= inv;
    rec.d_loss *= inv;
    rec.step = static_cast<long long>(ck.step);
    rec.val_ssim = validation_ssim(ck.G, val);
    ck.epoch = static_cast<std::uint64_t>(epoch + 1);
    if (out.val_curve.empty() || out.val_curve.back().first != rec.step) {
      out.val_curve.emplace_back(rec.step, rec.val_ssim);
    }
    out.history.push_back(rec);
    if (rec.val_ssim > ck.best_val_ssim) {
      ck.best_val_ssim = rec.val_ssim;
      out.best = ck;
      if (!out_dir.empty()) nn::save_checkpoint(out_dir / "best.pqwt", ck);
    }
    last_good = ck;
    if (!out_dir.empty()) {
      if (cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0) {
        nn::save_checkpoint(out_dir / "last.pqwt", ck);
      }
      train_detail::write_text(out_dir / "history.csv", format_history(out.history));
    }
  }
  if (!out_dir.empty() && !out.aborted) {
    nn::save_checkpoint(out_dir / "last.pqwt", ck);
    train_detail::write_text(out_dir / "losses.csv", format_step_log(out.steps));
  }
  return out;
}

/// Loads a split's pairs. Images must already share a size divisible by 32.
inline std::vector<TrainingPair> load_pairs(const PairManifest& m, const std::string& split) {
  std::vector<TrainingPair> out;
  for (const ManifestRow* r : m.in_split(split)) {
    TrainingPair p{r->id, load_image(m.resolve(r->low_path).string()), load_image(m.resolve(r->high_path).string())};
    if (!p.low.same_shape(p.high)) throw DataError("pair '" + r->id + "': low and high images differ in size");
    if (p.low.width() % 32 != 0 || p.low.height() % 32 != 0) {
      throw DataError("pair '" + r->id + "': dimensions " + std::to_string(p.low.width()) + "x" +
                      std::to_string(p.low.height()) + " are not divisible by 32; run preprocess first");
    }
    out.push_back(std::move(p));
  }
  return out;
}

struct PretrainOutcome {
  nn::Checkpoint checkpoint;
  std::vector<StepRecord> log;
  bool aborted = false;
  std::string abort_reason;
};

/// Trains on (degrade(I), I) pairs drawn on the fly from the pristine images.
/// Runs `steps` iterations (cfg.max_steps when positive, else
/// cfg.epochs * images.size()).
inline PretrainOutcome pretrain(const std::vector<Image>& pristine, const DegradationRanges& ranges,
                                const TrainConfig& cfg, nn::Checkpoint start) {
  cfg.validate();
  ranges.validate();
  if (pristine.empty()) throw DataError("pretraining corpus is empty");
  std::vector<Image> clean;
  for (const auto& img : pristine) {
    if (img.width() % 32 != 0 || img.height() % 32 != 0) {
      throw DataError("pretraining images must have dimensions divisible by 32; run preprocess first");
    }
    clean.push_back(img.domain() == IntensityDomain::Unit_0_1 ? img : normalize(img, IntensityDomain::Unit_0_1));
  }
  const long long steps = cfg.max_steps > 0 ? cfg.max_steps : static_cast<long long>(cfg.epochs) * clean.size();
  PretrainOutcome out;
  out.checkpoint = std::move(start);
  nn::Checkpoint& ck = out.checkpoint;
  nn::Checkpoint last_good = ck;
  const std::uint64_t pick_seed = derive_seed(cfg.seed, "pretrain-pick");
  const std::uint64_t spec_seed = derive_seed(cfg.seed, "pretrain-degrade");
  const std::uint64_t augment_seed = derive_seed(cfg.seed, "augment");
  const std::filesystem::path out_dir = cfg.out_dir;
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);
  for (long long s = 0; s < steps; ++s) {
    Rng pick(derive_seed(pick_seed, static_cast<std::uint64_t>(s)));
    const auto i = static_cast<std::size_t>(pick.below(clean.size()));
    Image low = degrade(clean[i], ranges.sample(derive_seed(spec_seed, static_cast<std::uint64_t>(s))));
    Image high = clean[i];
    if (cfg.augment) {
      std::tie(low, high) = augment_pair(low, high, cfg.augment_spec, derive_seed(augment_seed, static_cast<std::uint64_t>(s)));
    }
    try {
      out.log.push_back(gan_step(ck, image_to_tensor(low), image_to_tensor(high), cfg.weights));
    } catch (const NumericError& e) {
      out.aborted = true;
      out.abort_reason = e.what();
      out.checkpoint = last_good;
      break;
    }
    if (cfg.checkpoint_every > 0 && (s + 1) % (static_cast<long long>(cfg.checkpoint_every) * clean.size()) == 0) {
      last_good = ck;
      if (!out_dir.empty()) nn::save_checkpoint(out_dir / "pretrain.pqwt", ck);
    }
  }
  if (!out.aborted) last_good = ck;
  if (!out_dir.empty()) {
    nn::save_checkpoint(out_dir / (out.aborted ? "last_good.pqwt" : "pretrain.pqwt"), last_good);
    train_detail::write_text(out_dir / "pretrain_losses.csv", format_step_log(out.log));
  }
  return out;
}

}  // namespace pocusiq
