// pocusiq: command-line front end for preprocessing, registration,
// degradation, training, enhancement and evaluation.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "pocusiq/core/error.hpp"
#include "pocusiq/core/kvconfig.hpp"
#include "pocusiq/core/parallel.hpp"
#include "pocusiq/degrade.hpp"
#include "pocusiq/image_io.hpp"
#include "pocusiq/metrics/niqe.hpp"
#include "pocusiq/neural/weights_io.hpp"
#include "pocusiq/pipeline/enhance.hpp"
#include "pocusiq/pipeline/evaluate.hpp"
#include "pocusiq/pipeline/manifest.hpp"
#include "pocusiq/pipeline/train.hpp"
#include "pocusiq/preprocess.hpp"
#include "pocusiq/registration.hpp"

namespace fs = std::filesystem;
using namespace pocusiq;

namespace {

int default_threads() { return hardware_threads(); }

// A subcommand whose options are all strings keyed by config name. Resolution
// order: built-in default < --config file < explicit flag.
struct Command {
  CLI::App* app = nullptr;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;
  std::vector<std::string> order;

  void add(const std::string& flag, const std::string& key, const std::string& def, const std::string& help) {
    values[key] = def;
    options[key] = app->add_option(flag, values[key], help)->capture_default_str();
    order.push_back(key);
  }

  void add_flag(const std::string& flag, const std::string& key, const std::string& help) {
    values[key] = "0";
    options[key] = app->add_flag_function(
        flag, [this, key](std::int64_t n) { values[key] = n > 0 ? "1" : "0"; }, help + " [default: off]");
    order.push_back(key);
  }

  KeyValueConfig resolve(const KeyValueConfig& file, const std::map<std::string, std::string>& globals) const {
    KeyValueConfig out;
    for (const auto& key : order) {
      const bool explicit_flag = options.at(key)->count() > 0;
      if (!explicit_flag && file.contains(key)) {
        out.set(key, *file.get(key));
      } else {
        out.set(key, values.at(key));
      }
    }
    for (const auto& [k, v] : globals) out.set(k, v);
    for (const auto& [k, v] : file.entries()) {
      if (!out.contains(k)) std::cerr << "warning: config key '" << k << "' is not used by '" << app->get_name() << "'\n";
    }
    return out;
  }
};

std::string req(const KeyValueConfig& c, const std::string& key, const std::string& flag) {
  auto v = c.get(key);
  if (!v || v->empty()) throw UsageError("missing required option " + flag);
  return *v;
}

long long as_int(const KeyValueConfig& c, const std::string& key) { return c.get_int(key, 0); }
double as_double(const KeyValueConfig& c, const std::string& key) { return c.get_double(key, 0.0); }

void log(const std::string& msg) { std::cerr << msg << "\n"; }

// Maps an input file or directory onto output paths: file -> file, dir -> dir/<name>.
std::vector<std::pair<fs::path, fs::path>> io_pairs(const std::string& in, const std::string& out,
                                                    const std::string& force_ext = "") {
  std::vector<std::pair<fs::path, fs::path>> pairs;
  if (fs::is_directory(in)) {
    fs::create_directories(out);
    for (const auto& p : list_images(in)) {
      fs::path o = fs::path(out) / p.filename();
      if (!force_ext.empty()) o.replace_extension(force_ext);
      pairs.emplace_back(p, o);
    }
    if (pairs.empty()) throw DataError("no .png/.pgm images in '" + in + "'");
  } else {
    if (!fs::exists(in)) throw DataError("input '" + in + "' does not exist");
    if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
    pairs.emplace_back(in, out);
  }
  return pairs;
}

Roi parse_roi(const std::string& s) {
  Roi r;
  char c1 = 0, c2 = 0, c3 = 0;
  std::istringstream in(s);
  if (!(in >> r.x0 >> c1 >> r.y0 >> c2 >> r.width >> c3 >> r.height) || c1 != ',' || c2 != ',' || c3 != ',') {
    throw UsageError("--roi expects x,y,width,height, got '" + s + "'");
  }
  return r;
}

std::vector<Image> load_dir(const std::string& dir) {
  std::vector<Image> out;
  for (const auto& p : list_images(dir)) out.push_back(load_image(p.string()));
  if (out.empty()) throw DataError("no .png/.pgm images in '" + dir + "'");
  return out;
}

TrainConfig train_config(const KeyValueConfig& c) {
  KeyValueConfig t = c;
  t.set("augment", c.get("no_augment").value_or("0") == "1" ? "0" : "1");
  return TrainConfig::from_config(t);
}

void add_train_options(Command& cmd, int epochs) {
  const TrainConfig d;
  cmd.add("--epochs", "epochs", std::to_string(epochs), "training epochs");
  cmd.add("--lr", "lr", "0.0002", "Adam learning rate");
  cmd.add("--beta1", "beta1", "0.5", "Adam beta1");
  cmd.add("--beta2", "beta2", "0.999", "Adam beta2");
  cmd.add("--lambda-l1", "lambda_l1", "70", "L1 loss weight");
  cmd.add("--lambda-ssim", "lambda_ssim", "30", "SSIM loss weight");
  cmd.add("--lambda-adv", "lambda_adv", "1", "adversarial loss weight");
  cmd.add("--batch-size", "batch_size", std::to_string(d.batch_size), "images per batch");
  cmd.add("--max-steps", "max_steps", "0", "stop after this many steps (0 = no cap)");
  cmd.add("--checkpoint-every", "checkpoint_every", std::to_string(d.checkpoint_every), "epochs between checkpoints");
  cmd.add("--augment-brightness", "augment_brightness", "0.1", "brightness jitter (symmetric-domain units)");
  cmd.add("--augment-contrast-min", "augment_contrast_min", "0.9", "lower contrast factor");
  cmd.add("--augment-contrast-max", "augment_contrast_max", "1.1", "upper contrast factor");
  cmd.add("--augment-geometric", "augment_geometric", "1", "geometric jitter magnitude (<= 2)");
  cmd.add_flag("--no-augment", "no_augment", "disable augmentation");
}

// --- subcommands --------------------------------------------------------------

int run_preprocess(const KeyValueConfig& c) {
  const std::string in = req(c, "in", "--in"), out = req(c, "out", "--out");
  const std::string roi_s = *c.get("roi");
  const int w = static_cast<int>(as_int(c, "width")), h = static_cast<int>(as_int(c, "height"));
  if ((w > 0) != (h > 0)) throw UsageError("--width and --height must be given together");
  if ((w > 0 && w % 32 != 0) || (h > 0 && h % 32 != 0)) throw UsageError("--width/--height must be multiples of 32");
  for (const auto& [src, dst] : io_pairs(in, out)) {
    Image img = load_image(src.string());
    if (!roi_s.empty()) {
      const Roi roi = parse_roi(roi_s);
      if (!roi.valid_for(img)) throw DataError("roi " + to_string(roi) + " exceeds " + src.string());
      img = crop(img, roi);
    }
    img = w > 0 ? resample(img, w, h) : fit_divisible_32(img);
    save_image(dst.string(), img);
    log("preprocess: " + src.string() + " -> " + dst.string() + " (" + std::to_string(img.width()) + "x" +
        std::to_string(img.height()) + ")");
  }
  return 0;
}

int run_register(const KeyValueConfig& c) {
  const Image fixed = load_image(req(c, "fixed", "--fixed"));
  std::vector<std::string> moving_paths;
  {
    std::istringstream ss(req(c, "moving", "--moving"));
    std::string p;
    while (std::getline(ss, p, ';')) {
      if (!p.empty()) moving_paths.push_back(p);
    }
  }
  std::vector<Image> moving;
  for (const auto& p : moving_paths) moving.push_back(load_image(p));
  std::size_t pick = 0;
  if (moving.size() > 1) {
    const auto sel = select_y_offset(fixed, moving);
    pick = sel.index;
    log("register: selected candidate " + moving_paths[pick] + " (ncc " + std::to_string(sel.score) + ")");
  }
  AffineTransform2D init = AffineTransform2D::identity();
  const std::string ff = *c.get("fiducials_fixed"), fm = *c.get("fiducials_moving");
  if (!ff.empty() || !fm.empty()) {
    if (ff.empty() || fm.empty()) throw UsageError("--fiducials-fixed and --fiducials-moving go together");
    init = affine_from_fiducials(read_fiducials(fm), read_fiducials(ff));
  }
  RegistrationConfig rc;
  rc.max_iterations = static_cast<int>(as_int(c, "iterations"));
  rc.pyramid_levels = static_cast<int>(as_int(c, "levels"));
  rc.spatial_samples = static_cast<int>(as_int(c, "samples"));
  rc.seed = static_cast<std::uint64_t>(as_int(c, "seed"));
  AffineTransform2D t = init;
  if (*c.get("no_optimize") != "1") {
    const auto rep = register_affine_report(fixed, moving[pick], init, rc);
    t = rep.transform;
    log("register: ncc " + std::to_string(rep.initial_ncc) + " -> " + std::to_string(rep.final_ncc) + " in " +
        std::to_string(rep.iterations) + " iterations");
  }
  const std::string out = req(c, "out", "--out");
  write_transform(out, t);
  const std::string warped = *c.get("warped");
  if (!warped.empty()) save_image(warped, warp(moving[pick], t, fixed.width(), fixed.height()));
  return 0;
}

int run_degrade(const KeyValueConfig& c) {
  const std::string in = req(c, "in", "--in"), out = req(c, "out", "--out");
  const bool random = *c.get("random") == "1";
  DegradationSpec fixed_spec;
  fixed_spec.speckle_sigma = as_double(c, "speckle_sigma");
  fixed_spec.blur_sigma = as_double(c, "blur_sigma");
  fixed_spec.compression_quality = static_cast<int>(as_int(c, "compression_quality"));
  fixed_spec.warp_magnitude = as_double(c, "warp_magnitude");
  fixed_spec.validate();
  const DegradationRanges ranges = DegradationRanges::from_config(c);
  const auto seed = static_cast<std::uint64_t>(as_int(c, "seed"));
  for (const auto& [src, dst] : io_pairs(in, out)) {
    const Image img = normalize(load_image(src.string()), IntensityDomain::Unit_0_1);
    DegradationSpec spec = fixed_spec;
    const auto image_seed = derive_seed(seed, src.filename().string());
    if (random) {
      spec = ranges.sample(image_seed);
    } else {
      spec.seed = image_seed;
    }
    save_image(dst.string(), degrade(img, spec));
    log("degrade: " + src.string() + " -> " + dst.string() + " speckle=" + std::to_string(spec.speckle_sigma) +
        " blur=" + std::to_string(spec.blur_sigma) + " quality=" + std::to_string(spec.compression_quality) +
        " warp=" + std::to_string(spec.warp_magnitude));
  }
  return 0;
}

nn::Checkpoint start_checkpoint(const KeyValueConfig& c, const TrainConfig& tc) {
  const std::string init = c.get("init").value_or(""), resume = c.get("resume").value_or("");
  if (!init.empty() && !resume.empty()) throw UsageError("--init and --resume are mutually exclusive");
  nn::Checkpoint ck = fresh_checkpoint(tc.seed, tc.adam);
  if (!resume.empty()) {
    nn::load_checkpoint(resume, ck);
    log("resuming at step " + std::to_string(ck.step) + ", epoch " + std::to_string(ck.epoch));
  } else if (!init.empty()) {
    nn::load_checkpoint(init, ck);
    reset_training_state(ck, tc.adam);
    log("initialized networks from " + init);
  }
  return ck;
}

int run_pretrain(const KeyValueConfig& c) {
  TrainConfig tc = train_config(c);
  tc.out_dir = req(c, "out", "--out");
  const auto images = load_dir(req(c, "pristine", "--pristine"));
  std::vector<Image> fitted;
  for (const auto& img : images) fitted.push_back(fit_divisible_32(img));
  const auto ranges = DegradationRanges::from_config(c);
  auto res = pretrain(fitted, ranges, tc, start_checkpoint(c, tc));
  nn::save_weights(fs::path(tc.out_dir) / "generator.pqwt", res.checkpoint.G);
  log("pretrain: " + std::to_string(res.log.size()) + " steps, checkpoint " + (fs::path(tc.out_dir) / "pretrain.pqwt").string());
  if (res.aborted) throw NumericError(res.abort_reason + " (last good checkpoint kept)");
  return 0;
}

int run_train(const KeyValueConfig& c) {
  TrainConfig tc = train_config(c);
  tc.out_dir = req(c, "out", "--out");
  PairManifest m = load_manifest(req(c, "manifest", "--manifest"));
  for (const auto& r : m.rows) {
    if (r.missing && !r.excluded) log("warning: pair '" + r.id + "' references a missing file; skipped");
  }
  bool has_split = false;
  for (const auto& r : m.rows) has_split = has_split || !r.split.empty();
  if (!has_split) {
    m = make_split(m, 0.9, 10, tc.seed);
    fs::create_directories(tc.out_dir);
    write_manifest(fs::path(tc.out_dir) / "manifest_split.csv", m);
  }
  log("train: " + std::to_string(m.count("train")) + " train / " + std::to_string(m.count("val")) + " val / " +
      std::to_string(m.count("test")) + " test pairs");
  const auto train_set = load_pairs(m, "train");
  const auto val_set = load_pairs(m, "val");
  auto res = train(train_set, val_set, tc, start_checkpoint(c, tc));
  nn::save_weights(fs::path(tc.out_dir) / "generator.pqwt", res.best.G);
  for (const auto& e : res.history) {
    log("epoch " + std::to_string(e.epoch) + " step " + std::to_string(e.step) + " G " + std::to_string(e.g_total) +
        " L1 " + std::to_string(e.l1) + " 1-SSIM " + std::to_string(e.ssim_loss) + " D " + std::to_string(e.d_loss) +
        " val SSIM " + std::to_string(e.val_ssim));
  }
  if (res.aborted) throw NumericError(res.abort_reason + " (last good checkpoint kept)");
  return 0;
}

int run_enhance(const KeyValueConfig& c) {
  nn::UNetGenerator<float> G;
  nn::load_weights(req(c, "weights", "--weights"), G);
  for (const auto& [src, dst] : io_pairs(req(c, "in", "--in"), req(c, "out", "--out"))) {
    const Image img = load_image(src.string());
    save_image(dst.string(), enhance(img, G));
    log("enhance: " + src.string() + " -> " + dst.string());
  }
  return 0;
}

int run_evaluate(const KeyValueConfig& c) {
  const PairManifest m = load_manifest(req(c, "manifest", "--manifest"));
  std::unique_ptr<NiqeModel> model;
  const std::string model_path = *c.get("niqe_model");
  if (!model_path.empty()) model = std::make_unique<NiqeModel>(nn::load_niqe_model(model_path));
  const auto rep = evaluate_pairs(m, *c.get("enhanced"), model.get(), *c.get("split"));
  if (rep.rows.empty()) throw DataError("no pairs in split '" + *c.get("split") + "'");
  write_report(req(c, "out", "--out"), rep);
  for (const auto& g : rep.gaps) log("gap: " + g);
  log("evaluate: " + std::to_string(rep.rows.size()) + " rows -> " + *c.get("out"));
  return 0;
}

int run_bench(const KeyValueConfig& c) {
  nn::UNetGenerator<float> G;
  const std::string w = *c.get("weights");
  if (w.empty()) {
    G.initialize(derive_seed(static_cast<std::uint64_t>(as_int(c, "seed")), "generator"));
  } else {
    nn::load_weights(w, G);
  }
  const auto s = bench_latency(G, static_cast<int>(as_int(c, "width")), static_cast<int>(as_int(c, "height")),
                               static_cast<int>(as_int(c, "threads")), static_cast<int>(as_int(c, "repeats")));
  char line[256];
  std::snprintf(line, sizeof line, "%dx%d,%d,%d,%.4f,%.4f\n", s.width, s.height, s.threads, s.repeats, s.mean_ms,
                s.std_ms);
  log("bench: " + std::to_string(s.width) + "x" + std::to_string(s.height) + " threads " + std::to_string(s.threads) +
      " (" + std::to_string(s.workers) + " workers): " + std::to_string(s.mean_ms) + " +/- " + std::to_string(s.std_ms) + " ms");
  const std::string out = *c.get("out");
  if (!out.empty()) {
    std::ofstream f(out, std::ios::trunc);
    if (!f) throw DataError("cannot write " + out);
    f << "size,threads,repeats,mean_ms,std_ms\n" << line;
  }
  return 0;
}

int run_fit_niqe(const KeyValueConfig& c) {
  const auto images = load_dir(req(c, "pristine", "--pristine"));
  const auto model = fit_niqe_model(images, static_cast<int>(as_int(c, "patch_size")), as_double(c, "sharpness"));
  nn::save_niqe_model(req(c, "out", "--out"), model);
  log("fit-niqe: " + std::to_string(model.patch_count) + " patches from " + std::to_string(images.size()) + " images");
  return 0;
}

int exit_code(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::Usage: return 2;
    case ErrorCategory::Data: return 3;
    case ErrorCategory::Numeric: return 4;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Point-of-care ultrasound image enhancement toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string seed = "0", threads = std::to_string(default_threads()), config_path;
  auto* seed_opt = app.add_option("--seed", seed, "random seed")->capture_default_str();
  auto* threads_opt = app.add_option("--threads", threads, "worker threads (bench: capped at 4 unless given)")
                          ->capture_default_str();
  app.add_option("--config", config_path, "key=value file; flags override it");

  std::map<std::string, std::unique_ptr<Command>> cmds;
  auto make = [&](const std::string& name, const std::string& help) -> Command& {
    auto cmd = std::make_unique<Command>();
    cmd->app = app.add_subcommand(name, help);
    Command& ref = *cmd;
    cmds[name] = std::move(cmd);
    return ref;
  };

  {
    auto& c = make("preprocess", "crop, resize to multiples of 32 and write 8-bit images");
    c.add("--in", "in", "", "input image or directory");
    c.add("--out", "out", "", "output image or directory");
    c.add("--roi", "roi", "", "crop rectangle x,y,width,height (pixels)");
    c.add("--width", "width", "0", "target width (0 = nearest aspect-preserving multiple of 32)");
    c.add("--height", "height", "0", "target height");
  }
  {
    auto& c = make("register", "affine registration of a moving image onto a fixed image");
    c.add("--fixed", "fixed", "", "fixed (low-quality) image");
    c.add("--moving", "moving", "", "moving image; several ';'-separated candidates select the best y-offset");
    c.add("--fiducials-fixed", "fiducials_fixed", "", "three fiducials (mm) in the fixed image");
    c.add("--fiducials-moving", "fiducials_moving", "", "the same fiducials in the moving image");
    c.add("--iterations", "iterations", "200", "optimizer iterations per pyramid level");
    c.add("--levels", "levels", "4", "pyramid levels");
    c.add("--samples", "samples", "2000", "spatial samples per iteration");
    c.add_flag("--no-optimize", "no_optimize", "use the fiducial transform as is");
    c.add("--out", "out", "", "transform file (a11 a12 a21 a22 tx ty)");
    c.add("--warped", "warped", "", "also write the moving image resampled onto the fixed grid");
  }
  {
    auto& c = make("degrade", "synthesize low-quality images");
    c.add("--in", "in", "", "input image or directory");
    c.add("--out", "out", "", "output image or directory");
    c.add("--speckle", "speckle_sigma", "0", "multiplicative speckle sigma");
    c.add("--blur", "blur_sigma", "0", "Gaussian blur sigma (px)");
    c.add("--quality", "compression_quality", "100", "block-DCT compression quality 1..100");
    c.add("--warp", "warp_magnitude", "0", "geometric distortion magnitude");
    c.add_flag("--random", "random", "draw parameters per image from the *_min/*_max ranges");
    c.add("--spec", "spec", "", "key=value degradation spec file (speckle_sigma, blur_sigma, ...)");
    const DegradationRanges r;
    c.add("--speckle-min", "speckle_sigma_min", std::to_string(r.speckle_sigma[0]), "random speckle lower bound");
    c.add("--speckle-max", "speckle_sigma_max", std::to_string(r.speckle_sigma[1]), "random speckle upper bound");
    c.add("--blur-min", "blur_sigma_min", std::to_string(r.blur_sigma[0]), "random blur lower bound");
    c.add("--blur-max", "blur_sigma_max", std::to_string(r.blur_sigma[1]), "random blur upper bound");
    c.add("--quality-min", "compression_quality_min", std::to_string(r.compression_quality[0]), "random quality lower bound");
    c.add("--quality-max", "compression_quality_max", std::to_string(r.compression_quality[1]), "random quality upper bound");
    c.add("--warp-min", "warp_magnitude_min", std::to_string(r.warp_magnitude[0]), "random warp lower bound");
    c.add("--warp-max", "warp_magnitude_max", std::to_string(r.warp_magnitude[1]), "random warp upper bound");
  }
  {
    auto& c = make("pretrain", "train on synthetically degraded pristine images");
    c.add("--pristine", "pristine", "", "directory of high-quality images");
    c.add("--out", "out", "", "output directory");
    c.add("--init", "init", "", "initial weights or checkpoint");
    c.add("--resume", "resume", "", "checkpoint to resume");
    add_train_options(c, 10);
    const DegradationRanges r;
    c.add("--speckle-min", "speckle_sigma_min", std::to_string(r.speckle_sigma[0]), "speckle lower bound");
    c.add("--speckle-max", "speckle_sigma_max", std::to_string(r.speckle_sigma[1]), "speckle upper bound");
    c.add("--blur-min", "blur_sigma_min", std::to_string(r.blur_sigma[0]), "blur lower bound");
    c.add("--blur-max", "blur_sigma_max", std::to_string(r.blur_sigma[1]), "blur upper bound");
    c.add("--quality-min", "compression_quality_min", std::to_string(r.compression_quality[0]), "quality lower bound");
    c.add("--quality-max", "compression_quality_max", std::to_string(r.compression_quality[1]), "quality upper bound");
    c.add("--warp-min", "warp_magnitude_min", std::to_string(r.warp_magnitude[0]), "warp lower bound");
    c.add("--warp-max", "warp_magnitude_max", std::to_string(r.warp_magnitude[1]), "warp upper bound");
  }
  {
    auto& c = make("train", "train the enhancement network on paired images");
    c.add("--manifest", "manifest", "", "pair manifest CSV");
    c.add("--out", "out", "pocusiq_train", "output directory");
    c.add("--init", "init", "", "initial weights (e.g. from pretrain); optimizer starts fresh");
    c.add("--resume", "resume", "", "checkpoint to resume");
    add_train_options(c, 300);
  }
  {
    auto& c = make("enhance", "run the generator on images");
    c.add("--in", "in", "", "input image or directory (dimensions divisible by 32)");
    c.add("--weights", "weights", "", "generator weights or checkpoint");
    c.add("--out", "out", "", "output image or directory");
  }
  {
    auto& c = make("evaluate", "SSIM/PSNR/NIQE/PIQE report for a manifest split");
    c.add("--manifest", "manifest", "", "pair manifest CSV");
    c.add("--enhanced", "enhanced", "", "directory of enhanced images named <id>.png");
    c.add("--niqe-model", "niqe_model", "", "NIQE model file from fit-niqe");
    c.add("--split", "split", "test", "manifest split to evaluate");
    c.add("--out", "out", "", "report CSV");
  }
  {
    auto& c = make("bench", "generator latency benchmark");
    c.add("--weights", "weights", "", "generator weights (random init when empty)");
    c.add("--width", "width", "256", "image width");
    c.add("--height", "height", "192", "image height");
    c.add("--repeats", "repeats", "100", "timed runs");
    c.add("--out", "out", "", "optional CSV with the timing summary");
  }
  {
    auto& c = make("fit-niqe", "fit a NIQE model on pristine images");
    c.add("--pristine", "pristine", "", "directory of pristine images (>= 10)");
    c.add("--patch-size", "patch_size", "96", "patch size (px)");
    c.add("--sharpness", "sharpness", "0.75", "keep patches above this fraction of the sharpest");
    c.add("--out", "out", "", "model file");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << "\n";
    return 2;
  }

  try {
    Command* cmd = nullptr;
    for (auto& [name, c] : cmds) {
      if (c->app->parsed()) cmd = c.get();
    }
    KeyValueConfig file;
    if (!config_path.empty()) file = KeyValueConfig::load(config_path);
    if (cmd->options.count("spec") && cmd->options.at("spec")->count() > 0) {
      for (const auto& [k, v] : KeyValueConfig::load(cmd->values.at("spec")).entries()) file.set(k, v);
    }
    std::map<std::string, std::string> globals;
    globals["seed"] = seed_opt->count() > 0 || !file.contains("seed") ? seed : *file.get("seed");
    std::string th = threads_opt->count() > 0 || !file.contains("threads") ? threads : *file.get("threads");
    if (cmd->app->get_name() == "bench" && threads_opt->count() == 0 && !file.contains("threads")) {
      th = std::to_string(std::min(4, default_threads()));
    }
    globals["threads"] = th;
    const KeyValueConfig cfg = cmd->resolve(file, globals);
    const long long nthreads = cfg.get_int("threads", 1);
    if (nthreads < 1) throw UsageError("--threads must be >= 1");
    cfg.get_int("seed", 0);
    set_compute_threads(static_cast<int>(nthreads));
    std::cerr << "# " << cmd->app->get_name() << " resolved config\n" << cfg.to_string();

    const std::string& name = cmd->app->get_name();
    if (name == "preprocess") return run_preprocess(cfg);
    if (name == "register") return run_register(cfg);
    if (name == "degrade") return run_degrade(cfg);
    if (name == "pretrain") return run_pretrain(cfg);
    if (name == "train") return run_train(cfg);
    if (name == "enhance") return run_enhance(cfg);
    if (name == "evaluate") return run_evaluate(cfg);
    if (name == "bench") return run_bench(cfg);
    if (name == "fit-niqe") return run_fit_niqe(cfg);
    throw UsageError("unknown subcommand");
  } catch (const Error& e) {
    std::cerr << "error: " << to_string(e.category()) << ": " << e.what() << "\n";
    return exit_code(e.category());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: data: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 1;
  }
}
