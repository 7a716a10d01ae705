#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "harness.hpp"
#include "pocusiq/image_io.hpp"
#include "pocusiq/neural/weights_io.hpp"
#include "support.hpp"

#ifndef POCUSIQ_CLI_PATH
#error "POCUSIQ_CLI_PATH must name the command-line binary"
#endif

using namespace pocusiq;
using testsupport::TempDir;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string quote(const std::string& s) {
  std::string q = "'";
  for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return q + "'";
}

Run cli(const TempDir& dir, const std::vector<std::string>& args) {
  std::string cmd = quote(POCUSIQ_CLI_PATH);
  for (const auto& a : args) cmd += " " + quote(a);
  const auto out = dir.path() / "stdout.txt", err = dir.path() / "stderr.txt";
  cmd += " >" + quote(out.string()) + " 2>" + quote(err.string());
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::string last_line(const std::string& s) {
  std::string t = s;
  while (!t.empty() && t.back() == '\n') t.pop_back();
  return t.substr(t.rfind('\n') == std::string::npos ? 0 : t.rfind('\n') + 1);
}

std::string random_weights(const TempDir& dir) {
  nn::UNetGenerator<float> G;
  G.initialize(3);
  const auto p = dir.file("w.pqwt");
  nn::save_weights(p, G);
  return p;
}

}  // namespace

TEST(Cli, HelpListsEveryFlagWithDefaults) {
  TempDir dir("cli_help");
  const auto top = cli(dir, {"--help"});
  EXPECT_EQ(top.code, 0);
  for (const char* sub : {"preprocess", "register", "degrade", "pretrain", "train", "enhance", "evaluate", "bench", "fit-niqe"}) {
    EXPECT_NE(top.out.find(sub), std::string::npos) << sub;
    const auto h = cli(dir, {sub, "--help"});
    EXPECT_EQ(h.code, 0) << sub;
    EXPECT_NE(h.out.find("--out"), std::string::npos) << sub;
  }
  const auto t = cli(dir, {"train", "--help"});
  for (const char* flag : {"--epochs", "--lr", "--beta1", "--beta2", "--lambda-l1", "--lambda-ssim", "--batch-size",
                           "--checkpoint-every", "--no-augment", "--manifest", "--init", "--resume"}) {
    EXPECT_NE(t.out.find(flag), std::string::npos) << flag;
  }
  for (const char* def : {"300", "0.0002", "0.5", "0.999", "70", "30"}) {
    EXPECT_NE(t.out.find(def), std::string::npos) << def;
  }
  const auto b = cli(dir, {"bench", "--help"});
  EXPECT_NE(b.out.find("256"), std::string::npos);
  EXPECT_NE(b.out.find("192"), std::string::npos);
}

TEST(Cli, UsageErrorsExitTwo) {
  TempDir dir("cli_usage");
  auto r = cli(dir, {"enhance", "--bogus", "1"});
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(last_line(r.err).rfind("error: usage:", 0), 0u) << r.err;
  EXPECT_EQ(cli(dir, {}).code, 2);
  EXPECT_EQ(cli(dir, {"frobnicate"}).code, 2);
  r = cli(dir, {"enhance", "--in", dir.file("x.png")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("--weights"), std::string::npos);
  EXPECT_EQ(cli(dir, {"--threads", "0", "bench", "--repeats", "10", "--width", "32", "--height", "32"}).code, 2);
  EXPECT_EQ(cli(dir, {"bench", "--repeats", "3"}).code, 2);

  save_image(dir.file("odd.png"), testsupport::random_u8_image(40, 32, 1));
  r = cli(dir, {"enhance", "--in", dir.file("odd.png"), "--weights", random_weights(dir), "--out", dir.file("o.png")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("divisible by 32"), std::string::npos);
}

TEST(Cli, DataAndNumericErrors) {
  TempDir dir("cli_data");
  auto r = cli(dir, {"enhance", "--in", dir.file("none.png"), "--weights", dir.file("none.pqwt"), "--out", dir.file("o.png")});
  EXPECT_EQ(r.code, 3);
  EXPECT_EQ(last_line(r.err).rfind("error: data:", 0), 0u) << r.err;

  std::ofstream(dir.file("junk.pqwt")) << "not a weight file";
  save_image(dir.file("a.png"), testsupport::random_u8_image(32, 32, 1));
  EXPECT_EQ(cli(dir, {"enhance", "--in", dir.file("a.png"), "--weights", dir.file("junk.pqwt"), "--out", dir.file("o.png")}).code,
            3);

  Image flat(64, 64, IntensityDomain::U8_0_255);
  for (auto& v : flat.pixels()) v = 90;
  save_image(dir.file("flat.png"), flat);
  r = cli(dir, {"register", "--fixed", dir.file("flat.png"), "--moving", dir.file("flat.png"), "--out", dir.file("t.txt")});
  EXPECT_EQ(r.code, 4);
  EXPECT_EQ(last_line(r.err).rfind("error: numeric:", 0), 0u) << r.err;
}

TEST(Cli, EchoesResolvedConfigAndHonoursConfigFile) {
  TempDir dir("cli_config");
  std::ofstream(dir.file("c.txt")) << "width = 64\nheight = 32\nrepeats = 12\n";
  const auto r = cli(dir, {"--config", dir.file("c.txt"), "bench", "--width", "96", "--out", dir.file("b.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.err.find("resolved config"), std::string::npos);
  EXPECT_NE(r.err.find("repeats=12"), std::string::npos) << r.err;
  const auto csv = slurp(dir.file("b.csv"));
  EXPECT_NE(csv.find("96x32,"), std::string::npos) << csv;
  EXPECT_NE(csv.find(",12,"), std::string::npos) << csv;
}

TEST(Cli, EnhanceKeepsDimensions) {
  TempDir dir("cli_enhance");
  save_image(dir.file("a.png"), normalize(synthetic_phantom(96, 64, 1), IntensityDomain::U8_0_255));
  const auto r = cli(dir, {"enhance", "--in", dir.file("a.png"), "--weights", random_weights(dir), "--out", dir.file("b.png")});
  ASSERT_EQ(r.code, 0) << r.err;
  const Image b = load_image(dir.file("b.png"));
  EXPECT_EQ(b.width(), 96);
  EXPECT_EQ(b.height(), 64);
}

TEST(Cli, PreprocessMakesDivisibleImages) {
  TempDir dir("cli_pre");
  fs::create_directories(dir.path() / "in");
  save_image((dir.path() / "in" / "a.png").string(), testsupport::random_u8_image(200, 150, 1));
  save_image((dir.path() / "in" / "b.pgm").string(), testsupport::random_u8_image(90, 70, 2));
  const auto r = cli(dir, {"preprocess", "--in", (dir.path() / "in").string(), "--out", (dir.path() / "out").string(),
                           "--roi", "0,0,80,64"});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"a.png", "b.pgm"}) {
    const Image img = load_image((dir.path() / "out" / f).string());
    EXPECT_EQ(img.width() % 32, 0);
    EXPECT_EQ(img.height() % 32, 0);
  }
  EXPECT_EQ(cli(dir, {"preprocess", "--in", (dir.path() / "in").string(), "--out", dir.file("o"), "--roi", "0,0,500,64"}).code,
            3);
  EXPECT_EQ(cli(dir, {"preprocess", "--in", (dir.path() / "in").string(), "--out", dir.file("o"), "--roi", "0,0"}).code, 2);
}

TEST(Cli, DegradeIsIdempotent) {
  TempDir dir("cli_degrade");
  save_image(dir.file("a.png"), normalize(synthetic_phantom(64, 64, 2), IntensityDomain::U8_0_255));
  const std::vector<std::string> args{"--seed", "5", "degrade", "--in", dir.file("a.png"), "--random"};
  auto a = args, b = args;
  a.insert(a.end(), {"--out", dir.file("d1.png")});
  b.insert(b.end(), {"--out", dir.file("d2.png")});
  ASSERT_EQ(cli(dir, a).code, 0);
  ASSERT_EQ(cli(dir, b).code, 0);
  EXPECT_EQ(slurp(dir.file("d1.png")), slurp(dir.file("d2.png")));
  EXPECT_NE(slurp(dir.file("d1.png")), slurp(dir.file("a.png")));
}

TEST(Cli, RegisterWritesTransform) {
  TempDir dir("cli_register");
  const Image fixed = synthetic_phantom(96, 96, 4);
  const Image moving = warp(fixed, AffineTransform2D::translation(1.5, -1.0));
  save_image(dir.file("f.png"), fixed);
  save_image(dir.file("m.png"), moving);
  const auto r = cli(dir, {"register", "--fixed", dir.file("f.png"), "--moving", dir.file("m.png"), "--out", dir.file("t.txt"),
                           "--warped", dir.file("w.png")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto t = read_transform(dir.file("t.txt"));
  // Scale and shift trade off near the origin, so judge by corner displacement.
  EXPECT_LT(harness::mean_corner_error(fixed, t, AffineTransform2D::translation(-1.5, 1.0)), 0.5);
  EXPECT_TRUE(fs::exists(dir.file("w.png")));
}

TEST(Cli, TrainTwiceGivesIdenticalCheckpoints) {
  TempDir dir("cli_train");
  const auto manifest = harness::write_dataset(dir.path() / "data", harness::desk_pairs(12, 32, 1));
  for (const char* out : {"a", "b"}) {
    const auto r = cli(dir, {"--threads", "1", "train", "--manifest", manifest.string(), "--epochs", "2", "--seed", "7",
                             "--out", (dir.path() / out).string()});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  for (const char* f : {"last.pqwt", "best.pqwt", "generator.pqwt", "history.csv", "losses.csv", "manifest_split.csv"}) {
    const auto a = slurp(dir.path() / "a" / f);
    ASSERT_FALSE(a.empty()) << f;
    EXPECT_EQ(a, slurp(dir.path() / "b" / f)) << f;
  }
  nn::Checkpoint ck;
  nn::load_checkpoint(dir.path() / "a" / "last.pqwt", ck);
  EXPECT_EQ(ck.epoch, 2u);
  const auto h = slurp(dir.path() / "a" / "history.csv");
  EXPECT_EQ(std::count(h.begin(), h.end(), '\n'), 3);

  const auto r = cli(dir, {"--threads", "1", "train", "--manifest", manifest.string(), "--epochs", "3", "--resume",
                           (dir.path() / "a" / "last.pqwt").string(), "--out", (dir.path() / "c").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.err.find("resuming at step"), std::string::npos);
  nn::load_checkpoint(dir.path() / "c" / "last.pqwt", ck);
  EXPECT_EQ(ck.epoch, 3u);
}

TEST(Cli, PretrainThenTrainFromInit) {
  TempDir dir("cli_pretrain");
  fs::create_directories(dir.path() / "pristine");
  for (int i = 0; i < 3; ++i) {
    save_image((dir.path() / "pristine" / ("p" + std::to_string(i) + ".png")).string(), synthetic_phantom(40, 36, 60 + i));
  }
  auto r = cli(dir, {"pretrain", "--pristine", (dir.path() / "pristine").string(), "--out", (dir.path() / "pre").string(),
                     "--max-steps", "6", "--warp-max", "0"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir.path() / "pre" / "pretrain.pqwt"));
  const auto log = slurp(dir.path() / "pre" / "pretrain_losses.csv");
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 7);

  const auto manifest = harness::write_dataset(dir.path() / "data", harness::desk_pairs(12, 32, 1));
  r = cli(dir, {"train", "--manifest", manifest.string(), "--epochs", "1", "--init",
                (dir.path() / "pre" / "pretrain.pqwt").string(), "--out", (dir.path() / "ft").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(cli(dir, {"train", "--manifest", manifest.string(), "--init", "x", "--resume", "y", "--out", dir.file("z")}).code,
            2);
}

TEST(Cli, EvaluateWritesRowsAndSummary) {
  TempDir dir("cli_eval");
  auto pairs = harness::desk_pairs(12, 192, 20);
  const auto manifest_path = harness::write_dataset(dir.path() / "data", pairs);
  const auto m = make_split(load_manifest(manifest_path), 0.7, 2, 3);
  write_manifest(manifest_path, m);
  const auto tests = m.in_split("test");
  ASSERT_EQ(tests.size(), 3u);

  fs::create_directories(dir.path() / "enh");
  for (const auto* row : tests) fs::copy_file(m.resolve(row->high_path), dir.path() / "enh" / (row->id + ".png"));
  fs::create_directories(dir.path() / "pristine");
  for (int i = 0; i < 10; ++i) {
    save_image((dir.path() / "pristine" / ("q" + std::to_string(i) + ".png")).string(), synthetic_phantom(192, 192, 700 + i));
  }
  auto r = cli(dir, {"fit-niqe", "--pristine", (dir.path() / "pristine").string(), "--out", dir.file("n.pqwt")});
  ASSERT_EQ(r.code, 0) << r.err;

  r = cli(dir, {"evaluate", "--manifest", manifest_path.string(), "--enhanced", (dir.path() / "enh").string(), "--niqe-model",
                dir.file("n.pqwt"), "--out", dir.file("report.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream rep(slurp(dir.file("report.csv")));
  std::string line;
  std::getline(rep, line);
  EXPECT_EQ(line, "group,image,ssim,psnr_db,niqe,piqe");
  int data_rows = 0, enhanced = 0;
  bool summary = false;
  while (std::getline(rep, line)) {
    if (line.rfind("#", 0) == 0) {
      summary = true;
      continue;
    }
    EXPECT_FALSE(summary) << "data row after the summary block";
    ++data_rows;
    if (line.rfind("enhanced,", 0) == 0) {
      ++enhanced;
      EXPECT_NE(line.find(",1.000000,100.000000,"), std::string::npos) << line;
    }
  }
  EXPECT_EQ(data_rows, 9);
  EXPECT_EQ(enhanced, 3);
  EXPECT_TRUE(summary);
}
