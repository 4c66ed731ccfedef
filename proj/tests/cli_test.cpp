#include <gtest/gtest.h>

#include <fstream>
#include <iterator>
#include <sstream>

#include "test_util.hpp"
#include "xprospect/cli.hpp"
#include "xprospect/dataset.hpp"
#include "xprospect/io.hpp"

namespace xprospect {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result xp(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  f << text;
}

TEST(Settings, ParsesCommentsAndRejectsUnknownKeys) {
  const auto s = cli::Settings::parse("# model\ninput_size = 16\n\nloss=MSE  # trailing\n");
  EXPECT_EQ(s.u64("input_size", 0), 16u);
  EXPECT_EQ(s.str("loss", ""), "MSE");
  EXPECT_EQ(s.u64("epochs", 7), 7u);
  try {
    cli::Settings::parse("seed=1\nlearnign_rate=0.1\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("2"), std::string::npos);
  }
  EXPECT_THROW(cli::Settings::parse("no equals sign\n"), ConfigError);
  EXPECT_THROW(s.require("manifest"), cli::UsageError);
}

TEST(Settings, ModelAndTrainConfigs) {
  const auto s = cli::Settings::parse(
      "input_size=32\ndense_units=512\nuse_backprojection=true\nloss=MSE\noptimizer=Nadam\nlearning_rate=0.002\n"
      "epochs=3\n");
  const auto m = cli::model_config(s);
  EXPECT_EQ(m.input_size, 32u);
  EXPECT_EQ(m.dense_units, 512u);
  EXPECT_TRUE(m.use_backprojection);
  EXPECT_EQ(cli::train_config(s).loss, LossKind::MSE);
  EXPECT_EQ(cli::train_config(s).epochs, 3u);
  const auto o = cli::optimizer_config(s, OptimizerKind::Adam, 1e-4);
  EXPECT_EQ(o.kind, OptimizerKind::Nadam);
  EXPECT_DOUBLE_EQ(o.learning_rate, 0.002);
  EXPECT_EQ(cli::default_model_name(m, InputSource::Stylized), "512-ProjInj-Styled-Inputs");
  auto plain = m;
  plain.dense_units = 64;
  plain.use_backprojection = false;
  EXPECT_EQ(cli::default_model_name(plain, InputSource::Mean), "64-Dense");
}

TEST(Run, UsageErrorsExitTwo) {
  EXPECT_EQ(xp({}).code, 2);
  EXPECT_EQ(xp({"reconstruct"}).code, 2);
  EXPECT_EQ(xp({"phantom", "--no-such-flag", "1"}).code, 2);
  EXPECT_EQ(xp({"backproject", "--out", "x.xvol"}).code, 2);
  const auto dir = test::scratch_dir("cli_usage");
  EXPECT_EQ(xp({"phantom", "--out", dir.string(), "--size", "4"}).code, 2);
  EXPECT_EQ(xp({"phantom", "--out", dir.string(), "--domain", "kelvin"}).code, 2);
  EXPECT_EQ(xp({"--help"}).code, 0);
}

TEST(Run, RuntimeFailuresExitOne) {
  const auto dir = test::scratch_dir("cli_runtime");
  const auto r = xp({"export-slice", "--volume", (dir / "missing.xvol").string(), "--index", "0", "--out",
                     (dir / "s.ximg").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("export-slice"), std::string::npos);
  EXPECT_EQ(xp({"ingest", "--input", dir.string(), "--out", (dir / "m.tsv").string()}).code, 1);
  EXPECT_FALSE(fs::exists(dir / "m.tsv"));
}

TEST(Pipeline, ConstantPhantomSurvivesIngestProjectBackproject) {
  const auto dir = test::scratch_dir("cli_constant");
  ASSERT_EQ(xp({"phantom", "--out", (dir / "hu").string(), "--size", "16", "--count", "3", "--constant", "500"}).code, 0);
  const fs::path manifest = dir / "data" / "manifest.tsv";
  ASSERT_EQ(xp({"ingest", "--input", (dir / "hu").string(), "--out", manifest.string(), "--size", "8"}).code, 0);
  ASSERT_EQ(xp({"project", "--manifest", manifest.string()}).code, 0);

  const auto m = read_manifest(manifest);
  ASSERT_EQ(m.rows.size(), 3u);
  for (const auto& row : m.rows) {
    const fs::path out = dir / (row.id + "_bp.xvol");
    ASSERT_EQ(xp({"backproject", "--frontal", m.resolve(row.frontal_path).string(), "--lateral",
                  m.resolve(row.lateral_path).string(), "--out", out.string()})
                  .code,
              0);
    const Volume3D v = load_volume(out.string());
    EXPECT_EQ(v.dz(), 8u);
    for (float f : v.data()) EXPECT_EQ(f, 0.75f);
  }
}

TEST(Pipeline, IngestIsDeterministicAndSplits) {
  const auto dir = test::scratch_dir("cli_ingest");
  ASSERT_EQ(xp({"phantom", "--out", (dir / "hu").string(), "--size", "8", "--count", "10", "--seed", "4"}).code, 0);
  write_text(dir / "hu" / "broken.xvol", "not a volume");
  const auto a = xp({"ingest", "--input", (dir / "hu").string(), "--out", (dir / "a" / "m.tsv").string(), "--size", "8"});
  const auto b = xp({"ingest", "--input", (dir / "hu").string(), "--out", (dir / "b" / "m.tsv").string(), "--size", "8"});
  ASSERT_EQ(a.code, 0);
  EXPECT_NE(a.out.find("broken.xvol"), std::string::npos);
  EXPECT_EQ(slurp(dir / "a" / "m.tsv"), slurp(dir / "b" / "m.tsv"));
  const auto m = read_manifest(dir / "a" / "m.tsv");
  EXPECT_EQ(m.rows_in(Split::Train).size(), 8u);
  EXPECT_EQ(m.rows_in(Split::Val).size(), 2u);
  EXPECT_EQ(m.rows_in(Split::Test).size(), 0u);
}

TEST(ExportSlice, OutOfRangeIndexIsUsageError) {
  const auto dir = test::scratch_dir("cli_slice");
  ASSERT_EQ(xp({"phantom", "--out", dir.string(), "--size", "8", "--domain", "unit"}).code, 0);
  const std::string vol = (dir / "phantom_0000.xvol").string();
  EXPECT_EQ(xp({"export-slice", "--volume", vol, "--index", "8", "--out", (dir / "s.ximg").string()}).code, 2);
  EXPECT_EQ(xp({"export-slice", "--volume", vol, "--axis", "oblique", "--index", "1", "--out",
                (dir / "s.ximg").string()})
                .code,
            2);
  ASSERT_EQ(xp({"export-slice", "--volume", vol, "--axis", "coronal", "--index", "3", "--out",
                (dir / "s.ximg").string()})
                .code,
            0);
  const Volume3D v = load_volume(vol);
  const Image2D s = load_image((dir / "s.ximg").string());
  for (std::size_t z = 0; z < 8; ++z)
    for (std::size_t x = 0; x < 8; ++x) EXPECT_EQ(s.at(z, x), v.at(z, 3, x));
  ASSERT_EQ(xp({"export-slice", "--volume", vol, "--index", "2", "--out", (dir / "s.pgm").string()}).code, 0);
  EXPECT_EQ(slurp(dir / "s.pgm").substr(0, 2), "P5");
}

class TrainedPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = test::scratch_dir("cli_train");
    ASSERT_EQ(xp({"phantom", "--out", (dir_ / "hu").string(), "--size", "8", "--count", "4", "--seed", "2"}).code, 0);
    manifest_ = dir_ / "data" / "manifest.tsv";
    ASSERT_EQ(xp({"ingest", "--input", (dir_ / "hu").string(), "--out", manifest_.string(), "--size", "8",
                  "--test-count", "1"})
                  .code,
              0);
    ASSERT_EQ(xp({"project", "--manifest", manifest_.string()}).code, 0);
    write_text(dir_ / "tiny.cfg", "# tiny model\ninput_size=8\ndense_units=8\nbase_channels=2\nepochs=2\nseed=3\n");
  }

  static Result train(const std::string& out, std::vector<std::string> extra = {}) {
    std::vector<std::string> args{"train", "--config", (dir_ / "tiny.cfg").string(), "--manifest", manifest_.string(),
                                  "--out", (dir_ / out).string()};
    args.insert(args.end(), extra.begin(), extra.end());
    return xp(args);
  }

  static inline fs::path dir_, manifest_;
};

TEST_F(TrainedPipeline, TwoRunsAreByteIdentical) {
  ASSERT_EQ(train("a", {"--checkpoint-every", "2"}).code, 0);
  ASSERT_EQ(train("b", {"--checkpoint-every", "2"}).code, 0);
  for (const char* f : {"model.xckpt", "train_log.tsv", "model.cfg", "step_000002.xckpt"}) {
    ASSERT_TRUE(fs::exists(dir_ / "a" / f)) << f;
    EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
  }
  const std::string log = slurp(dir_ / "a" / "train_log.tsv");
  EXPECT_EQ(log.substr(0, log.find('\n') + 1), log_header());
  const auto rows = static_cast<long>(read_manifest(manifest_).rows_in(Split::Train).size());
  EXPECT_EQ(rows, 2);
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 1 + 2 * rows);
}

TEST_F(TrainedPipeline, FlagsOverrideConfig) {
  ASSERT_EQ(train("seed9", {"--seed", "9", "--epochs", "1"}).code, 0);
  ASSERT_EQ(train("seed3", {"--epochs", "1"}).code, 0);
  const std::string cfg = slurp(dir_ / "seed9" / "model.cfg");
  EXPECT_NE(cfg.find("seed=9"), std::string::npos);
  EXPECT_NE(slurp(dir_ / "seed9" / "model.xckpt"), slurp(dir_ / "seed3" / "model.xckpt"));
  const std::string log = slurp(dir_ / "seed9" / "train_log.tsv");
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 1 + 2);
}

TEST_F(TrainedPipeline, PredictAndEvalReport) {
  ASSERT_EQ(train("m").code, 0);
  const auto m = read_manifest(manifest_);
  const auto test = m.rows_in(Split::Test);
  ASSERT_EQ(test.size(), 1u);
  const std::string ckpt = (dir_ / "m" / "model.xckpt").string();
  ASSERT_EQ(xp({"predict", "--config", (dir_ / "tiny.cfg").string(), "--checkpoint", ckpt, "--frontal",
                m.resolve(test[0].frontal_path).string(), "--lateral", m.resolve(test[0].lateral_path).string(),
                "--out", (dir_ / "pred.xvol").string()})
                .code,
            0);
  const Volume3D pred = load_volume((dir_ / "pred.xvol").string());
  EXPECT_EQ(pred.dz(), 8u);
  EXPECT_EQ(pred.domain(), Domain::Unit);

  const fs::path report = dir_ / "report.tsv";
  std::vector<std::string> eval{"eval", "--config", (dir_ / "tiny.cfg").string(), "--checkpoint", ckpt,
                                "--manifest", manifest_.string(), "--out", report.string(), "--loss", "mse"};
  ASSERT_EQ(xp(eval).code, 0);
  ASSERT_EQ(xp(eval).code, 0);
  std::istringstream lines(slurp(report));
  std::string header, row1, row2, extra;
  std::getline(lines, header);
  std::getline(lines, row1);
  std::getline(lines, row2);
  EXPECT_FALSE(std::getline(lines, extra));
  EXPECT_EQ(header + "\n", cli::report_header());
  EXPECT_EQ(row1, row2);
  const double expected = mse(pred, load_volume(m.resolve(test[0].ct_path).string()));
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", expected);
  EXPECT_EQ(row1, std::string("8-Dense\tmean\tMSE\tAdam\t") + buf);
}

TEST_F(TrainedPipeline, GradcheckCommandPasses) {
  const auto r = xp({"gradcheck", "--dense-units", "8", "--base-channels", "2", "--samples", "4"});
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(r.out.substr(0, r.out.find('\n')), "tensor\tsampled\tmax_rel_error\tstatus");
}

}  // namespace
}  // namespace xprospect
