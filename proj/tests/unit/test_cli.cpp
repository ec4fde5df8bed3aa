#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "heightnet/error.hpp"
#include "heightnet/network_config.hpp"
#include "heightnet/raster_io.hpp"
#include "heightnet/scene.hpp"
#include "heightnet_cli/commands.hpp"
#include "json.hpp"

using namespace heightnet;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

const fs::path kConfigs = HEIGHTNET_CONFIG_DIR;

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("heightnet_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

struct Result {
  int code;
  std::string out, err;
};

Result invoke(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

std::string s(const fs::path& p) { return p.string(); }

// History rows without the trailing wall-time column.
std::vector<std::string> losses(const fs::path& history) {
  std::ifstream in(history);
  std::vector<std::string> rows;
  for (std::string line; std::getline(in, line);) rows.push_back(line.substr(0, line.rfind('\t')));
  return rows;
}

}  // namespace

TEST(Cli, ExitCodeMapping) {
  EXPECT_EQ(cli::exit_code_for(ConfigError("x")), cli::kUsage);
  EXPECT_EQ(cli::exit_code_for(IoError("x")), cli::kIo);
  EXPECT_EQ(cli::exit_code_for(ShapeError("x")), cli::kData);
  EXPECT_EQ(cli::exit_code_for(FormatError("x")), cli::kData);
  EXPECT_EQ(cli::exit_code_for(NonFiniteError("x")), cli::kData);
  EXPECT_EQ(cli::exit_code_for(DivergenceError("x")), cli::kDivergence);
  EXPECT_EQ(cli::exit_code_for(ToleranceError("x")), cli::kTolerance);
  EXPECT_EQ(cli::exit_code_for(std::runtime_error("x")), cli::kFailure);
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(invoke({}).code, cli::kUsage);
  EXPECT_EQ(invoke({"frobnicate"}).code, cli::kUsage);
  EXPECT_EQ(invoke({"predict", "--image", "x.png"}).code, cli::kUsage);
  EXPECT_EQ(invoke({"--help"}).code, cli::kOk);
}

TEST(Cli, MissingAndCorruptInputs) {
  const auto dir = scratch("bad_inputs");
  const auto r = invoke({"predict", "--weights", s(dir / "none.hnw"), "--image", s(dir / "none.png"), "--out",
                         s(dir / "o.hgt")});
  EXPECT_EQ(r.code, cli::kIo);
  EXPECT_NE(r.err.find("not found"), std::string::npos);

  write_text_atomic(dir / "junk.hnw", "not a weight file");
  write_rgb(dir / "img.png", Tensor4<float>(Shape4{1, 3, 8, 8}));
  EXPECT_EQ(invoke({"predict", "--weights", s(dir / "junk.hnw"), "--image", s(dir / "img.png"), "--out",
                    s(dir / "o.hgt")})
                .code,
            cli::kData);

  write_text_atomic(dir / "bad.cfg", "[scene]\nrows = -4\n");
  EXPECT_EQ(invoke({"synth", "--spec", s(dir / "bad.cfg"), "--out", s(dir / "o")}).code, cli::kUsage);
  EXPECT_EQ(invoke({"train", "--data", s(dir / "empty_dir"), "--out", s(dir / "t")}).code, cli::kIo);
}

TEST(Cli, GradcheckPassesAndReportsTolerance) {
  const auto dir = scratch("gradcheck");
  const auto ok = invoke({"gradcheck", "--config", s(kConfigs / "gradcheck.cfg"), "--trials", "3", "--report",
                          s(dir / "g.tsv")});
  EXPECT_EQ(ok.code, cli::kOk) << ok.err;
  EXPECT_NE(ok.out.find("PASS"), std::string::npos);
  const auto m = read_json(dir / "g.tsv.manifest.json");
  EXPECT_TRUE(m["results"]["passed"].get<bool>());
  EXPECT_LT(m["results"]["max_relative_error"].get<double>(), 1e-4);

  const auto tight = invoke({"gradcheck", "--no-primitives", "--tolerance", "1e-30", "--trials", "1"});
  EXPECT_EQ(tight.code, cli::kTolerance);
}

TEST(Cli, EvalOfIdenticalRastersIsPerfect) {
  const auto dir = scratch("eval");
  SceneSpec spec;
  spec.rows = spec.cols = 256;
  spec.building_count = 10;
  const auto scene = generate_scene(spec);
  write_height_raster(dir / "t.hgt", HeightRaster{scene.height, scene.meta, true});
  const auto r = invoke({"eval", "--pred", s(dir / "t.hgt"), "--truth", s(dir / "t.hgt"), "--report",
                         s(dir / "report")});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  const auto m = read_json(dir / "report" / "manifest.json");
  EXPECT_EQ(m["results"]["mse"].get<double>(), 0.0);
  EXPECT_EQ(m["results"]["mae"].get<double>(), 0.0);
  EXPECT_NEAR(m["results"]["ssim"].get<double>(), 1.0, 1e-12);
  EXPECT_EQ(m["results"]["patches"].get<int>(), 1);
  EXPECT_TRUE(fs::exists(dir / "report" / "patches.tsv"));
  EXPECT_TRUE(fs::exists(dir / "report" / "ssim_map.pgm"));
}

TEST(Cli, SegmentFindsGeneratedBuildings) {
  const auto dir = scratch("segment");
  SceneSpec spec;
  spec.rows = spec.cols = 96;
  spec.buildings = {{10, 10, 20, 20, 0.6}, {50, 50, 15, 25, 0.8}};
  spec.building_count = 0;
  const auto scene = generate_scene(spec);
  write_height_raster(dir / "h.hgt", HeightRaster{scene.height, scene.meta, true});
  write_rgb(dir / "i.png", scene.rgb);
  const auto r = invoke({"segment", "--height", s(dir / "h.hgt"), "--rgb", s(dir / "i.png"), "--out", s(dir / "seg")});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  EXPECT_EQ(read_json(dir / "seg" / "manifest.json")["results"]["instances"].get<int>(), 2);
  std::size_t rows = 0, cols = 0;
  EXPECT_EQ(read_pgm16(dir / "seg" / "instances.pgm", rows, cols).size(), 96u * 96u);
}

TEST(Cli, SynthTrainPredictReplayIsReproducible) {
  const auto dir = scratch("pipeline");
  auto r = invoke({"synth", "--spec", s(kConfigs / "scene_64.cfg"), "--out", s(dir / "data"), "--count", "4"});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  EXPECT_EQ(cli::find_pairs(dir / "data").size(), 4u);
  EXPECT_TRUE(fs::exists(dir / "data" / "scene_0000_footprints.pgm"));

  r = invoke({"--threads", "1", "train", "--preset", "tiny", "--data", s(dir / "data"), "--out", s(dir / "run"),
              "--epochs", "2", "--lr", "1e-3", "--augment", "off", "--val-fraction", "0.25"});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  EXPECT_NE(r.out.find("epoch 1"), std::string::npos);
  const auto m = read_json(dir / "run" / "manifest.json");
  EXPECT_EQ(m["results"]["epochs_run"].get<int>(), 2);
  EXPECT_EQ(m["config"]["learning_rate"].get<double>(), 1e-3);
  EXPECT_TRUE(fs::exists(dir / "run" / "checkpoint.hnw"));
  const auto weights = read_file(dir / "run" / "weights.hnw");
  const auto history = losses(dir / "run" / "history.tsv");
  EXPECT_EQ(history.size(), 3u);

  // Arbitrary-size prediction with a point cloud.
  SceneSpec big;
  big.rows = big.cols = 256;
  write_rgb(dir / "big.png", generate_scene(big).rgb);
  r = invoke({"predict", "--weights", s(dir / "run" / "weights.hnw"), "--image", s(dir / "big.png"), "--out",
              s(dir / "big.hgt"), "--pointcloud", s(dir / "big.xyz")});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  const auto pred = read_height_raster(dir / "big.hgt");
  EXPECT_EQ(pred.height.shape(), (Shape4{1, 1, 256, 256}));
  EXPECT_TRUE(pred.height.all_finite());
  EXPECT_EQ(pred.meta.height_max_m, 30.0);
  EXPECT_TRUE(fs::exists(dir / "big.hgt.manifest.json"));
  std::ifstream xyz(dir / "big.xyz");
  std::size_t lines = 0;
  for (std::string line; std::getline(xyz, line);) ++lines;
  EXPECT_EQ(lines, 256u * 256u);
  const auto first_pred = read_file(dir / "big.hgt");

  // Replaying the recorded command lines reproduces every byte.
  std::ostringstream out, err;
  EXPECT_EQ(cli::cmd_replay(dir / "run" / "manifest.json", out, err), cli::kOk) << err.str();
  EXPECT_EQ(read_file(dir / "run" / "weights.hnw"), weights);
  EXPECT_EQ(losses(dir / "run" / "history.tsv"), history);
  EXPECT_EQ(invoke({"replay", s(dir / "big.hgt.manifest.json")}).code, cli::kOk);
  EXPECT_EQ(read_file(dir / "big.hgt"), first_pred);
}

TEST(Cli, ReplayRejectsBadManifests) {
  const auto dir = scratch("replay");
  write_text_atomic(dir / "m.json", "{ not json");
  EXPECT_EQ(invoke({"replay", s(dir / "m.json")}).code, cli::kData);
  write_text_atomic(dir / "n.json", "{\"command\": \"train\"}");
  EXPECT_EQ(invoke({"replay", s(dir / "n.json")}).code, cli::kData);
  EXPECT_EQ(invoke({"replay", s(dir / "absent.json")}).code, cli::kIo);
}

TEST(Cli, ShippedConfigsMatchPresets) {
  EXPECT_EQ(NetworkConfig::load(kConfigs / "tiny.cfg"), preset_config("tiny"));
  EXPECT_EQ(NetworkConfig::load(kConfigs / "desk.cfg"), preset_config("desk"));
  EXPECT_EQ(NetworkConfig::load(kConfigs / "gradcheck.cfg"), preset_config("gradcheck"));
  EXPECT_NO_THROW(SceneSpec::load(kConfigs / "scene_64.cfg"));
}
