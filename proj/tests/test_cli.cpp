#include <gtest/gtest.h>

#include <sstream>

#include "cli.hpp"
#include "headsynth/datagen.hpp"
#include "headsynth/headmodel.hpp"
#include "test_helpers.hpp"

using namespace headsynth;

namespace {

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun run(std::vector<std::string> args) {
  args.insert(args.begin(), "headsynth");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

}  // namespace

TEST(Cli, UsageErrorsExitWithTwoAndHelp) {
  const CliRun none = run({});
  EXPECT_EQ(none.code, cli::kExitUsage);
  EXPECT_NE(none.err.find("Usage:"), std::string::npos);
  EXPECT_EQ(run({"frobnicate"}).code, cli::kExitUsage);
  EXPECT_EQ(run({"dataset", "gen", "--out", "x"}).code, cli::kExitUsage);
  EXPECT_EQ(run({"dataset", "gen", "--dynamic", "--static", "--out", "x"}).code, cli::kExitUsage);
  EXPECT_EQ(run({"render", "--out", "x", "--resolution", "-3"}).code, cli::kExitUsage);
  EXPECT_EQ(run({"--help"}).code, cli::kExitOk);
}

TEST(Cli, RigGenWritesALoadableRig) {
  test::TempDir dir("cli_rig");
  const CliRun r = run({"rig", "gen", "--out", (dir / "rig.json").string(), "--rig-seed", "3"});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  EXPECT_TRUE(load_rig(dir / "rig.json") == procedural_rig(RigSpec{}, 3));
  EXPECT_NE(r.err.find("resolved config"), std::string::npos);
}

TEST(Cli, ConfigOverlayWithFlagOverride) {
  test::TempDir dir("cli_config");
  test::write_bytes(dir / "c.json",
                    R"({"seed": 5, "dataset": {"identities": 1, "motions": 1, "views": 3, "resolution": 8,
                        "points": 10, "triplane_resolution": 16, "grid_resolution": 4}})");
  const CliRun r = run({"--config", (dir / "c.json").string(), "dataset", "gen", "--static", "--views", "1", "--out",
                     (dir / "ds").string()});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  const DatasetManifest m = load_manifest(dir / "ds");
  EXPECT_EQ(m.records.size(), 1u);
  EXPECT_EQ(m.config.seed, 5u);
  EXPECT_EQ(m.config.resolution, 8);
  EXPECT_EQ(run({"dataset", "validate", (dir / "ds").string()}).code, cli::kExitOk);
}

TEST(Cli, BadConfigIsAUsageError) {
  test::TempDir dir("cli_bad_config");
  test::write_bytes(dir / "c.json", R"({"dataset": {"identites": 2}})");
  const CliRun r = run({"--config", (dir / "c.json").string(), "verify"});
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_NE(r.err.find("identites"), std::string::npos);
  EXPECT_EQ(run({"--config", (dir / "missing.json").string(), "verify"}).code, cli::kExitUsage);
}

TEST(Cli, ValidateReportsFailuresWithExitOne) {
  test::TempDir dir("cli_validate");
  const CliRun r = run({"dataset", "validate", (dir / "nothing").string()});
  EXPECT_EQ(r.code, cli::kExitValidation);
}

TEST(Cli, RenderWritesTheMaps) {
  test::TempDir dir("cli_render");
  const CliRun r = run({"--serial", "render", "--out", dir.path().string(), "--resolution", "12",
                     "--triplane-resolution", "16", "--coarse", "8", "--fine", "8", "--neck", "0.1", "0", "0"});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  for (const char* f : {"preview.png", "lr.pfm", "fg.pfm", "opacity.pfm", "depth.pfm", "mask.pfm"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  }
  EXPECT_EQ(read_pfm(dir / "lr.pfm", 32).width(), 12);
}

TEST(Cli, RenderIsDeterministicGivenTheSeed) {
  test::TempDir dir("cli_render_seed");
  const std::vector<std::string> common{"--resolution", "10", "--triplane-resolution", "16", "--coarse", "6", "--fine", "6"};
  auto render_to = [&](const std::string& leaf, const std::string& seed) {
    std::vector<std::string> args{"render", "--seed", seed, "--out", (dir / leaf).string()};
    args.insert(args.end(), common.begin(), common.end());
    EXPECT_EQ(run(args).code, cli::kExitOk);
    return test::read_bytes(dir / leaf / "lr.pfm");
  };
  const std::string a = render_to("a", "7"), b = render_to("b", "7"), c = render_to("c", "8");
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  EXPECT_EQ(test::read_bytes(dir / "a" / "preview.png"), test::read_bytes(dir / "b" / "preview.png"));
}

TEST(Cli, ThreadCountDoesNotChangeResults) {
  test::TempDir dir("cli_threads");
  for (const char* t : {"1", "3"}) {
    EXPECT_EQ(run({"--threads", t, "render", "--out", (dir / t).string(), "--resolution", "8",
                   "--triplane-resolution", "16", "--coarse", "6", "--fine", "6"})
                  .code,
              cli::kExitOk);
  }
  EXPECT_EQ(test::read_bytes(dir / "1" / "lr.pfm"), test::read_bytes(dir / "3" / "lr.pfm"));
}
