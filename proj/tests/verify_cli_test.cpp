#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "mvf/cli.hpp"
#include "mvf/flow.hpp"
#include "mvf/trainer.hpp"
#include "mvf/verify.hpp"

using namespace mvf;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run invoke(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() / "mvf_cli_test";
    std::filesystem::remove_all(dir_);
    std::filesystem::create_directories(dir_);
  }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  // A tiny patch model so conversion commands have something to load.
  std::string tiny_model() {
    const auto r = invoke({"train", "--output", path("run"), "--set", "data.size=16", "--set", "data.patch_height=12",
                        "--set", "data.patch_width=12", "--set", "ssim.window=7", "--set", "net.hidden_dim=8",
                        "--set", "net.depth=1", "--set", "train.batch_size=8", "--set", "train.epochs=1"});
    EXPECT_EQ(r.code, cli::kExitOk) << r.err;
    return path("run/checkpoint.mvft");
  }

  std::filesystem::path dir_;
};

}  // namespace

TEST(Verify, AllSuitesPass) {
  const auto results = verify::run_suite("all");
  for (const auto& r : results) EXPECT_TRUE(r.passed) << r.suite << "/" << r.name << ": " << r.detail;
  EXPECT_TRUE(verify::all_passed(results));
}

TEST(Verify, ReportListsAnchors) {
  const auto results = verify::run_suite("flow");
  const auto j = nlohmann::json::parse(verify::to_json(results));
  ASSERT_FALSE(j["properties"].empty());
  for (const auto& p : j["properties"]) {
    EXPECT_FALSE(p["anchor"].get<std::string>().empty());
    EXPECT_TRUE(p.contains("measured"));
    EXPECT_TRUE(p.contains("passed"));
  }
}

TEST(Verify, UnknownSuite) { EXPECT_THROW(verify::run_suite("nope"), std::invalid_argument); }

TEST(Verify, SignFlippedTargetIsCaught) {
  verify::Options opts;
  opts.target = [](const NetConfig& cfg, const ModelParams& params, const FlowBatch& batch) {
    const Tensor good = meanflow_target(cfg, params, batch);
    Tensor bad(good.shape());
    for (std::size_t i = 0; i < batch.size(); ++i)
      for (std::size_t d = 0; d < good.cols(); ++d) bad.at(i, d) = 2.0 * batch.v.at(i, d) - good.at(i, d);
    return bad;
  };
  const auto results = verify::run_suite("flow", opts);
  EXPECT_FALSE(verify::all_passed(results));
}

TEST(Verify, BrokenCollapseIsCaught) {
  verify::Options opts;
  opts.target = [](const NetConfig& cfg, const ModelParams& params, const FlowBatch& batch) {
    Tensor t = meanflow_target(cfg, params, batch);
    for (auto& v : t.data()) v = -v;
    return t;
  };
  EXPECT_FALSE(verify::all_passed(verify::run_suite("flow", opts)));
}

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(invoke({}).code, cli::kExitUsage);
  EXPECT_EQ(invoke({"frobnicate"}).code, cli::kExitUsage);
  EXPECT_EQ(invoke({"train", "--preset", "nope"}).code, cli::kExitUsage);
  EXPECT_EQ(invoke({"train", "--config", path("missing.ini")}).code, cli::kExitUsage);
  EXPECT_EQ(invoke({"sweep-tprime", "--checkpoint", path("missing.mvft")}).code, cli::kExitUsage);
}

TEST_F(CliTest, UnknownConfigKeyNamesKey) {
  std::ofstream(path("bad.ini")) << "[train]\nbatch = 8\n";
  const auto r = invoke({"train", "--config", path("bad.ini"), "--output", path("bad")});
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_NE(r.err.find("batch"), std::string::npos) << r.err;
}

TEST_F(CliTest, PaperPresetResolves) {
  const auto r = invoke({"train", "--preset", "paper", "--print-config"});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  EXPECT_NE(r.out.find("batch_size = 32"), std::string::npos);
  EXPECT_NE(r.out.find("lr = 0.0002"), std::string::npos);
  EXPECT_NE(r.out.find("beta1 = 0.5"), std::string::npos);
  EXPECT_NE(r.out.find("beta2 = 0.9"), std::string::npos);
  EXPECT_NE(r.out.find("warmup_steps = 10000"), std::string::npos);
}

TEST_F(CliTest, TrainWritesArtifacts) {
  tiny_model();
  EXPECT_TRUE(std::filesystem::exists(path("run/checkpoint.mvft")));
  EXPECT_TRUE(std::filesystem::exists(path("run/config.resolved.ini")));
  const std::string csv = slurp(path("run/metrics.csv"));
  EXPECT_EQ(csv.rfind("step,lr,l_mf,l_zerorec,l_total,wall_ms\n", 0), 0u);
}

TEST_F(CliTest, NonFiniteTrainingExitsNumerical) {
  const auto r = invoke({"train", "--output", path("nan"), "--set", "data.task=gaussian1d", "--set", "data.size=16",
                      "--set", "zerorec.loss=none", "--set", "diffused.enabled=false", "--set", "train.batch_size=8",
                      "--set", "train.lr=1e300", "--set", "train.warmup_steps=0", "--set", "train.epochs=20"});
  EXPECT_EQ(r.code, cli::kExitNumerical) << r.out << r.err;
}

TEST_F(CliTest, ConvertIsDeterministicAndValidated) {
  const auto ckpt = tiny_model();
  const auto a = invoke({"convert", "--checkpoint", ckpt, "--source", "3", "--target-speaker", "1", "--seed", "9",
                      "--output", path("a.mvft")});
  const auto b = invoke({"convert", "--checkpoint", ckpt, "--source", "3", "--target-speaker", "1", "--seed", "9",
                      "--output", path("b.mvft")});
  ASSERT_EQ(a.code, cli::kExitOk) << a.err;
  ASSERT_EQ(b.code, cli::kExitOk) << b.err;
  EXPECT_EQ(slurp(path("a.mvft")), slurp(path("b.mvft")));
  EXPECT_TRUE(std::filesystem::exists(path("a.json")));
  EXPECT_EQ(invoke({"convert", "--checkpoint", ckpt, "--source", "999", "--target-speaker", "1"}).code, cli::kExitUsage);
  EXPECT_EQ(invoke({"convert", "--checkpoint", ckpt, "--source", "0", "--target-speaker", "77"}).code, cli::kExitUsage);
}

TEST_F(CliTest, SweepGridRows) {
  const auto ckpt = tiny_model();
  const auto r = invoke({"sweep-tprime", "--checkpoint", ckpt, "--items", "4", "--output", path("s.csv"), "--plot",
                      path("s.svg")});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  const std::string csv = slurp(path("s.csv"));
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 12);
  EXPECT_NE(slurp(path("s.svg")).find("<svg"), std::string::npos);
}

TEST_F(CliTest, DegenerateSweepMatchesConvert) {
  const auto ckpt = tiny_model();
  const auto sweep = invoke({"sweep-tprime", "--checkpoint", ckpt, "--grid", "1.0", "--items", "1", "--seed", "4"});
  ASSERT_EQ(sweep.code, cli::kExitOk) << sweep.err;
  std::istringstream lines(sweep.out);
  std::string header, row;
  std::getline(lines, header);
  std::getline(lines, row);
  EXPECT_FALSE(std::getline(lines, header));
  double tp = 0, acc = 0, content = 0, ssim = 0;
  ASSERT_EQ(std::sscanf(row.c_str(), "%lf,%lf,%lf,%lf", &tp, &acc, &content, &ssim), 4);

  const auto probe = invoke({"convert", "--checkpoint", ckpt, "--source", "0", "--target-speaker", "0", "--output",
                          path("probe.mvft")});
  ASSERT_EQ(probe.code, cli::kExitOk) << probe.err;
  const int target = (nlohmann::json::parse(probe.out)["source_speaker"].get<int>() + 1) % 4;
  const auto conv = invoke({"convert", "--checkpoint", ckpt, "--source", "0", "--target-speaker", std::to_string(target),
                         "--t-prime", "1.0", "--seed", "4", "--output", path("c.mvft")});
  ASSERT_EQ(conv.code, cli::kExitOk) << conv.err;
  const auto report = nlohmann::json::parse(conv.out);
  EXPECT_EQ(acc, report["readback_speaker"].get<int>() == target ? 1.0 : 0.0);
  EXPECT_NEAR(content, report["content_error"].get<double>(), 1e-9);
  EXPECT_NEAR(ssim, report["ssim_to_source"].get<double>(), 1e-9);
}

TEST_F(CliTest, DatasetBuildAndInspect) {
  ASSERT_EQ(invoke({"dataset-build", "--set", "data.size=40", "--output", path("d.mvft")}).code, cli::kExitOk);
  const auto r = invoke({"dataset-inspect", path("d.mvft")});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  EXPECT_EQ(nlohmann::json::parse(r.out)["size"], 40);
  EXPECT_EQ(invoke({"dataset-inspect", path("missing.mvft")}).code, cli::kExitUsage);
}

TEST_F(CliTest, ResumeReproducesMetrics) {
  const std::vector<std::string> common{"--set", "data.task=gaussian1d", "--set", "data.size=64", "--set",
                                        "zerorec.loss=none", "--set", "diffused.enabled=false", "--set",
                                        "train.batch_size=8", "--set", "train.epochs=3", "--set", "net.hidden_dim=8"};
  auto with = [&](std::vector<std::string> head) {
    head.insert(head.end(), common.begin(), common.end());
    return head;
  };
  ASSERT_EQ(invoke(with({"train", "--output", path("full")})).code, cli::kExitOk);
  ASSERT_EQ(invoke(with({"train", "--output", path("again")})).code, cli::kExitOk);
  EXPECT_EQ(slurp(path("full/metrics.csv")), slurp(path("again/metrics.csv")));

  ASSERT_EQ(invoke(with({"train", "--output", path("part"), "--stop-after", "10"})).code, cli::kExitOk);
  ASSERT_EQ(invoke({"train", "--resume", path("part/checkpoint.mvft"), "--output", path("part")}).code, cli::kExitOk);
  EXPECT_EQ(slurp(path("full/metrics.csv")), slurp(path("part/metrics.csv")));
  EXPECT_TRUE(load_checkpoint(path("full/checkpoint.mvft")).params.bitwise_equal(load_checkpoint(path("part/checkpoint.mvft")).params));

  const auto mismatch = invoke({"train", "--resume", path("part/checkpoint.mvft"), "--set", "train.lr=0.1"});
  EXPECT_EQ(mismatch.code, cli::kExitUsage);
}
