#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "mvf/config.hpp"
#include "mvf/container.hpp"
#include "mvf/trainer.hpp"
#include "test_util.hpp"

using namespace mvf;
using mvf::testing::randn;

namespace {

RunConfig tiny_gaussian() {
  RunConfig cfg;
  apply_config_text(cfg, R"(
[data]
task = gaussian1d
size = 64
[net]
hidden_dim = 8
depth = 1
time_embed_dim = 4
[train]
batch_size = 8
epochs = 3
lr = 1e-3
[zerorec]
loss = none
[diffused]
enabled = false
)");
  cfg.resolve();
  return cfg;
}

RunConfig tiny_patches() {
  RunConfig cfg;
  apply_config_text(cfg, R"(
[data]
size = 16
patch_height = 12
patch_width = 12
[net]
hidden_dim = 8
depth = 1
time_embed_dim = 4
[train]
batch_size = 8
epochs = 2
[ssim]
window = 7
)");
  cfg.resolve();
  return cfg;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("mvf_unit_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST(Config, PaperPreset) {
  auto cfg = preset("paper");
  cfg.resolve();
  EXPECT_EQ(cfg.train.batch_size, 32u);
  EXPECT_EQ(cfg.train.lr, 2e-4);
  EXPECT_EQ(cfg.train.beta1, 0.5);
  EXPECT_EQ(cfg.train.beta2, 0.9);
  EXPECT_EQ(cfg.train.warmup_steps, 10000u);
  EXPECT_EQ(cfg.train.times.r_equals_t_prob, 0.75);
  EXPECT_EQ(cfg.diffused.inference_t_prime, 0.95);
  EXPECT_EQ(cfg.zerorec.margin, 0.3);
}

TEST(Config, UnknownPreset) { EXPECT_THROW(preset("huge"), ConfigError); }

TEST(Config, UnknownKeyNamesKeyAndLine) {
  RunConfig cfg;
  try {
    apply_config_text(cfg, "[train]\nlr = 1e-3\nlearning_rate = 2\n", "a.ini");
    FAIL();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("a.ini:3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("learning_rate"), std::string::npos) << msg;
  }
}

TEST(Config, MalformedInput) {
  RunConfig cfg;
  EXPECT_THROW(apply_config_text(cfg, "[train]\nlr = fast\n"), ConfigError);
  EXPECT_THROW(apply_config_text(cfg, "[nosuch]\nx = 1\n"), ConfigError);
  EXPECT_THROW(apply_config_text(cfg, "lr = 1\n"), ConfigError);
  EXPECT_THROW(apply_config_text(cfg, "[train]\nlr\n"), ConfigError);
  EXPECT_THROW(apply_override(cfg, "train.lr"), ConfigError);
  EXPECT_THROW(apply_override(cfg, "net.activation=gelu"), ConfigError);
}

TEST(Config, ValidationRejectsBadValues) {
  auto cfg = preset("desk");
  apply_override(cfg, "train.batch_size=7");
  EXPECT_THROW(cfg.resolve(), ConfigError);
  cfg = preset("desk");
  apply_override(cfg, "zerorec.margin=-0.1");
  EXPECT_THROW(cfg.resolve(), ConfigError);
  cfg = preset("desk");
  apply_override(cfg, "data.task=gaussian1d");
  EXPECT_THROW(cfg.resolve(), ConfigError);
}

TEST(Config, TextRoundTrip) {
  auto cfg = preset("paper");
  apply_override(cfg, "net.hidden_dim=48");
  apply_override(cfg, "zerorec.loss=l2");
  cfg.resolve();
  RunConfig back;
  apply_config_text(back, to_config_text(cfg));
  back.resolve();
  EXPECT_EQ(to_config_text(back), to_config_text(cfg));
  EXPECT_EQ(config_digest(back), config_digest(cfg));
}

TEST(Config, DigestIgnoresRunSection) {
  auto a = preset("desk");
  a.resolve();
  auto b = a;
  b.output_dir = "elsewhere";
  EXPECT_EQ(config_digest(a), config_digest(b));
  apply_override(b, "train.seed=9");
  EXPECT_NE(config_digest(a), config_digest(b));
}

TEST(Container, RoundTripBothPrecisions) {
  Rng rng(1);
  TensorFile f;
  f.set_meta("k", "v with spaces");
  f.add("a", randn({3, 4}, rng));
  f.add("b", Tensor::scalar(0.1));
  const auto f64 = decode_tensor_file(encode_tensor_file(f, Precision::F64));
  EXPECT_EQ(f64.meta_value("k"), "v with spaces");
  EXPECT_TRUE(f64.tensor("a").bitwise_equal(f.tensor("a")));
  const auto f32 = decode_tensor_file(encode_tensor_file(f, Precision::F32));
  EXPECT_EQ(f32.tensor("b").item(), static_cast<double>(0.1f));
}

TEST(Container, DetectsCorruption) {
  TensorFile f;
  f.add("a", Tensor::row({1, 2, 3}));
  std::string bytes = encode_tensor_file(f, Precision::F64);
  bytes[bytes.size() - 8] ^= 0x10;
  EXPECT_THROW(decode_tensor_file(bytes), FormatError);
  EXPECT_THROW(decode_tensor_file("nope"), FormatError);
  EXPECT_THROW(decode_tensor_file(bytes.substr(0, bytes.size() / 2)), FormatError);
}

TEST(Adam, FirstStepIsSignedLearningRate) {
  ModelParams p;
  p.add("w", Tensor::row({1.0, -2.0, 0.5}));
  p[0].grad = Tensor::row({0.3, -40.0, 1e-3});
  auto state = AdamState::zeros_like(p);
  adam_step(p, state, 0.01, AdamHyper{});
  EXPECT_NEAR(p[0].value[0], 1.0 - 0.01, 1e-9);
  EXPECT_NEAR(p[0].value[1], -2.0 + 0.01, 1e-9);
  EXPECT_NEAR(p[0].value[2], 0.5 - 0.01, 1e-7);
}

TEST(Adam, ZeroGradientKeepsParamsAndDecaysMoments) {
  ModelParams p;
  p.add("w", Tensor::row({1.0, 2.0}));
  auto state = AdamState::zeros_like(p);
  p[0].grad = Tensor::row({1.0, 1.0});
  adam_step(p, state, 0.1, AdamHyper{});
  const Tensor after = p[0].value;
  const double m = state.m[0][0], v = state.v[0][0];
  p[0].grad = Tensor::zeros({1, 2});
  adam_step(p, state, 0.1, AdamHyper{});
  EXPECT_EQ(state.m[0][0], 0.5 * m);
  EXPECT_EQ(state.v[0][0], 0.9 * v);
  EXPECT_LT(max_abs_diff(p[0].value, after), 0.1 * 1.01);
}

TEST(Adam, DecreasesConvexQuadratic) {
  ModelParams p;
  p.add("w", Tensor::row({2.0, -3.0, 1.5}));
  auto state = AdamState::zeros_like(p);
  double prev = sum_sq(p[0].value);
  for (int k = 0; k < 100; ++k) {
    p[0].grad = scale(p[0].value, 2.0);
    adam_step(p, state, 0.01, AdamHyper{});
    const double loss = sum_sq(p[0].value);
    if (k >= 5) ASSERT_LT(loss, prev) << "step " << k;
    prev = loss;
  }
}

TEST(Adam, RejectsMismatchedState) {
  ModelParams p;
  p.add("w", Tensor::row({1.0}));
  AdamState empty;
  EXPECT_THROW(adam_step(p, empty, 0.1, AdamHyper{}), std::invalid_argument);
}

TEST(Schedule, Endpoints) {
  EXPECT_EQ(lr_schedule(0, 2e-4, 100, 1000), 0.0);
  EXPECT_EQ(lr_schedule(100, 2e-4, 100, 1000), 2e-4);
  EXPECT_EQ(lr_schedule(1000, 2e-4, 100, 1000), 0.0);
  EXPECT_NEAR(lr_schedule(550, 2e-4, 100, 1000), 1e-4, 1e-15);
  double prev = 1.0;
  for (std::uint64_t s = 100; s <= 1000; s += 50) {
    const double lr = lr_schedule(s, 1.0, 100, 1000);
    EXPECT_LE(lr, prev);
    prev = lr;
  }
}

TEST(Schedule, ClipGradNorm) {
  ModelParams p;
  p.add("a", Tensor::row({0.0, 0.0}));
  p[0].grad = Tensor::row({3.0, 4.0});
  EXPECT_EQ(clip_grad_norm(p, 1.0), 5.0);
  EXPECT_NEAR(std::sqrt(sum_sq(p[0].grad)), 1.0, 1e-15);
}

TEST(Checkpoint, RoundTrip) {
  const auto cfg = tiny_patches();
  const auto data = build_dataset(cfg.data);
  TrainHooks hooks;
  hooks.stop_after = 3;
  const auto res = train(initial_checkpoint(cfg), data, hooks);
  const auto dir = temp_dir("ckpt");
  save_checkpoint(dir / "c.mvft", res.state);
  const auto back = load_checkpoint(dir / "c.mvft");
  EXPECT_EQ(back.step, 3u);
  EXPECT_TRUE(back.params.bitwise_equal(res.state.params));
  EXPECT_EQ(back.rng_state, res.state.rng_state);
  EXPECT_EQ(back.order, res.state.order);
  EXPECT_EQ(back.digest, config_digest(cfg));
  ASSERT_EQ(back.adam.m.size(), res.state.adam.m.size());
  for (std::size_t i = 0; i < back.adam.m.size(); ++i) {
    EXPECT_TRUE(back.adam.m[i].bitwise_equal(res.state.adam.m[i]));
    EXPECT_TRUE(back.adam.v[i].bitwise_equal(res.state.adam.v[i]));
  }
}

TEST(Checkpoint, RefusesDifferentConfig) {
  const auto cfg = tiny_gaussian();
  const auto ckpt = initial_checkpoint(cfg);
  auto other = cfg;
  apply_override(other, "train.lr=0.5");
  EXPECT_THROW(check_resume_compatible(ckpt, other), std::runtime_error);
  EXPECT_NO_THROW(check_resume_compatible(ckpt, cfg));
}

TEST(Checkpoint, RejectsForeignFile) {
  TensorFile f;
  f.set_meta("format", "something-else");
  EXPECT_THROW(Checkpoint::from_file(f), FormatError);
}

TEST(Train, IdenticalRunsGiveIdenticalMetrics) {
  const auto cfg = tiny_patches();
  const auto data = build_dataset(cfg.data);
  const auto a = train(initial_checkpoint(cfg), data);
  const auto b = train(initial_checkpoint(cfg), data);
  ASSERT_EQ(a.metrics.size(), cfg.total_steps());
  ASSERT_EQ(a.metrics.size(), b.metrics.size());
  for (std::size_t i = 0; i < a.metrics.size(); ++i)
    EXPECT_EQ(format_metrics_row(a.metrics[i]), format_metrics_row(b.metrics[i]));
  EXPECT_TRUE(a.state.params.bitwise_equal(b.state.params));
}

TEST(Train, ResumeMatchesUninterrupted) {
  const auto cfg = tiny_gaussian();
  const auto data = build_dataset(cfg.data);
  const auto full = train(initial_checkpoint(cfg), data);
  TrainHooks hooks;
  hooks.stop_after = 13;
  const auto first = train(initial_checkpoint(cfg), data, hooks);
  EXPECT_FALSE(first.completed);
  const auto dir = temp_dir("resume");
  save_checkpoint(dir / "mid.mvft", first.state);
  const auto second = train(load_checkpoint(dir / "mid.mvft"), data);
  EXPECT_TRUE(second.completed);
  EXPECT_TRUE(second.state.params.bitwise_equal(full.state.params));
  ASSERT_EQ(first.metrics.size() + second.metrics.size(), full.metrics.size());
  for (std::size_t i = 0; i < second.metrics.size(); ++i)
    EXPECT_EQ(format_metrics_row(second.metrics[i]), format_metrics_row(full.metrics[13 + i]));
}

TEST(Train, CollapsedTimesReduceToFlowMatching) {
  auto cfg = tiny_gaussian();
  apply_override(cfg, "train.r_equals_t_prob=1");
  cfg.resolve();
  const auto data = build_dataset(cfg.data);
  const auto res = train(initial_checkpoint(cfg), data, TrainHooks{.stop_after = 5});
  for (const auto& row : res.metrics) {
    EXPECT_EQ(row.l_zerorec, 0.0);
    EXPECT_EQ(row.l_total, row.l_mf);
  }

  const auto params = mvf::testing::random_params(cfg.net, 3);
  Rng rng(4);
  const auto batch = mvf::testing::random_batch(cfg.net, 16, rng, 1.0);
  const BoundParams bound(params, false);
  const auto pred = u_theta(cfg.net, bound,
                            {ad::Var::constant(batch.z), ad::Var::constant(time_column(batch.r)),
                             ad::Var::constant(time_column(batch.t)), ad::Var::constant(time_column(batch.t_prime)),
                             batch.s, batch.c});
  EXPECT_EQ(meanflow_loss(cfg.net, bound, batch).loss.value().item(), cfm_loss(pred, batch.v).value().item());
}

TEST(Train, LossDecreasesOnGaussianTask) {
  auto cfg = tiny_gaussian();
  apply_override(cfg, "train.epochs=40");
  cfg.resolve();
  const auto data = build_dataset(cfg.data);
  const auto res = train(initial_checkpoint(cfg), data);
  double head = 0.0, tail = 0.0;
  for (std::size_t i = 0; i < 40; ++i) head += res.metrics[i].l_mf;
  for (std::size_t i = res.metrics.size() - 40; i < res.metrics.size(); ++i) tail += res.metrics[i].l_mf;
  EXPECT_LT(tail, head);
}

TEST(Train, MetricsCsvFormat) {
  EXPECT_EQ(metrics_header(), "step,lr,l_mf,l_zerorec,l_total,wall_ms");
  const MetricsRow row{7, 0.5, 0.25, 0.0, 0.25, 0.0};
  EXPECT_EQ(format_metrics_row(row), "7,0.5,0.25,0,0.25,0");
}
