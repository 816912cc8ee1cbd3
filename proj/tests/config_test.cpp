#include <gtest/gtest.h>

#include "alttrack/config.hpp"

using namespace alttrack;

namespace {

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(Config, DefaultsValidate) { EXPECT_NO_THROW(RunConfig{}.validate()); }

TEST(Config, TextRoundTrip) {
  RunConfig c;
  c.model.d_k = 16;
  c.scenario.obs_dim = 16;
  c.model.aux_token = true;
  c.model.pos_encoding = PosEncoding::center;
  c.tracker.tau_s = 0.125;
  c.train.optimizer.lr = 1.0 / 3.0;
  c.scenario.occlusion_prob = 0.4;
  c.output_dir = "runs/a";
  const auto text = to_text(c);
  const auto back = parse_run_config(text);
  EXPECT_EQ(to_text(back), text);
  EXPECT_EQ(back.model.d_k, 16u);
  EXPECT_TRUE(back.model.aux_token);
  EXPECT_EQ(back.model.pos_encoding, PosEncoding::center);
  EXPECT_EQ(back.train.optimizer.lr, 1.0 / 3.0);
  EXPECT_EQ(back.scenario, c.scenario);
  EXPECT_EQ(back.output_dir, "runs/a");
}

TEST(Config, SectionsCommentsAndBlankLines) {
  const auto c = parse_run_config(
      "# comment\n\n[model]\nd_k = 8\n  layers=2  \n[scenario]\nobs_dim = 8\nseed = 42\n[run]\nab_seeds = 3\n");
  EXPECT_EQ(c.model.d_k, 8u);
  EXPECT_EQ(c.model.num_layers, 2u);
  EXPECT_EQ(c.scenario.obs_dim, 8u);
  EXPECT_EQ(c.scenario.seed, 42u);
  EXPECT_EQ(c.ab_seeds, 3u);
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, ParsesOnTopOfBase) {
  RunConfig base;
  base.train.steps = 7;
  const auto c = parse_run_config("[tracker]\ntau_s = 0.2\n", base);
  EXPECT_EQ(c.train.steps, 7u);
  EXPECT_EQ(c.tracker.tau_s, 0.2);
}

TEST(Config, ErrorsNameLineAndKey) {
  EXPECT_NE(error_of([] { parse_run_config("[model]\nd_k = 8\nwidth = 3\n"); }).find("line 3"), std::string::npos);
  EXPECT_NE(error_of([] { parse_run_config("[model]\nwidth = 3\n"); }).find("model.width"), std::string::npos);
  EXPECT_NE(error_of([] { parse_run_config("[model]\nd_k = eight\n"); }).find("model.d_k"), std::string::npos);
  EXPECT_NE(error_of([] { parse_run_config("[nope]\n"); }).find("unknown section"), std::string::npos);
  EXPECT_NE(error_of([] { parse_run_config("[model\n"); }).find("line 1"), std::string::npos);
  EXPECT_NE(error_of([] { parse_run_config("[model]\nd_k\n"); }).find("key = value"), std::string::npos);
  EXPECT_NE(error_of([] { parse_run_config("[model]\naux_token = maybe\n"); }).find("true or false"), std::string::npos);
  EXPECT_NE(error_of([] { parse_run_config("[model]\npos_encoding = polar\n"); }).find("pos_encoding"), std::string::npos);
  EXPECT_NE(error_of([] { parse_run_config("[optimizer]\nlr = nan\n"); }).find("optimizer.lr"), std::string::npos);
  EXPECT_NE(error_of([] { parse_run_config("[scenario]\nframes = -1\n"); }).find("scenario.frames"), std::string::npos);
}

TEST(Config, Overrides) {
  RunConfig c;
  apply_override(c, "tracker.tau_s=0.05");
  apply_override(c, "model.edge_iteration = false");
  apply_override(c, "scenario.seed=77");
  EXPECT_EQ(c.tracker.tau_s, 0.05);
  EXPECT_FALSE(c.model.edge_iteration);
  EXPECT_EQ(c.scenario.seed, 77u);
  EXPECT_THROW(apply_override(c, "tau_s=0.1"), ConfigError);
  EXPECT_THROW(apply_override(c, "tracker.tau_s"), ConfigError);
  EXPECT_THROW(apply_override(c, "tracker.bogus=1"), ConfigError);
}

TEST(Config, TrackWeightFeedsTrainingAndTracking) {
  RunConfig c;
  apply_override(c, "tracker.w_t=0.5");
  EXPECT_EQ(c.tracker.w_t, 0.5);
  EXPECT_EQ(c.train.w_t, 0.5);
}

TEST(Config, ValidateRejectsInconsistentValues) {
  RunConfig c;
  c.scenario.obs_dim = c.model.d_k + 1;
  EXPECT_NE(error_of([&] { c.validate(); }).find("obs_dim"), std::string::npos);
  c = RunConfig{};
  c.train.seq_len = c.scenario.frames + 1;
  EXPECT_NE(error_of([&] { c.validate(); }).find("seq_len"), std::string::npos);
  c = RunConfig{};
  c.tracker.tau_s = 1.5;
  EXPECT_NE(error_of([&] { c.validate(); }).find("tau_s"), std::string::npos);
  c = RunConfig{};
  c.scenario.sigma_pos = -1;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, HashIsFnv1aOfCanonicalText) {
  EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a("foobar"), 0x85944171f73967e8ULL);
  RunConfig a, b;
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a), fnv1a(to_text(a)));
  b.scenario.seed = 2;
  EXPECT_NE(config_hash(a), config_hash(b));
  EXPECT_EQ(hex64(0xabcULL), "0000000000000abc");
}
