#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "alttrack/pipeline.hpp"

using namespace alttrack;

namespace {

RunConfig tiny() {
  RunConfig c;
  c.model.d_k = 8;
  c.model.num_layers = 2;
  c.model.num_det_queries = 8;
  c.model.ref_extent = 10;
  c.scenario.obs_dim = 8;
  c.scenario.arena = 10;
  c.scenario.frames = 4;
  c.train.steps = 3;
  c.train.seq_len = 2;
  c.train_scenarios = 2;
  c.heldout_frames = 5;
  c.validate();
  return c;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("alttrack_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Results perfect(const Scenario& s) {
  Results r;
  for (const auto& frame : scenario_ground_truth(s)) {
    std::vector<PredBox> preds;
    for (const auto& g : frame) preds.push_back({g.id, g.box, 0.9});
    r.frames.push_back(preds);
  }
  return r;
}

}  // namespace

TEST(Pipeline, TrainingSetUsesConsecutiveSeeds) {
  const auto c = tiny();
  const auto data = training_set(c);
  ASSERT_EQ(data.size(), 2u);
  EXPECT_EQ(data[0].config.seed, c.scenario.seed);
  EXPECT_EQ(data[1].config.seed, c.scenario.seed + 1);
  const auto h = heldout_scenario(c);
  EXPECT_EQ(h.config.seed, c.heldout_seed);
  EXPECT_EQ(h.frames.size(), c.heldout_frames);
}

TEST(Pipeline, GroundTruthKeepsObservedObjectsOnly) {
  auto c = tiny();
  c.scenario.occlusion_prob = 0.6;
  c.scenario.occlusion_length = 3;
  const auto s = heldout_scenario(c);
  const auto gt = scenario_ground_truth(s);
  ASSERT_EQ(gt.size(), s.frames.size());
  std::size_t hidden = 0;
  for (std::size_t f = 0; f < s.frames.size(); ++f) {
    for (const auto& g : gt[f]) {
      bool seen = false;
      for (const auto& t : s.frames[f].tokens) seen = seen || t.source == g.id;
      EXPECT_TRUE(seen);
    }
    hidden += s.frames[f].objects.size() - gt[f].size();
  }
  EXPECT_GT(hidden, 0u);
}

TEST(Pipeline, ResultsRoundTripExactly) {
  const auto s = heldout_scenario(tiny());
  auto r = perfect(s);
  r.config_text = to_text(tiny());
  r.frames[1].push_back({99, BoxState({0.1, 1.0 / 3.0, -2}, {1, 2, 3}, 0.7, {0.25, -1e-9}), 1.0 / 7.0});
  std::stringstream ss;
  write_results(ss, r);
  const auto back = read_results(ss);
  EXPECT_EQ(back.config_text, r.config_text);
  ASSERT_EQ(back.frames.size(), r.frames.size());
  for (std::size_t f = 0; f < r.frames.size(); ++f) {
    ASSERT_EQ(back.frames[f].size(), r.frames[f].size());
    for (std::size_t i = 0; i < r.frames[f].size(); ++i) {
      EXPECT_EQ(back.frames[f][i].track_id, r.frames[f][i].track_id);
      EXPECT_EQ(back.frames[f][i].score, r.frames[f][i].score);
      EXPECT_EQ(back.frames[f][i].box.to_vector(), r.frames[f][i].box.to_vector());
    }
  }
  std::stringstream again;
  write_results(again, back);
  std::stringstream first;
  write_results(first, r);
  EXPECT_EQ(again.str(), first.str());
}

TEST(Pipeline, MalformedResultsAreRejected) {
  auto parse = [](const std::string& text) {
    std::istringstream is(text);
    return read_results(is);
  };
  EXPECT_THROW(parse(""), std::runtime_error);
  EXPECT_THROW(parse("0 1 0 0 0 1 1 1 0 0 0 0.5\n"), std::runtime_error);
  EXPECT_THROW(parse("frames=1\n0 1 0 0 0 1 1 1 0 0 0\n"), std::runtime_error);
  EXPECT_THROW(parse("frames=1\n1 1 0 0 0 1 1 1 0 0 0 0.5\n"), std::runtime_error);
  EXPECT_THROW(parse("frames=1\n0 1 0 0 0 1 1 1 0 0 0 0.5 x\n"), std::runtime_error);
  EXPECT_THROW(parse("frames=1\n0 1 0 0 0 -1 1 1 0 0 0 0.5\n"), std::exception);
  EXPECT_EQ(parse("frames=3\n").frames.size(), 3u);
}

TEST(Pipeline, PerfectResultsScoreOneAndEmptyScoresZero) {
  const auto s = heldout_scenario(tiny());
  const auto good = evaluate_results(perfect(s), s);
  EXPECT_DOUBLE_EQ(good.amota, 1.0);
  EXPECT_EQ(good.ids, 0u);
  Results empty;
  empty.frames.resize(s.frames.size());
  const auto none = evaluate_results(empty, s);
  EXPECT_DOUBLE_EQ(none.amota, 0.0);
  EXPECT_EQ(none.fn, none.gt);
}

TEST(Pipeline, EvaluationRequiresMatchingFrameCount) {
  const auto s = heldout_scenario(tiny());
  Results r;
  r.frames.resize(s.frames.size() + 1);
  EXPECT_THROW(evaluate_results(r, s), std::runtime_error);
}

TEST(Pipeline, EvaluationEqualsDirectMetricCall) {
  const auto c = tiny();
  const auto data = training_set(c);
  const auto model = train_model(c, data);
  const auto s = heldout_scenario(c);
  Results r{to_text(c), track_scenario(model, c.tracker, s)};
  const auto via_file = evaluate_results(r, s);
  const auto direct = evaluate(r.frames, scenario_ground_truth(s));
  EXPECT_EQ(via_file.amota, direct.amota);
  EXPECT_EQ(via_file.ids, direct.ids);
  EXPECT_EQ(via_file.fp, direct.fp);
}

TEST(Pipeline, TrainingIsReproducibleAndLogged) {
  const auto c = tiny();
  const auto data = training_set(c);
  std::vector<StepReport> log_a, log_b;
  const auto a = train_model(c, data, &log_a);
  const auto b = train_model(c, data, &log_b);
  ASSERT_EQ(log_a.size(), c.train.steps);
  for (std::size_t i = 0; i < log_a.size(); ++i) EXPECT_EQ(log_a[i].total, log_b[i].total);
  for (const auto& n : a.params.names()) EXPECT_TRUE(std::ranges::equal(a.params.value(n).data(), b.params.value(n).data())) << n;
}

TEST(Pipeline, ModelCheckpointRestoresParametersAndConfig) {
  auto c = tiny();
  c.model.aux_token = true;
  const auto model = train_model(c, training_set(c));
  const auto dir = temp_dir("ckpt");
  save_model(dir / "model.ckpt", model, c);
  RunConfig back;
  const auto loaded = load_model(dir / "model.ckpt", &back);
  EXPECT_EQ(to_text(back), to_text(c));
  EXPECT_TRUE(loaded.config.aux_token);
  for (const auto& n : model.params.names()) EXPECT_TRUE(std::ranges::equal(loaded.params.value(n).data(), model.params.value(n).data())) << n;
  const auto s = heldout_scenario(c);
  std::stringstream x, y;
  write_results(x, {"", track_scenario(model, c.tracker, s)});
  write_results(y, {"", track_scenario(loaded, back.tracker, s)});
  EXPECT_EQ(x.str(), y.str());
}

TEST(Pipeline, CheckpointWithForeignShapesIsRejected) {
  auto c = tiny();
  const auto model = train_model(c, training_set(c));
  const auto dir = temp_dir("ckpt_bad");
  auto other = c;
  other.model.d_k = 16;
  other.scenario.obs_dim = 16;
  save_model(dir / "model.ckpt", model, other);
  EXPECT_THROW(load_model(dir / "model.ckpt"), std::runtime_error);
}

TEST(Pipeline, ManifestRecordsCommandHashAndFiles) {
  const auto c = tiny();
  const auto dir = temp_dir("manifest");
  write_manifest(dir, "train", "alttrack train", c, {"model.ckpt", "train_log.csv"});
  const auto text = slurp(dir / "train.manifest");
  EXPECT_NE(text.find("command: alttrack train\n"), std::string::npos);
  EXPECT_NE(text.find("config_hash: " + hex64(config_hash(c)) + "\n"), std::string::npos);
  EXPECT_NE(text.find("file: model.ckpt\n"), std::string::npos);
  EXPECT_NE(text.find("file: train_log.csv\n"), std::string::npos);
  EXPECT_NE(text.find(to_text(c)), std::string::npos);
}

TEST(Pipeline, AbReportAggregatesReplicas) {
  auto c = tiny();
  c.ab_seeds = 2;
  c.train.steps = 1;
  std::vector<std::string> lines;
  const auto rep = run_ab(c, [&](const std::string& l) { lines.push_back(l); });
  ASSERT_EQ(rep.replicas.size(), 2u);
  EXPECT_EQ(lines.size(), 4u);
  EXPECT_DOUBLE_EQ(rep.mean_amota_base, 0.5 * (rep.replicas[0].base.amota + rep.replicas[1].base.amota));
  EXPECT_DOUBLE_EQ(rep.median_ids_aux, 0.5 * (rep.replicas[0].aux.ids + rep.replicas[1].aux.ids));
  std::stringstream ss;
  write_ab_report(ss, rep);
  EXPECT_NE(ss.str().find("mean_amota_aux:"), std::string::npos);
  EXPECT_NE(ss.str().find("median_ids_base:"), std::string::npos);
}

TEST(Pipeline, GradientAuditCoversEveryBlockWithinTolerance) {
  const auto rows = gradient_audit();
  EXPECT_GE(rows.size(), 12u);
  for (const auto& r : rows) EXPECT_TRUE(r.passed()) << r.block << " " << r.max_rel_error << " tol " << r.tolerance;
}
