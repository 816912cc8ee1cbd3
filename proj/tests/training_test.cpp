#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "alttrack/gradcheck.hpp"
#include "alttrack/ops.hpp"
#include "alttrack/training.hpp"
#include "test_util.hpp"

using namespace alttrack;
using testutil::random_tensor;

namespace {

BoxState random_box(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-5, 5), s(0.5, 3), a(-3, 3);
  return BoxState({u(rng), u(rng), u(rng) * 0.1}, {s(rng), s(rng), s(rng)}, a(rng), {u(rng) * 0.2, u(rng) * 0.2});
}

Tensor boxes_matrix(const std::vector<BoxState>& boxes) {
  std::vector<double> v;
  for (const auto& b : boxes) {
    const auto a = b.to_vector();
    v.insert(v.end(), a.begin(), a.end());
  }
  return Tensor({boxes.size(), kBoxParams}, std::move(v));
}

double reference_focal(double p, bool positive, double alpha, double gamma) {
  return positive ? -alpha * std::pow(1 - p, gamma) * std::log(p) : -(1 - alpha) * std::pow(p, gamma) * std::log(1 - p);
}

double reference_cost(double logit, const BoxState& det, const BoxState& gt, const LossConfig& c) {
  const double p = 1 / (1 + std::exp(-logit));
  const double cls = reference_focal(p, true, c.cls_alpha, c.cls_gamma) - reference_focal(p, false, c.cls_alpha, c.cls_gamma);
  const auto a = det.to_vector(), b = gt.to_vector();
  double l1 = 0;
  for (std::size_t k = 0; k < kBoxParams; ++k) {
    double d = std::abs(a[k] - b[k]);
    if (k == kYawIndex) {
      d = std::fmod(d, 2 * std::numbers::pi);
      d = std::min(d, 2 * std::numbers::pi - d);
    }
    l1 += d;
  }
  return c.lambda_cls * cls + c.lambda_reg * l1;
}

ModelConfig tiny_model() {
  ModelConfig c;
  c.d_k = 8;
  c.num_layers = 2;
  c.num_det_queries = 6;
  c.ref_extent = 10;
  return c;
}

ScenarioConfig tiny_world(std::size_t d, std::uint64_t seed) {
  ScenarioConfig s;
  s.arena = 10;
  s.frames = 3;
  s.initial_objects = 3;
  s.birth_rate = 0;
  s.death_prob = 0;
  s.occlusion_prob = 0;
  s.clutter_rate = 0;
  s.obs_dim = d;
  s.seed = seed;
  return s;
}

}  // namespace

TEST(VisibleTargets, ExcludesObjectsWithoutTokens) {
  Scenario s;
  s.config.obs_dim = 2;
  ScenarioFrame f;
  f.pose = EgoPose({1, 2, 0}, 0.5);
  f.objects = {{4, BoxState({3, 0, 0}, {1, 1, 1}, 0, {0, 0})}, {9, BoxState({6, 1, 0}, {2, 1, 1}, 0, {0, 0})}};
  f.tokens = {{{0, 0, 0}, {0, 0}, 9}, {{1, 1, 0}, {0, 0}, -1}};
  s.frames.push_back(f);
  const auto t = visible_targets(s, 0);
  ASSERT_EQ(t.ids, std::vector<int>{9});
  const auto c = f.pose.from_world({6, 1, 0});
  EXPECT_NEAR(t.boxes[0].center()[0], c[0], 1e-12);
  EXPECT_NEAR(t.boxes[0].center()[1], c[1], 1e-12);
}

TEST(AssignTargets, SingleTrackSingleGt) {
  const FrameTargets gt{{5}, {BoxState({1, 0, 0}, {1, 1, 1}, 0, {0, 0})}};
  std::vector<BoxState> dets(4, BoxState({9, 9, 0}, {1, 1, 1}, 0, {0, 0}));
  dets[2] = BoxState({1.1, 0, 0}, {1, 1, 1}, 0, {0, 0});
  const std::vector<int> tracks{5};
  const auto t = assign_targets(tracks, Tensor::zeros({4, 1}), boxes_matrix(dets), gt, LossConfig{}, false);
  EXPECT_EQ(t.track_ids, std::vector<int>{5});
  EXPECT_EQ(t.det_ids, (std::vector<int>{-1, -1, 5, -1}));
  ASSERT_EQ(t.y.shape(), (std::vector<std::size_t>{4, 1}));
  EXPECT_EQ(std::accumulate(t.y.data().begin(), t.y.data().end(), 0.0), 1.0);
  EXPECT_EQ(t.y.at(2, 0), 1.0);
}

TEST(AssignTargets, IdentityGuidedTracksAndAuxColumn) {
  std::mt19937_64 rng(3);
  const FrameTargets gt{{3, 7}, {random_box(rng), random_box(rng)}};
  std::vector<BoxState> dets{gt.boxes[1], random_box(rng), gt.boxes[0]};
  const std::vector<int> tracks{7, 3, 9};
  const auto t = assign_targets(tracks, Tensor::zeros({3, 1}), boxes_matrix(dets), gt, LossConfig{}, true);
  EXPECT_EQ(t.track_ids, (std::vector<int>{7, 3, -1}));
  EXPECT_EQ(t.det_ids, (std::vector<int>{7, -1, 3}));
  const std::vector<double> expect{1, 0, 0, 0,  //
                                   0, 0, 0, 1,  //
                                   0, 1, 0, 0};
  EXPECT_EQ(std::vector<double>(t.y.data().begin(), t.y.data().end()), expect);
}

TEST(AssignTargets, NewObjectMatchesAuxNotTrack) {
  std::mt19937_64 rng(4);
  const FrameTargets gt{{1}, {random_box(rng)}};
  const std::vector<int> tracks{2};
  const auto t = assign_targets(tracks, Tensor::zeros({2, 1}), boxes_matrix({gt.boxes[0], random_box(rng)}), gt,
                                LossConfig{}, true);
  EXPECT_EQ(t.track_ids, std::vector<int>{-1});
  EXPECT_EQ(t.y.at(0, 1), 1.0);
  EXPECT_EQ(t.y.at(1, 1), 1.0);
  EXPECT_EQ(t.y.at(0, 0), 0.0);
}

TEST(AssignTargets, ThreeGtFiveDetsMatchesBruteForce) {
  std::mt19937_64 rng(5);
  const LossConfig cfg;
  for (int trial = 0; trial < 100; ++trial) {
    FrameTargets gt{{10, 11, 12}, {random_box(rng), random_box(rng), random_box(rng)}};
    std::vector<BoxState> dets;
    for (int j = 0; j < 5; ++j) dets.push_back(random_box(rng));
    const auto logits = random_tensor(rng, {5, 1}, -3, 3);
    const auto t = assign_targets({}, logits, boxes_matrix(dets), gt, cfg, false);

    double best = 1e300, got = 0;
    for (int a = 0; a < 5; ++a)
      for (int b = 0; b < 5; ++b)
        for (int c = 0; c < 5; ++c) {
          if (a == b || b == c || a == c) continue;
          const int pick[3] = {a, b, c};
          double s = 0;
          for (int g = 0; g < 3; ++g) s += reference_cost(logits.at(pick[g], 0), dets[pick[g]], gt.boxes[g], cfg);
          best = std::min(best, s);
        }
    int matched = 0;
    for (int j = 0; j < 5; ++j) {
      if (t.det_ids[j] < 0) continue;
      ++matched;
      got += reference_cost(logits.at(j, 0), dets[j], gt.boxes[t.det_ids[j] - 10], cfg);
    }
    EXPECT_EQ(matched, 3);
    EXPECT_NEAR(got, best, 1e-9);
  }
}

TEST(AssignTargets, TargetInvariantsHoldForRandomInputs) {
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<int> count(0, 5), id(0, 9);
  for (int trial = 0; trial < 300; ++trial) {
    FrameTargets gt;
    std::set<int> used;
    for (int g = count(rng); g > 0; --g) {
      const int i = id(rng);
      if (!used.insert(i).second) continue;
      gt.ids.push_back(i);
      gt.boxes.push_back(random_box(rng));
    }
    std::vector<int> tracks;
    std::set<int> track_used;
    for (int k = count(rng); k > 0; --k) {
      const int i = id(rng);
      if (track_used.insert(i).second) tracks.push_back(i);
    }
    const std::size_t n_det = 6;
    std::vector<BoxState> dets;
    for (std::size_t j = 0; j < n_det; ++j) dets.push_back(random_box(rng));
    const bool aux = trial % 2 == 0;
    const auto t = assign_targets(tracks, random_tensor(rng, {n_det, 1}), boxes_matrix(dets), gt, LossConfig{}, aux);

    std::multiset<int> det_ids, track_ids;
    for (int v : t.det_ids)
      if (v >= 0) det_ids.insert(v);
    for (int v : t.track_ids)
      if (v >= 0) track_ids.insert(v);
    EXPECT_EQ(det_ids.size(), std::min(gt.ids.size(), n_det));
    for (int v : gt.ids) {
      EXPECT_LE(det_ids.count(v), 1u);
      EXPECT_LE(track_ids.count(v), 1u);
    }
    const auto keys = tracks.size() + (aux ? 1 : 0);
    if (keys == 0) {
      EXPECT_TRUE(t.y.empty());
      continue;
    }
    for (std::size_t j = 0; j < n_det; ++j) {
      double row = 0;
      for (std::size_t i = 0; i < keys; ++i) row += t.y.at(j, i);
      if (aux) EXPECT_EQ(row, 1.0);
      else EXPECT_LE(row, 1.0);
    }
    for (std::size_t i = 0; i < tracks.size(); ++i) {
      double col = 0;
      for (std::size_t j = 0; j < n_det; ++j) col += t.y.at(j, i);
      EXPECT_EQ(col, t.track_ids[i] >= 0 && det_ids.count(t.track_ids[i]) ? 1.0 : 0.0);
    }
  }
}

TEST(AssignTargets, DuplicateGtIdsAreRejected) {
  std::mt19937_64 rng(7);
  const FrameTargets gt{{1, 1}, {random_box(rng), random_box(rng)}};
  EXPECT_THROW(assign_targets({}, Tensor::zeros({3, 1}), boxes_matrix({random_box(rng), random_box(rng), random_box(rng)}),
                              gt, LossConfig{}, false),
               ContractError);
}

TEST(AssociationLosses, UniformRowCrossEntropyIsLogFour) {
  const Tensor logits = Tensor::zeros({1, 4});
  const Tensor y = Tensor::matrix(1, 4, {0, 0, 0, 1});
  EXPECT_NEAR(ops::cross_entropy_rows(logits, y).item(), std::log(4.0), 1e-15);
}

TEST(AssociationLosses, CrossEntropyMatchesReference) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const auto logits = random_tensor(rng, {2, 3}, -4, 4);
    const Tensor y = Tensor::matrix(2, 3, {0, 1, 0, 0, 0, 1});
    double expect = 0;
    for (std::size_t i = 0; i < 2; ++i) {
      double z = 0;
      for (std::size_t j = 0; j < 3; ++j) z += std::exp(logits.at(i, j));
      for (std::size_t j = 0; j < 3; ++j) expect -= y.at(i, j) * std::log(std::exp(logits.at(i, j)) / z);
    }
    EXPECT_NEAR(ops::cross_entropy_rows(logits, y).item(), expect, 1e-12);
  }
}

TEST(AssociationLosses, FocalOverLogitsMatchesReference) {
  std::mt19937_64 rng(9);
  const auto logits = random_tensor(rng, {6, 1}, -3, 3);
  const std::vector<int> targets{1, 0, 0, 1, 0, 0};
  double expect = 0;
  for (std::size_t i = 0; i < 6; ++i) expect += reference_focal(1 / (1 + std::exp(-logits[i])), targets[i], 0.5, 1.0);
  EXPECT_NEAR(ops::focal_loss_logits(logits, targets, 0.5, 1.0, 0.25).item(), 0.25 * expect, 1e-12);
}

TEST(TotalLoss, SingleFrameHasOnlyDetectionTerms) {
  const auto model = Model::create(tiny_model());
  const auto s = generate_scenario(tiny_world(8, 11));
  TrainConfig cfg;
  Tape tape;
  const auto sl = sequence_loss(tape, model, s, 0, 1, cfg);
  double expect = 0;
  for (const auto& l : sl.terms[0]) {
    EXPECT_FALSE(l.cls_t.valid());
    EXPECT_FALSE(l.asso_fl.valid());
    expect += cfg.loss.lambda_cls * tape.value(l.cls_d).item() + cfg.loss.lambda_reg * tape.value(l.reg_d).item();
  }
  EXPECT_NEAR(tape.value(sl.total).item(), expect, 1e-12);
}

TEST(TotalLoss, HandAssembledSumAndZeroAssociationWeight) {
  const auto model = Model::create(tiny_model());
  const auto s = generate_scenario(tiny_world(8, 12));
  TrainConfig cfg;
  Tape tape;
  const auto sl = sequence_loss(tape, model, s, 0, 3, cfg);
  std::vector<std::vector<LossTerms>> terms;
  double hand = 0, no_asso = 0;
  const auto& c = cfg.loss;
  auto v = [&](Var x) { return x.valid() ? tape.value(x).item() : 0.0; };
  for (std::size_t t = 0; t < sl.terms.size(); ++t) {
    terms.emplace_back();
    for (const auto& l : sl.terms[t]) {
      const LossTerms lt{v(l.cls_d), v(l.reg_d), v(l.cls_t), v(l.reg_t), v(l.asso_fl), v(l.asso_ce)};
      terms.back().push_back(lt);
      const double det = c.lambda_cls * lt.cls_d + c.lambda_reg * lt.reg_d;
      const double trk = t == 0 ? 0 : c.lambda_cls * lt.cls_t + c.lambda_reg * lt.reg_t;
      const double asso = t == 0 ? 0 : c.lambda_asso * (lt.asso_fl + c.lambda_ce * lt.asso_ce);
      hand += det + trk + asso;
      no_asso += det + trk;
    }
  }
  EXPECT_GT(terms[1][0].asso_fl, 0.0);
  EXPECT_NEAR(tape.value(sl.total).item(), hand, 1e-10);
  EXPECT_NEAR(total_loss(terms, c), hand, 1e-10);
  auto zero = c;
  zero.lambda_asso = 0;
  EXPECT_NEAR(total_loss(terms, zero), no_asso, 1e-10);
  EXPECT_NEAR(tape.value(total_loss(tape, sl.terms, zero)).item(), no_asso, 1e-10);
}

TEST(TotalLoss, AuxTokenAddsCrossEntropy) {
  auto mc = tiny_model();
  mc.aux_token = true;
  const auto model = Model::create(mc);
  const auto s = generate_scenario(tiny_world(8, 13));
  Tape tape;
  const auto sl = sequence_loss(tape, model, s, 0, 2, TrainConfig{});
  ASSERT_TRUE(sl.terms[1][0].asso_ce.valid());
  EXPECT_GT(tape.value(sl.terms[1][0].asso_ce).item(), 0.0);
  EXPECT_FALSE(sl.terms[0][0].asso_ce.valid());
}

TEST(SequenceLoss, RejectsOutOfRangeWindow) {
  const auto model = Model::create(tiny_model());
  const auto s = generate_scenario(tiny_world(8, 14));
  Tape tape;
  EXPECT_THROW(sequence_loss(tape, model, s, 2, 2, TrainConfig{}), ContractError);
  EXPECT_THROW(sequence_loss(tape, model, s, 0, 0, TrainConfig{}), ContractError);
}

TEST(SequenceLoss, TwoFrameUnrollGradientCheck) {
  const auto mc = tiny_model();
  const auto base = Model::create(mc);
  const auto s = generate_scenario(tiny_world(8, 15));
  TrainConfig cfg;
  std::mt19937_64 rng(16);
  const auto names = base.params.names();
  std::vector<std::pair<std::string, std::size_t>> entries;
  while (entries.size() < 5) {
    const auto& n = names[std::uniform_int_distribution<std::size_t>(0, names.size() - 1)(rng)];
    if (n == "aux.embed") continue;
    const auto size = base.params.value(n).size();
    entries.emplace_back(n, std::uniform_int_distribution<std::size_t>(0, size - 1)(rng));
  }
  for (const char* n : {"layer1.asso.we1", "layer1.asso.we2", "affinity.0.w", "layer0.obs.wrel"}) {
    if (base.params.contains(n)) entries.emplace_back(n, 1);
  }
  const auto r = grad_check_params(
      [&](Tape& tape, const ParamStore& store) { return sequence_loss(tape, Model{mc, store}, s, 0, 2, cfg).total; },
      base.params, entries, 1e-6);
  EXPECT_TRUE(r.passed(1e-4)) << r.max_rel_error << " at " << r.location;
}

TEST(Training, ZeroLearningRateLeavesParameters) {
  auto model = Model::create(tiny_model());
  const auto before = model.params;
  const auto s = generate_scenario(tiny_world(8, 17));
  TrainConfig cfg;
  cfg.optimizer.lr = 0;
  cfg.steps = 3;
  train(model, {s}, cfg);
  EXPECT_EQ(model.params, before);
}

TEST(Training, FirstStepLossIsReproducible) {
  const auto s = generate_scenario(tiny_world(8, 18));
  TrainConfig cfg;
  cfg.steps = 2;
  auto a = Model::create(tiny_model()), b = Model::create(tiny_model());
  const auto ra = train(a, {s}, cfg), rb = train(b, {s}, cfg);
  EXPECT_EQ(ra[0].total, rb[0].total);
  EXPECT_EQ(ra[1].total, rb[1].total);
  EXPECT_EQ(a.params, b.params);
}

TEST(Training, LossHalvesOnFixedScenario) {
  ModelConfig mc;
  auto model = Model::create(mc);
  auto wc = tiny_world(mc.d_k, 19);
  wc.arena = 20;
  const auto s = generate_scenario(wc);
  TrainConfig cfg;
  cfg.steps = 200;
  const auto log = train(model, {s}, cfg);
  double tail = 0;
  for (std::size_t i = log.size() - 10; i < log.size(); ++i) tail += log[i].total / 10;
  EXPECT_LT(tail, 0.5 * log.front().total) << log.front().total << " -> " << tail;
}

TEST(Training, NonFiniteForwardIsDivergence) {
  auto model = Model::create(tiny_model());
  model.params.set("det.embed", Tensor::filled(model.params.value("det.embed").shape(), 1e200));
  const auto snapshot = model.params;
  const auto s = generate_scenario(tiny_world(8, 20));
  AdamW opt(AdamWConfig{});
  EXPECT_THROW(train_step(model, opt, s, 0, TrainConfig{}), DivergenceError);
  EXPECT_EQ(model.params, snapshot);
}
