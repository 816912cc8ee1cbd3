#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "alttrack/metrics.hpp"
#include "oracles.hpp"

using namespace alttrack;
using namespace oracle;

TEST(MatchFrame, IdenticalAndEmpty) {
  const std::vector<GtBox> g{{0, at(0, 0)}, {1, at(5, 5)}};
  const std::vector<PredBox> p{{7, at(0, 0), 1}, {8, at(5, 5), 1}};
  const auto m = match_frame(p, g, 2.0);
  EXPECT_EQ(m.pairs.size(), 2u);
  EXPECT_EQ(m.fp, 0u);
  EXPECT_EQ(m.fn, 0u);
  const auto e = match_frame({}, g, 2.0);
  EXPECT_EQ(e.fn, 2u);
}

TEST(MatchFrame, ContinuityPreventsSwapOnCrossing) {
  GtFrames gts{{{0, at(0, 0)}, {1, at(3, 0)}}, {{0, at(1.6, 0)}, {1, at(1.4, 0)}}};
  PredFrames preds{{{1, at(0, 0), 1}, {2, at(3, 0), 1}}, {{1, at(1.45, 0), 1}, {2, at(1.55, 0), 1}}};
  const auto c = clear_mot(preds, gts, 2.0);
  EXPECT_EQ(c.ids, 0u);
  EXPECT_EQ(c.tp, 4u);
  // Without the continuity rule the nearest pairing would swap both identities.
  const auto greedy = match_frame(preds[1], gts[1], 2.0);
  EXPECT_EQ(greedy.pairs[0], (std::pair<std::size_t, std::size_t>{0, 1}));
}

TEST(ClearMot, PerfectTrackingAndNoPredictions) {
  GtFrames gts;
  PredFrames preds, none;
  for (int f = 0; f < 5; ++f) {
    gts.push_back({{0, at(f, 0)}, {1, at(f, 8)}});
    preds.push_back({{3, at(f, 0), 1}, {4, at(f, 8), 1}});
    none.push_back({});
  }
  const auto c = clear_mot(preds, gts, 2.0);
  EXPECT_EQ(c.mota(), 1.0);
  EXPECT_EQ(c.ids, 0u);
  const auto z = clear_mot(none, gts, 2.0);
  EXPECT_EQ(z.fn, 10u);
  EXPECT_EQ(z.mota(), 0.0);
}

TEST(ClearMot, SingleSwapHandCount) {
  GtFrames gts;
  PredFrames preds;
  for (int f = 0; f < 4; ++f) {
    gts.push_back({{0, at(f, 0)}});
    preds.push_back({{f < 2 ? 1 : 2, at(f, 0), 1}});
  }
  const auto c = clear_mot(preds, gts, 2.0);
  EXPECT_EQ(c.ids, 1u);
  EXPECT_EQ(c.fp, 0u);
  EXPECT_EQ(c.fn, 0u);
  EXPECT_DOUBLE_EQ(c.mota(), 0.75);
}

TEST(ClearMot, MatchesReferenceOnRandomMicroScenarios) {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 300; ++t) {
    const auto m = random_micro(rng);
    for (double cutoff : {0.0, 0.25, 0.5, 0.9}) {
      const auto c = clear_mot(m.preds, m.gts, 2.0, cutoff);
      const auto r = reference_clear_mot(m.preds, m.gts, 2.0, cutoff);
      ASSERT_EQ(long(c.tp), r.tp);
      ASSERT_EQ(long(c.fp), r.fp);
      ASSERT_EQ(long(c.fn), r.fn);
      ASSERT_EQ(long(c.ids), r.ids);
      ASSERT_EQ(long(c.tp + c.fn), r.gt);
    }
  }
}

TEST(Amota, PerfectAndEmpty) {
  GtFrames gts;
  PredFrames preds, none;
  for (int f = 0; f < 3; ++f) {
    gts.push_back({{0, at(f, 0)}, {1, at(0, f + 5)}});
    preds.push_back({{0, at(f, 0), 1.0}, {1, at(0, f + 5), 1.0}});
    none.push_back({});
  }
  const auto r = evaluate(preds, gts);
  EXPECT_DOUBLE_EQ(r.amota, 1.0);
  EXPECT_DOUBLE_EQ(r.amotp, 0.0);
  EXPECT_DOUBLE_EQ(r.mota, 1.0);
  const auto e = evaluate(none, gts);
  EXPECT_EQ(e.amota, 0.0);
  EXPECT_EQ(e.fn, 6u);
}

TEST(Amota, ToyCaseMatchesExhaustiveSweep) {
  GtFrames gts{{{0, at(0, 0)}, {1, at(10, 0)}}, {{0, at(1, 0)}, {1, at(10, 1)}}, {{0, at(2, 0)}, {1, at(10, 2)}}};
  PredFrames preds{{{5, at(0.2, 0), 0.9}, {6, at(10, 0.5), 0.4}, {7, at(-8, -8), 0.6}},
                   {{5, at(1.1, 0), 0.8}, {6, at(10.3, 1), 0.3}},
                   {{8, at(2, 0.4), 0.7}, {6, at(9.5, 2), 0.5}, {9, at(20, 20), 0.2}}};
  const auto r = evaluate(preds, gts);
  const auto [a, p] = reference_amota(preds, gts, 2.0, 40, 0.1);
  EXPECT_NEAR(r.amota, a, 1e-12);
  EXPECT_NEAR(r.amotp, p, 1e-12);
}

TEST(Amota, MatchesReferenceOnRandomMicroScenarios) {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 60; ++t) {
    const auto m = random_micro(rng);
    const auto r = evaluate(m.preds, m.gts);
    const auto [a, p] = reference_amota(m.preds, m.gts, 2.0, 40, 0.1);
    EXPECT_NEAR(r.amota, a, 1e-12);
    EXPECT_NEAR(r.amotp, p, 1e-12);
    EXPECT_GE(r.amota, 0.0);
    EXPECT_LE(r.amota, 1.0);
    EXPECT_GE(r.recall, 0.0);
    EXPECT_LE(r.recall, 1.0);
    EXPECT_GE(r.amotp, 0.0);
  }
}

TEST(Amota, FarFalsePositivesNeverHelp) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> sc(0, 1);
  for (int t = 0; t < 40; ++t) {
    auto m = random_micro(rng);
    const double before = evaluate(m.preds, m.gts).amota;
    for (auto& f : m.preds) f.push_back({500 + t, at(100, 100), sc(rng)});
    EXPECT_LE(evaluate(m.preds, m.gts).amota, before + 1e-15);
  }
}

TEST(Report, RoundTripsValues) {
  GtFrames gts{{{0, at(0, 0)}}, {{0, at(1, 0)}}};
  PredFrames preds{{{1, at(0.5, 0), 0.8}}, {{1, at(1, 0), 0.6}}};
  const auto r = evaluate(preds, gts);
  std::stringstream ss;
  write_report(ss, r, "config x=1");
  const auto v = read_report_values(ss);
  EXPECT_EQ(v.at("amota"), r.amota);
  EXPECT_EQ(v.at("amotp"), r.amotp);
  EXPECT_EQ(v.at("ids"), double(r.ids));
  EXPECT_EQ(v.at("tp"), double(r.tp));
}
