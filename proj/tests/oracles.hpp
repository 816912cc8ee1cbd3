#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <vector>

#include "alttrack/metrics.hpp"
#include "alttrack/tracker.hpp"

namespace oracle {

using namespace alttrack;

inline BoxState at(double x, double y) { return BoxState({x, y, 0}, {4, 2, 1.5}, 0, {0, 0}); }

// Reference CLEAR-MOT written as plain nested scans.
struct RefCounts {
  long tp = 0, fp = 0, fn = 0, ids = 0, gt = 0;
  double dist = 0;
};

inline RefCounts reference_clear_mot(const PredFrames& preds, const GtFrames& gts, double thr, double cutoff) {
  RefCounts c;
  std::map<int, int> last;
  for (std::size_t f = 0; f < gts.size(); ++f) {
    std::vector<PredBox> ps;
    for (const auto& p : preds[f])
      if (p.score >= cutoff) ps.push_back(p);
    const auto& gs = gts[f];
    std::vector<int> gt_to(gs.size(), -1), pred_to(ps.size(), -1);
    std::vector<double> gd(gs.size(), 0);
    for (std::size_t g = 0; g < gs.size(); ++g) {
      if (!last.count(gs[g].id)) continue;
      for (std::size_t p = 0; p < ps.size(); ++p) {
        if (pred_to[p] == -1 && ps[p].track_id == last[gs[g].id]) {
          const double d = std::hypot(std::hypot(gs[g].box.center()[0] - ps[p].box.center()[0],
                                                 gs[g].box.center()[1] - ps[p].box.center()[1]),
                                      gs[g].box.center()[2] - ps[p].box.center()[2]);
          if (d <= thr) {
            gt_to[g] = int(p);
            pred_to[p] = int(g);
            gd[g] = d;
          }
          break;
        }
      }
    }
    while (true) {
      double best = INFINITY;
      int bg = -1, bp = -1;
      for (std::size_t g = 0; g < gs.size(); ++g) {
        if (gt_to[g] != -1) continue;
        for (std::size_t p = 0; p < ps.size(); ++p) {
          if (pred_to[p] != -1) continue;
          const double d = center_distance(gs[g].box, ps[p].box);
          if (d <= thr && d < best) {
            best = d;
            bg = int(g);
            bp = int(p);
          }
        }
      }
      if (bg < 0) break;
      gt_to[bg] = bp;
      pred_to[bp] = bg;
      gd[bg] = best;
    }
    c.gt += long(gs.size());
    for (std::size_t g = 0; g < gs.size(); ++g) {
      if (gt_to[g] == -1) {
        ++c.fn;
        continue;
      }
      ++c.tp;
      c.dist += gd[g];
      const int tid = ps[gt_to[g]].track_id;
      if (last.count(gs[g].id) && last[gs[g].id] != tid) ++c.ids;
      last[gs[g].id] = tid;
    }
    for (int v : pred_to) c.fp += v == -1;
  }
  return c;
}

// Reference AMOTA: for each grid recall, scan every cutoff from high to low.
inline std::pair<double, double> reference_amota(const PredFrames& preds, const GtFrames& gts, double thr, int grid,
                                          double min_recall) {
  std::vector<double> cut;
  for (const auto& f : preds)
    for (const auto& p : f) cut.push_back(p.score);
  std::sort(cut.rbegin(), cut.rend());
  double gt = 0;
  for (const auto& f : gts) gt += double(f.size());
  double s = 0, sp = 0;
  int n = 0;
  for (int k = 1; k <= grid; ++k) {
    const double r = double(k) / grid;
    if (r < min_recall) continue;
    ++n;
    double motar = 0, motp = thr;
    for (double c : cut) {
      const auto rc = reference_clear_mot(preds, gts, thr, c);
      if (gt > 0 && double(rc.tp) / gt >= r) {
        motar = std::min(1.0, std::max(0.0, 1.0 - (double(rc.ids + rc.fp + rc.fn) - (1 - r) * gt) / (r * gt)));
        motp = rc.tp ? rc.dist / double(rc.tp) : 0.0;
        break;
      }
    }
    s += motar;
    sp += motp;
  }
  return {s / n, sp / n};
}

struct Micro {
  PredFrames preds;
  GtFrames gts;
};

inline Micro random_micro(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> nobj(1, 4), nfr(1, 6);
  std::uniform_real_distribution<double> pos(-6, 6), jit(-1.5, 1.5), sc(0, 1);
  std::bernoulli_distribution present(0.8), swap(0.2), extra(0.3), coarse(0.5);
  Micro m;
  const int n = nobj(rng), frames = nfr(rng);
  std::vector<std::pair<double, double>> xy(n);
  for (auto& p : xy) p = {pos(rng), pos(rng)};
  const bool discrete = coarse(rng);
  for (int f = 0; f < frames; ++f) {
    std::vector<GtBox> g;
    std::vector<PredBox> p;
    for (int i = 0; i < n; ++i) {
      xy[i].first += 0.5;
      if (present(rng)) g.push_back({i, at(xy[i].first, xy[i].second)});
      if (present(rng)) {
        const int tid = swap(rng) ? (i + 1) % n + 10 : i + 10;
        const double score = discrete ? std::round(sc(rng) * 4) / 4 : sc(rng);
        p.push_back({tid, at(xy[i].first + jit(rng), xy[i].second + jit(rng)), score});
      }
    }
    if (extra(rng)) p.push_back({99, at(pos(rng), pos(rng)), sc(rng)});
    m.gts.push_back(g);
    m.preds.push_back(p);
  }
  return m;
}

inline double brute_force_min(const std::vector<std::vector<double>>& c) {
  const std::size_t n = c.size(), m = c[0].size();
  double best = INFINITY;
  if (n <= m) {
    std::vector<std::size_t> cols(m);
    std::iota(cols.begin(), cols.end(), 0);
    do {
      double s = 0;
      for (std::size_t i = 0; i < n; ++i) s += c[i][cols[i]];
      best = std::min(best, s);
    } while (std::next_permutation(cols.begin(), cols.end()));
  } else {
    std::vector<std::size_t> rows(n);
    std::iota(rows.begin(), rows.end(), 0);
    do {
      double s = 0;
      for (std::size_t j = 0; j < m; ++j) s += c[rows[j]][j];
      best = std::min(best, s);
    } while (std::next_permutation(rows.begin(), rows.end()));
  }
  return best;
}

inline double total(const std::vector<std::vector<double>>& c, const std::vector<std::pair<std::size_t, std::size_t>>& a) {
  double s = 0;
  for (auto [i, j] : a) s += c[i][j];
  return s;
}

inline bool is_partition(const AssociationResult& r, std::size_t n_tracks, std::size_t n_dets) {
  std::vector<int> t(n_tracks, 0), d(n_dets, 0);
  for (auto [i, j] : r.matches) {
    if (i >= n_tracks || j >= n_dets) return false;
    ++t[i];
    ++d[j];
  }
  for (auto i : r.unmatched_tracks) {
    if (i >= n_tracks) return false;
    ++t[i];
  }
  for (auto j : r.unmatched_dets) {
    if (j >= n_dets) return false;
    ++d[j];
  }
  return std::all_of(t.begin(), t.end(), [](int v) { return v == 1; }) &&
         std::all_of(d.begin(), d.end(), [](int v) { return v == 1; });
}

}  // namespace oracle
