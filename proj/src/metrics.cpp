#include "alttrack/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "alttrack/tensor.hpp"

namespace alttrack {
namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void EvalConfig::validate() const {
  if (!(threshold > 0)) throw ContractError("eval: threshold must be positive");
  if (grid_size < 2) throw ContractError("eval: grid_size must be at least 2");
  if (min_recall < 0 || min_recall > 1) throw ContractError("eval: min_recall must lie in [0, 1]");
}

FrameMatch match_frame(const std::vector<PredBox>& preds, const std::vector<GtBox>& gts, double threshold,
                       const std::map<int, int>& previous) {
  FrameMatch m;
  std::vector<char> gt_used(gts.size(), 0), pred_used(preds.size(), 0);
  auto take = [&](std::size_t g, std::size_t p, double d) {
    gt_used[g] = pred_used[p] = 1;
    m.pairs.emplace_back(g, p);
    m.distances.push_back(d);
  };
  for (std::size_t g = 0; g < gts.size(); ++g) {
    const auto it = previous.find(gts[g].id);
    if (it == previous.end()) continue;
    for (std::size_t p = 0; p < preds.size(); ++p) {
      if (pred_used[p] || preds[p].track_id != it->second) continue;
      const double d = center_distance(gts[g].box, preds[p].box);
      if (d <= threshold) take(g, p, d);
      break;
    }
  }
  struct Cand {
    double d;
    std::size_t g, p;
  };
  std::vector<Cand> cands;
  for (std::size_t g = 0; g < gts.size(); ++g) {
    if (gt_used[g]) continue;
    for (std::size_t p = 0; p < preds.size(); ++p) {
      if (pred_used[p]) continue;
      const double d = center_distance(gts[g].box, preds[p].box);
      if (d <= threshold) cands.push_back({d, g, p});
    }
  }
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    if (a.d != b.d) return a.d < b.d;
    if (a.g != b.g) return a.g < b.g;
    return a.p < b.p;
  });
  for (const auto& c : cands) {
    if (gt_used[c.g] || pred_used[c.p]) continue;
    take(c.g, c.p, c.d);
  }
  for (char u : gt_used) m.fn += !u;
  for (char u : pred_used) m.fp += !u;
  return m;
}

double ClearMot::mota() const {
  if (gt == 0) return 0.0;
  return 1.0 - static_cast<double>(ids + fp + fn) / static_cast<double>(gt);
}

double ClearMot::recall() const { return gt == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(gt); }

double ClearMot::motp() const { return tp == 0 ? 0.0 : distance_sum / static_cast<double>(tp); }

ClearMot clear_mot(const PredFrames& preds, const GtFrames& gts, double threshold, double min_score) {
  if (preds.size() != gts.size()) {
    throw ContractError("clear_mot: " + std::to_string(preds.size()) + " prediction frames vs " +
                        std::to_string(gts.size()) + " ground-truth frames");
  }
  ClearMot out;
  std::map<int, int> last;  // gt id -> track id of its most recent match
  for (std::size_t f = 0; f < gts.size(); ++f) {
    std::vector<PredBox> kept;
    for (const auto& p : preds[f])
      if (p.score >= min_score) kept.push_back(p);
    const auto m = match_frame(kept, gts[f], threshold, last);
    out.gt += gts[f].size();
    out.tp += m.pairs.size();
    out.fp += m.fp;
    out.fn += m.fn;
    for (std::size_t k = 0; k < m.pairs.size(); ++k) {
      const int gid = gts[f][m.pairs[k].first].id;
      const int tid = kept[m.pairs[k].second].track_id;
      const auto it = last.find(gid);
      if (it != last.end() && it->second != tid) ++out.ids;
      last[gid] = tid;
      out.distance_sum += m.distances[k];
    }
  }
  return out;
}

EvalReport evaluate(const PredFrames& preds, const GtFrames& gts, const EvalConfig& cfg) {
  cfg.validate();
  EvalReport rep;
  std::vector<double> cutoffs;
  for (const auto& f : preds)
    for (const auto& p : f) cutoffs.push_back(p.score);
  std::sort(cutoffs.begin(), cutoffs.end(), std::greater<>());
  cutoffs.erase(std::unique(cutoffs.begin(), cutoffs.end()), cutoffs.end());

  std::vector<ClearMot> at_cutoff;
  at_cutoff.reserve(cutoffs.size());
  for (double c : cutoffs) at_cutoff.push_back(clear_mot(preds, gts, cfg.threshold, c));

  double total_gt = 0;
  for (const auto& f : gts) total_gt += static_cast<double>(f.size());

  double motar_sum = 0, motp_sum = 0, best_mota = -std::numeric_limits<double>::infinity();
  std::size_t n_points = 0;
  for (std::size_t k = 1; k <= cfg.grid_size; ++k) {
    const double r = static_cast<double>(k) / static_cast<double>(cfg.grid_size);
    if (r < cfg.min_recall) continue;
    ++n_points;
    RecallPoint pt{r, false, std::numeric_limits<double>::quiet_NaN(), 0.0, {}};
    for (std::size_t i = 0; i < cutoffs.size() && total_gt > 0; ++i) {
      if (at_cutoff[i].recall() >= r) {
        pt.reached = true;
        pt.cutoff = cutoffs[i];
        pt.counts = at_cutoff[i];
        break;
      }
    }
    if (pt.reached) {
      const auto& c = pt.counts;
      const double errs = static_cast<double>(c.ids + c.fp + c.fn) - (1.0 - r) * total_gt;
      pt.motar = std::clamp(1.0 - errs / (r * total_gt), 0.0, 1.0);
      motp_sum += c.motp();
      if (c.mota() > best_mota) {
        best_mota = c.mota();
        rep.best_recall = r;
        rep.mota = c.mota();
        rep.recall = c.recall();
        rep.ids = c.ids;
        rep.fp = c.fp;
        rep.fn = c.fn;
        rep.tp = c.tp;
      }
    } else {
      motp_sum += cfg.threshold;
    }
    motar_sum += pt.motar;
    rep.curve.push_back(pt);
  }
  rep.gt = static_cast<std::size_t>(total_gt);
  if (n_points > 0) {
    rep.amota = motar_sum / static_cast<double>(n_points);
    rep.amotp = motp_sum / static_cast<double>(n_points);
  }
  if (best_mota == -std::numeric_limits<double>::infinity()) rep.fn = rep.gt;
  return rep;
}

void write_report(std::ostream& os, const EvalReport& r, const std::string& header) {
  if (!header.empty()) os << "# " << header << "\n";
  os << "amota: " << fmt(r.amota) << "\n";
  os << "amotp: " << fmt(r.amotp) << "\n";
  os << "best_recall: " << fmt(r.best_recall) << "\n";
  os << "mota: " << fmt(r.mota) << "\n";
  os << "recall: " << fmt(r.recall) << "\n";
  os << "ids: " << r.ids << "\n";
  os << "fp: " << r.fp << "\n";
  os << "fn: " << r.fn << "\n";
  os << "tp: " << r.tp << "\n";
  os << "gt: " << r.gt << "\n";
  os << "\n# recall reached cutoff motar mota motp ids fp fn tp\n";
  for (const auto& p : r.curve) {
    os << fmt(p.recall) << ' ' << (p.reached ? 1 : 0) << ' ' << (p.reached ? fmt(p.cutoff) : "nan") << ' '
       << fmt(p.motar) << ' ' << fmt(p.counts.mota()) << ' ' << fmt(p.counts.motp()) << ' ' << p.counts.ids << ' '
       << p.counts.fp << ' ' << p.counts.fn << ' ' << p.counts.tp << "\n";
  }
}

std::map<std::string, double> read_report_values(std::istream& is) {
  std::map<std::string, double> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    out[line.substr(0, colon)] = std::stod(line.substr(colon + 1));
  }
  return out;
}

}  // namespace alttrack
