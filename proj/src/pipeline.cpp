#include "alttrack/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "alttrack/gradcheck.hpp"
#include "alttrack/mlp.hpp"

namespace alttrack {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0;
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::vector<Scenario> training_set(const RunConfig& cfg) {
  std::vector<Scenario> out;
  auto sc = cfg.scenario;
  for (std::size_t i = 0; i < cfg.train_scenarios; ++i) {
    sc.seed = cfg.scenario.seed + i;
    out.push_back(generate_scenario(sc));
  }
  return out;
}

Scenario heldout_scenario(const RunConfig& cfg) {
  auto sc = cfg.scenario;
  sc.seed = cfg.heldout_seed;
  sc.frames = cfg.heldout_frames;
  return generate_scenario(sc);
}

Model train_model(const RunConfig& cfg, const std::vector<Scenario>& data, std::vector<StepReport>* log,
                  const StepCallback& on_step) {
  auto model = Model::create(cfg.model);
  auto tc = cfg.train;
  tc.w_t = cfg.tracker.w_t;
  auto reports = train(model, data, tc, on_step);
  if (log) *log = std::move(reports);
  return model;
}

PredFrames track_scenario(const Model& model, const TrackerConfig& cfg, const Scenario& scenario) {
  auto tc = cfg;
  tc.dt = scenario.config.dt;
  Tracker tracker(model, tc);
  PredFrames out;
  for (std::size_t f = 0; f < scenario.frames.size(); ++f) {
    const auto& next = scenario.frames[f + 1 < scenario.frames.size() ? f + 1 : f].pose;
    std::vector<PredBox> frame;
    for (const auto& t : tracker.step(scenario.observations(f), scenario.frames[f].pose, next)) {
      frame.push_back({t.id, t.box, t.score});
    }
    out.push_back(std::move(frame));
  }
  return out;
}

GtFrames scenario_ground_truth(const Scenario& scenario) {
  GtFrames out;
  for (const auto& frame : scenario.frames) {
    std::vector<GtBox> gts;
    for (const auto& o : frame.objects) {
      const bool seen = std::any_of(frame.tokens.begin(), frame.tokens.end(), [&](const ObsToken& t) { return t.source == o.id; });
      if (seen) gts.push_back({o.id, o.box});
    }
    out.push_back(std::move(gts));
  }
  return out;
}

void write_results(std::ostream& os, const Results& r) {
  os << "# alttrack results v1\n";
  std::istringstream cfg(r.config_text);
  std::string line;
  while (std::getline(cfg, line)) os << "# config " << line << "\n";
  os << "frames=" << r.frames.size() << "\n";
  for (std::size_t f = 0; f < r.frames.size(); ++f) {
    for (const auto& p : r.frames[f]) {
      os << f << ' ' << p.track_id;
      for (double v : p.box.to_vector()) os << ' ' << fmt(v);
      os << ' ' << fmt(p.score) << "\n";
    }
  }
}

Results read_results(std::istream& is) {
  Results r;
  std::string line;
  std::size_t line_no = 0;
  bool have_frames = false;
  auto fail = [&](const std::string& msg) {
    throw std::runtime_error("results line " + std::to_string(line_no) + ": " + msg);
  };
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      const std::string tag = "# config ";
      if (line.compare(0, tag.size(), tag) == 0) r.config_text += line.substr(tag.size()) + "\n";
      continue;
    }
    if (line.compare(0, 7, "frames=") == 0) {
      try {
        r.frames.assign(std::stoul(line.substr(7)), {});
      } catch (const std::exception&) {
        fail("bad frame count");
      }
      have_frames = true;
      continue;
    }
    if (!have_frames) fail("track line before frames=");
    std::istringstream ls(line);
    std::size_t f = 0;
    PredBox p;
    std::array<double, kBoxParams> v{};
    if (!(ls >> f >> p.track_id)) fail("expected frame and track id");
    for (auto& x : v)
      if (!(ls >> x)) fail("expected 9 box values");
    if (!(ls >> p.score)) fail("expected score");
    std::string extra;
    if (ls >> extra) fail("trailing data");
    if (f >= r.frames.size()) fail("frame index out of range");
    try {
      p.box = BoxState::from_vector(v);
    } catch (const std::exception& e) {
      fail(e.what());
    }
    r.frames[f].push_back(p);
  }
  if (!have_frames) throw std::runtime_error("results: missing frames= line");
  return r;
}

void save_results(const std::filesystem::path& path, const Results& r) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  write_results(os, r);
}

Results load_results(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  return read_results(is);
}

EvalReport evaluate_results(const Results& results, const Scenario& scenario, const EvalConfig& cfg) {
  if (results.frames.size() != scenario.frames.size()) {
    throw std::runtime_error("results cover " + std::to_string(results.frames.size()) + " frames but the scenario has " +
                             std::to_string(scenario.frames.size()));
  }
  return evaluate(results.frames, scenario_ground_truth(scenario), cfg);
}

void save_model(const std::filesystem::path& path, const Model& model, const RunConfig& cfg) {
  save_checkpoint(path, model.params, to_text(cfg));
}

Model load_model(const std::filesystem::path& path, RunConfig* cfg) {
  std::string text;
  auto store = load_checkpoint(path, &text);
  const auto rc = parse_run_config(text);
  const auto expect = Model::create(rc.model).params;
  for (const auto& name : expect.names()) {
    if (!store.contains(name) || store.value(name).shape() != expect.value(name).shape()) {
      throw std::runtime_error("checkpoint " + path.string() + " does not match its model config at '" + name + "'");
    }
  }
  if (cfg) *cfg = rc;
  return Model{rc.model, std::move(store)};
}

void write_manifest(const std::filesystem::path& dir, const std::string& name, const std::string& command, const RunConfig& cfg,
                    const std::vector<std::string>& files) {
  std::ofstream os(dir / (name + ".manifest"));
  if (!os) throw std::runtime_error("cannot write manifest in " + dir.string());
  os << "command: " << command << "\n";
  os << "config_hash: " << hex64(config_hash(cfg)) << "\n";
  os << "seed: " << cfg.scenario.seed << " " << cfg.model.init_seed << " " << cfg.train.seed << "\n";
  for (const auto& f : files) os << "file: " << f << "\n";
  os << "\n" << to_text(cfg);
}

AbReport run_ab(const RunConfig& cfg, const std::function<void(const std::string&)>& progress) {
  AbReport rep;
  std::vector<double> amota_b, amota_a, ids_b, ids_a;
  for (std::size_t k = 0; k < cfg.ab_seeds; ++k) {
    auto rc = cfg;
    rc.scenario.seed = cfg.scenario.seed + 1000 * k;
    rc.heldout_seed = cfg.heldout_seed + k;
    rc.model.init_seed = cfg.model.init_seed + k;
    rc.train.seed = cfg.train.seed + k;
    const auto data = training_set(rc);
    const auto heldout = heldout_scenario(rc);
    const auto gt = scenario_ground_truth(heldout);
    AbReplica r;
    r.seed = k;
    for (bool aux : {false, true}) {
      auto v = rc;
      v.model.aux_token = aux;
      const auto model = train_model(v, data);
      const auto report = evaluate(track_scenario(model, v.tracker, heldout), gt);
      (aux ? r.aux : r.base) = report;
      if (progress) {
        progress("replica " + std::to_string(k) + (aux ? " aux" : " base") + ": amota " + fmt(report.amota) +
                 " ids " + std::to_string(report.ids));
      }
    }
    amota_b.push_back(r.base.amota);
    amota_a.push_back(r.aux.amota);
    ids_b.push_back(static_cast<double>(r.base.ids));
    ids_a.push_back(static_cast<double>(r.aux.ids));
    rep.replicas.push_back(r);
  }
  const auto n = static_cast<double>(rep.replicas.size());
  for (std::size_t i = 0; i < rep.replicas.size(); ++i) {
    rep.mean_amota_base += amota_b[i] / n;
    rep.mean_amota_aux += amota_a[i] / n;
  }
  rep.median_ids_base = median(ids_b);
  rep.median_ids_aux = median(ids_a);
  return rep;
}

void write_ab_report(std::ostream& os, const AbReport& r) {
  char buf[160];
  os << "# auxiliary token comparison\n";
  os << "replica  method  AMOTA   AMOTP   MOTA    IDS   FP    FN\n";
  for (const auto& rep : r.replicas) {
    for (bool aux : {false, true}) {
      const auto& e = aux ? rep.aux : rep.base;
      std::snprintf(buf, sizeof buf, "%-8llu %-7s %.4f  %.4f  %.4f  %-5zu %-5zu %zu\n",
                    static_cast<unsigned long long>(rep.seed), aux ? "aux" : "base", e.amota, e.amotp, e.mota, e.ids,
                    e.fp, e.fn);
      os << buf;
    }
  }
  std::snprintf(buf, sizeof buf, "mean_amota_base: %.17g\nmean_amota_aux: %.17g\n", r.mean_amota_base, r.mean_amota_aux);
  os << buf;
  std::snprintf(buf, sizeof buf, "median_ids_base: %.17g\nmedian_ids_aux: %.17g\n", r.median_ids_base, r.median_ids_aux);
  os << buf;
  std::snprintf(buf, sizeof buf, "delta_amota: %+.17g\ndelta_median_ids: %+.17g\n", r.mean_amota_aux - r.mean_amota_base,
                r.median_ids_aux - r.median_ids_base);
  os << buf;
}

}  // namespace alttrack
