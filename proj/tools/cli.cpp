#include "alttrack/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "alttrack/pipeline.hpp"

namespace alttrack {

namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> sets;
  std::string out_dir;
};

void add_common(CLI::App* cmd, Common& c, bool with_config = true) {
  if (with_config) cmd->add_option("-c,--config", c.config_path, "run config file")->check(CLI::ExistingFile);
  cmd->add_option("--set", c.sets, "override, section.key=value (repeatable)");
  cmd->add_option("-o,--out", c.out_dir, "output directory (run.output_dir)");
}

RunConfig finish(RunConfig cfg, const Common& c) {
  for (const auto& s : c.sets) apply_override(cfg, s);
  if (!c.out_dir.empty()) cfg.output_dir = c.out_dir;
  cfg.validate();
  return cfg;
}

RunConfig resolve(const Common& c) {
  return finish(c.config_path.empty() ? RunConfig{} : load_run_config(c.config_path), c);
}

fs::path output_dir(const RunConfig& cfg) {
  fs::path dir(cfg.output_dir);
  fs::create_directories(dir);
  return dir;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_config_comment(std::ostream& os, const RunConfig& cfg) {
  std::istringstream in(to_text(cfg));
  std::string line;
  while (std::getline(in, line)) os << "# config " << line << "\n";
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream os(p);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  return os;
}

}  // namespace

ScenarioStats scenario_stats(const Scenario& s) {
  ScenarioStats st;
  std::set<int> ids;
  st.frames = s.frames.size();
  for (const auto& f : s.frames) {
    st.object_frames += f.objects.size();
    for (const auto& o : f.objects) ids.insert(o.id);
    st.tokens += f.tokens.size();
    st.clutter += static_cast<std::size_t>(std::count_if(f.tokens.begin(), f.tokens.end(), [](const ObsToken& t) { return t.source < 0; }));
  }
  st.identities = ids.size();
  return st;
}

std::string to_string(const ScenarioStats& s) {
  std::ostringstream os;
  os << "frames=" << s.frames << " object_frames=" << s.object_frames << " identities=" << s.identities
     << " tokens=" << s.tokens << " clutter=" << s.clutter;
  return os.str();
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"alttrack: joint detection and association tracker on a synthetic world", "alttrack"};
  app.require_subcommand(1);

  std::string command_line = "alttrack";
  for (const auto& a : args) command_line += " " + a;

  Common sim_c, train_c, track_c, eval_c, grad_c, ab_c;
  bool heldout = false;
  std::string model_path, scenario_path, results_path;

  auto* sim = app.add_subcommand("simulate", "generate a scenario file and print its statistics");
  add_common(sim, sim_c);
  sim->add_flag("--heldout", heldout, "generate the held-out evaluation scenario");

  auto* trn = app.add_subcommand("train", "train a model; writes model.ckpt and train_log.csv");
  add_common(trn, train_c);

  auto* trk = app.add_subcommand("track", "run a checkpoint over a scenario; writes results.txt");
  add_common(trk, track_c, false);
  trk->add_option("-m,--model", model_path, "checkpoint")->required()->check(CLI::ExistingFile);
  trk->add_option("-s,--scenario", scenario_path, "scenario file")->required()->check(CLI::ExistingFile);

  auto* evl = app.add_subcommand("eval", "score a results file against a scenario; writes report.txt");
  add_common(evl, eval_c, false);
  evl->add_option("-r,--results", results_path, "results file")->required()->check(CLI::ExistingFile);
  evl->add_option("-s,--scenario", scenario_path, "scenario file")->required()->check(CLI::ExistingFile);

  auto* grd = app.add_subcommand("gradcheck", "finite-difference audit of every differentiable block");
  add_common(grd, grad_c);

  auto* abc = app.add_subcommand("ab", "base vs auxiliary-token comparison over run.ab_seeds replicas");
  add_common(abc, ab_c);

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    if (sim->parsed()) {
      const auto cfg = resolve(sim_c);
      const auto dir = output_dir(cfg);
      const auto scenario = heldout ? heldout_scenario(cfg) : generate_scenario(cfg.scenario);
      const std::string name = heldout ? "heldout.txt" : "scenario.txt";
      save_scenario((dir / name).string(), scenario);
      write_manifest(dir, "simulate", command_line, cfg, {name});
      out << (dir / name).string() << ": " << to_string(scenario_stats(scenario)) << "\n";
    } else if (trn->parsed()) {
      const auto cfg = resolve(train_c);
      const auto dir = output_dir(cfg);
      const auto data = training_set(cfg);
      const auto every = std::max<std::size_t>(1, cfg.train.steps / 20);
      std::vector<StepReport> log;
      const auto model = train_model(cfg, data, &log, [&](std::size_t step, const StepReport& r) {
        if (step % every == 0 || step + 1 == cfg.train.steps) out << "step " << step << " loss " << fmt(r.total) << "\n";
      });
      save_model(dir / "model.ckpt", model, cfg);
      auto os = open_out(dir / "train_log.csv");
      write_config_comment(os, cfg);
      os << "step,total,cls_d,reg_d,cls_t,reg_t,asso_fl,asso_ce\n";
      for (std::size_t i = 0; i < log.size(); ++i) {
        const auto& t = log[i].terms;
        os << i << ',' << fmt(log[i].total) << ',' << fmt(t.cls_d) << ',' << fmt(t.reg_d) << ',' << fmt(t.cls_t) << ','
           << fmt(t.reg_t) << ',' << fmt(t.asso_fl) << ',' << fmt(t.asso_ce) << "\n";
      }
      write_manifest(dir, "train", command_line, cfg, {"model.ckpt", "train_log.csv"});
      if (!log.empty()) {
        out << "loss " << fmt(log.front().total) << " -> " << fmt(log.back().total) << "\n";
      }
    } else if (trk->parsed()) {
      RunConfig loaded;
      const auto model = load_model(model_path, &loaded);
      const auto cfg = finish(loaded, track_c);
      const auto dir = output_dir(cfg);
      const auto scenario = load_scenario(scenario_path);
      if (scenario.config.obs_dim != model.config.d_k) {
        throw std::runtime_error("scenario obs_dim " + std::to_string(scenario.config.obs_dim) +
                                 " does not match model d_k " + std::to_string(model.config.d_k));
      }
      const Results results{to_text(cfg), track_scenario(model, cfg.tracker, scenario)};
      save_results(dir / "results.txt", results);
      write_manifest(dir, "track", command_line, cfg, {"results.txt"});
      std::size_t rows = 0;
      for (const auto& f : results.frames) rows += f.size();
      out << (dir / "results.txt").string() << ": " << results.frames.size() << " frames, " << rows << " track records\n";
    } else if (evl->parsed()) {
      const auto results = load_results(results_path);
      const auto cfg = finish(parse_run_config(results.config_text), eval_c);
      const auto dir = output_dir(cfg);
      const auto report = evaluate_results(results, load_scenario(scenario_path));
      auto os = open_out(dir / "report.txt");
      write_config_comment(os, cfg);
      write_report(os, report, "alttrack evaluation report");
      write_manifest(dir, "eval", command_line, cfg, {"report.txt"});
      out << "amota " << fmt(report.amota) << " amotp " << fmt(report.amotp) << " mota " << fmt(report.mota) << " ids "
          << report.ids << "\n";
    } else if (grd->parsed()) {
      const auto cfg = resolve(grad_c);
      const auto dir = output_dir(cfg);
      const auto rows = gradient_audit();
      std::ostringstream table;
      char buf[160];
      table << "block                            max_rel_error  tolerance  result\n";
      bool ok = true;
      for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%-32s %-14.3e %-10.0e %s\n", r.block.c_str(), r.max_rel_error, r.tolerance,
                      r.passed() ? "PASS" : "FAIL");
        table << buf;
        ok = ok && r.passed();
      }
      out << table.str();
      auto os = open_out(dir / "gradcheck.txt");
      os << table.str();
      write_manifest(dir, "gradcheck", command_line, cfg, {"gradcheck.txt"});
      if (!ok) return kExitRuntime;
    } else if (abc->parsed()) {
      const auto cfg = resolve(ab_c);
      const auto dir = output_dir(cfg);
      const auto rep = run_ab(cfg, [&](const std::string& line) { out << line << "\n" << std::flush; });
      std::ostringstream text;
      write_ab_report(text, rep);
      auto os = open_out(dir / "ab_report.txt");
      write_config_comment(os, cfg);
      os << text.str();
      write_manifest(dir, "ab", command_line, cfg, {"ab_report.txt"});
      out << text.str();
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DivergenceError& e) {
    err << "training diverged: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace alttrack
