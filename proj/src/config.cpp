#include "alttrack/config.hpp"

#include <cmath>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <type_traits>
#include <utility>
#include <vector>

namespace alttrack {

namespace {

struct Field {
  std::string section;
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double to_double(const std::string& name, const std::string& v) {
  double out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size() || !std::isfinite(out)) {
    throw ConfigError(name + ": expected a number, got '" + v + "'");
  }
  return out;
}

std::uint64_t to_uint(const std::string& name, const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) {
    throw ConfigError(name + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& name, const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw ConfigError(name + ": expected true or false, got '" + v + "'");
}

const std::vector<Field>& fields() {
  static const std::vector<Field> all = [] {
    std::vector<Field> f;
    auto add = [&](std::string section, std::string key, auto member_of) {
      const auto name = section + "." + key;
      using Kind = std::remove_cvref_t<decltype(member_of(std::declval<RunConfig&>()))>;
      f.push_back({section, key,
                   [member_of](const RunConfig& c) {
                     const auto& r = member_of(const_cast<RunConfig&>(c));
                     if constexpr (std::is_same_v<Kind, bool>) return std::string(r ? "true" : "false");
                     else if constexpr (std::is_floating_point_v<Kind>) return fmt(r);
                     else if constexpr (std::is_same_v<Kind, std::string>) return std::string(r);
                     else return std::to_string(r);
                   },
                   [member_of, name](RunConfig& c, const std::string& v) {
                     auto& r = member_of(c);
                     if constexpr (std::is_same_v<Kind, bool>) r = to_bool(name, v);
                     else if constexpr (std::is_floating_point_v<Kind>) r = to_double(name, v);
                     else if constexpr (std::is_same_v<Kind, std::string>) r = v;
                     else r = static_cast<std::remove_reference_t<decltype(r)>>(to_uint(name, v));
                   }});
    };
    add("run", "train_scenarios", [](RunConfig& c) -> auto& { return c.train_scenarios; });
    add("run", "heldout_seed", [](RunConfig& c) -> auto& { return c.heldout_seed; });
    add("run", "heldout_frames", [](RunConfig& c) -> auto& { return c.heldout_frames; });
    add("run", "ab_seeds", [](RunConfig& c) -> auto& { return c.ab_seeds; });
    add("run", "output_dir", [](RunConfig& c) -> auto& { return c.output_dir; });

    add("model", "d_k", [](RunConfig& c) -> auto& { return c.model.d_k; });
    add("model", "layers", [](RunConfig& c) -> auto& { return c.model.num_layers; });
    add("model", "det_queries", [](RunConfig& c) -> auto& { return c.model.num_det_queries; });
    add("model", "aux_token", [](RunConfig& c) -> auto& { return c.model.aux_token; });
    add("model", "aux_propagate", [](RunConfig& c) -> auto& { return c.model.aux_propagate; });
    add("model", "edge_iteration", [](RunConfig& c) -> auto& { return c.model.edge_iteration; });
    add("model", "mask_det_to_track", [](RunConfig& c) -> auto& { return c.model.mask_det_to_track; });
    add("model", "mask_track_to_det", [](RunConfig& c) -> auto& { return c.model.mask_track_to_det; });
    add("model", "refine_refpoints", [](RunConfig& c) -> auto& { return c.model.refine_refpoints; });
    add("model", "tau_pos", [](RunConfig& c) -> auto& { return c.model.tau_pos; });
    add("model", "ref_extent", [](RunConfig& c) -> auto& { return c.model.ref_extent; });
    add("model", "init_seed", [](RunConfig& c) -> auto& { return c.model.init_seed; });
    f.push_back({"model", "pos_encoding", [](const RunConfig& c) { return to_string(c.model.pos_encoding); },
                 [](RunConfig& c, const std::string& v) {
                   try {
                     c.model.pos_encoding = parse_pos_encoding(v);
                   } catch (const std::exception& e) {
                     throw ConfigError(std::string("model.pos_encoding: ") + e.what());
                   }
                 }});

    add("tracker", "tau_s", [](RunConfig& c) -> auto& { return c.tracker.tau_s; });
    add("tracker", "tau_new", [](RunConfig& c) -> auto& { return c.tracker.tau_new; });
    add("tracker", "max_misses", [](RunConfig& c) -> auto& { return c.tracker.max_misses; });
    f.push_back({"tracker", "w_t", [](const RunConfig& c) { return fmt(c.tracker.w_t); },
                 [](RunConfig& c, const std::string& v) { c.tracker.w_t = c.train.w_t = to_double("tracker.w_t", v); }});

    add("loss", "lambda_cls", [](RunConfig& c) -> auto& { return c.train.loss.lambda_cls; });
    add("loss", "lambda_reg", [](RunConfig& c) -> auto& { return c.train.loss.lambda_reg; });
    add("loss", "lambda_asso", [](RunConfig& c) -> auto& { return c.train.loss.lambda_asso; });
    add("loss", "lambda_ce", [](RunConfig& c) -> auto& { return c.train.loss.lambda_ce; });
    add("loss", "cls_alpha", [](RunConfig& c) -> auto& { return c.train.loss.cls_alpha; });
    add("loss", "cls_gamma", [](RunConfig& c) -> auto& { return c.train.loss.cls_gamma; });
    add("loss", "asso_alpha", [](RunConfig& c) -> auto& { return c.train.loss.asso_alpha; });
    add("loss", "asso_gamma", [](RunConfig& c) -> auto& { return c.train.loss.asso_gamma; });

    add("optimizer", "lr", [](RunConfig& c) -> auto& { return c.train.optimizer.lr; });
    add("optimizer", "beta1", [](RunConfig& c) -> auto& { return c.train.optimizer.beta1; });
    add("optimizer", "beta2", [](RunConfig& c) -> auto& { return c.train.optimizer.beta2; });
    add("optimizer", "eps", [](RunConfig& c) -> auto& { return c.train.optimizer.eps; });
    add("optimizer", "weight_decay", [](RunConfig& c) -> auto& { return c.train.optimizer.weight_decay; });

    add("train", "steps", [](RunConfig& c) -> auto& { return c.train.steps; });
    add("train", "cosine_decay", [](RunConfig& c) -> auto& { return c.train.cosine_decay; });
    add("train", "seq_len", [](RunConfig& c) -> auto& { return c.train.seq_len; });
    add("train", "batch", [](RunConfig& c) -> auto& { return c.train.batch; });
    add("train", "grad_clip", [](RunConfig& c) -> auto& { return c.train.grad_clip; });
    add("train", "seed", [](RunConfig& c) -> auto& { return c.train.seed; });

    const ScenarioConfig defaults;
    std::istringstream keys(defaults.to_string());
    std::string tok;
    while (keys >> tok) {
      const auto key = tok.substr(0, tok.find('='));
      f.push_back({"scenario", key,
                   [key](const RunConfig& c) {
                     std::istringstream is(c.scenario.to_string());
                     std::string t;
                     while (is >> t) {
                       if (t.compare(0, key.size() + 1, key + "=") == 0) return t.substr(key.size() + 1);
                     }
                     return std::string();
                   },
                   [key](RunConfig& c, const std::string& v) {
                     try {
                       parse_scenario_config(key + "=" + v, c.scenario);
                     } catch (const std::exception& e) {
                       throw ConfigError("scenario." + key + ": " + e.what());
                     }
                   }});
    }
    return f;
  }();
  return all;
}

const Field& find_field(const std::string& section, const std::string& key) {
  for (const auto& f : fields()) {
    if (f.section == section && f.key == key) return f;
  }
  throw ConfigError("unknown config key '" + section + "." + key + "'");
}

}  // namespace

void RunConfig::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  require(model.d_k > 0, "model.d_k must be positive");
  require(model.num_layers > 0, "model.layers must be positive");
  require(model.num_det_queries > 0, "model.det_queries must be positive");
  require(model.tau_pos > 0, "model.tau_pos must be positive");
  require(model.ref_extent > 0, "model.ref_extent must be positive");
  require(tracker.tau_s >= 0 && tracker.tau_s <= 1, "tracker.tau_s must lie in [0, 1]");
  require(tracker.tau_new >= 0 && tracker.tau_new <= 1, "tracker.tau_new must lie in [0, 1]");
  require(tracker.max_misses >= 0, "tracker.max_misses must be non-negative");
  require(tracker.w_t >= 0 && tracker.w_t <= 1, "tracker.w_t must lie in [0, 1]");
  require(train.optimizer.lr >= 0, "optimizer.lr must be non-negative");
  require(train.optimizer.beta1 >= 0 && train.optimizer.beta1 < 1, "optimizer.beta1 must lie in [0, 1)");
  require(train.optimizer.beta2 >= 0 && train.optimizer.beta2 < 1, "optimizer.beta2 must lie in [0, 1)");
  require(train.optimizer.eps > 0, "optimizer.eps must be positive");
  require(train.optimizer.weight_decay >= 0, "optimizer.weight_decay must be non-negative");
  require(train.seq_len >= 1, "train.seq_len must be at least 1");
  require(train.batch >= 1, "train.batch must be at least 1");
  require(train.grad_clip >= 0, "train.grad_clip must be non-negative");
  require(train.seq_len <= scenario.frames, "train.seq_len exceeds scenario.frames");
  require(train_scenarios >= 1, "run.train_scenarios must be at least 1");
  require(heldout_frames >= 1, "run.heldout_frames must be at least 1");
  require(ab_seeds >= 1, "run.ab_seeds must be at least 1");
  require(scenario.obs_dim == model.d_k, "scenario.obs_dim must equal model.d_k");
  require(!output_dir.empty(), "run.output_dir must not be empty");
  try {
    scenario.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

RunConfig parse_run_config(std::string_view text, RunConfig base) {
  std::string section = "run";
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = std::min(text.find('\n', pos), text.size());
    const auto line = trim(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    try {
      if (line.front() == '[') {
        if (line.back() != ']') throw ConfigError("unterminated section header");
        section = trim(line.substr(1, line.size() - 2));
        bool known = false;
        for (const auto& f : fields()) known = known || f.section == section;
        if (!known) throw ConfigError("unknown section '" + section + "'");
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError("expected key = value");
      find_field(section, trim(line.substr(0, eq))).set(base, trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
    if (end == text.size()) break;
  }
  return base;
}

RunConfig load_run_config(const std::string& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_run_config(ss.str(), std::move(base));
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void apply_override(RunConfig& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string_view::npos || dot == std::string_view::npos || dot > eq) {
    throw ConfigError("override '" + std::string(assignment) + "' is not section.key=value");
  }
  find_field(trim(assignment.substr(0, dot)), trim(assignment.substr(dot + 1, eq - dot - 1)))
      .set(cfg, trim(assignment.substr(eq + 1)));
}

std::string to_text(const RunConfig& cfg) {
  std::string out, section;
  for (const auto& f : fields()) {
    if (f.section != section) {
      section = f.section;
      out += (out.empty() ? "[" : "\n[") + section + "]\n";
    }
    out += f.key + " = " + f.get(cfg) + "\n";
  }
  return out;
}

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t config_hash(const RunConfig& cfg) { return fnv1a(to_text(cfg)); }

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace alttrack
