#include "alttrack/simworld.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

namespace alttrack {
namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct FieldRef {
  const char* name;
  std::function<std::string()> get;
  std::function<void(const std::string&)> set;
};

double parse_double(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double out = 0;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != v.size() || v.empty()) throw ContractError("scenario config: '" + key + "' expects a number, got '" + v + "'");
  return out;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
    throw ContractError("scenario config: '" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  return std::stoull(v);
}

std::vector<FieldRef> fields(ScenarioConfig& c) {
  std::vector<FieldRef> f;
  auto dbl = [&](const char* n, double& r) {
    f.push_back({n, [&r] { return fmt(r); }, [&r, n](const std::string& v) { r = parse_double(n, v); }});
  };
  auto size = [&](const char* n, std::size_t& r) {
    f.push_back({n, [&r] { return std::to_string(r); }, [&r, n](const std::string& v) { r = parse_uint(n, v); }});
  };
  auto u64 = [&](const char* n, std::uint64_t& r) {
    f.push_back({n, [&r] { return std::to_string(r); }, [&r, n](const std::string& v) { r = parse_uint(n, v); }});
  };
  dbl("arena", c.arena);
  size("frames", c.frames);
  dbl("dt", c.dt);
  size("initial_objects", c.initial_objects);
  dbl("birth_rate", c.birth_rate);
  dbl("death_prob", c.death_prob);
  size("max_objects", c.max_objects);
  dbl("speed_min", c.speed_min);
  dbl("speed_max", c.speed_max);
  dbl("process_noise", c.process_noise);
  dbl("sigma_pos", c.sigma_pos);
  dbl("sigma_size", c.sigma_size);
  dbl("sigma_yaw", c.sigma_yaw);
  dbl("occlusion_prob", c.occlusion_prob);
  dbl("occlusion_length", c.occlusion_length);
  dbl("clutter_rate", c.clutter_rate);
  dbl("ego_speed", c.ego_speed);
  dbl("ego_yaw_rate", c.ego_yaw_rate);
  size("obs_dim", c.obs_dim);
  u64("encoder_seed", c.encoder_seed);
  u64("seed", c.seed);
  return f;
}

struct Object {
  int id;
  Vec3 center;  // world
  Vec3 size;
  Vec2 velocity;  // world
  double yaw;
  int occluded_left = 0;
};

BoxState object_box(const Object& o) { return BoxState(o.center, o.size, o.yaw, o.velocity); }

class World {
 public:
  explicit World(const ScenarioConfig& cfg) : cfg_(cfg), rng_(cfg.seed), encoder_(cfg.obs_dim, cfg.encoder_seed) {}

  Scenario run(const std::vector<BoxState>* initial) {
    Scenario s;
    s.config = cfg_;
    EgoPose pose;
    for (std::size_t f = 0; f < cfg_.frames; ++f) {
      if (f == 0) {
        if (initial) {
          for (const auto& b : *initial) objects_.push_back({next_id_++, b.center(), b.size(), b.velocity(), b.yaw()});
        } else {
          for (std::size_t k = 0; k < cfg_.initial_objects && objects_.size() < cfg_.max_objects; ++k) spawn(pose);
        }
      } else {
        const double yaw = pose.yaw + cfg_.ego_yaw_rate * cfg_.dt;
        pose = EgoPose({pose.translation[0] + cfg_.ego_speed * cfg_.dt * std::cos(yaw),
                        pose.translation[1] + cfg_.ego_speed * cfg_.dt * std::sin(yaw), pose.translation[2]},
                       yaw);
        step(pose);
      }
      ScenarioFrame frame;
      frame.pose = pose;
      for (const auto& o : objects_) frame.objects.push_back({o.id, object_box(o)});
      frame.tokens = observe(pose);
      s.frames.push_back(std::move(frame));
    }
    return s;
  }

 private:
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  double normal(double sigma) { return sigma > 0 ? std::normal_distribution<double>(0.0, sigma)(rng_) : 0.0; }
  bool bernoulli(double p) { return std::bernoulli_distribution(p)(rng_); }
  int poisson(double mean) { return mean > 0 ? std::poisson_distribution<int>(mean)(rng_) : 0; }

  BoxState random_vehicle_box(const Vec3& ego_center) {
    const Vec3 size{uniform(3.8, 5.0), uniform(1.7, 2.1), uniform(1.4, 1.8)};
    const double speed = uniform(cfg_.speed_min, cfg_.speed_max);
    const double heading = uniform(-std::numbers::pi, std::numbers::pi);
    return BoxState({ego_center[0], ego_center[1], size[2] / 2}, size, heading,
                    {speed * std::cos(heading), speed * std::sin(heading)});
  }

  void spawn(const EgoPose& pose) {
    const Vec3 local{uniform(-cfg_.arena, cfg_.arena), uniform(-cfg_.arena, cfg_.arena), 0};
    const auto world = box_to_world(random_vehicle_box(local), pose);
    objects_.push_back({next_id_++, world.center(), world.size(), world.velocity(), world.yaw()});
  }

  void step(const EgoPose& pose) {
    std::vector<Object> alive;
    for (auto o : objects_) {
      o.center[0] += o.velocity[0] * cfg_.dt;
      o.center[1] += o.velocity[1] * cfg_.dt;
      o.velocity[0] += normal(cfg_.process_noise);
      o.velocity[1] += normal(cfg_.process_noise);
      if (std::hypot(o.velocity[0], o.velocity[1]) > 1e-6) o.yaw = std::atan2(o.velocity[1], o.velocity[0]);
      const bool dies = bernoulli(cfg_.death_prob);
      const auto local = pose.from_world(o.center);
      if (dies || std::abs(local[0]) > cfg_.arena || std::abs(local[1]) > cfg_.arena) continue;
      alive.push_back(o);
    }
    objects_ = std::move(alive);
    const int births = poisson(cfg_.birth_rate);
    for (int k = 0; k < births && objects_.size() < cfg_.max_objects; ++k) spawn(pose);
  }

  ObsToken token(const BoxState& local, int source) {
    const auto& c = local.center();
    const auto& s = local.size();
    const auto& v = local.velocity();
    const BoxState noisy({c[0] + normal(cfg_.sigma_pos), c[1] + normal(cfg_.sigma_pos), c[2] + normal(cfg_.sigma_pos)},
                         {s[0] * std::exp(normal(cfg_.sigma_size)), s[1] * std::exp(normal(cfg_.sigma_size)),
                          s[2] * std::exp(normal(cfg_.sigma_size))},
                         local.yaw() + normal(cfg_.sigma_yaw),
                         {v[0] + normal(cfg_.sigma_pos), v[1] + normal(cfg_.sigma_pos)});
    return {noisy.center(), encoder_.encode(noisy), source};
  }

  std::vector<ObsToken> observe(const EgoPose& pose) {
    std::vector<ObsToken> tokens;
    for (auto& o : objects_) {
      if (o.occluded_left == 0 && bernoulli(cfg_.occlusion_prob)) {
        o.occluded_left = 1;
        if (cfg_.occlusion_length > 1.0) {
          o.occluded_left += std::geometric_distribution<int>(1.0 / cfg_.occlusion_length)(rng_);
        }
      }
      if (o.occluded_left > 0) {
        --o.occluded_left;
        continue;
      }
      tokens.push_back(token(box_from_world(object_box(o), pose), o.id));
    }
    const int clutter = poisson(cfg_.clutter_rate);
    for (int k = 0; k < clutter; ++k) {
      const Vec3 local{uniform(-cfg_.arena, cfg_.arena), uniform(-cfg_.arena, cfg_.arena), 0};
      tokens.push_back(token(random_vehicle_box(local), -1));
    }
    return tokens;
  }

  const ScenarioConfig& cfg_;
  std::mt19937_64 rng_;
  BoxEncoder encoder_;
  std::vector<Object> objects_;
  int next_id_ = 0;
};

[[noreturn]] void bad_line(std::size_t line, const std::string& what) {
  throw std::runtime_error("scenario file line " + std::to_string(line) + ": " + what);
}

}  // namespace

void ScenarioConfig::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ContractError("scenario config: " + msg);
  };
  auto prob = [&](double p, const char* n) { require(p >= 0 && p <= 1, std::string(n) + " must lie in [0, 1]"); };
  require(arena > 0, "arena must be positive");
  require(frames >= 1, "frames must be at least 1");
  require(dt > 0, "dt must be positive");
  require(birth_rate >= 0, "birth_rate must be non-negative");
  prob(death_prob, "death_prob");
  prob(occlusion_prob, "occlusion_prob");
  require(occlusion_length >= 1, "occlusion_length must be at least 1");
  require(speed_min >= 0 && speed_max >= speed_min, "need 0 <= speed_min <= speed_max");
  for (auto [v, n] : {std::pair{process_noise, "process_noise"}, {sigma_pos, "sigma_pos"}, {sigma_size, "sigma_size"},
                      {sigma_yaw, "sigma_yaw"}, {clutter_rate, "clutter_rate"}}) {
    require(v >= 0, std::string(n) + " must be non-negative");
  }
  require(obs_dim >= 1, "obs_dim must be at least 1");
}

std::string ScenarioConfig::to_string() const {
  auto copy = *this;
  std::string out;
  for (const auto& f : fields(copy)) out += (out.empty() ? "" : " ") + std::string(f.name) + "=" + f.get();
  return out;
}

void parse_scenario_config(const std::string& text, ScenarioConfig& cfg) {
  auto fs = fields(cfg);
  std::istringstream is(text);
  std::string tok;
  while (is >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw ContractError("scenario config: expected key=value, got '" + tok + "'");
    const auto key = tok.substr(0, eq);
    bool found = false;
    for (auto& f : fs) {
      if (key == f.name) {
        f.set(tok.substr(eq + 1));
        found = true;
      }
    }
    if (!found) throw ContractError("scenario config: unknown key '" + key + "'");
  }
}

BoxEncoder::BoxEncoder(std::size_t dim, std::uint64_t seed) : dim_(dim), weight_(kBoxParams * dim) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0 / 3.0);
  for (auto& w : weight_) w = n(rng);
}

std::vector<double> BoxEncoder::encode(const BoxState& box) const {
  static constexpr std::array<double, kBoxParams> scale{0.1, 0.1, 0.1, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5};
  const auto v = box.to_vector();
  std::vector<double> out(dim_, 0.0);
  for (std::size_t k = 0; k < kBoxParams; ++k)
    for (std::size_t c = 0; c < dim_; ++c) out[c] += v[k] * scale[k] * weight_[k * dim_ + c];
  return out;
}

Scenario generate_scenario(const ScenarioConfig& cfg) {
  cfg.validate();
  return World(cfg).run(nullptr);
}

Scenario generate_scenario(const ScenarioConfig& cfg, std::span<const BoxState> initial) {
  cfg.validate();
  const std::vector<BoxState> boxes(initial.begin(), initial.end());
  return World(cfg).run(&boxes);
}

ObservationSet Scenario::observations(std::size_t frame) const {
  const auto& f = frames.at(frame);
  const auto d = config.obs_dim;
  std::vector<double> emb, pos;
  for (const auto& t : f.tokens) {
    emb.insert(emb.end(), t.embedding.begin(), t.embedding.end());
    pos.insert(pos.end(), t.position.begin(), t.position.end());
  }
  return {Tensor({f.tokens.size(), d}, std::move(emb)), Tensor({f.tokens.size(), 3}, std::move(pos))};
}

std::vector<GtObject> Scenario::vehicle_frame_objects(std::size_t frame) const {
  const auto& f = frames.at(frame);
  std::vector<GtObject> out;
  for (const auto& o : f.objects) out.push_back({o.id, box_from_world(o.box, f.pose)});
  return out;
}

void write_scenario(std::ostream& os, const Scenario& s) {
  os << "# alttrack scenario v1\n";
  os << "# config " << s.config.to_string() << "\n";
  os << "# obs_dim " << s.config.obs_dim << "\n";
  os << "# frames " << s.frames.size() << "\n";
  for (std::size_t f = 0; f < s.frames.size(); ++f) {
    const auto& fr = s.frames[f];
    os << f << ' ' << fmt(fr.pose.translation[0]) << ' ' << fmt(fr.pose.translation[1]) << ' '
       << fmt(fr.pose.translation[2]) << ' ' << fmt(fr.pose.yaw) << ' ' << fr.objects.size();
    for (const auto& o : fr.objects) {
      os << ' ' << o.id;
      for (double v : o.box.to_vector()) os << ' ' << fmt(v);
    }
    os << ' ' << fr.tokens.size();
    for (const auto& t : fr.tokens) {
      for (double v : t.position) os << ' ' << fmt(v);
      for (double v : t.embedding) os << ' ' << fmt(v);
      os << ' ' << t.source;
    }
    os << '\n';
  }
}

void save_scenario(const std::string& path, const Scenario& s) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write scenario file '" + path + "'");
  write_scenario(os, s);
  if (!os) throw std::runtime_error("failed writing scenario file '" + path + "'");
}

Scenario read_scenario(std::istream& is) {
  Scenario s;
  std::string line;
  std::size_t line_no = 0, expected_frames = 0;
  bool have_frames = false;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream h(line.substr(1));
      std::string key;
      h >> key;
      if (key == "config") {
        std::string rest;
        std::getline(h, rest);
        try {
          parse_scenario_config(rest, s.config);
        } catch (const ContractError& e) {
          bad_line(line_no, e.what());
        }
      } else if (key == "frames") {
        h >> expected_frames;
        have_frames = true;
      }
      continue;
    }
    std::istringstream ls(line);
    auto num = [&](const char* what) {
      std::string tok;
      if (!(ls >> tok)) bad_line(line_no, std::string("missing ") + what);
      char* end = nullptr;
      const double v = std::strtod(tok.c_str(), &end);
      if (*end != '\0') bad_line(line_no, std::string("bad number for ") + what + ": '" + tok + "'");
      return v;
    };
    auto count = [&](const char* what) {
      const double v = num(what);
      if (v < 0 || v != std::floor(v)) bad_line(line_no, std::string("bad count for ") + what);
      return static_cast<std::size_t>(v);
    };
    const auto frame_idx = count("frame index");
    if (frame_idx != s.frames.size()) bad_line(line_no, "frame index out of order");
    ScenarioFrame fr;
    const double ex = num("ego x"), ey = num("ego y"), ez = num("ego z"), eyaw = num("ego yaw");
    fr.pose = EgoPose({ex, ey, ez}, eyaw);
    const auto n_gt = count("object count");
    for (std::size_t k = 0; k < n_gt; ++k) {
      const int id = static_cast<int>(num("object id"));
      std::array<double, kBoxParams> b{};
      for (auto& v : b) v = num("box parameter");
      try {
        fr.objects.push_back({id, BoxState::from_vector(b)});
      } catch (const ContractError& e) {
        bad_line(line_no, e.what());
      }
    }
    const auto n_obs = count("token count");
    for (std::size_t k = 0; k < n_obs; ++k) {
      ObsToken t;
      for (auto& v : t.position) v = num("token position");
      t.embedding.resize(s.config.obs_dim);
      for (auto& v : t.embedding) v = num("token embedding");
      t.source = static_cast<int>(num("token source"));
      fr.tokens.push_back(std::move(t));
    }
    std::string extra;
    if (ls >> extra) bad_line(line_no, "trailing data '" + extra + "'");
    s.frames.push_back(std::move(fr));
  }
  if (have_frames && expected_frames != s.frames.size()) {
    throw std::runtime_error("scenario file: header announces " + std::to_string(expected_frames) + " frames, found " +
                             std::to_string(s.frames.size()));
  }
  return s;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open scenario file '" + path + "'");
  return read_scenario(is);
}

}  // namespace alttrack
