#include <random>

#include "alttrack/gradcheck.hpp"
#include "alttrack/mlp.hpp"
#include "alttrack/pipeline.hpp"

namespace alttrack {

namespace {

constexpr double kBlockTolerance = 1e-5;
constexpr double kUnrollTolerance = 1e-4;

Tensor uniform(std::mt19937_64& rng, std::vector<std::size_t> shape, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(shape_product(shape));
  for (auto& x : v) x = u(rng);
  return Tensor(std::move(shape), std::move(v));
}

Tensor boxes(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> c(-8, 8), s(0.5, 4), y(-3, 3), v(-2, 2);
  std::vector<double> out;
  for (std::size_t i = 0; i < n; ++i) {
    for (double x : {c(rng), c(rng), 0.1 * c(rng), s(rng), s(rng), s(rng), y(rng), v(rng), v(rng)}) out.push_back(x);
  }
  return Tensor({n, kBoxParams}, std::move(out));
}

std::vector<std::pair<std::string, std::size_t>> all_entries(const ParamStore& store) {
  std::vector<std::pair<std::string, std::size_t>> out;
  for (const auto& n : store.names()) {
    for (std::size_t i = 0; i < store.value(n).size(); ++i) out.emplace_back(n, i);
  }
  return out;
}

double worst(std::initializer_list<GradCheckResult> rs) {
  double w = 0;
  for (const auto& r : rs) w = std::max(w, r.finite ? r.max_rel_error : std::numeric_limits<double>::infinity());
  return w;
}

}  // namespace

std::vector<AuditRow> gradient_audit() {
  std::vector<AuditRow> rows;
  std::mt19937_64 rng(2024);
  const std::size_t d = 6;
  auto add = [&](std::string name, double err, double tol = kBlockTolerance) { rows.push_back({std::move(name), err, tol}); };

  add("linear", worst({grad_check([](Tape& t, std::span<const Var> in) { return random_projection(t, t.linear(in[0], in[1], in[2])); },
                                  {uniform(rng, {4, 5}), uniform(rng, {5, 3}), uniform(rng, {3})})}));

  {
    ParamStore s;
    add_mlp_params(s, rng, "mlp", {5, 7, 3});
    const auto x = uniform(rng, {4, 5});
    add("mlp", worst({grad_check([&](Tape& t, std::span<const Var> in) { return random_projection(t, mlp_forward(t, s, "mlp", in[0])); }, {x}),
                      grad_check_params([&](Tape& t, const ParamStore& p) { return random_projection(t, mlp_forward(t, p, "mlp", t.constant(x))); },
                                        s, all_entries(s))}));
  }

  add("softmax", worst({grad_check([](Tape& t, std::span<const Var> in) { return random_projection(t, t.softmax_rows(in[0])); },
                                   {uniform(rng, {3, 6}, -3, 3)})}));

  add("layer_norm", worst({grad_check(
                         [](Tape& t, std::span<const Var> in) { return random_projection(t, t.layer_norm(in[0], in[1], in[2])); },
                         {uniform(rng, {4, 6}, -2, 2), uniform(rng, {6}), uniform(rng, {6})})}));

  ParamStore attn;
  for (const char* n : {"sa.wq", "sa.wk", "sa.wv", "obs.wq", "obs.wk", "obs.wv"}) attn.add(n, uniform(rng, {d, d}));
  attn.add("obs.wrel", uniform(rng, {3, d}));
  {
    const auto x = uniform(rng, {5, d}), pos = uniform(rng, {5, d});
    add("self_attention",
        worst({grad_check([&](Tape& t, std::span<const Var> in) {
                 return random_projection(t, self_attention(t, attn, "sa", in[0], in[1], 2, 3, false, false));
               },
               {x, pos}),
               grad_check_params([&](Tape& t, const ParamStore& p) {
                 return random_projection(t, self_attention(t, p, "sa", t.constant(x), t.constant(pos), 2, 3, false, false));
               },
               attn, {{"sa.wq", 0}, {"sa.wq", 13}, {"sa.wk", 7}, {"sa.wv", 20}, {"sa.wv", 35}})}));
  }
  {
    const auto x = uniform(rng, {4, d}), pos = uniform(rng, {4, d}), refs = uniform(rng, {4, 3}, -5, 5);
    const ObservationSet obs{uniform(rng, {3, d}), uniform(rng, {3, 3}, -5, 5)};
    add("observation_cross_attention",
        worst({grad_check([&](Tape& t, std::span<const Var> in) {
                 return random_projection(t, observation_cross_attention(t, attn, "obs", in[0], in[1], in[2], obs, 2.0));
               },
               {x, pos, refs}),
               grad_check_params([&](Tape& t, const ParamStore& p) {
                 return random_projection(t, observation_cross_attention(t, p, "obs", t.constant(x), t.constant(pos),
                                                                         t.constant(refs), obs, 2.0));
               },
               attn, {{"obs.wq", 3}, {"obs.wk", 11}, {"obs.wv", 29}, {"obs.wrel", 0}, {"obs.wrel", 17}})}));
  }

  ParamStore asso;
  add_association_params(asso, rng, "asso", d, PosEncoding::box);
  add_affinity_head_params(asso, rng, "aff", d);
  {
    const auto tb = boxes(rng, 3), db = boxes(rng, 4);
    const auto tq = uniform(rng, {3, d}), dq = uniform(rng, {4, d});
    add("edge_pos_encoding",
        worst({grad_check([&](Tape& t, std::span<const Var> in) {
                 return random_projection(
                     t, build_edge_pos_encoding(t, asso, "asso", PosEncoding::box, in[0], in[1], t.constant(tq), t.constant(dq), true));
               },
               {tb, db}),
               grad_check_params([&](Tape& t, const ParamStore& p) {
                 return random_projection(t, build_edge_pos_encoding(t, p, "asso", PosEncoding::box, t.constant(tb), t.constant(db),
                                                                     t.constant(tq), t.constant(dq), true));
               },
               asso, {{"asso.pos.0.w", 0}, {"asso.pos.0.w", 40}, {"asso.pos.1.b", 2}, {"asso.aux_pos", 1}})}));
  }
  {
    const auto dq = uniform(rng, {4, d}), keys = uniform(rng, {3, d}), e = uniform(rng, {12, d});
    auto f = [&](Tape& t, const ParamStore& p, Var q, Var k, Var edges) {
      const auto r = edge_augmented_cross_attention(t, p, "asso", q, k, edges);
      return t.add(random_projection(t, r.det_queries, 3), random_projection(t, r.edges, 5));
    };
    add("edge_augmented_cross_attention",
        worst({grad_check([&](Tape& t, std::span<const Var> in) { return f(t, asso, in[0], in[1], in[2]); }, {dq, keys, e}),
               grad_check_params([&](Tape& t, const ParamStore& p) { return f(t, p, t.constant(dq), t.constant(keys), t.constant(e)); },
                                 asso, {{"asso.wq", 4}, {"asso.wk", 9}, {"asso.wv", 30}, {"asso.we1", 2}, {"asso.we2", 5}})}));
    add("affinity_head",
        worst({grad_check([&](Tape& t, std::span<const Var> in) { return random_projection(t, affinity_scores(t, asso, "aff", in[0], 4, 3)); }, {e}),
               grad_check_params([&](Tape& t, const ParamStore& p) {
                 return random_projection(t, affinity_scores(t, p, "aff", t.constant(e), 4, 3));
               },
               asso, {{"aff.0.w", 0}, {"aff.0.w", 21}, {"aff.0.b", 1}, {"aff.1.w", 3}, {"aff.1.b", 0}})}));
  }

  {
    const std::vector<int> targets{1, 0, 0, 1, 0, 1};
    add("focal_loss", worst({grad_check([&](Tape& t, std::span<const Var> in) { return t.focal_loss_logits(in[0], targets, 0.25, 2.0, 0.5); },
                                        {uniform(rng, {6, 1}, -3, 3)})}));
    const auto y = Tensor::matrix(3, 4, {0, 1, 0, 0, 0, 0, 0, 1, 1, 0, 0, 0});
    add("cross_entropy_loss", worst({grad_check([&](Tape& t, std::span<const Var> in) { return t.cross_entropy_rows(in[0], y); },
                                                {uniform(rng, {3, 4}, -3, 3)})}));
  }

  {
    ModelConfig mc;
    mc.d_k = 8;
    mc.num_layers = 2;
    mc.num_det_queries = 6;
    mc.ref_extent = 10;
    mc.aux_token = true;
    ScenarioConfig sc;
    sc.arena = 10;
    sc.frames = 2;
    sc.initial_objects = 3;
    sc.birth_rate = 0;
    sc.death_prob = 0;
    sc.occlusion_prob = 0;
    sc.obs_dim = mc.d_k;
    sc.seed = 5;
    const auto scenario = generate_scenario(sc);
    const auto base = Model::create(mc);
    std::vector<std::pair<std::string, std::size_t>> entries;
    for (const auto& n : base.params.names()) {
      const auto size = base.params.value(n).size();
      entries.emplace_back(n, std::uniform_int_distribution<std::size_t>(0, size - 1)(rng));
    }
    const TrainConfig tc;
    add("full_unroll_T2",
        worst({grad_check_params([&](Tape& t, const ParamStore& p) { return sequence_loss(t, Model{mc, p}, scenario, 0, 2, tc).total; },
                                 base.params, entries, 1e-6)}),
        kUnrollTolerance);
  }
  return rows;
}

}  // namespace alttrack
