#include "ctpd/gradcheck.hpp"

#include "ctpd/error.hpp"
#include "ctpd/model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>

namespace ctpd::gradcheck {

double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max(floor, std::abs(analytic) + std::abs(numeric));
}

Report check(const std::string& component, ParameterStore& store,
             const std::function<double(const ParameterStore&)>& value,
             const std::function<Gradients(const ParameterStore&)>& analytic, std::uint64_t seed,
             const Options& options) {
  const auto t0 = std::chrono::steady_clock::now();
  const Gradients grads = analytic(store);
  const double floor = std::max(1e-8, options.value_floor * std::abs(value(store)));
  std::vector<std::pair<ParamId, Eigen::Index>> coords;
  for (auto id : store.all())
    for (Eigen::Index i = 0; i < store.value(id).size(); ++i) coords.emplace_back(id, i);
  if (coords.size() > options.min_coordinates) {
    Rng rng(seed ^ 0x6AC0FFEEULL);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(options.min_coordinates);
    std::sort(coords.begin(), coords.end(), [](const auto& a, const auto& b) {
      return a.first.index != b.first.index ? a.first.index < b.first.index : a.second < b.second;
    });
  }
  Report report;
  report.component = component;
  report.coordinates = coords.size();
  std::vector<Coordinate> all;
  for (const auto& [id, i] : coords) {
    double& x = store.value(id).data()[i];
    const double saved = x;
    x = saved + options.step;
    const double up = value(store);
    x = saved - options.step;
    const double down = value(store);
    x = saved;
    Coordinate c;
    c.param = store.name(id);
    c.row = i % store.value(id).rows();
    c.col = i / store.value(id).rows();
    c.analytic = grads[id].data()[i];
    c.numeric = (up - down) / (2.0 * options.step);
    c.rel_error = relative_error(c.analytic, c.numeric, floor);
    report.max_rel_error = std::max(report.max_rel_error, c.rel_error);
    all.push_back(c);
  }
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.rel_error > b.rel_error; });
  for (const auto& c : all)
    if (report.worst.size() < options.keep_worst || c.rel_error > options.failure_threshold)
      report.worst.push_back(c);
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

namespace {

using ad::Var;
using nn::Graph;

// Instance of one component: a store holding parameters and inputs, and a
// scalar objective built on a fresh tape.
struct Instance {
  ParameterStore store;
  std::function<Var(const Graph&)> objective;
};

Report run_instance(const std::string& name, Instance& inst, std::uint64_t seed, const Options& options) {
  auto value = [&](const ParameterStore& s) {
    ad::Tape tape;
    Graph g{tape, s};
    return inst.objective(g).value()(0, 0);
  };
  auto analytic = [&](const ParameterStore& s) {
    ad::Tape tape;
    Graph g{tape, s};
    Var out = inst.objective(g);
    tape.backward(out);
    Gradients grads(s);
    tape.accumulate(grads);
    return grads;
  };
  return check(name, inst.store, value, analytic, seed, options);
}

/// Random projection to a scalar, so every output entry matters.
Var project(const Graph& g, Var out, std::uint64_t seed) {
  Rng rng(seed ^ 0x9E3779B97F4A7C15ULL);
  return ad::sum_all(ad::mul(out, g.constant(init::normal(out.rows(), out.cols(), 1.0, rng))));
}

Matrix random_mask(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::bernoulli_distribution keep(0.6);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = keep(rng) ? 1.0 : 0.0;
  return m;
}

Matrix sorted_times(Eigen::Index n, double window, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, window);
  std::vector<double> t(static_cast<std::size_t>(n));
  for (auto& x : t) x = u(rng);
  std::sort(t.begin(), t.end());
  Matrix m(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) m(i, 0) = t[static_cast<std::size_t>(i)];
  return m;
}

constexpr Eigen::Index D = 8;
constexpr int K = 3;
constexpr int T = 8;
constexpr double W = 48.0;

Instance make(const std::string& name, std::uint64_t seed) {
  Rng rng(seed);
  Instance inst;
  auto& s = inst.store;
  const auto grid = encoding::ReferenceGrid::uniform(T, W);

  if (name == "gate") {
    auto gate = encoding::Gate::create(s, "gate", D, rng);
    auto a = s.add("input.e_imp", init::normal(T, D, 1.0, rng));
    auto b = s.add("input.e_mtand", init::normal(T, D, 1.0, rng));
    inst.objective = [=](const Graph& g) { return project(g, gate(g, g.p(a), g.p(b)), seed); };
  } else if (name == "mtand_ts") {
    const Eigen::Index n = 7, c = 4;
    auto m = encoding::MTand::create(s, "mtand", c, D, 2, 4, true, W, rng);
    auto times = s.add("input.times", sorted_times(n, W, rng));
    auto values = s.add("input.values", init::normal(n, c, 1.0, rng));
    Matrix mask = random_mask(n, c, rng);
    inst.objective = [=](const Graph& g) {
      return project(g, m(g, grid, g.p(times), g.p(values), mask), seed);
    };
  } else if (name == "mtand_text") {
    const Eigen::Index n = 4, e = 5;
    auto m = encoding::MTand::create(s, "mtand", e, D, 2, 4, false, W, rng);
    auto times = s.add("input.times", sorted_times(n, W, rng));
    auto values = s.add("input.values", init::normal(n, e, 1.0, rng));
    inst.objective = [=](const Graph& g) {
      return project(g, m(g, grid, g.p(times), g.p(values), Matrix()), seed);
    };
  } else if (name == "mits_encoder") {
    const Eigen::Index n = 6, c = 4;
    auto enc = encoding::MitsEncoder::create(s, "mits", c, D, 2, 4, W, rng);
    encoding::IrregularSeries obs{sorted_times(n, W, rng), init::normal(n, c, 1.0, rng),
                                  random_mask(n, c, rng)};
    Matrix imputed = init::normal(c, T, 1.0, rng);
    inst.objective = [=](const Graph& g) { return project(g, enc(g, grid, imputed, obs), seed); };
  } else if (name == "multiscale") {
    auto ms = discovery::MultiScale::create(s, "multiscale", D, rng);
    auto z = s.add("input.z_ts", init::normal(T, D, 1.0, rng));
    inst.objective = [=](const Graph& g) { return project(g, ms(g, g.p(z)), seed); };
  } else if (name == "slot_attention") {
    auto bank = discovery::PrototypeBank::create(s, "prototypes", K, D, rng);
    auto slots = discovery::SlotAttention::create(s, "slots", D, 3, rng);
    auto x = s.add("input.tokens", init::normal(14, D, 1.0, rng));
    Matrix noise = discovery::sample_noise(K, D, rng);
    inst.objective = [=](const Graph& g) {
      auto r = slots(g, bank.initial(g, discovery::Mode::train, noise), g.p(x));
      return ad::add(project(g, r.prototypes, seed), project(g, r.weights, seed + 1));
    };
  } else if (name == "discovery") {
    auto bank = discovery::PrototypeBank::create(s, "prototypes", K, D, rng);
    auto slots = discovery::SlotAttention::create(s, "slots", D, 3, rng);
    auto ts = s.add("input.ts_tokens", init::normal(14, D, 1.0, rng));
    auto text = s.add("input.text_tokens", init::normal(T, D, 1.0, rng));
    Matrix noise = discovery::sample_noise(K, D, rng);
    inst.objective = [=](const Graph& g) {
      auto o = discovery::discover(g, g.p(ts), g.p(text), bank, slots, discovery::Mode::train, noise);
      return ad::add(project(g, o.p_ts, seed), project(g, o.p_text, seed + 1));
    };
  } else if (name == "slot_importance") {
    auto imp = objectives::SlotImportance::create(s, "importance", D, D, K, rng);
    auto a = s.add("input.g_ts", init::normal(3, D, 1.0, rng));
    auto b = s.add("input.g_text", init::normal(3, D, 1.0, rng));
    inst.objective = [=](const Graph& g) { return project(g, imp(g, g.p(a), g.p(b)), seed); };
  } else if (name == "tpnce") {
    const Eigen::Index B = 3;
    auto imp = objectives::SlotImportance::create(s, "importance", D, D, K, rng);
    auto pts = s.add("input.p_ts", init::normal(B * K, D, 1.0, rng));
    auto ptext = s.add("input.p_text", init::normal(B * K, D, 1.0, rng));
    auto gts = s.add("input.g_ts", init::normal(B, D, 1.0, rng));
    auto gtext = s.add("input.g_text", init::normal(B, D, 1.0, rng));
    inst.objective = [=](const Graph& g) {
      return objectives::tpnce_loss(g, g.p(pts), g.p(ptext), g.p(gts), g.p(gtext), imp, {}, K);
    };
  } else if (name == "recon_ts" || name == "recon_text") {
    const Eigen::Index out = name == "recon_ts" ? 5 : D;
    auto dec = objectives::ReconDecoder::create(s, name, T, D, 2, out, 2, rng);
    auto protos = s.add("input.prototypes", init::normal(K, D, 1.0, rng));
    Matrix target = init::normal(T, out, 1.0, rng);
    inst.objective = [=](const Graph& g) { return ad::mse(dec(g, g.p(protos)), target); };
  } else if (name == "fusion") {
    auto enc = fusion::FusionEncoder::create(s, "fusion", D, 2, 2, rng);
    std::array<Eigen::Index, fusion::kGroups> counts{K, 14, K, T};
    std::array<ParamId, fusion::kGroups> ids;
    for (int grp = 0; grp < fusion::kGroups; ++grp)
      ids[grp] = s.add("input.group" + std::to_string(grp), init::normal(counts[grp], D, 1.0, rng));
    inst.objective = [=](const Graph& g) {
      fusion::GroupTokens tokens;
      for (int grp = 0; grp < fusion::kGroups; ++grp) tokens[grp] = g.p(ids[grp]);
      auto out = enc(g, tokens, counts);
      std::vector<Var> parts(out.begin(), out.end());
      return project(g, ad::concat_rows(parts), seed);
    };
  } else if (name == "pooling") {
    auto pool = fusion::Pooling::create(s, "pooling", D, rng);
    std::array<Eigen::Index, fusion::kGroups> counts{K, 14, K, T};
    std::array<ParamId, fusion::kGroups> ids;
    for (int grp = 0; grp < fusion::kGroups; ++grp)
      ids[grp] = s.add("input.group" + std::to_string(grp), init::normal(counts[grp], D, 1.0, rng));
    inst.objective = [=](const Graph& g) {
      fusion::GroupTokens tokens;
      for (int grp = 0; grp < fusion::kGroups; ++grp) tokens[grp] = g.p(ids[grp]);
      auto [a, b] = pool(g, tokens);
      return ad::add(project(g, a, seed), project(g, b, seed + 1));
    };
  } else if (name == "head") {
    auto head = fusion::Head::create(s, "head", D, 25, rng);
    auto a = s.add("input.f_ts", init::normal(1, D, 1.0, rng));
    auto b = s.add("input.f_text", init::normal(1, D, 1.0, rng));
    Matrix labels(1, 25);
    std::bernoulli_distribution coin(0.5);
    for (Eigen::Index i = 0; i < 25; ++i) labels(0, i) = coin(rng) ? 1.0 : 0.0;
    inst.objective = [=](const Graph& g) {
      return fusion::prediction_loss(head(g, g.p(a), g.p(b)), labels, 1.5);
    };
  } else {
    throw ConfigError("unknown gradcheck component '" + name + "'");
  }
  return inst;
}

Report check_full_model(std::uint64_t seed, const Options& options) {
  ModelConfig mc;
  mc.variables = 17;
  mc.note_dim = 6;
  mc.grid_size = T;
  mc.width = D;
  mc.k_prototypes = K;
  mc.time_functions = 2;
  mc.time_dim = 4;
  mc.heads = 2;
  CtpdModel model(mc, seed);
  auto specs = data::default_clinical_variables();
  data::SyntheticConfig sc;
  sc.n_admissions = 3;
  sc.note_dim = mc.note_dim;
  sc.seed = seed;
  sc.observation_rate = 0.1;
  auto ds = data::generate_synthetic(sc, specs);
  auto norm = data::compute_norm_stats(ds.records, specs);
  std::vector<SampleInputs> samples;
  for (const auto& r : ds.records)
    samples.push_back(prepare_sample(data::normalize(r, norm), model.grid(), specs, mc.note_dim));
  std::vector<const SampleInputs*> batch;
  std::vector<Matrix> noise;
  Rng rng(seed + 7);
  for (auto& s : samples) {
    ad::Tape tape;
    nn::Graph g{tape, model.params()};
    s.text_target = model.forward(g, s, discovery::Mode::eval, Matrix(), false).z_text.value();
    batch.push_back(&s);
    noise.push_back(model.sample_noise(rng));
  }
  // the model reads its own store; coordinates are perturbed in place
  auto value = [&](const ParameterStore&) {
    return model.batch(batch, discovery::Mode::train, noise, nullptr).loss.total;
  };
  auto analytic = [&](const ParameterStore& s) {
    Gradients g(s);
    g.set_zero();
    model.batch(batch, discovery::Mode::train, noise, &g);
    return g;
  };
  return check("full_model", model.params(), value, analytic, seed, options);
}

}  // namespace

std::vector<std::string> components() {
  return {"gate",          "mtand_ts", "mtand_text", "mits_encoder", "multiscale",
          "slot_attention", "discovery", "slot_importance", "tpnce", "recon_ts",
          "recon_text",    "fusion",   "pooling",    "head",         "full_model"};
}

Report check_component(const std::string& component, std::uint64_t seed, const Options& options) {
  if (component == "full_model") return check_full_model(seed, options);
  auto inst = make(component, seed);
  return run_instance(component, inst, seed, options);
}

}  // namespace ctpd::gradcheck
