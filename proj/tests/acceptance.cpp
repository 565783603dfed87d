// Acceptance suite: one pass/fail line per criterion, nonzero exit when a
// required criterion fails. Criterion 9 is qualitative and only warns.

#include "oracle.hpp"
#include "rbmtree/dbscan.hpp"
#include "rbmtree/meanfield.hpp"
#include "rbmtree/sed.hpp"
#include "rbmtree/training.hpp"
#include "rbmtree/treebuild.hpp"

#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <map>
#include <queue>
#include <set>
#include <string>
#include <vector>

using namespace rbmtree;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void report(int criterion, bool ok, const std::string &detail,
            bool required = true) {
  const char *tag = ok ? "PASS" : (required ? "FAIL" : "WARN");
  std::printf("ACCEPTANCE %2d: %s — %s\n", criterion, tag, detail.c_str());
  std::fflush(stdout);
  if (!ok && required)
    ++g_failures;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char *format, ...) {
  char buf[512];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buf, sizeof(buf), format, args);
  va_end(args);
  return buf;
}

// ---------------------------------------------------------------- criterion 1

void criterion_1() {
  const auto t0 = Clock::now();
  PottsRBM model = oracle::random_model(4, 2, 3, 101, 1.0);
  std::mt19937_64 rng(7);
  Eigen::MatrixXi states(6, 4);
  for (int s = 0; s < 6; ++s)
    for (int i = 0; i < 4; ++i)
      states(s, i) = static_cast<int>(rng() % 2);
  OneHotDataset data = OneHotDataset::from_states(states, 2);
  data.weights << 1.0, 0.5, 2.0, 1.0, 0.25, 1.5;
  std::vector<int> batch = {0, 1, 2, 3, 4, 5};

  GradientTriple g = data_statistics(model, data, batch);
  GradientTriple mm = oracle::model_moments(model);
  g.da -= mm.da;
  g.db -= mm.db;
  g.dw -= mm.dw;

  const double h = 1e-5;
  double max_rel = 0.0;
  auto fd_check = [&](double analytic, double &theta) {
    const double keep = theta;
    theta = keep + h;
    const double up = exact_loglik(model, data);
    theta = keep - h;
    const double dn = exact_loglik(model, data);
    theta = keep;
    const double numeric = (up - dn) / (2 * h);
    max_rel = std::max(max_rel, std::abs(analytic - numeric) /
                                    std::max(std::abs(analytic), 1e-4));
  };
  for (int i = 0; i < 4; ++i)
    for (int q = 0; q < 2; ++q)
      fd_check(g.da(i, q), model.visible_fields()(i, q));
  for (int mu = 0; mu < 3; ++mu)
    fd_check(g.db(mu), model.hidden_fields()(mu));
  for (int r = 0; r < 8; ++r)
    for (int mu = 0; mu < 3; ++mu)
      fd_check(g.dw(r, mu), model.weights()(r, mu));

  const double dt = seconds_since(t0);
  report(1, max_rel < 1e-5 && dt < 1.0,
         fmt("gradient vs finite differences, max rel err %.2e (tol 1e-5), "
             "%.2fs",
             max_rel, dt));
}

// ---------------------------------------------------------------- criterion 2

void criterion_2() {
  PottsRBM model = oracle::random_model(3, 2, 2, 102, 0.9);
  std::mt19937_64 rng(8);
  Eigen::MatrixXi states(5, 3);
  for (int s = 0; s < 5; ++s)
    for (int i = 0; i < 3; ++i)
      states(s, i) = static_cast<int>(rng() % 2);
  OneHotDataset data = OneHotDataset::from_states(states, 2);
  data.weights << 2.0, 1.0, 0.5, 1.0, 1.0;

  const double ll_err = std::abs(exact_loglik(model, data) -
                                 oracle::loglik(model, data));
  double cond_err = 0.0;
  oracle::for_each_visible(3, 2, [&](const Eigen::VectorXi &v) {
    cond_err = std::max(cond_err,
                        (hidden_conditional(model, v) -
                         oracle::hidden_conditional(model, v))
                            .cwiseAbs()
                            .maxCoeff());
  });
  oracle::for_each_hidden(2, [&](const Eigen::VectorXi &h) {
    cond_err = std::max(cond_err,
                        (visible_conditional(model, h) -
                         oracle::visible_conditional(model, h))
                            .cwiseAbs()
                            .maxCoeff());
  });
  report(2, ll_err < 1e-10 && cond_err < 1e-12,
         fmt("loglik err %.2e (tol 1e-10), conditional err %.2e (tol 1e-12)",
             ll_err, cond_err));
}

// ------------------------------------------------------- criteria 3, 4 and 6

std::vector<std::pair<PottsRBM, MagnetizationState>> g_fixed_points;

void criterion_3() {
  const auto t0 = Clock::now();
  double last_err = 1.0;
  bool decreasing = true;
  std::string detail = "errors";
  for (double scale : {0.1, 0.05, 0.01}) {
    PottsRBM model = oracle::random_model(3, 2, 2, 103, 0.3, scale);
    Eigen::MatrixXd f_exact;
    Eigen::VectorXd m_exact;
    oracle::marginals(model, f_exact, m_exact);

    TapConfig cfg;
    FixedPointResult res = iterate_to_fixed_point(
        model, init_from_data(model, Eigen::Vector3i(0, 1, 0)), cfg);
    if (!res.converged) {
      report(3, false, "TAP iteration did not converge");
      return;
    }
    g_fixed_points.emplace_back(model, res.state);
    const double err =
        std::max((res.state.f - f_exact).cwiseAbs().maxCoeff(),
                 (res.state.m - m_exact).cwiseAbs().maxCoeff());
    decreasing = decreasing && err < last_err;
    last_err = err;
    detail += fmt(" %.2e", err);
  }
  const double dt = seconds_since(t0);
  report(3, decreasing && last_err < 1e-3 && dt < 1.0,
         detail + fmt(" strictly decreasing, final tol 1e-3, %.2fs", dt));
}

double projected_gamma2_gradient(const PottsRBM &model,
                                 const MagnetizationState &state) {
  // the entropy terms x log x are singular at the [0, 1] boundary, so the
  // step must shrink with the distance to it to keep the truncation error
  // (~ (h/dist)^2 / 6) below tolerance
  auto step = [](double x) {
    return std::max(1e-12, std::min(1e-5, 1e-3 * std::min(x, 1.0 - x)));
  };
  MagnetizationState s = state;
  auto value = [&]() { return gibbs_free_energy_2(model, s, 1.0).gamma2; };
  double worst = 0.0;
  for (int i = 0; i < model.n_visible(); ++i) {
    Eigen::VectorXd partial(model.n_states());
    for (int q = 0; q < model.n_states(); ++q) {
      const double keep = s.f(i, q);
      const double h = step(keep);
      s.f(i, q) = keep + h;
      const double up = value();
      s.f(i, q) = keep - h;
      const double dn = value();
      s.f(i, q) = keep;
      partial(q) = (up - dn) / (2 * h);
    }
    // remove the Lagrange multiplier of the per-site normalization
    partial.array() -= partial.mean();
    worst = std::max(worst, partial.cwiseAbs().maxCoeff());
  }
  for (int mu = 0; mu < model.n_hidden(); ++mu) {
    const double keep = s.m(mu);
    const double h = step(keep);
    s.m(mu) = keep + h;
    const double up = value();
    s.m(mu) = keep - h;
    const double dn = value();
    s.m(mu) = keep;
    worst = std::max(worst, std::abs((up - dn) / (2 * h)));
  }
  return worst;
}

void criterion_4() {
  double worst = 0.0;
  for (const auto &[model, state] : g_fixed_points)
    worst = std::max(worst, projected_gamma2_gradient(model, state));
  report(4, !g_fixed_points.empty() && worst < 1e-5,
         fmt("free-entropy gradient at %d fixed points, max %.2e (tol 1e-5)",
             static_cast<int>(g_fixed_points.size()), worst));
}

// ---------------------------------------------------------------- criterion 5

void criterion_5() {
  std::mt19937_64 rng(505);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  int mismatches = 0;
  for (int inst = 0; inst < 200; ++inst) {
    const int n = 20 + static_cast<int>(rng() % 81);
    std::vector<Eigen::VectorXd> pts;
    for (int s = 0; s < n; ++s) {
      Eigen::VectorXd p(2);
      p << u(rng), u(rng);
      pts.push_back(p);
    }
    const double eps = 0.2 + 2.3 * (inst % 7) / 7.0;
    std::vector<int> labels = dbscan(pts, eps, 1);

    // connected components of the eps-graph
    std::vector<int> comp(n, -1);
    int next = 0;
    for (int s = 0; s < n; ++s) {
      if (comp[s] >= 0)
        continue;
      comp[s] = next;
      std::queue<int> q;
      q.push(s);
      while (!q.empty()) {
        const int p = q.front();
        q.pop();
        for (int o = 0; o < n; ++o)
          if (comp[o] < 0 && (pts[p] - pts[o]).norm() <= eps) {
            comp[o] = next;
            q.push(o);
          }
      }
      ++next;
    }
    std::map<int, int> fwd, bwd;
    for (int s = 0; s < n; ++s) {
      auto f = fwd.emplace(labels[s], comp[s]);
      auto b = bwd.emplace(comp[s], labels[s]);
      if (labels[s] < 0 || f.first->second != comp[s] ||
          b.first->second != labels[s]) {
        ++mismatches;
        break;
      }
    }
  }
  report(5, mismatches == 0,
         fmt("dbscan vs eps-graph components on 200 instances, %d mismatches",
             mismatches));
}

// ---------------------------------------------------------------- criterion 6

PottsRBM template_model(int nv, double w0) {
  PottsRBM model(nv, 2, 2);
  for (int i = 0; i < nv; ++i) {
    model.weight(i, 0, 0) = w0;
    model.weight(i, 0, 1) = -w0;
    model.weight(i, 1, 0) = -w0;
    model.weight(i, 1, 1) = w0;
  }
  model.set_gauge_tag(Gauge::ZeroSum);
  return model;
}

struct TwoModeRun {
  MergeTree tree;
  std::vector<LayerDiagnostic> diagnostics;
  OneHotDataset data;
};

TwoModeRun run_two_mode() {
  const int nv = 8, per_family = 4;
  TwoModeRun run;
  Eigen::MatrixXi states(2 * per_family, nv);
  states.setZero();
  for (int s = 0; s < per_family; ++s)
    states(s, s % nv) = 1;
  for (int s = per_family; s < 2 * per_family; ++s) {
    states.row(s).setOnes();
    states(s, s % nv) = 0;
  }
  run.data = OneHotDataset::from_states(states, 2);

  CheckpointSeries series;
  series.checkpoints.push_back({1, template_model(nv, 1e-3)});
  series.checkpoints.push_back({100, template_model(nv, 2.0)});
  run.tree = build_tree(series, run.data, TreeBuildOptions{}, &run.diagnostics);
  return run;
}

void criterion_6(const TwoModeRun &run) {
  bool ok = run.tree.layers.size() == 2 &&
            run.tree.layers[0].node_ids.size() == 2 &&
            run.tree.layers[1].node_ids.size() == 1;
  std::string detail = fmt("%zu materialized layers", run.tree.layers.size());
  if (ok) {
    std::vector<std::vector<int>> parts;
    for (int id : run.tree.layers[0].node_ids)
      parts.push_back(run.tree.nodes[id].members);
    std::sort(parts.begin(), parts.end());
    ok = parts[0] == std::vector<int>{0, 1, 2, 3} &&
         parts[1] == std::vector<int>{4, 5, 6, 7};
    detail += ok ? ", partition matches templates exactly"
                 : ", partition differs from template assignment";
  }
  // the strong-coupling fixed points feed criterion 4 as well: re-converge
  // from every data point (tree nodes store cluster means, not fixed points)
  const PottsRBM strong = template_model(8, 2.0);
  TapConfig tap_cfg;
  for (int s = 0; s < run.data.n_samples; ++s) {
    FixedPointResult res = iterate_to_fixed_point(
        strong, init_from_data(strong, run.data.states.row(s).transpose()),
        tap_cfg);
    if (res.converged)
      g_fixed_points.emplace_back(strong, res.state);
  }
  report(6, ok, "two-template merge: " + detail);
}

// ------------------------------------------------------ criteria 7, 8, 9, 10

double comb2(double n) { return n * (n - 1) / 2.0; }

double adjusted_rand_index(const std::vector<int> &a,
                           const std::vector<int> &b) {
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> ca, cb;
  const int n = static_cast<int>(a.size());
  for (int s = 0; s < n; ++s) {
    joint[{a[s], b[s]}] += 1.0;
    ca[a[s]] += 1.0;
    cb[b[s]] += 1.0;
  }
  double sum_joint = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (const auto &[k, v] : joint)
    sum_joint += comb2(v);
  for (const auto &[k, v] : ca)
    sum_a += comb2(v);
  for (const auto &[k, v] : cb)
    sum_b += comb2(v);
  const double expected = sum_a * sum_b / comb2(n);
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected)
    return 1.0;
  return (sum_joint - expected) / (max_index - expected);
}

struct SedRun {
  SedOutput sed;
  CheckpointSeries series;
  MergeTree tree;
  std::vector<LayerDiagnostic> diagnostics;
  std::string tree_bytes; // serialized form for the determinism check
  bool trained = false;
};

SedRun run_sed_pipeline(bool verbose) {
  SedRun run;
  SedConfig scfg;
  scfg.seq_length = 200;
  scfg.target_size = 800;
  scfg.n_root_children = 5;
  scfg.rng_seed = 42;
  run.sed = generate_sed(scfg);
  if (!run.sed.reached_target)
    return run;

  TrainingConfig tcfg;
  tcfg.epochs = 1429; // 7 updates per epoch -> ~1e4 gradient updates
  tcfg.minibatch_size = 128;
  tcfg.gibbs_steps_k = 100;
  tcfg.learning_rate = 1e-2;
  tcfg.n_checkpoints = 100;
  tcfg.rng_seed = 1234;
  tcfg.threads = 1;
  PottsRBM model = init_model_from_data(run.sed.dataset, 64, tcfg.rng_seed);
  const auto t0 = Clock::now();
  run.series = train(std::move(model), run.sed.dataset, tcfg);
  if (verbose)
    std::printf("  [criterion 7] training: %.0fs, %zu checkpoints\n",
                seconds_since(t0), run.series.checkpoints.size());
  run.trained = true;

  TreeBuildOptions topt;
  const auto t1 = Clock::now();
  run.tree = build_tree(run.series, run.sed.dataset, topt, &run.diagnostics);
  if (verbose)
    std::printf("  [criterion 7] tree build: %.0fs, %zu layers\n",
                seconds_since(t1), run.tree.layers.size());
  run.tree_bytes = export_newick(run.tree) + "\n" +
                   export_tree_json(run.tree).dump();
  return run;
}

const TreeLayer *shallowest_layer_with(const MergeTree &tree, int min_nodes) {
  const TreeLayer *best = nullptr;
  for (const auto &layer : tree.layers)
    if (static_cast<int>(layer.node_ids.size()) >= min_nodes)
      if (!best || layer.age < best->age)
        best = &layer;
  return best;
}

void criterion_7(SedRun &run) {
  const auto t0 = Clock::now();
  run = run_sed_pipeline(true);
  if (!run.trained) {
    report(7, false, "SED generation failed to reach target size");
    return;
  }
  const TreeLayer *layer = shallowest_layer_with(run.tree, 5);
  if (!layer) {
    report(7, false,
           fmt("no materialized layer with >= 5 nodes (%zu layers)",
               run.tree.layers.size()));
    return;
  }

  const int n = run.sed.dataset.n_samples;
  std::vector<int> partition(n, -1);
  for (std::size_t k = 0; k < layer->node_ids.size(); ++k)
    for (int s : run.tree.nodes[layer->node_ids[k]].members)
      partition[s] = static_cast<int>(k);
  const double ari = adjusted_rand_index(partition, run.sed.labels);

  // family recovery: a node with >= 80% purity holding >= 50% of the family
  int recovered = 0;
  for (int fam = 0; fam < 5; ++fam) {
    double fam_size = 0;
    for (int s = 0; s < n; ++s)
      fam_size += run.sed.labels[s] == fam;
    bool found = false;
    for (int id : layer->node_ids) {
      const auto &members = run.tree.nodes[id].members;
      double inside = 0;
      for (int s : members)
        inside += run.sed.labels[s] == fam;
      if (inside / members.size() >= 0.8 && inside >= 0.5 * fam_size)
        found = true;
    }
    recovered += found;
  }
  const double dt = seconds_since(t0);
  report(7, ari >= 0.6 && recovered >= 3,
         fmt("SED end-to-end: layer age %lld with %zu nodes, ARI %.3f "
             "(>= 0.6), %d/5 families recovered (>= 3), %.0fs",
             static_cast<long long>(layer->age), layer->node_ids.size(), ari,
             recovered, dt));
}

void criterion_8(const TwoModeRun &two_mode, const SedRun &sed) {
  std::string detail;
  bool ok = true;
  auto check_run = [&](const MergeTree &tree, int n_samples,
                       const std::vector<LayerDiagnostic> &diag,
                       const char *name) {
    try {
      validate_tree(tree, n_samples);
    } catch (const std::exception &e) {
      ok = false;
      detail += fmt("%s: %s; ", name, e.what());
      return;
    }
    // counts read youngest -> oldest must be non-decreasing; diag is stored
    // oldest first
    for (std::size_t k = 1; k < diag.size(); ++k)
      if (diag[k].n_clusters > diag[k - 1].n_clusters) {
        ok = false;
        detail += fmt("%s: backward monotonicity violated at age %llu; ", name,
                      static_cast<unsigned long long>(diag[k].age));
        return;
      }
    detail += fmt("%s ok; ", name);
  };
  check_run(two_mode.tree, two_mode.data.n_samples, two_mode.diagnostics,
            "two-template");
  if (sed.trained)
    check_run(sed.tree, sed.sed.dataset.n_samples, sed.diagnostics, "SED");
  else {
    ok = false;
    detail += "SED run unavailable; ";
  }
  report(8, ok, "tree invariants: " + detail);
}

void criterion_9(const SedRun &sed) {
  if (!sed.trained) {
    report(9, false, "SED run unavailable", /*required=*/false);
    return;
  }
  TapConfig cfg;
  std::string detail = "nMF vs TAP counts at the three oldest checkpoints:";
  bool ok = true;
  const auto &ckpts = sed.series.checkpoints;
  const std::size_t first = ckpts.size() >= 3 ? ckpts.size() - 3 : 0;
  for (std::size_t k = first; k < ckpts.size(); ++k) {
    const int tap = count_data_fixed_points(ckpts[k].model, sed.sed.dataset,
                                            cfg, MeanFieldVariant::Tap, 1.0, 1);
    const int nmf = count_data_fixed_points(ckpts[k].model, sed.sed.dataset,
                                            cfg, MeanFieldVariant::Nmf, 1.0, 1);
    detail += fmt(" age %llu: %d/%d",
                  static_cast<unsigned long long>(ckpts[k].age), nmf, tap);
    ok = ok && nmf >= tap;
  }
  report(9, ok, detail, /*required=*/false);
}

void criterion_10(const TwoModeRun &two_mode, const SedRun &sed) {
  TwoModeRun two_again = run_two_mode();
  const std::string a1 = export_newick(two_mode.tree) +
                         export_tree_json(two_mode.tree).dump();
  const std::string a2 = export_newick(two_again.tree) +
                         export_tree_json(two_again.tree).dump();
  if (!sed.trained) {
    report(10, false, "SED run unavailable");
    return;
  }
  std::printf("  [criterion 10] rerunning the SED pipeline\n");
  std::fflush(stdout);
  SedRun sed_again = run_sed_pipeline(false);
  const bool ok = a1 == a2 && sed_again.trained &&
                  sed.tree_bytes == sed_again.tree_bytes;
  report(10, ok,
         fmt("determinism: two-template rerun %s, SED rerun %s",
             a1 == a2 ? "identical" : "differs",
             (sed_again.trained && sed.tree_bytes == sed_again.tree_bytes)
                 ? "identical"
                 : "differs"));
}

} // namespace

int main() {
  criterion_1();
  criterion_2();
  criterion_3();
  criterion_5();

  TwoModeRun two_mode = run_two_mode();
  criterion_6(two_mode);
  criterion_4(); // uses fixed points collected in criteria 3 and 6

  SedRun sed;
  criterion_7(sed);
  criterion_8(two_mode, sed);
  criterion_9(sed);
  criterion_10(two_mode, sed);

  if (g_failures > 0)
    std::printf("%d required criteria failed\n", g_failures);
  else
    std::printf("all required criteria passed\n");
  return g_failures == 0 ? 0 : 1;
}
