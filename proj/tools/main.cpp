#include "rbmtree/checkpoint.hpp"
#include "rbmtree/dataset.hpp"
#include "rbmtree/loaders.hpp"
#include "rbmtree/meanfield.hpp"
#include "rbmtree/model.hpp"
#include "rbmtree/sed.hpp"
#include "rbmtree/spectrum.hpp"
#include "rbmtree/training.hpp"
#include "rbmtree/treebuild.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace fs = std::filesystem;
using namespace rbmtree;

namespace {

struct GlobalOpts {
  int threads = static_cast<int>(std::thread::hardware_concurrency());
  std::uint64_t seed = 0;
  bool verbose = false;
};

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", x);
  return buf;
}

OneHotDataset load_data(const std::string &path, const std::string &format,
                        int n_states, bool verbose) {
  if (format == "fasta") {
    int unknown = 0;
    OneHotDataset data = load_fasta_msa(path, &unknown);
    if (unknown > 0)
      std::cerr << "warning: " << unknown
                << " unknown residues mapped to gap in " << path << "\n";
    return data;
  }
  OneHotDataset data = load_matrix(path, n_states);
  if (verbose)
    std::cerr << "loaded " << data.n_samples << " samples, N_v="
              << data.n_visible << ", N_q=" << data.n_states << "\n";
  return data;
}

std::vector<std::string> load_label_file(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw std::runtime_error("cannot open label file " + path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    if (!line.empty())
      out.push_back(line);
  }
  return out;
}

int cmd_train(const GlobalOpts &g, const std::string &data_path,
              const std::string &format, int n_states,
              const TrainingConfig &cfg_in, int n_hidden,
              const std::string &out_dir, const std::string &reweight) {
  OneHotDataset data = load_data(data_path, format, n_states, g.verbose);
  if (reweight != "off") {
    const double thr = std::stod(reweight);
    data.weights = compute_sequence_weights(data, thr);
    if (g.verbose)
      std::cerr << "reweighted: effective size " << data.effective_size()
                << "\n";
  }

  TrainingConfig cfg = cfg_in;
  cfg.rng_seed = g.seed;
  cfg.threads = g.threads;
  cfg.validate();

  fs::create_directories(out_dir);
  PottsRBM model = init_model_from_data(data, n_hidden, g.seed);

  std::vector<std::uint64_t> ages;
  std::ostringstream log;
  log << "age,loglik_proxy";
  for (int k = 1; k <= 10; ++k)
    log << ",s" << k;
  log << "\n";
  auto sink = [&](const Checkpoint &ckpt, double loglik,
                  const Eigen::VectorXd &svals) {
    save_checkpoint(fs::path(out_dir) /
                        ("ckpt_" + std::to_string(ckpt.age) + ".rbm"),
                    ckpt.model, ckpt.age);
    ages.push_back(ckpt.age);
    log << ckpt.age << "," << fmt(loglik);
    for (int k = 0; k < svals.size(); ++k)
      log << "," << fmt(svals(k));
    log << "\n";
    if (g.verbose)
      std::cerr << "checkpoint age=" << ckpt.age << " loglik=" << loglik
                << "\n";
  };

  train(std::move(model), data, cfg, sink, nullptr, /*keep_in_memory=*/false);
  save_series_manifest(out_dir, ages, cfg.to_json());
  write_file_atomic(fs::path(out_dir) / "train_log.csv", log.str());
  return 0;
}

nlohmann::json fixed_point_json(const FixedPointResult &r, bool with_visible) {
  nlohmann::json j;
  j["origin"] = {{"kind", r.state.origin.kind == Origin::Kind::Data
                              ? "data"
                              : "fixed_point"},
                 {"index", r.state.origin.index}};
  j["converged"] = r.converged;
  j["iters"] = r.iters;
  j["m"] = std::vector<double>(r.state.m.data(),
                               r.state.m.data() + r.state.m.size());
  if (with_visible) {
    nlohmann::json f = nlohmann::json::array();
    for (int i = 0; i < r.state.f.rows(); ++i)
      f.push_back(std::vector<double>(r.state.f.row(i).begin(),
                                      r.state.f.row(i).end()));
    j["f"] = f;
  }
  return j;
}

int cmd_tap(const GlobalOpts &g, const std::string &model_path,
            const std::string &data_path, const std::string &format,
            int n_states, const std::string &variant, const TapConfig &tap,
            bool no_visible, const std::string &out_path) {
  tap.validate();
  Checkpoint ckpt = load_checkpoint(model_path);
  OneHotDataset data = load_data(data_path, format, n_states, g.verbose);
  if (ckpt.model.n_visible() != data.n_visible ||
      ckpt.model.n_states() != data.n_states)
    throw std::runtime_error("model/data shape mismatch");

  std::vector<MagnetizationState> inits;
  inits.reserve(data.n_samples);
  for (int s = 0; s < data.n_samples; ++s) {
    MagnetizationState st =
        init_from_data(ckpt.model, data.states.row(s).transpose());
    st.origin.index = s;
    inits.push_back(std::move(st));
  }
  const MeanFieldVariant var =
      variant == "nmf" ? MeanFieldVariant::Nmf : MeanFieldVariant::Tap;
  auto results = solve_fixed_points(ckpt.model, inits, tap, var, g.threads);

  nlohmann::json out = nlohmann::json::array();
  int n_conv = 0;
  for (const auto &r : results) {
    out.push_back(fixed_point_json(r, !no_visible));
    n_conv += r.converged ? 1 : 0;
  }
  write_file_atomic(out_path, out.dump(2) + "\n");
  if (g.verbose)
    std::cerr << n_conv << "/" << results.size() << " trajectories converged\n";
  return 0;
}

int cmd_tree(const GlobalOpts &g, const std::string &ckpt_dir,
             const std::string &data_path, const std::string &format,
             int n_states, TreeBuildOptions options,
             const std::string &labels_path, const std::string &out_newick,
             const std::string &out_json, const std::string &out_layers) {
  CheckpointSeries series = load_series(ckpt_dir);
  OneHotDataset data = load_data(data_path, format, n_states, g.verbose);
  options.threads = g.threads;

  std::vector<LayerDiagnostic> diagnostics;
  MergeTree tree = build_tree(series, data, options, &diagnostics);
  validate_tree(tree, data.n_samples);

  std::vector<std::string> leaf_names = data.labels;
  if (!labels_path.empty()) {
    leaf_names = load_label_file(labels_path);
    if (static_cast<int>(leaf_names.size()) != data.n_samples)
      throw std::runtime_error("label file size does not match dataset");
  }
  write_file_atomic(out_newick, export_newick(tree, leaf_names) + "\n");
  if (!out_json.empty())
    write_file_atomic(out_json, export_tree_json(tree).dump(2) + "\n");

  std::sort(diagnostics.begin(), diagnostics.end(),
            [](const LayerDiagnostic &a, const LayerDiagnostic &b) {
              return a.age < b.age;
            });
  std::ostringstream layers;
  layers << "age,n_fixed_points_tap,n_fixed_points_nmf,materialized\n";
  for (const auto &d : diagnostics) {
    layers << d.age << "," << d.n_clusters << ",";
    if (d.n_clusters_nmf >= 0)
      layers << d.n_clusters_nmf;
    layers << "," << (d.materialized ? 1 : 0) << "\n";
  }
  write_file_atomic(out_layers, layers.str());
  if (g.verbose)
    std::cerr << "tree: " << tree.n_leaves << " leaves, "
              << tree.layers.size() << " materialized layers\n";
  return 0;
}

int cmd_sed_gen(const GlobalOpts &g, SedConfig cfg, const std::string &out_dir) {
  cfg.rng_seed = g.seed;
  SedOutput out = generate_sed(cfg);
  if (!out.reached_target)
    std::cerr << "warning: target size not reached, generated "
              << out.dataset.n_samples << " sequences\n";

  fs::create_directories(out_dir);
  save_matrix(fs::path(out_dir) / "sed.matrix", out.dataset);
  std::ostringstream gen;
  gen << "id,parent,label,sublabel\n";
  for (int s = 0; s < out.dataset.n_samples; ++s)
    gen << s << "," << out.genealogy[s] << "," << out.labels[s] << ","
        << out.sublabels[s] << "\n";
  write_file_atomic(fs::path(out_dir) / "genealogy.csv", gen.str());
  std::ostringstream lab;
  for (const auto &l : out.dataset.labels)
    lab << l << "\n";
  write_file_atomic(fs::path(out_dir) / "labels.txt", lab.str());
  if (g.verbose)
    std::cerr << "generated " << out.dataset.n_samples << " sequences\n";
  return 0;
}

int cmd_spectrum(const GlobalOpts &g, const std::string &ckpt_dir,
                 const std::string &model_path, const std::string &data_path,
                 const std::string &format, int n_states, int project_k,
                 const std::string &out_dir) {
  std::vector<Checkpoint> ckpts;
  if (!model_path.empty()) {
    ckpts.push_back(load_checkpoint(model_path));
  } else if (!ckpt_dir.empty()) {
    CheckpointSeries series = load_series(ckpt_dir);
    ckpts = std::move(series.checkpoints);
  } else {
    throw std::runtime_error("spectrum: need --checkpoints or --model");
  }

  fs::create_directories(out_dir);
  std::ostringstream spec;
  const int n_svals = static_cast<int>(weight_spectrum(ckpts.front().model).size());
  spec << "age";
  for (int k = 1; k <= n_svals; ++k)
    spec << ",s" << k;
  spec << "\n";
  for (const auto &c : ckpts) {
    const Eigen::VectorXd s = weight_spectrum(c.model);
    spec << c.age;
    for (int k = 0; k < s.size(); ++k)
      spec << "," << fmt(s(k));
    spec << "\n";
  }
  write_file_atomic(fs::path(out_dir) / "spectrum.csv", spec.str());

  if (project_k > 0) {
    if (data_path.empty())
      throw std::runtime_error("spectrum: --project requires --data");
    OneHotDataset data = load_data(data_path, format, n_states, g.verbose);
    for (const auto &c : ckpts) {
      const Eigen::MatrixXd p = project_dataset(c.model, data, project_k);
      std::ostringstream out;
      for (int m = 0; m < p.rows(); ++m) {
        for (int k = 0; k < p.cols(); ++k) {
          if (k > 0)
            out << ",";
          out << fmt(p(m, k));
        }
        out << "\n";
      }
      write_file_atomic(fs::path(out_dir) /
                            ("proj_" + std::to_string(c.age) + ".csv"),
                        out.str());
    }
  }
  return 0;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Potts RBM training, TAP fixed points, and merge trees"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOpts g;
  if (g.threads < 1)
    g.threads = 1;
  app.add_option("--threads", g.threads, "worker threads")
      ->check(CLI::PositiveNumber);
  app.add_option("--seed", g.seed, "RNG seed");
  app.add_flag("--verbose", g.verbose, "progress output on stderr");

  std::string data_path, format = "matrix", out_path, out_dir;
  int n_states = -1;
  auto add_data_opts = [&](CLI::App *cmd, bool required) {
    auto *o = cmd->add_option("--data", data_path, "dataset file");
    if (required)
      o->required();
    cmd->add_option("--format", format, "matrix|fasta")
        ->check(CLI::IsMember({"matrix", "fasta"}));
    cmd->add_option("--n-states", n_states, "number of states (matrix format)");
  };

  // train
  TrainingConfig tcfg;
  int n_hidden = 512;
  std::string reweight = "off";
  auto *train_cmd = app.add_subcommand("train", "train a Potts RBM with PCD");
  add_data_opts(train_cmd, true);
  train_cmd->add_option("--epochs", tcfg.epochs, "training epochs");
  train_cmd->add_option("--minibatch", tcfg.minibatch_size, "minibatch size");
  train_cmd->add_option("--gibbs-steps", tcfg.gibbs_steps_k, "PCD Gibbs steps");
  train_cmd->add_option("--lr", tcfg.learning_rate, "learning rate");
  train_cmd->add_option("--hidden", n_hidden, "hidden units");
  train_cmd->add_option("--checkpoints", tcfg.n_checkpoints,
                        "number of checkpoints");
  train_cmd->add_option("--out", out_dir, "checkpoint directory")->required();
  train_cmd->add_option("--reweight-identity", reweight,
                        "identity threshold for sequence reweighting, or off");

  // tap
  std::string model_path, variant = "tap";
  TapConfig tap;
  bool no_visible = false;
  auto *tap_cmd = app.add_subcommand("tap", "solve mean-field fixed points");
  tap_cmd->add_option("--model", model_path, "checkpoint file")->required();
  add_data_opts(tap_cmd, true);
  tap_cmd->add_option("--variant", variant, "tap|nmf")
      ->check(CLI::IsMember({"tap", "nmf"}));
  tap_cmd->add_option("--tol", tap.tolerance, "convergence tolerance");
  tap_cmd->add_option("--max-iters", tap.max_iters, "iteration cap");
  tap_cmd->add_option("--damping", tap.damping, "damping factor");
  tap_cmd->add_option("--beta", tap.beta, "inverse temperature");
  tap_cmd->add_flag("--no-visible", no_visible, "omit f from the output");
  out_path = "fixedpoints.json";
  tap_cmd->add_option("--out", out_path, "output JSON path");

  // tree
  std::string ckpt_dir, labels_path, out_newick = "tree.nwk", out_json,
              out_layers = "layers.csv";
  TreeBuildOptions topt;
  bool with_nmf = false;
  auto *tree_cmd = app.add_subcommand("tree", "build the merge tree");
  tree_cmd->add_option("--checkpoints", ckpt_dir, "checkpoint directory")
      ->required();
  add_data_opts(tree_cmd, true);
  tree_cmd->add_option("--eps", topt.eps, "DBSCAN radius");
  tree_cmd->add_option("--variant", variant, "tap|nmf")
      ->check(CLI::IsMember({"tap", "nmf"}));
  tree_cmd->add_option("--labels", labels_path, "leaf names, one per line");
  tree_cmd->add_option("--out-newick", out_newick, "Newick output path");
  tree_cmd->add_option("--out-json", out_json, "JSON output path");
  tree_cmd->add_option("--out-layers", out_layers, "layer diagnostics CSV");
  tree_cmd->add_option("--min-age", topt.min_age, "youngest checkpoint age");
  tree_cmd->add_option("--max-age", topt.max_age, "oldest checkpoint age");
  tree_cmd->add_option("--tol", topt.tap.tolerance, "convergence tolerance");
  tree_cmd->add_option("--max-iters", topt.tap.max_iters, "iteration cap");
  tree_cmd->add_option("--damping", topt.tap.damping, "damping factor");
  tree_cmd->add_option("--beta", topt.tap.beta, "inverse temperature");
  tree_cmd->add_flag("--with-nmf", with_nmf,
                     "also count nMF fixed points per layer");

  // sed-gen
  SedConfig sed;
  auto *sed_cmd = app.add_subcommand("sed-gen", "generate a synthetic dataset");
  sed_cmd->add_option("--length", sed.seq_length, "sequence length");
  sed_cmd->add_option("--root-children", sed.n_root_children, "families");
  sed_cmd->add_option("--mutation-prob", sed.mutation_prob,
                      "per-site flip probability (0: 1/length)");
  sed_cmd->add_option("--max-children", sed.max_children,
                      "max children per sequence");
  sed_cmd->add_option("--size", sed.target_size, "target dataset size");
  sed_cmd->add_option("--out", out_dir, "output directory")->required();

  // spectrum
  int project_k = 0;
  auto *spec_cmd =
      app.add_subcommand("spectrum", "weight singular values and projections");
  spec_cmd->add_option("--checkpoints", ckpt_dir, "checkpoint directory");
  spec_cmd->add_option("--model", model_path, "single checkpoint file");
  add_data_opts(spec_cmd, false);
  spec_cmd->add_option("--project", project_k,
                       "project the dataset on the top-k singular vectors");
  spec_cmd->add_option("--out", out_dir, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    if (e.get_exit_code() == 0)
      return app.exit(e);
    app.exit(e);
    return 2;
  }

  try {
    if (g.threads < 1)
      g.threads = 1;
    if (*train_cmd)
      return cmd_train(g, data_path, format, n_states, tcfg, n_hidden, out_dir,
                       reweight);
    if (*tap_cmd)
      return cmd_tap(g, model_path, data_path, format, n_states, variant, tap,
                     no_visible, out_path);
    if (*tree_cmd) {
      topt.variant =
          variant == "nmf" ? MeanFieldVariant::Nmf : MeanFieldVariant::Tap;
      topt.with_nmf_counts = with_nmf;
      return cmd_tree(g, ckpt_dir, data_path, format, n_states, topt,
                      labels_path, out_newick, out_json, out_layers);
    }
    if (*sed_cmd)
      return cmd_sed_gen(g, sed, out_dir);
    if (*spec_cmd)
      return cmd_spectrum(g, ckpt_dir, model_path, data_path, format, n_states,
                          project_k, out_dir);
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
