// Command-line driver: dataset heterophily audits, ISN / diag-SNN training
// over folds, sheaf-diffusion demos, and Rayleigh-trajectory emission.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "sheafnet/diffusion.hpp"
#include "sheafnet/heterophily.hpp"
#include "sheafnet/kernels.hpp"
#include "sheafnet/log.hpp"
#include "sheafnet/nn.hpp"
#include "sheafnet/sheaf.hpp"
#include "sheafnet/spectral.hpp"
#include "sheafnet/train.hpp"

namespace fs = std::filesystem;
using namespace sheafnet;
using json = nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitDiverged = 4;

fs::path resolve_manifest(const std::string& dataset, const std::string& datasets_dir) {
  if (dataset.size() > 5 && dataset.substr(dataset.size() - 5) == ".json")
    return fs::path(dataset);
  return fs::path(datasets_dir) / dataset / "manifest.json";
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_dense_csv(const BlockSparseOperator& op, const fs::path& path) {
  const Matrix dense = op.to_dense();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  for (int i = 0; i < dense.rows(); ++i) {
    for (int j = 0; j < dense.cols(); ++j) {
      if (j) out << ",";
      out << dense(i, j);
    }
    out << "\n";
  }
}

// Table-style per-dataset defaults from configs/<name>.json, overridden by
// explicitly passed CLI flags.
train::TrainConfig load_base_config(const std::string& dataset,
                                    const std::string& configs_dir) {
  train::TrainConfig config;
  const fs::path path = fs::path(configs_dir) / (dataset + ".json");
  if (!fs::exists(path)) return config;
  const json j = json::parse(read_text(path));
  config.model = nn::config_from_json_string(j.dump());
  config.lr = j.value("lr", config.lr);
  config.weight_decay = j.value("weight_decay", config.weight_decay);
  config.epochs = j.value("epochs", config.epochs);
  config.early_stopping = j.value("early_stopping", config.early_stopping);
  log_info("loaded defaults from " + path.string());
  return config;
}

RayleighTrajectory trajectory_of(const train::ExperimentReport& report) {
  if (report.trajectory.length() == 0)
    throw DataError("report for " + report.dataset + " carries no trajectory");
  return report.trajectory;
}

int run_audit(const std::string& dataset, const std::string& datasets_dir, double sigma,
              const std::string& counting, const std::string& out_path) {
  const Dataset ds = load_dataset(resolve_manifest(dataset, datasets_dir));
  const NeighborCounting mode =
      counting == "set" ? NeighborCounting::set : NeighborCounting::multiset;
  const ClassProfile profile = class_profile(*ds.graph, ds.labels, mode);
  const HeterophilyVerdict verdict = classify_heterophily(gain_matrix(profile), sigma);
  const std::string text = audit_to_json(ds.name, verdict);
  std::cout << text << "\n";
  std::cout << "edge_homophily: " << edge_homophily(*ds.graph, ds.labels) << "\n";
  if (!out_path.empty()) write_text(out_path, text);
  return kExitOk;
}

int run_train(train::TrainConfig config, const std::string& datasets_dir,
              const std::string& out_path, const std::string& save_model) {
  const Dataset ds = load_dataset(resolve_manifest(config.dataset, datasets_dir),
                                  config.seed);
  std::vector<train::TrainedFold> folds;
  const train::ExperimentReport report =
      train::run_experiment(ds, config, save_model.empty() ? nullptr : &folds);

  std::cout << "dataset: " << report.dataset << "  model: "
            << nn::to_string(config.model.kind) << "\n";
  for (const auto& f : report.folds) {
    std::cout << "  fold " << f.fold << ": test " << f.test_accuracy * 100.0
              << "%  best epoch " << f.best_epoch << "/" << f.epochs_run;
    if (f.diverged) std::cout << "  DIVERGED (" << f.diagnostic << ")";
    std::cout << "\n";
  }
  std::cout << "test accuracy: " << report.mean_accuracy * 100.0 << " +/- "
            << report.std_accuracy * 100.0 << " over " << report.folds.size()
            << " folds (" << report.wall_seconds << "s)\n";
  if (!out_path.empty()) write_text(out_path, train::report_to_json(report));

  if (!save_model.empty() && !folds.empty()) {
    // keep the fold that validated best
    size_t best = 0;
    for (size_t i = 1; i < folds.size(); ++i)
      if (folds[i].result.best_val_accuracy > folds[best].result.best_val_accuracy)
        best = i;
    nn::save_checkpoint(save_model, config.model, folds[best].model->params(),
                        config.seed, folds[best].result.best_epoch);
    std::cout << "checkpoint (fold " << folds[best].result.fold << ") -> "
              << save_model << "\n";
  }
  return report.partial ? kExitDiverged : kExitOk;
}

int run_diffuse(const std::string& dataset, const std::string& datasets_dir, int nodes,
                double edge_prob, const std::string& sheaf_kind, int d, int channels,
                double step, int steps, uint64_t seed, const std::string& out_path,
                const std::string& dump_operator) {
  std::shared_ptr<const Graph> graph;
  if (!dataset.empty()) {
    graph = load_dataset(resolve_manifest(dataset, datasets_dir)).graph;
  } else {
    Rng rng(seed);
    std::vector<std::pair<int, int>> edges;
    for (int u = 0; u < nodes; ++u)
      for (int v = u + 1; v < nodes; ++v)
        if (rng.bernoulli(edge_prob)) edges.emplace_back(u, v);
    graph = std::make_shared<Graph>(make_graph(nodes, edges));
  }

  CellularSheaf sheaf;
  if (sheaf_kind == "identity") {
    sheaf = identity_sheaf(graph, d);
  } else if (sheaf_kind == "random-diagonal") {
    Rng rng(seed + 1);
    Matrix entries(graph->edge_count(), 2 * d);
    for (int e = 0; e < entries.rows(); ++e)
      for (int k = 0; k < entries.cols(); ++k) {
        const double mag = rng.uniform(0.4, 1.5);
        entries(e, k) = rng.bernoulli(0.5) ? mag : -mag;
      }
    sheaf = diagonal_sheaf(graph, d, entries);
  } else {
    throw nn::ConfigError("unknown sheaf kind: " + sheaf_kind);
  }

  const BlockSparseOperator op =
      assemble_sheaf_laplacian(sheaf, SheafLaplacianMode::combinatorial);
  if (!dump_operator.empty()) {
    write_dense_csv(op, dump_operator);
    std::cout << "operator (" << op.dim() << "x" << op.dim() << ") -> " << dump_operator
              << "\n";
  }

  const double lmax = estimate_lambda_max(op);
  if (step <= 0.0) step = lmax > 0.0 ? 0.9 / lmax : 0.1;
  Rng rng(seed + 2);
  Matrix x0(op.dim(), channels);
  for (int i = 0; i < x0.rows(); ++i)
    for (int j = 0; j < x0.cols(); ++j) x0(i, j) = rng.uniform(-1.0, 1.0);

  DiffusionOptions opts;
  opts.record_every = std::max(1, steps / 1000);
  const DiffusionTrajectory traj = integrate_diffusion(op, x0, step, steps, opts);
  std::cout << "nodes " << graph->n << ", edges " << graph->edge_count() << ", stalk dim "
            << d << ", lambda_max ~ " << lmax << ", step " << step << "\n";
  std::cout << "steps " << traj.steps_taken << (traj.converged ? " (converged)" : "")
            << ", final energy " << traj.energies.back() << ", final kernel residual "
            << kernel_residual(op, traj.final_state()) << "\n";
  if (!out_path.empty()) {
    write_trajectory_csv(traj, op, out_path);
    std::cout << "trajectory -> " << out_path << "\n";
  }
  return kExitOk;
}

int run_figure(const std::string& isn_report_path, const std::string& snn_report_path,
               const std::string& out_dir) {
  fs::create_directories(out_dir);
  const train::ExperimentReport isn_report =
      train::report_from_json(read_text(isn_report_path));
  const RayleighTrajectory isn_traj = trajectory_of(isn_report);
  write_rayleigh_csv(isn_traj, fs::path(out_dir) / "isn_trajectory.csv");
  std::cout << "isn trajectory -> " << (fs::path(out_dir) / "isn_trajectory.csv").string()
            << "\n";

  if (!snn_report_path.empty()) {
    const train::ExperimentReport snn_report =
        train::report_from_json(read_text(snn_report_path));
    const RayleighTrajectory snn_traj = trajectory_of(snn_report);
    write_rayleigh_csv(snn_traj, fs::path(out_dir) / "snn_trajectory.csv");
    const HypothesisReport verdict = hypothesis_report(snn_traj, isn_traj);
    write_text(fs::path(out_dir) / "hypothesis_verdict.json",
               hypothesis_report_to_json(verdict));
    std::cout << "snn trajectory -> " << (fs::path(out_dir) / "snn_trajectory.csv").string()
              << "\n";
    std::cout << "verdict -> " << (fs::path(out_dir) / "hypothesis_verdict.json").string()
              << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cellular sheaf Laplacian toolkit: heterophily audits, identity-sheaf "
               "network baselines, diffusion experiments"};
  app.require_subcommand(1);

  std::string datasets_dir = "datasets";
  std::string configs_dir = "configs";
  app.add_option("--datasets-dir", datasets_dir, "root directory of dataset manifests");
  app.add_option("--configs-dir", configs_dir, "directory of per-dataset config files");

  // audit
  auto* audit = app.add_subcommand("audit", "heterophily gain audit of a dataset");
  std::string audit_dataset, audit_counting = "multiset", audit_out;
  double audit_sigma = 0.2;
  audit->add_option("--dataset", audit_dataset, "dataset name or manifest path")
      ->required();
  audit->add_option("--sigma", audit_sigma, "good/bad threshold");
  audit->add_option("--counting", audit_counting, "multiset|set neighbor counting")
      ->check(CLI::IsMember({"multiset", "set"}));
  audit->add_option("--out", audit_out, "write the JSON report here");

  // train
  auto* tr = app.add_subcommand("train", "train a model over the dataset folds");
  std::string train_dataset, train_model = "isn", train_out, train_save;
  uint64_t train_seed = 1;
  int train_folds = 0, train_workers = 0;
  bool add_hp = false, add_lp = false, normalised = true, deg_normalised = false,
       second_linear = false;
  int d_flag = 1, layers = 2, hidden_channels = 32, epochs = 100, early_stopping = 20;
  double dropout = 0.0, input_dropout = 0.0, lr = 0.01, weight_decay = 0.0;
  tr->add_option("--dataset", train_dataset, "dataset name or manifest path")->required();
  auto* o_model = tr->add_option("--model", train_model, "isn|diag-snn")
                      ->check(CLI::IsMember({"isn", "diag-snn"}));
  auto* o_add_hp = tr->add_option("--add-hp", add_hp, "fixed -1 high-pass channel");
  auto* o_add_lp = tr->add_option("--add-lp", add_lp, "fixed +1 low-pass channel");
  auto* o_d = tr->add_option("--d", d_flag, "stalk dimension");
  auto* o_deg_norm =
      tr->add_option("--deg-normalised", deg_normalised, "degree-normalized laplacian");
  auto* o_dropout = tr->add_option("--dropout", dropout, "layer dropout");
  auto* o_early = tr->add_option("--early-stopping", early_stopping, "patience in epochs");
  auto* o_epochs = tr->add_option("--epochs", epochs, "maximum epochs");
  auto* o_hidden = tr->add_option("--hidden-channels", hidden_channels, "channels per stalk");
  auto* o_input_dropout = tr->add_option("--input-dropout", input_dropout, "input dropout");
  auto* o_layers = tr->add_option("--layers", layers, "number of sheaf layers");
  auto* o_lr = tr->add_option("--lr", lr, "Adam learning rate");
  auto* o_normalised = tr->add_option("--normalised", normalised, "normalized laplacian");
  auto* o_second = tr->add_option("--second-linear", second_linear, "second encoder layer");
  auto* o_wd = tr->add_option("--weight-decay", weight_decay, "decoupled weight decay");
  std::string activation = "elu";
  auto* o_act = tr->add_option("--activation", activation, "elu|relu|identity")
                    ->check(CLI::IsMember({"elu", "relu", "identity"}));
  tr->add_option("--seed", train_seed, "experiment seed");
  tr->add_option("--folds", train_folds, "limit the number of folds (0 = all)");
  tr->add_option("--workers", train_workers, "parallel fold workers (0 = auto)");
  tr->add_option("--out", train_out, "write the experiment report JSON here");
  tr->add_option("--save-model", train_save, "write a checkpoint of the best fold");

  // diffuse
  auto* diff = app.add_subcommand("diffuse", "integrate sheaf diffusion on a graph");
  std::string diff_dataset, diff_sheaf = "identity", diff_out, diff_dump;
  int diff_nodes = 20, diff_channels = 1, diff_steps = 10000, diff_d = 1;
  double diff_edge_prob = 0.2, diff_step = 0.0;
  uint64_t diff_seed = 1;
  diff->add_option("--dataset", diff_dataset, "dataset name or manifest path");
  diff->add_option("--nodes", diff_nodes, "random graph size (without --dataset)");
  diff->add_option("--edge-prob", diff_edge_prob, "random graph edge probability");
  diff->add_option("--sheaf", diff_sheaf, "identity|random-diagonal")
      ->check(CLI::IsMember({"identity", "random-diagonal"}));
  diff->add_option("--d", diff_d, "stalk dimension");
  diff->add_option("--channels", diff_channels, "feature channels of X0");
  diff->add_option("--step", diff_step, "Euler step (0 = 0.9 / lambda_max)");
  diff->add_option("--steps", diff_steps, "maximum Euler steps");
  diff->add_option("--seed", diff_seed, "rng seed");
  diff->add_option("--out", diff_out, "trajectory CSV path");
  diff->add_option("--dump-operator", diff_dump, "dense CSV dump of the operator");

  // figure
  auto* fig = app.add_subcommand("figure", "emit Rayleigh trajectory data and verdict");
  std::string fig_isn, fig_snn, fig_out = "figure_out";
  fig->add_option("--isn-report", fig_isn, "ISN experiment report JSON")->required();
  fig->add_option("--snn-report", fig_snn, "SNN experiment report JSON");
  fig->add_option("--out-dir", fig_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*audit) return run_audit(audit_dataset, datasets_dir, audit_sigma, audit_counting,
                                 audit_out);
    if (*tr) {
      train::TrainConfig config = load_base_config(train_dataset, configs_dir);
      config.dataset = train_dataset;
      if (o_model->count()) config.model.kind = nn::model_kind_from_string(train_model);
      config.seed = train_seed;
      config.fold_limit = train_folds;
      config.workers = train_workers;
      if (o_add_hp->count()) config.model.add_hp = add_hp;
      if (o_add_lp->count()) config.model.add_lp = add_lp;
      if (o_d->count()) config.model.d = d_flag;
      if (o_deg_norm->count()) config.model.deg_normalised = deg_normalised;
      if (o_dropout->count()) config.model.dropout = dropout;
      if (o_early->count()) config.early_stopping = early_stopping;
      if (o_epochs->count()) config.epochs = epochs;
      if (o_hidden->count()) config.model.hidden_channels = hidden_channels;
      if (o_input_dropout->count()) config.model.input_dropout = input_dropout;
      if (o_layers->count()) config.model.layers = layers;
      if (o_lr->count()) config.lr = lr;
      if (o_normalised->count()) config.model.normalised = normalised;
      if (o_second->count()) config.model.second_linear = second_linear;
      if (o_wd->count()) config.weight_decay = weight_decay;
      if (o_act->count()) config.model.act = ad::activation_from_string(activation);
      config.validate();
      return run_train(config, datasets_dir, train_out, train_save);
    }
    if (*diff)
      return run_diffuse(diff_dataset, datasets_dir, diff_nodes, diff_edge_prob, diff_sheaf,
                         diff_d, diff_channels, diff_step, diff_steps, diff_seed, diff_out,
                         diff_dump);
    if (*fig) return run_figure(fig_isn, fig_snn, fig_out);
  } catch (const nn::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitConfig;
}
