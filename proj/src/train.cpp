#include "sheafnet/train.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <thread>
#include <tuple>

#include <nlohmann/json.hpp>

#include "sheafnet/kernels.hpp"

namespace sheafnet::train {

using json = nlohmann::json;

void TrainConfig::validate() const {
  model.validate();
  if (epochs < 1) throw nn::ConfigError("epochs must be >= 1");
  if (early_stopping < 1) throw nn::ConfigError("early_stopping must be >= 1");
  if (lr <= 0.0) throw nn::ConfigError("lr must be positive");
  if (weight_decay < 0.0) throw nn::ConfigError("weight_decay must be >= 0");
  if (fold_limit < 0) throw nn::ConfigError("folds must be >= 0");
  if (workers < 0) throw nn::ConfigError("workers must be >= 0");
}

namespace {

double eval_loss(ad::Tape& tape, const nn::ForwardResult& fwd,
                 const std::vector<int>& labels, const std::vector<int>& indices) {
  const ad::Tensor loss = tape.softmax_cross_entropy(fwd.logits, &labels, &indices);
  return tape.value(loss)(0, 0);
}

}  // namespace

TrainedFold train_fold(const Dataset& ds, const TrainConfig& config, int fold_index) {
  const Fold& fold = ds.splits.folds[fold_index];
  Rng fold_rng = Rng(config.seed).spawn(static_cast<uint64_t>(fold_index));

  TrainedFold out;
  out.result.fold = fold_index;
  out.model = std::make_unique<nn::SheafModel>(config.model, ds.graph, ds.features.cols(),
                                               ds.labels.num_classes, fold_rng);
  nn::SheafModel& model = *out.model;

  std::map<std::string, Matrix*> param_ptrs;
  nn::for_each_param(config.model, model.params(),
                     [&](const std::string& name, Matrix& m) { param_ptrs[name] = &m; });
  std::map<std::string, nn::AdamState> adam;
  nn::AdamOptions adam_opts;
  adam_opts.lr = config.lr;
  adam_opts.weight_decay = config.weight_decay;

  nn::ModelParams best_params = model.params();
  double best_val_acc = -1.0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  int since_improvement = 0;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    {
      ad::Tape tape;
      const nn::ForwardResult fwd =
          model.forward(tape, ds.features.values, /*training=*/true, &fold_rng);
      const ad::Tensor loss =
          tape.softmax_cross_entropy(fwd.logits, &ds.labels.labels, &fold.train);
      const double loss_value = tape.value(loss)(0, 0);
      if (!std::isfinite(loss_value)) {
        out.result.diverged = true;
        out.result.diagnostic = "non-finite training loss at epoch " + std::to_string(epoch);
        out.result.epochs_run = epoch;
        break;
      }
      tape.backward(loss);
      try {
        for (const auto& [name, tensor] : fwd.param_tensors)
          nn::adam_step(*param_ptrs.at(name), tape.grad(tensor), adam[name], adam_opts);
      } catch (const std::runtime_error& e) {
        out.result.diverged = true;
        out.result.diagnostic = std::string(e.what()) + " at epoch " + std::to_string(epoch);
        out.result.epochs_run = epoch;
        break;
      }
    }

    ad::Tape eval_tape;
    const nn::ForwardResult eval_fwd =
        model.forward(eval_tape, ds.features.values, /*training=*/false, nullptr);
    const double val_acc =
        nn::accuracy(eval_tape.value(eval_fwd.logits), ds.labels.labels, fold.val);
    const double val_loss = eval_loss(eval_tape, eval_fwd, ds.labels.labels, fold.val);
    out.result.epochs_run = epoch;

    // ties broken by lower validation loss
    if (val_acc > best_val_acc ||
        (val_acc == best_val_acc && val_loss < best_val_loss)) {
      best_val_acc = val_acc;
      best_val_loss = val_loss;
      best_epoch = epoch;
      best_params = model.params();
      since_improvement = 0;
    } else {
      ++since_improvement;
      if (since_improvement >= config.early_stopping) break;
    }
  }

  model.params() = best_params;
  model.set_epochs_trained(out.result.epochs_run);
  out.result.best_epoch = best_epoch;
  out.result.best_val_accuracy = best_epoch > 0 ? best_val_acc : 0.0;
  out.result.best_val_loss = best_epoch > 0 ? best_val_loss : 0.0;

  if (!out.result.diverged) {
    ad::Tape test_tape;
    const nn::ForwardResult test_fwd =
        model.forward(test_tape, ds.features.values, /*training=*/false, nullptr);
    out.result.test_accuracy =
        nn::accuracy(test_tape.value(test_fwd.logits), ds.labels.labels, fold.test);
  }
  return out;
}

std::pair<double, double> recompute_accuracy_stats(const std::vector<FoldResult>& folds) {
  double mean = 0.0;
  int counted = 0;
  for (const auto& f : folds) {
    if (f.diverged) continue;
    mean += f.test_accuracy;
    ++counted;
  }
  if (counted == 0) return {0.0, 0.0};
  mean /= counted;
  double var = 0.0;
  for (const auto& f : folds) {
    if (f.diverged) continue;
    var += (f.test_accuracy - mean) * (f.test_accuracy - mean);
  }
  return {mean, std::sqrt(var / counted)};
}

ExperimentReport run_experiment(const Dataset& ds, const TrainConfig& config,
                                std::vector<TrainedFold>* keep_folds) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();

  const int total_folds = static_cast<int>(ds.splits.folds.size());
  const int n_folds = config.fold_limit > 0 ? std::min(config.fold_limit, total_folds)
                                            : total_folds;
  if (n_folds == 0) throw DataError("dataset has no fold splits");

  int workers = config.workers;
  if (workers == 0)
    workers = std::min<int>(n_folds,
                            std::max(1u, std::thread::hardware_concurrency()));
  workers = std::min(workers, n_folds);

  std::vector<TrainedFold> trained(n_folds);
  std::atomic<int> next{0};
  auto worker_body = [&](bool serial_kernels) {
    std::optional<kernels::SerialScope> guard;
    if (serial_kernels) guard.emplace();
    for (int i = next.fetch_add(1); i < n_folds; i = next.fetch_add(1)) {
      try {
        trained[i] = train_fold(ds, config, i);
      } catch (const std::exception& e) {
        // anything a fold throws becomes a diagnostic, not a process abort
        trained[i].model.reset();
        trained[i].result = FoldResult{};
        trained[i].result.fold = i;
        trained[i].result.diverged = true;
        trained[i].result.diagnostic = e.what();
      }
    }
  };

  if (workers <= 1) {
    worker_body(false);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker_body, true);
    for (auto& t : pool) t.join();
  }

  ExperimentReport report;
  report.dataset = ds.name;
  report.config = config;
  report.splits_from_file = ds.splits.from_file;
  report.split_seed = ds.splits.seed;
  for (auto& tf : trained) {
    report.folds.push_back(tf.result);
    if (tf.result.diverged) report.partial = true;
  }
  std::tie(report.mean_accuracy, report.std_accuracy) =
      recompute_accuracy_stats(report.folds);

  std::vector<const nn::SheafModel*> models;
  for (const auto& tf : trained)
    if (!tf.result.diverged) models.push_back(tf.model.get());
  if (!models.empty()) report.trajectory = layer_trajectory(models, ds.features.values);

  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (keep_folds) *keep_folds = std::move(trained);
  return report;
}

// ---------------------------------------------------------------------------
// report serialization
// ---------------------------------------------------------------------------

namespace {

json train_config_to_json(const TrainConfig& c) {
  json model = json::parse(nn::config_to_json(c.model));
  return json{{"model", model},
              {"lr", c.lr},
              {"weight_decay", c.weight_decay},
              {"epochs", c.epochs},
              {"early_stopping", c.early_stopping},
              {"seed", c.seed},
              {"dataset", c.dataset},
              {"folds", c.fold_limit},
              {"workers", c.workers}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  c.model = nn::config_from_json_string(j.at("model").dump());
  c.lr = j.value("lr", c.lr);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.epochs = j.value("epochs", c.epochs);
  c.early_stopping = j.value("early_stopping", c.early_stopping);
  c.seed = j.value("seed", c.seed);
  c.dataset = j.value("dataset", c.dataset);
  c.fold_limit = j.value("folds", c.fold_limit);
  c.workers = j.value("workers", c.workers);
  return c;
}

json trajectory_to_json(const RayleighTrajectory& t) {
  return json{{"r_sheaf", t.r_sheaf},
              {"r_identity", t.r_identity},
              {"r_sheaf_std", t.r_sheaf_std},
              {"r_identity_std", t.r_identity_std},
              {"fold_count", t.fold_count}};
}

RayleighTrajectory trajectory_from_json(const json& j) {
  RayleighTrajectory t;
  t.r_sheaf = j.at("r_sheaf").get<std::vector<double>>();
  t.r_identity = j.at("r_identity").get<std::vector<double>>();
  t.r_sheaf_std = j.at("r_sheaf_std").get<std::vector<double>>();
  t.r_identity_std = j.at("r_identity_std").get<std::vector<double>>();
  t.fold_count = j.at("fold_count").get<int>();
  return t;
}

}  // namespace

std::string report_to_json(const ExperimentReport& report) {
  json folds = json::array();
  for (const auto& f : report.folds)
    folds.push_back(json{{"fold", f.fold},
                         {"test_accuracy", f.test_accuracy},
                         {"best_val_accuracy", f.best_val_accuracy},
                         {"best_val_loss", f.best_val_loss},
                         {"best_epoch", f.best_epoch},
                         {"epochs_run", f.epochs_run},
                         {"diverged", f.diverged},
                         {"diagnostic", f.diagnostic}});
  const json j{{"dataset", report.dataset},
               {"config", train_config_to_json(report.config)},
               {"folds", folds},
               {"mean_accuracy", report.mean_accuracy},
               {"std_accuracy", report.std_accuracy},
               {"trajectory", trajectory_to_json(report.trajectory)},
               {"partial", report.partial},
               {"splits_from_file", report.splits_from_file},
               {"split_seed", report.split_seed},
               {"wall_seconds", report.wall_seconds}};
  return j.dump(2);
}

ExperimentReport report_from_json(const std::string& text) {
  const json j = json::parse(text);
  ExperimentReport r;
  r.dataset = j.at("dataset").get<std::string>();
  r.config = train_config_from_json(j.at("config"));
  for (const auto& f : j.at("folds")) {
    FoldResult fr;
    fr.fold = f.at("fold").get<int>();
    fr.test_accuracy = f.at("test_accuracy").get<double>();
    fr.best_val_accuracy = f.at("best_val_accuracy").get<double>();
    fr.best_val_loss = f.at("best_val_loss").get<double>();
    fr.best_epoch = f.at("best_epoch").get<int>();
    fr.epochs_run = f.at("epochs_run").get<int>();
    fr.diverged = f.at("diverged").get<bool>();
    fr.diagnostic = f.at("diagnostic").get<std::string>();
    r.folds.push_back(std::move(fr));
  }
  r.mean_accuracy = j.at("mean_accuracy").get<double>();
  r.std_accuracy = j.at("std_accuracy").get<double>();
  r.trajectory = trajectory_from_json(j.at("trajectory"));
  r.partial = j.at("partial").get<bool>();
  r.splits_from_file = j.at("splits_from_file").get<bool>();
  r.split_seed = j.at("split_seed").get<uint64_t>();
  r.wall_seconds = j.at("wall_seconds").get<double>();
  return r;
}

}  // namespace sheafnet::train
