#pragma once

#include <string>
#include <vector>

#include "sheafnet/graph.hpp"
#include "sheafnet/nn.hpp"
#include "sheafnet/spectral.hpp"

namespace sheafnet::train {

struct TrainConfig {
  nn::ModelConfig model;
  double lr = 0.01;
  double weight_decay = 0.0;
  int epochs = 100;
  int early_stopping = 20;  // patience, in epochs without validation improvement
  uint64_t seed = 1;
  std::string dataset;
  int fold_limit = 0;  // 0 = every fold in the splits
  int workers = 0;     // 0 = fold count capped at hardware parallelism

  void validate() const;  // throws nn::ConfigError
};

struct FoldResult {
  int fold = 0;
  double test_accuracy = 0.0;
  double best_val_accuracy = 0.0;
  double best_val_loss = 0.0;
  int best_epoch = 0;   // 1-based epoch whose parameters were kept
  int epochs_run = 0;
  bool diverged = false;
  std::string diagnostic;
};

struct ExperimentReport {
  std::string dataset;
  TrainConfig config;
  std::vector<FoldResult> folds;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;  // population
  RayleighTrajectory trajectory;
  bool partial = false;  // at least one fold diverged
  bool splits_from_file = false;
  uint64_t split_seed = 0;
  double wall_seconds = 0.0;
};

// Trains one fold and returns the model at its best validation epoch.
struct TrainedFold {
  std::unique_ptr<nn::SheafModel> model;
  FoldResult result;
};

TrainedFold train_fold(const Dataset& ds, const TrainConfig& config, int fold_index);

// Full protocol: every fold trained (in parallel worker slots), accuracies
// aggregated as mean +/- population std, Rayleigh trajectories of the kept
// models averaged across folds. Deterministic for a fixed config and seed
// regardless of worker count. When keep_folds is non-null the trained
// per-fold models are moved there (checkpointing, extra analysis).
ExperimentReport run_experiment(const Dataset& ds, const TrainConfig& config,
                                std::vector<TrainedFold>* keep_folds = nullptr);

std::string report_to_json(const ExperimentReport& report);
ExperimentReport report_from_json(const std::string& text);

// Recompute mean/std from the per-fold list (consistency checks).
std::pair<double, double> recompute_accuracy_stats(const std::vector<FoldResult>& folds);

}  // namespace sheafnet::train
