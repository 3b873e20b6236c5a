#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "sheafnet/block_sparse.hpp"
#include "sheafnet/matrix.hpp"
#include "sheafnet/nn.hpp"

namespace sheafnet {

// trace(X^T op X) / trace(X^T X). Reduces to the classic quotient for a
// single column; the trace form is the channel-permutation-invariant
// extension. Throws on an all-zero X.
double rayleigh_quotient(const BlockSparseOperator& op, const Matrix& x);

// Post-layer Rayleigh quotients of one trained model: entry 0 is the input
// embedding, entry t the state after layer t. r_sheaf uses the model's own
// (layer-local, for learned sheaves) Laplacian; r_identity uses the plain
// identity-sheaf Laplacian of the same stalk width and normalization.
struct ModelTrajectory {
  std::vector<double> r_sheaf;
  std::vector<double> r_identity;
};

ModelTrajectory model_rayleigh_trajectory(const nn::SheafModel& model, const Matrix& features);

// Fold-averaged trajectories (arithmetic mean, population std).
struct RayleighTrajectory {
  std::vector<double> r_sheaf;
  std::vector<double> r_identity;
  std::vector<double> r_sheaf_std;
  std::vector<double> r_identity_std;
  int fold_count = 0;

  int length() const { return static_cast<int>(r_sheaf.size()); }
};

RayleighTrajectory average_trajectories(const std::vector<ModelTrajectory>& folds);

// Convenience wrapper: per-fold forward passes + averaging. Throws when the
// models disagree on layer count or any of them is untrained.
RayleighTrajectory layer_trajectory(const std::vector<const nn::SheafModel*>& fold_models,
                                    const Matrix& features);

// CSV: layer, r_sheaf_mean, r_identity_mean, r_sheaf_std, r_identity_std
void write_rayleigh_csv(const RayleighTrajectory& traj, const std::filesystem::path& path);

// Trend statistic behind the "decays toward zero" clauses: a sequence counts
// as decreasing when final/initial < 0.5 and at least 70% of consecutive
// steps decrease.
struct TrendStatistic {
  double decreasing_fraction = 0.0;
  double final_initial_ratio = 0.0;
  bool decreasing_toward_zero = false;
};

TrendStatistic trend_statistic(const std::vector<double>& values);

struct HypothesisClause {
  std::string name;
  TrendStatistic trend;
  bool consistent = false;
};

// Per-clause consistency of the oversmoothing hypothesis for a trained
// SNN/ISN pair: the SNN's sheaf-space quotient should decay to zero, its
// identity-space quotient should not, the ISN's identity-space quotient
// should decay; additionally reports, per model, the fraction of layers
// where the identity-space quotient sits above the sheaf-space one.
struct HypothesisReport {
  HypothesisClause snn_sheaf_to_zero;
  HypothesisClause snn_identity_not_to_zero;
  HypothesisClause isn_identity_to_zero;
  double snn_identity_above_sheaf_fraction = 0.0;
  double isn_identity_above_sheaf_fraction = 0.0;
  bool all_consistent = false;
};

HypothesisReport hypothesis_report(const RayleighTrajectory& traj_snn,
                                   const RayleighTrajectory& traj_isn);

std::string hypothesis_report_to_json(const HypothesisReport& report);

}  // namespace sheafnet
