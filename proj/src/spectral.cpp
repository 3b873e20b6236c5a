#include "sheafnet/spectral.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "sheafnet/diffusion.hpp"
#include "sheafnet/kernels.hpp"
#include "sheafnet/sheaf.hpp"

namespace sheafnet {

using json = nlohmann::json;

double rayleigh_quotient(const BlockSparseOperator& op, const Matrix& x) {
  if (x.rows() != op.dim())
    throw std::invalid_argument("rayleigh_quotient: dimension mismatch");
  const double denom = kernels::dot_trace(x, x);
  if (denom <= 0.0)
    throw std::invalid_argument("rayleigh_quotient: zero input signal");
  // shared numerator with the energy (clamped at 0 for kernel elements)
  return dirichlet_energy(op, x) / denom;
}

ModelTrajectory model_rayleigh_trajectory(const nn::SheafModel& model,
                                          const Matrix& features) {
  if (model.epochs_trained() == 0)
    throw std::invalid_argument("layer_trajectory: model has not been trained");

  ad::Tape tape;
  const nn::ForwardResult fwd = model.forward(tape, features, /*training=*/false, nullptr);

  const int D = model.config().effective_d();
  const CellularSheaf plain = identity_sheaf(model.graph(), D);
  const BlockSparseOperator identity_op =
      assemble_sheaf_laplacian(plain, model.config().laplacian_mode());

  const bool learned = model.config().kind == nn::ModelKind::diag_snn;
  const int n_states = static_cast<int>(fwd.hidden_states.size());

  ModelTrajectory traj;
  for (int t = 0; t < n_states; ++t) {
    const Matrix& state = tape.value(fwd.hidden_states[t]);
    double rs;
    if (learned) {
      // state t was the input of layer t's sheaf; the final state reuses the
      // last layer's sheaf
      const int layer = std::min(t, static_cast<int>(fwd.map_a.size()) - 1);
      const BlockSparseOperator op = model.learned_operator(
          tape.value(fwd.map_a[layer]), tape.value(fwd.map_b[layer]));
      rs = rayleigh_quotient(op, state);
    } else {
      rs = rayleigh_quotient(model.fixed_laplacian(), state);
    }
    traj.r_sheaf.push_back(rs);
    traj.r_identity.push_back(rayleigh_quotient(identity_op, state));
  }
  return traj;
}

RayleighTrajectory average_trajectories(const std::vector<ModelTrajectory>& folds) {
  if (folds.empty()) throw std::invalid_argument("average_trajectories: no folds");
  const size_t len = folds.front().r_sheaf.size();
  for (const auto& f : folds)
    if (f.r_sheaf.size() != len || f.r_identity.size() != len)
      throw std::invalid_argument("average_trajectories: layer-count mismatch across folds");

  RayleighTrajectory out;
  out.fold_count = static_cast<int>(folds.size());
  const double k = static_cast<double>(folds.size());
  for (size_t t = 0; t < len; ++t) {
    double ms = 0.0, mi = 0.0;
    for (const auto& f : folds) {
      ms += f.r_sheaf[t];
      mi += f.r_identity[t];
    }
    ms /= k;
    mi /= k;
    double vs = 0.0, vi = 0.0;
    for (const auto& f : folds) {
      vs += (f.r_sheaf[t] - ms) * (f.r_sheaf[t] - ms);
      vi += (f.r_identity[t] - mi) * (f.r_identity[t] - mi);
    }
    out.r_sheaf.push_back(ms);
    out.r_identity.push_back(mi);
    out.r_sheaf_std.push_back(std::sqrt(vs / k));
    out.r_identity_std.push_back(std::sqrt(vi / k));
  }
  return out;
}

RayleighTrajectory layer_trajectory(const std::vector<const nn::SheafModel*>& fold_models,
                                    const Matrix& features) {
  if (fold_models.empty()) throw std::invalid_argument("layer_trajectory: no fold models");
  std::vector<ModelTrajectory> per_fold;
  per_fold.reserve(fold_models.size());
  for (const nn::SheafModel* m : fold_models)
    per_fold.push_back(model_rayleigh_trajectory(*m, features));
  return average_trajectories(per_fold);
}

void write_rayleigh_csv(const RayleighTrajectory& traj, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write trajectory CSV: " + path.string());
  out << "layer,r_sheaf_mean,r_identity_mean,r_sheaf_std,r_identity_std\n";
  out.precision(17);
  for (int t = 0; t < traj.length(); ++t)
    out << t << "," << traj.r_sheaf[t] << "," << traj.r_identity[t] << ","
        << traj.r_sheaf_std[t] << "," << traj.r_identity_std[t] << "\n";
}

TrendStatistic trend_statistic(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("trend_statistic: empty trajectory");
  TrendStatistic st;
  if (values.size() == 1) {
    st.final_initial_ratio = 1.0;
    st.decreasing_fraction = 0.0;
    st.decreasing_toward_zero = false;
    return st;
  }
  int decreasing = 0;
  for (size_t i = 0; i + 1 < values.size(); ++i)
    if (values[i + 1] < values[i]) ++decreasing;
  st.decreasing_fraction =
      static_cast<double>(decreasing) / static_cast<double>(values.size() - 1);
  const double initial = values.front();
  const double final_v = values.back();
  if (initial > 1e-30)
    st.final_initial_ratio = final_v / initial;
  else
    st.final_initial_ratio = final_v <= 1e-30 ? 0.0 : std::numeric_limits<double>::infinity();
  st.decreasing_toward_zero =
      st.final_initial_ratio < 0.5 && st.decreasing_fraction >= 0.7;
  return st;
}

HypothesisReport hypothesis_report(const RayleighTrajectory& traj_snn,
                                   const RayleighTrajectory& traj_isn) {
  if (traj_snn.length() == 0 || traj_isn.length() == 0)
    throw std::invalid_argument("hypothesis_report: empty trajectory");

  HypothesisReport rep;
  rep.snn_sheaf_to_zero.name = "snn_sheaf_energy_to_zero";
  rep.snn_sheaf_to_zero.trend = trend_statistic(traj_snn.r_sheaf);
  rep.snn_sheaf_to_zero.consistent = rep.snn_sheaf_to_zero.trend.decreasing_toward_zero;

  rep.snn_identity_not_to_zero.name = "snn_identity_energy_not_to_zero";
  rep.snn_identity_not_to_zero.trend = trend_statistic(traj_snn.r_identity);
  rep.snn_identity_not_to_zero.consistent =
      !rep.snn_identity_not_to_zero.trend.decreasing_toward_zero;

  rep.isn_identity_to_zero.name = "isn_identity_energy_to_zero";
  rep.isn_identity_to_zero.trend = trend_statistic(traj_isn.r_identity);
  rep.isn_identity_to_zero.consistent = rep.isn_identity_to_zero.trend.decreasing_toward_zero;

  auto above_fraction = [](const RayleighTrajectory& t) {
    int above = 0;
    for (int i = 0; i < t.length(); ++i)
      if (t.r_identity[i] > t.r_sheaf[i]) ++above;
    return static_cast<double>(above) / static_cast<double>(t.length());
  };
  rep.snn_identity_above_sheaf_fraction = above_fraction(traj_snn);
  rep.isn_identity_above_sheaf_fraction = above_fraction(traj_isn);

  rep.all_consistent = rep.snn_sheaf_to_zero.consistent &&
                       rep.snn_identity_not_to_zero.consistent &&
                       rep.isn_identity_to_zero.consistent;
  return rep;
}

namespace {

json clause_to_json(const HypothesisClause& c) {
  return json{{"name", c.name},
              {"decreasing_fraction", c.trend.decreasing_fraction},
              {"final_initial_ratio", c.trend.final_initial_ratio},
              {"consistent", c.consistent}};
}

}  // namespace

std::string hypothesis_report_to_json(const HypothesisReport& report) {
  const json j{{"clauses",
                json::array({clause_to_json(report.snn_sheaf_to_zero),
                             clause_to_json(report.snn_identity_not_to_zero),
                             clause_to_json(report.isn_identity_to_zero)})},
               {"snn_identity_above_sheaf_fraction", report.snn_identity_above_sheaf_fraction},
               {"isn_identity_above_sheaf_fraction", report.isn_identity_above_sheaf_fraction},
               {"all_consistent", report.all_consistent}};
  return j.dump(2);
}

}  // namespace sheafnet
