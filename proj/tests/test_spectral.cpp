#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "oracle.hpp"
#include "sheafnet/diffusion.hpp"
#include "sheafnet/kernels.hpp"
#include "sheafnet/spectral.hpp"

using namespace sheafnet;

namespace {

std::shared_ptr<const Graph> k2() {
  return std::make_shared<Graph>(make_graph(2, {{0, 1}}));
}

nn::ModelConfig plain_isn(int layers, int hidden = 1) {
  nn::ModelConfig c;
  c.kind = nn::ModelKind::isn;
  c.layers = layers;
  c.d = 1;
  c.hidden_channels = hidden;
  c.act = ad::Activation::identity;
  c.normalised = false;
  c.deg_normalised = false;
  return c;
}

}  // namespace

TEST_CASE("rayleigh quotient basics") {
  auto g = k2();
  const BlockSparseOperator lap = graph_laplacian(*g, LaplacianMode::combinatorial);

  Matrix constant(2, 1);
  constant.fill(2.0);
  CHECK(rayleigh_quotient(lap, constant) == 0.0);

  const Matrix x = Matrix::from_rows({{1.0}, {-1.0}});
  CHECK(rayleigh_quotient(lap, x) == doctest::Approx(2.0).epsilon(1e-12));

  Matrix zero(2, 1);
  CHECK_THROWS_AS(rayleigh_quotient(lap, zero), std::invalid_argument);
}

TEST_CASE("rayleigh quotient lies between extreme eigenvalues") {
  Rng rng(51);
  for (int trial = 0; trial < 10; ++trial) {
    auto g = oracle::random_graph(3 + rng.randint(10), 0.5, rng);
    const int d = 1 + rng.randint(2);
    const CellularSheaf s = oracle::random_general_sheaf(g, d, rng);
    const BlockSparseOperator op =
        assemble_sheaf_laplacian(s, SheafLaplacianMode::combinatorial);
    const Matrix x = oracle::random_matrix(op.dim(), 1 + rng.randint(3), rng);
    const double r = rayleigh_quotient(op, x);
    const Eigen::MatrixXd dense = oracle::to_eigen(op);
    CHECK(r >= oracle::min_eigenvalue(dense) - 1e-9);
    CHECK(r <= oracle::max_eigenvalue(dense) + 1e-9);
  }
}

TEST_CASE("rayleigh quotient is scale invariant and matches dirichlet/trace") {
  Rng rng(52);
  auto g = oracle::random_graph(9, 0.4, rng);
  const BlockSparseOperator op =
      assemble_sheaf_laplacian(identity_sheaf(g, 2), SheafLaplacianMode::combinatorial);
  const Matrix x = oracle::random_matrix(op.dim(), 3, rng);
  const double r = rayleigh_quotient(op, x);

  for (double c : {2.0, -3.5, 0.125}) {
    Matrix cx = x;
    scale_inplace(cx, c);
    CHECK(oracle::close_rel(rayleigh_quotient(op, cx), r, 1e-12));
  }

  const double trace_xx = kernels::dot_trace(x, x);
  CHECK(oracle::close_rel(r, dirichlet_energy(op, x) / trace_xx, 1e-12));
}

TEST_CASE("hand-built 2-layer linear ISN trajectory on K2 matches manual computation") {
  auto g = k2();
  Rng rng(53);
  nn::SheafModel model(plain_isn(2), g, 1, 2, rng);

  // overwrite parameters with hand-picked values
  nn::ModelParams& p = model.params();
  p.enc_w = Matrix::from_rows({{1.0}});
  p.enc_b = Matrix(1, 1);
  p.layers[0].w1 = Matrix::from_rows({{1.0}});
  p.layers[0].w2 = Matrix::from_rows({{2.0}});
  p.layers[1].w1 = Matrix::from_rows({{1.0}});
  p.layers[1].w2 = Matrix::from_rows({{0.5}});
  p.dec_w = oracle::random_matrix(1, 2, rng);
  p.dec_b = Matrix(1, 2);
  model.set_epochs_trained(1);

  // features [1, 0.5]: embedding x0 = [1, 0.5]
  // layer 1: h = Delta(2 x0) = [1, -1], x1 = [0, 1.5]
  // layer 2: h = Delta(0.5 x1) = [-0.75, 0.75], x2 = [0.75, 0.75]
  // R(x0) = 0.25/1.25 = 0.2, R(x1) = 2.25/2.25 = 1, R(x2) = 0
  const Matrix features = Matrix::from_rows({{1.0}, {0.5}});
  const ModelTrajectory traj = model_rayleigh_trajectory(model, features);
  REQUIRE(traj.r_sheaf.size() == 3);
  CHECK(traj.r_sheaf[0] == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(traj.r_sheaf[1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(traj.r_sheaf[2] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("unaugmented ISN: r_sheaf equals r_identity exactly") {
  Rng rng(54);
  auto g = oracle::random_graph(8, 0.4, rng);
  nn::ModelConfig c = plain_isn(3, 4);
  c.act = ad::Activation::elu;
  c.normalised = true;
  nn::SheafModel model(c, g, 5, 3, rng);
  model.set_epochs_trained(1);
  const Matrix features = oracle::random_matrix(8, 5, rng);
  const ModelTrajectory traj = model_rayleigh_trajectory(model, features);
  REQUIRE(traj.r_sheaf.size() == 4);
  for (size_t t = 0; t < traj.r_sheaf.size(); ++t)
    CHECK(traj.r_sheaf[t] == traj.r_identity[t]);  // bitwise
}

TEST_CASE("augmented ISN: the two quotients differ") {
  Rng rng(55);
  auto g = oracle::random_graph(8, 0.5, rng);
  nn::ModelConfig c = plain_isn(2, 3);
  c.add_hp = true;
  c.normalised = true;
  nn::SheafModel model(c, g, 4, 2, rng);
  model.set_epochs_trained(1);
  const ModelTrajectory traj =
      model_rayleigh_trajectory(model, oracle::random_matrix(8, 4, rng));
  bool any_diff = false;
  for (size_t t = 0; t < traj.r_sheaf.size(); ++t)
    if (traj.r_sheaf[t] != traj.r_identity[t]) any_diff = true;
  CHECK(any_diff);
}

TEST_CASE("normalized identity quotients respect the spectral bound 2") {
  Rng rng(56);
  auto g = oracle::random_graph(10, 0.4, rng);
  nn::ModelConfig c = plain_isn(4, 3);
  c.act = ad::Activation::elu;
  c.normalised = true;
  nn::SheafModel model(c, g, 6, 3, rng);
  model.set_epochs_trained(1);
  const ModelTrajectory traj =
      model_rayleigh_trajectory(model, oracle::random_matrix(10, 6, rng));
  for (double r : traj.r_identity) {
    CHECK(r >= 0.0);
    CHECK(r <= 2.0 + 1e-9);
  }
}

TEST_CASE("single-layer model gives a length-2 trajectory") {
  Rng rng(57);
  auto g = k2();
  nn::SheafModel model(plain_isn(1), g, 1, 2, rng);
  model.set_epochs_trained(1);
  const ModelTrajectory traj =
      model_rayleigh_trajectory(model, Matrix::from_rows({{1.0}, {0.25}}));
  CHECK(traj.r_sheaf.size() == 2);
}

TEST_CASE("untrained models are rejected") {
  Rng rng(58);
  auto g = k2();
  nn::SheafModel model(plain_isn(1), g, 1, 2, rng);
  CHECK_THROWS_AS(model_rayleigh_trajectory(model, Matrix::from_rows({{1.0}, {0.5}})),
                  std::invalid_argument);
}

TEST_CASE("fold averaging: mean/std correct and permutation invariant") {
  std::vector<ModelTrajectory> folds(3);
  folds[0].r_sheaf = {1.0, 2.0};
  folds[0].r_identity = {0.5, 0.5};
  folds[1].r_sheaf = {3.0, 4.0};
  folds[1].r_identity = {0.5, 1.5};
  folds[2].r_sheaf = {5.0, 0.0};
  folds[2].r_identity = {0.5, 1.0};

  const RayleighTrajectory avg = average_trajectories(folds);
  CHECK(avg.fold_count == 3);
  CHECK(avg.r_sheaf[0] == doctest::Approx(3.0));
  CHECK(avg.r_sheaf[1] == doctest::Approx(2.0));
  CHECK(avg.r_identity[1] == doctest::Approx(1.0));
  // population std of {1,3,5} is sqrt(8/3)
  CHECK(avg.r_sheaf_std[0] == doctest::Approx(std::sqrt(8.0 / 3.0)));

  std::swap(folds[0], folds[2]);
  const RayleighTrajectory avg2 = average_trajectories(folds);
  for (int t = 0; t < avg.length(); ++t) {
    CHECK(oracle::close_rel(avg.r_sheaf[t], avg2.r_sheaf[t], 1e-12));
    CHECK(oracle::close_rel(avg.r_sheaf_std[t], avg2.r_sheaf_std[t], 1e-12));
  }
}

TEST_CASE("layer-count mismatch across folds rejected") {
  std::vector<ModelTrajectory> folds(2);
  folds[0].r_sheaf = {1.0, 2.0};
  folds[0].r_identity = {1.0, 2.0};
  folds[1].r_sheaf = {1.0};
  folds[1].r_identity = {1.0};
  CHECK_THROWS_AS(average_trajectories(folds), std::invalid_argument);
}

TEST_CASE("trend statistic and hypothesis verdicts") {
  SUBCASE("constructed trajectories satisfying the hypothesis") {
    RayleighTrajectory snn;
    snn.r_sheaf = {1.0, 0.5, 0.1};
    snn.r_identity = {1.0, 0.9, 0.8};
    snn.r_sheaf_std = snn.r_identity_std = {0, 0, 0};
    RayleighTrajectory isn;
    isn.r_sheaf = {1.0, 0.4, 0.05};
    isn.r_identity = {1.0, 0.4, 0.05};
    isn.r_sheaf_std = isn.r_identity_std = {0, 0, 0};

    const HypothesisReport rep = hypothesis_report(snn, isn);
    CHECK(rep.snn_sheaf_to_zero.consistent);
    CHECK(rep.snn_identity_not_to_zero.consistent);
    CHECK(rep.isn_identity_to_zero.consistent);
    CHECK(rep.all_consistent);
  }
  SUBCASE("increasing sheaf quotient violates the first clause") {
    RayleighTrajectory snn;
    snn.r_sheaf = {1.0, 1.1, 1.2};
    snn.r_identity = {1.0, 0.9, 0.8};
    snn.r_sheaf_std = snn.r_identity_std = {0, 0, 0};
    RayleighTrajectory isn = snn;
    const HypothesisReport rep = hypothesis_report(snn, isn);
    CHECK_FALSE(rep.snn_sheaf_to_zero.consistent);
    CHECK_FALSE(rep.all_consistent);
  }
  SUBCASE("empty trajectories rejected") {
    RayleighTrajectory empty;
    CHECK_THROWS_AS(hypothesis_report(empty, empty), std::invalid_argument);
  }
}

TEST_CASE("hypothesis JSON shape") {
  RayleighTrajectory snn;
  snn.r_sheaf = {1.0, 0.4};
  snn.r_identity = {1.0, 0.9};
  snn.r_sheaf_std = snn.r_identity_std = {0, 0};
  const HypothesisReport rep = hypothesis_report(snn, snn);
  const auto j = nlohmann::json::parse(hypothesis_report_to_json(rep));
  CHECK(j.at("clauses").size() == 3);
  CHECK(j.at("clauses")[0].contains("consistent"));
  CHECK(j.contains("all_consistent"));
}

TEST_CASE("trajectory CSV export") {
  RayleighTrajectory traj;
  traj.r_sheaf = {1.0, 0.5};
  traj.r_identity = {1.0, 0.9};
  traj.r_sheaf_std = {0.1, 0.05};
  traj.r_identity_std = {0.1, 0.02};
  traj.fold_count = 2;
  const auto path = std::filesystem::temp_directory_path() / "sheafnet_ray_test.csv";
  write_rayleigh_csv(traj, path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "layer,r_sheaf_mean,r_identity_mean,r_sheaf_std,r_identity_std");
  std::filesystem::remove(path);
}
