#include "sheafnet/diffusion.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "sheafnet/kernels.hpp"
#include "sheafnet/rng.hpp"

namespace sheafnet {

double dirichlet_energy(const BlockSparseOperator& op, const Matrix& x) {
  if (x.rows() != op.dim())
    throw std::invalid_argument("dirichlet_energy: dimension mismatch");
  const double e = kernels::quadratic_trace(op, x);
  if (e < -1e-9)
    throw std::runtime_error("dirichlet_energy: quadratic form is significantly negative");
  return e < 0.0 ? 0.0 : e;
}

double kernel_residual(const BlockSparseOperator& op, const Matrix& x) {
  if (x.rows() != op.dim())
    throw std::invalid_argument("kernel_residual: dimension mismatch");
  const Matrix y = kernels::block_spmm(op, x);
  return y.frobenius_norm() / std::max(x.frobenius_norm(), 1e-30);
}

double estimate_lambda_max(const BlockSparseOperator& op, int iterations) {
  const int dim = op.dim();
  if (dim == 0) return 0.0;
  Rng rng(20240915u);
  Matrix v(dim, 1);
  for (int i = 0; i < dim; ++i) v(i, 0) = rng.uniform(-1.0, 1.0);
  double lambda = 0.0;
  for (int it = 0; it < iterations; ++it) {
    Matrix w = kernels::block_spmm(op, v);
    const double nw = w.frobenius_norm();
    if (nw < 1e-300) return 0.0;  // started in the kernel of a zero-ish operator
    lambda = kernels::dot_trace(v, w) / kernels::dot_trace(v, v);
    scale_inplace(w, 1.0 / nw);
    v = std::move(w);
  }
  return lambda;
}

DiffusionTrajectory integrate_diffusion(const BlockSparseOperator& op, const Matrix& x0,
                                        double step, int steps,
                                        const DiffusionOptions& opts) {
  if (x0.rows() != op.dim())
    throw std::invalid_argument("integrate_diffusion: X0 has wrong row count");
  if (step <= 0.0) throw std::invalid_argument("integrate_diffusion: step must be positive");
  const double lmax = estimate_lambda_max(op);
  if (lmax > 0.0 && step >= 2.0 / lmax)
    throw std::invalid_argument("integrate_diffusion: step " + std::to_string(step) +
                                " violates the stability bound 2/lambda_max ~ " +
                                std::to_string(2.0 / lmax));

  DiffusionTrajectory traj;
  Matrix x = x0;
  traj.times.push_back(0.0);
  traj.states.push_back(x);
  traj.energies.push_back(dirichlet_energy(op, x));
  if (opts.track_step_energies) traj.step_energies.push_back(traj.energies.front());

  for (int k = 1; k <= steps; ++k) {
    Matrix dx = kernels::block_spmm(op, x);
    axpy_inplace(x, -step, dx);
    if (!x.all_finite())
      throw std::runtime_error("integrate_diffusion: state diverged at step " +
                               std::to_string(k));
    traj.steps_taken = k;
    const double energy = dirichlet_energy(op, x);
    if (opts.track_step_energies) traj.step_energies.push_back(energy);
    if (k % opts.record_every == 0 || k == steps || energy < opts.energy_threshold) {
      traj.times.push_back(step * k);
      traj.states.push_back(x);
      traj.energies.push_back(energy);
    }
    if (energy < opts.energy_threshold) {
      traj.converged = true;
      break;
    }
  }
  return traj;
}

void write_trajectory_csv(const DiffusionTrajectory& traj, const BlockSparseOperator& op,
                          const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write trajectory CSV: " + path.string());
  out << "time,energy,kernel_residual\n";
  out.precision(17);
  for (size_t i = 0; i < traj.times.size(); ++i)
    out << traj.times[i] << "," << traj.energies[i] << ","
        << kernel_residual(op, traj.states[i]) << "\n";
}

}  // namespace sheafnet
