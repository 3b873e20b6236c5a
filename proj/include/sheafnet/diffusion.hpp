#pragma once

#include <filesystem>
#include <vector>

#include "sheafnet/block_sparse.hpp"
#include "sheafnet/matrix.hpp"

namespace sheafnet {

// Explicit-Euler trajectory of dX/dt = -op X.
struct DiffusionTrajectory {
  std::vector<double> times;
  std::vector<Matrix> states;
  std::vector<double> energies;
  std::vector<double> step_energies;  // per-step, only with track_step_energies
  bool converged = false;             // Dirichlet energy dropped below the threshold
  int steps_taken = 0;

  const Matrix& final_state() const { return states.back(); }
};

struct DiffusionOptions {
  int record_every = 1;              // keep every k-th state
  double energy_threshold = 1e-10;   // stop once energy falls below
  bool track_step_energies = false;  // keep the energy of every Euler step
};

// trace(X^T op X), clamped to 0 when rounding pushes it slightly negative.
double dirichlet_energy(const BlockSparseOperator& op, const Matrix& x);

// ||op X||_F / max(||X||_F, 1e-30); zero iff X lies in the kernel.
double kernel_residual(const BlockSparseOperator& op, const Matrix& x);

// Largest-eigenvalue estimate from 20 power iterations with a fixed seeded
// start vector. Used as the Euler stability guard.
double estimate_lambda_max(const BlockSparseOperator& op, int iterations = 20);

// X_{k+1} = X_k - step * op X_k. Throws std::invalid_argument when step
// violates the stability bound 2 / lambda_max and std::runtime_error when the
// state stops being finite.
DiffusionTrajectory integrate_diffusion(const BlockSparseOperator& op, const Matrix& x0,
                                        double step, int steps,
                                        const DiffusionOptions& opts = {});

// CSV with columns time, energy, kernel_residual.
void write_trajectory_csv(const DiffusionTrajectory& traj, const BlockSparseOperator& op,
                          const std::filesystem::path& path);

}  // namespace sheafnet
