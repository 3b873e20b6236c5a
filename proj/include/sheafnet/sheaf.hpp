#pragma once

#include <memory>
#include <vector>

#include "sheafnet/block_sparse.hpp"
#include "sheafnet/graph.hpp"
#include "sheafnet/matrix.hpp"

namespace sheafnet {

enum class MapKind { general, diagonal, identity };

// Cellular sheaf on a graph: stalk dimension d and one d x d restriction map
// per (node, edge) incidence. Maps are stored per edge in endpoint order;
// the construction helpers fix the orientation to u < v, which makes
// coboundary outputs reproducible (the Laplacian itself is
// orientation-invariant).
struct CellularSheaf {
  std::shared_ptr<const Graph> graph;
  int d = 1;
  MapKind kind = MapKind::identity;
  std::vector<std::pair<int, int>> orientation;  // endpoints of edge e, in stored order
  std::vector<double> maps;                      // 2 * |E| * d*d, [edge][side][row*d+col]

  double* map(int e, int side) {
    return maps.data() + (static_cast<size_t>(e) * 2 + side) * d * d;
  }
  const double* map(int e, int side) const {
    return maps.data() + (static_cast<size_t>(e) * 2 + side) * d * d;
  }
  // Side (0/1) of node u on edge e; u must be an endpoint.
  int side_of(int e, int u) const { return orientation[e].first == u ? 0 : 1; }

  int edge_count() const { return static_cast<int>(orientation.size()); }
  bool all_finite() const {
    for (double v : maps)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

// All restriction maps I_d.
CellularSheaf identity_sheaf(std::shared_ptr<const Graph> g, int d);

// Diagonal maps; diag_entries is |E| x 2d (first d entries = map of the first
// endpoint, last d = second endpoint).
CellularSheaf diagonal_sheaf(std::shared_ptr<const Graph> g, int d, const Matrix& diag_entries);

// Arbitrary maps, laid out as CellularSheaf::maps.
CellularSheaf general_sheaf(std::shared_ptr<const Graph> g, int d, std::vector<double> maps);

// (delta x)_e = F_{u <| e} x_u - F_{v <| e} x_v per the stored orientation.
// X is nd x f; the result is |E|d x f.
Matrix coboundary_apply(const CellularSheaf& sheaf, const Matrix& x);

enum class SheafLaplacianMode { combinatorial, degree_normalized };

// Delta_F = delta^T delta in block-CSR form: diagonal block u is
// sum_e F_{u<|e}^T F_{u<|e}, off-diagonal block (u,v) is -F_{u<|e}^T F_{v<|e}.
// degree_normalized applies D^{-1/2} on both sides, where D is the block
// diagonal of the combinatorial operator and singular blocks use an
// eigenvalue-floored pseudo-inverse square root (floor 1e-12).
BlockSparseOperator assemble_sheaf_laplacian(const CellularSheaf& sheaf, SheafLaplacianMode mode);

// Extends the stalk by one fixed coordinate per enabled flag so the extra
// diagonal entry of F_{u<|e}^T F_{v<|e} is +1 (low-pass) / -1 (high-pass).
// Only identity/diagonal sheaves can be augmented.
CellularSheaf augment_fixed_channels(const CellularSheaf& sheaf, bool add_lp, bool add_hp);

// Eigen-decomposition of a small symmetric matrix by cyclic Jacobi sweeps.
// m is d x d row-major; eigenvalues ascend; eigenvectors are the columns of
// vecs. Used for the pseudo-inverse square roots of diagonal blocks.
void sym_eigen_small(const double* m, int d, std::vector<double>& evals,
                     std::vector<double>& evecs);

// V diag(l > floor ? 1/sqrt(l) : 0) V^T of a symmetric PSD d x d block.
void pinv_sqrt_small(const double* m, int d, double floor, double* out);

}  // namespace sheafnet
