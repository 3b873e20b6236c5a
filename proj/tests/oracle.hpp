#pragma once

// Eigen-based reference computations for the test suite. Everything here is
// built from raw definitions (dense coboundary products, dense eigensolves)
// so it stays independent of the library's assembly and matvec paths.

#include <Eigen/Dense>
#include <vector>

#include "sheafnet/block_sparse.hpp"
#include "sheafnet/graph.hpp"
#include "sheafnet/matrix.hpp"
#include "sheafnet/rng.hpp"
#include "sheafnet/sheaf.hpp"

namespace oracle {

using sheafnet::BlockSparseOperator;
using sheafnet::CellularSheaf;
using sheafnet::Graph;
using sheafnet::Matrix;
using sheafnet::Rng;

inline Eigen::MatrixXd to_eigen(const Matrix& m) {
  Eigen::MatrixXd out(m.rows(), m.cols());
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) out(i, j) = m(i, j);
  return out;
}

inline Eigen::MatrixXd to_eigen(const BlockSparseOperator& op) {
  return to_eigen(op.to_dense());
}

inline Matrix from_eigen(const Eigen::MatrixXd& m) {
  Matrix out(static_cast<int>(m.rows()), static_cast<int>(m.cols()));
  for (int i = 0; i < out.rows(); ++i)
    for (int j = 0; j < out.cols(); ++j) out(i, j) = m(i, j);
  return out;
}

// Dense coboundary matrix (|E|d x nd) read straight off the restriction maps.
inline Eigen::MatrixXd dense_coboundary(const CellularSheaf& sheaf) {
  const Graph& g = *sheaf.graph;
  const int d = sheaf.d;
  Eigen::MatrixXd delta = Eigen::MatrixXd::Zero(g.edge_count() * d, g.n * d);
  for (int e = 0; e < g.edge_count(); ++e) {
    const auto [u, v] = sheaf.orientation[e];
    for (int r = 0; r < d; ++r)
      for (int c = 0; c < d; ++c) {
        delta(e * d + r, u * d + c) += sheaf.map(e, 0)[r * d + c];
        delta(e * d + r, v * d + c) -= sheaf.map(e, 1)[r * d + c];
      }
  }
  return delta;
}

// Reference sheaf Laplacian: delta^T delta as a dense product.
inline Eigen::MatrixXd dense_sheaf_laplacian(const CellularSheaf& sheaf) {
  const Eigen::MatrixXd delta = dense_coboundary(sheaf);
  return delta.transpose() * delta;
}

// Dense combinatorial graph Laplacian built from the edge list alone.
inline Eigen::MatrixXd dense_graph_laplacian(const Graph& g) {
  Eigen::MatrixXd lap = Eigen::MatrixXd::Zero(g.n, g.n);
  for (const auto& [u, v] : g.edges) {
    lap(u, u) += 1.0;
    lap(v, v) += 1.0;
    lap(u, v) -= 1.0;
    lap(v, u) -= 1.0;
  }
  return lap;
}

inline Eigen::MatrixXd kron(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

inline double min_eigenvalue(const Eigen::MatrixXd& sym) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  return es.eigenvalues().minCoeff();
}

inline double max_eigenvalue(const Eigen::MatrixXd& sym) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  return es.eigenvalues().maxCoeff();
}

// Orthonormal basis of the (numerical) null space: eigenvectors with
// eigenvalue below tol.
inline Eigen::MatrixXd null_space(const Eigen::MatrixXd& sym, double tol = 1e-8) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  int k = 0;
  for (int i = 0; i < es.eigenvalues().size(); ++i)
    if (es.eigenvalues()(i) < tol) ++k;
  Eigen::MatrixXd basis(sym.rows(), k);
  int col = 0;
  for (int i = 0; i < es.eigenvalues().size(); ++i)
    if (es.eigenvalues()(i) < tol) basis.col(col++) = es.eigenvectors().col(i);
  return basis;
}

inline int kernel_dimension(const Eigen::MatrixXd& sym, double tol = 1e-8) {
  return static_cast<int>(null_space(sym, tol).cols());
}

// G(n, p) graph through the library's own deduplicating constructor.
inline std::shared_ptr<const Graph> random_graph(int n, double p, Rng& rng) {
  std::vector<std::pair<int, int>> edges;
  for (int u = 0; u < n; ++u)
    for (int v = u + 1; v < n; ++v)
      if (rng.bernoulli(p)) edges.emplace_back(u, v);
  return std::make_shared<Graph>(sheafnet::make_graph(n, edges));
}

inline CellularSheaf random_general_sheaf(std::shared_ptr<const Graph> g, int d, Rng& rng) {
  std::vector<double> maps(static_cast<size_t>(g->edge_count()) * 2 * d * d);
  for (double& v : maps) v = rng.uniform(-1.5, 1.5);
  return sheafnet::general_sheaf(std::move(g), d, std::move(maps));
}

// Diagonal sheaf with entries bounded away from zero, so diffusion tests
// converge at a usable rate.
inline CellularSheaf random_diagonal_sheaf(std::shared_ptr<const Graph> g, int d, Rng& rng) {
  Matrix entries(g->edge_count(), 2 * d);
  for (int e = 0; e < entries.rows(); ++e)
    for (int k = 0; k < entries.cols(); ++k) {
      const double mag = rng.uniform(0.4, 1.5);
      entries(e, k) = rng.bernoulli(0.5) ? mag : -mag;
    }
  return sheafnet::diagonal_sheaf(std::move(g), d, entries);
}

inline Matrix random_matrix(int rows, int cols, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = rng.uniform(lo, hi);
  return m;
}

// |a - b| <= tol * max(1, |a|, |b|)
inline bool close_rel(double a, double b, double tol) {
  return std::fabs(a - b) <= tol * std::max({1.0, std::fabs(a), std::fabs(b)});
}

inline double max_abs_diff(const Matrix& a, const Eigen::MatrixXd& b) {
  double mx = 0.0;
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) mx = std::max(mx, std::fabs(a(i, j) - b(i, j)));
  return mx;
}

}  // namespace oracle
