#pragma once

#include <map>
#include <stdexcept>
#include <utility>
#include <vector>

#include "sheafnet/matrix.hpp"

namespace sheafnet {

// Symmetric nd x nd operator stored as block-CSR: one d x d dense block per
// stored (block-row, block-col) pair, column indices sorted within each row.
// Sheaf Laplacians and graph Laplacians (d = 1) are both stored this way.
struct BlockSparseOperator {
  int n_blocks = 0;
  int d = 1;
  bool symmetric = false;
  std::vector<int> row_ptr;     // n_blocks + 1
  std::vector<int> col_idx;     // one entry per stored block
  std::vector<double> vals;     // d*d doubles per stored block, row-major

  int dim() const { return n_blocks * d; }
  int block_count() const { return static_cast<int>(col_idx.size()); }

  double* block(int slot) { return vals.data() + static_cast<size_t>(slot) * d * d; }
  const double* block(int slot) const {
    return vals.data() + static_cast<size_t>(slot) * d * d;
  }

  // Slot of block (i, j), or -1 when the block is structurally absent.
  int find_slot(int i, int j) const {
    for (int s = row_ptr[i]; s < row_ptr[i + 1]; ++s)
      if (col_idx[s] == j) return s;
    return -1;
  }

  Matrix block_dense(int i, int j) const {
    Matrix b(d, d);
    const int s = find_slot(i, j);
    if (s >= 0) {
      const double* p = block(s);
      for (int r = 0; r < d; ++r)
        for (int c = 0; c < d; ++c) b(r, c) = p[r * d + c];
    }
    return b;
  }

  Matrix to_dense() const {
    Matrix m(dim(), dim());
    for (int i = 0; i < n_blocks; ++i) {
      for (int s = row_ptr[i]; s < row_ptr[i + 1]; ++s) {
        const int j = col_idx[s];
        const double* p = block(s);
        for (int r = 0; r < d; ++r)
          for (int c = 0; c < d; ++c) m(i * d + r, j * d + c) = p[r * d + c];
      }
    }
    return m;
  }

  bool all_finite() const {
    for (double v : vals)
      if (!std::isfinite(v)) return false;
    return true;
  }

  // Exact entrywise check of block(i,j) == block(j,i)^T.
  bool is_symmetric_exact() const;
};

// Accumulating builder keyed by block coordinates. Used where the sparsity
// pattern is not known up front (tests, generic construction); the Laplacian
// assemblers build their CSR structure directly.
class BlockSparseBuilder {
 public:
  BlockSparseBuilder(int n_blocks, int d) : n_blocks_(n_blocks), d_(d) {}

  // blocks_[{i,j}] += b
  void add_block(int i, int j, const Matrix& b) {
    if (b.rows() != d_ || b.cols() != d_) throw std::invalid_argument("block shape");
    auto [it, inserted] =
        blocks_.try_emplace({i, j}, std::vector<double>(static_cast<size_t>(d_) * d_, 0.0));
    double* p = it->second.data();
    for (int r = 0; r < d_; ++r)
      for (int c = 0; c < d_; ++c) p[r * d_ + c] += b(r, c);
  }

  BlockSparseOperator build(bool symmetric) const {
    BlockSparseOperator op;
    op.n_blocks = n_blocks_;
    op.d = d_;
    op.symmetric = symmetric;
    op.row_ptr.assign(n_blocks_ + 1, 0);
    for (const auto& [key, blk] : blocks_) op.row_ptr[key.first + 1]++;
    for (int i = 0; i < n_blocks_; ++i) op.row_ptr[i + 1] += op.row_ptr[i];
    op.col_idx.resize(blocks_.size());
    op.vals.resize(blocks_.size() * static_cast<size_t>(d_) * d_);
    std::vector<int> cursor(op.row_ptr.begin(), op.row_ptr.end() - 1);
    // std::map iteration is already (row, col) sorted.
    for (const auto& [key, blk] : blocks_) {
      const int slot = cursor[key.first]++;
      op.col_idx[slot] = key.second;
      std::copy(blk.begin(), blk.end(), op.vals.begin() + static_cast<size_t>(slot) * d_ * d_);
    }
    return op;
  }

 private:
  int n_blocks_;
  int d_;
  std::map<std::pair<int, int>, std::vector<double>> blocks_;
};

}  // namespace sheafnet
