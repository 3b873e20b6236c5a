#pragma once

#include "sheafnet/block_sparse.hpp"
#include "sheafnet/matrix.hpp"

namespace sheafnet::kernels {

// Kernels come in serial and OpenMP flavours with identical per-element
// summation order, so outputs are bit-identical and the serial versions act
// as the reference implementation in tests. Dispatch is controlled per
// thread: fold workers run kernels serially to keep the thread count at the
// fold level.
bool parallel_enabled();
void set_parallel(bool on);  // thread-local

struct SerialScope {
  SerialScope();
  ~SerialScope();
  SerialScope(const SerialScope&) = delete;
  SerialScope& operator=(const SerialScope&) = delete;

 private:
  bool saved_;
};

namespace serial {
void matmul(const Matrix& a, const Matrix& b, Matrix& out);     // out = a * b
void matmul_tn(const Matrix& a, const Matrix& b, Matrix& out);  // out = a^T * b
void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out);  // out = a * b^T
void block_spmm(const BlockSparseOperator& op, const Matrix& x, Matrix& out);
// out rows [u*d, u*d+d) = w (d x d) * x rows [u*d, u*d+d), for every block u.
void stalk_mix(const Matrix& w, const Matrix& x, int d, Matrix& out);
}  // namespace serial

namespace omp {
void matmul(const Matrix& a, const Matrix& b, Matrix& out);
void matmul_tn(const Matrix& a, const Matrix& b, Matrix& out);
void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out);
void block_spmm(const BlockSparseOperator& op, const Matrix& x, Matrix& out);
void stalk_mix(const Matrix& w, const Matrix& x, int d, Matrix& out);
}  // namespace omp

// Dispatching entry points used by the rest of the library.
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Matrix matmul_nt(const Matrix& a, const Matrix& b);
Matrix block_spmm(const BlockSparseOperator& op, const Matrix& x);
Matrix stalk_mix(const Matrix& w, const Matrix& x, int d);

// trace(x^T * op * x), accumulated in fixed order.
double quadratic_trace(const BlockSparseOperator& op, const Matrix& x);
// trace(a^T * b), accumulated in fixed order.
double dot_trace(const Matrix& a, const Matrix& b);

}  // namespace sheafnet::kernels
