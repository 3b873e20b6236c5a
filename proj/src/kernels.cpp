#include "sheafnet/kernels.hpp"

#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace sheafnet::kernels {

namespace {
thread_local bool g_parallel = true;

// Below this many multiply-adds the parallel region costs more than it saves.
constexpr long kParallelThreshold = 16 * 1024;

bool use_parallel(long work) {
#ifdef _OPENMP
  return g_parallel && work >= kParallelThreshold;
#else
  (void)work;
  return false;
#endif
}

void check_matmul_shapes(const Matrix& a, const Matrix& b, int am, int an, int bm, int bn) {
  if (an != bm)
    throw std::invalid_argument("matmul: inner dimensions disagree (" + std::to_string(an) +
                                " vs " + std::to_string(bm) + ")");
  (void)a;
  (void)b;
  (void)am;
  (void)bn;
}

inline void matmul_row(const Matrix& a, const Matrix& b, Matrix& out, int i) {
  const int k = a.cols();
  const int n = b.cols();
  double* o = out.row(i);
  for (int j = 0; j < n; ++j) o[j] = 0.0;
  const double* ar = a.row(i);
  for (int l = 0; l < k; ++l) {
    const double av = ar[l];
    if (av == 0.0) continue;
    const double* br = b.row(l);
    for (int j = 0; j < n; ++j) o[j] += av * br[j];
  }
}

// out row i of a^T b: column i of a against all of b.
inline void matmul_tn_row(const Matrix& a, const Matrix& b, Matrix& out, int i) {
  const int m = a.rows();
  const int n = b.cols();
  double* o = out.row(i);
  for (int j = 0; j < n; ++j) o[j] = 0.0;
  for (int l = 0; l < m; ++l) {
    const double av = a(l, i);
    if (av == 0.0) continue;
    const double* br = b.row(l);
    for (int j = 0; j < n; ++j) o[j] += av * br[j];
  }
}

inline void matmul_nt_row(const Matrix& a, const Matrix& b, Matrix& out, int i) {
  const int k = a.cols();
  const int n = b.rows();
  const double* ar = a.row(i);
  double* o = out.row(i);
  for (int j = 0; j < n; ++j) {
    const double* br = b.row(j);
    double s = 0.0;
    for (int l = 0; l < k; ++l) s += ar[l] * br[l];
    o[j] = s;
  }
}

inline void block_spmm_row(const BlockSparseOperator& op, const Matrix& x, Matrix& out, int i) {
  const int d = op.d;
  const int f = x.cols();
  for (int r = 0; r < d; ++r) {
    double* o = out.row(i * d + r);
    for (int j = 0; j < f; ++j) o[j] = 0.0;
  }
  for (int s = op.row_ptr[i]; s < op.row_ptr[i + 1]; ++s) {
    const int j = op.col_idx[s];
    const double* blk = op.block(s);
    for (int r = 0; r < d; ++r) {
      double* o = out.row(i * d + r);
      for (int c = 0; c < d; ++c) {
        const double v = blk[r * d + c];
        if (v == 0.0) continue;
        const double* xr = x.row(j * d + c);
        for (int q = 0; q < f; ++q) o[q] += v * xr[q];
      }
    }
  }
}

inline void stalk_mix_row(const Matrix& w, const Matrix& x, int d, Matrix& out, int u) {
  const int f = x.cols();
  for (int r = 0; r < d; ++r) {
    double* o = out.row(u * d + r);
    for (int j = 0; j < f; ++j) o[j] = 0.0;
    for (int c = 0; c < d; ++c) {
      const double wv = w(r, c);
      if (wv == 0.0) continue;
      const double* xr = x.row(u * d + c);
      for (int j = 0; j < f; ++j) o[j] += wv * xr[j];
    }
  }
}

}  // namespace

bool parallel_enabled() { return g_parallel; }
void set_parallel(bool on) { g_parallel = on; }

SerialScope::SerialScope() : saved_(g_parallel) { g_parallel = false; }
SerialScope::~SerialScope() { g_parallel = saved_; }

namespace serial {

void matmul(const Matrix& a, const Matrix& b, Matrix& out) {
  check_matmul_shapes(a, b, a.rows(), a.cols(), b.rows(), b.cols());
  for (int i = 0; i < a.rows(); ++i) matmul_row(a, b, out, i);
}

void matmul_tn(const Matrix& a, const Matrix& b, Matrix& out) {
  if (a.rows() != b.rows()) throw std::invalid_argument("matmul_tn: row counts disagree");
  for (int i = 0; i < a.cols(); ++i) matmul_tn_row(a, b, out, i);
}

void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out) {
  if (a.cols() != b.cols()) throw std::invalid_argument("matmul_nt: col counts disagree");
  for (int i = 0; i < a.rows(); ++i) matmul_nt_row(a, b, out, i);
}

void block_spmm(const BlockSparseOperator& op, const Matrix& x, Matrix& out) {
  if (x.rows() != op.dim()) throw std::invalid_argument("block_spmm: dimension mismatch");
  for (int i = 0; i < op.n_blocks; ++i) block_spmm_row(op, x, out, i);
}

void stalk_mix(const Matrix& w, const Matrix& x, int d, Matrix& out) {
  if (w.rows() != d || w.cols() != d || x.rows() % d != 0)
    throw std::invalid_argument("stalk_mix: dimension mismatch");
  const int n = x.rows() / d;
  for (int u = 0; u < n; ++u) stalk_mix_row(w, x, d, out, u);
}

}  // namespace serial

namespace omp {

void matmul(const Matrix& a, const Matrix& b, Matrix& out) {
  check_matmul_shapes(a, b, a.rows(), a.cols(), b.rows(), b.cols());
#pragma omp parallel for schedule(static)
  for (int i = 0; i < a.rows(); ++i) matmul_row(a, b, out, i);
}

void matmul_tn(const Matrix& a, const Matrix& b, Matrix& out) {
  if (a.rows() != b.rows()) throw std::invalid_argument("matmul_tn: row counts disagree");
#pragma omp parallel for schedule(static)
  for (int i = 0; i < a.cols(); ++i) matmul_tn_row(a, b, out, i);
}

void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out) {
  if (a.cols() != b.cols()) throw std::invalid_argument("matmul_nt: col counts disagree");
#pragma omp parallel for schedule(static)
  for (int i = 0; i < a.rows(); ++i) matmul_nt_row(a, b, out, i);
}

void block_spmm(const BlockSparseOperator& op, const Matrix& x, Matrix& out) {
  if (x.rows() != op.dim()) throw std::invalid_argument("block_spmm: dimension mismatch");
#pragma omp parallel for schedule(static)
  for (int i = 0; i < op.n_blocks; ++i) block_spmm_row(op, x, out, i);
}

void stalk_mix(const Matrix& w, const Matrix& x, int d, Matrix& out) {
  if (w.rows() != d || w.cols() != d || x.rows() % d != 0)
    throw std::invalid_argument("stalk_mix: dimension mismatch");
  const int n = x.rows() / d;
#pragma omp parallel for schedule(static)
  for (int u = 0; u < n; ++u) stalk_mix_row(w, x, d, out, u);
}

}  // namespace omp

Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.cols());
  const long work = static_cast<long>(a.rows()) * a.cols() * b.cols();
  if (use_parallel(work))
    omp::matmul(a, b, out);
  else
    serial::matmul(a, b, out);
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  Matrix out(a.cols(), b.cols());
  const long work = static_cast<long>(a.rows()) * a.cols() * b.cols();
  if (use_parallel(work))
    omp::matmul_tn(a, b, out);
  else
    serial::matmul_tn(a, b, out);
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.rows());
  const long work = static_cast<long>(a.rows()) * a.cols() * b.rows();
  if (use_parallel(work))
    omp::matmul_nt(a, b, out);
  else
    serial::matmul_nt(a, b, out);
  return out;
}

Matrix block_spmm(const BlockSparseOperator& op, const Matrix& x) {
  Matrix out(op.dim(), x.cols());
  const long work = static_cast<long>(op.block_count()) * op.d * op.d * x.cols();
  if (use_parallel(work))
    omp::block_spmm(op, x, out);
  else
    serial::block_spmm(op, x, out);
  return out;
}

Matrix stalk_mix(const Matrix& w, const Matrix& x, int d) {
  Matrix out(x.rows(), x.cols());
  const long work = static_cast<long>(x.rows()) * d * x.cols();
  if (use_parallel(work))
    omp::stalk_mix(w, x, d, out);
  else
    serial::stalk_mix(w, x, d, out);
  return out;
}

double quadratic_trace(const BlockSparseOperator& op, const Matrix& x) {
  const Matrix y = block_spmm(op, x);
  return dot_trace(x, y);
}

double dot_trace(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("dot_trace: shape mismatch");
  // Fixed (row-major) order keeps the result identical across thread counts.
  const double* pa = a.data();
  const double* pb = b.data();
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += pa[i] * pb[i];
  return s;
}

}  // namespace sheafnet::kernels
