// Timing comparison of the serial reference kernels against their OpenMP
// counterparts, plus an agreement check. Sizes roughly match a training
// step on the larger benchmark graphs.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "sheafnet/graph.hpp"
#include "sheafnet/kernels.hpp"
#include "sheafnet/rng.hpp"
#include "sheafnet/sheaf.hpp"

using namespace sheafnet;

namespace {

Matrix random_matrix(int rows, int cols, Rng& rng) {
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = rng.uniform(-1.0, 1.0);
  return m;
}

template <typename F>
double time_best_of(int reps, F&& fn) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
  }
  return best;
}

void report(const char* name, double flops, double t_serial, double t_omp,
            double max_diff) {
  std::printf("%-14s %10.2f ms %10.2f ms %7.2fx %10.2f GF/s  max|diff| %.1e\n", name,
              t_serial * 1e3, t_omp * 1e3, t_serial / t_omp, flops / t_omp / 1e9,
              max_diff);
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  double mx = 0.0;
  for (size_t i = 0; i < a.size(); ++i)
    mx = std::max(mx, std::fabs(a.data()[i] - b.data()[i]));
  return mx;
}

}  // namespace

int main(int argc, char** argv) {
  int n = argc > 1 ? std::atoi(argv[1]) : 2000;
  int f = argc > 2 ? std::atoi(argv[2]) : 96;
  int d = argc > 3 ? std::atoi(argv[3]) : 2;
  const int reps = 5;

#ifdef _OPENMP
  std::printf("OpenMP threads: %d\n", omp_get_max_threads());
#else
  std::printf("built without OpenMP; both columns run serial code\n");
#endif
  std::printf("n = %d, channels = %d, stalk dim = %d, best of %d runs\n\n", n, f, d, reps);
  std::printf("%-14s %13s %13s %8s %15s\n", "kernel", "serial", "omp", "speedup",
              "omp rate");

  Rng rng(2024);

  {
    const Matrix a = random_matrix(n, f, rng);
    const Matrix b = random_matrix(f, f, rng);
    Matrix out_s(n, f), out_p(n, f);
    const double t_s = time_best_of(reps, [&] { kernels::serial::matmul(a, b, out_s); });
    const double t_p = time_best_of(reps, [&] { kernels::omp::matmul(a, b, out_p); });
    report("matmul", 2.0 * n * f * f, t_s, t_p, max_abs_diff(out_s, out_p));
  }
  {
    const Matrix a = random_matrix(n, f, rng);
    const Matrix b = random_matrix(n, f, rng);
    Matrix out_s(f, f), out_p(f, f);
    const double t_s = time_best_of(reps, [&] { kernels::serial::matmul_tn(a, b, out_s); });
    const double t_p = time_best_of(reps, [&] { kernels::omp::matmul_tn(a, b, out_p); });
    report("matmul_tn", 2.0 * n * f * f, t_s, t_p, max_abs_diff(out_s, out_p));
  }
  {
    const Matrix a = random_matrix(n, f, rng);
    const Matrix b = random_matrix(n, f, rng);
    Matrix out_s(n, n), out_p(n, n);
    const double t_s = time_best_of(reps, [&] { kernels::serial::matmul_nt(a, b, out_s); });
    const double t_p = time_best_of(reps, [&] { kernels::omp::matmul_nt(a, b, out_p); });
    report("matmul_nt", 2.0 * n * n * f, t_s, t_p, max_abs_diff(out_s, out_p));
  }
  {
    // sheaf Laplacian of a random graph with ~20n edges
    Rng grng(7);
    std::vector<std::pair<int, int>> edges;
    const double p = std::min(1.0, 20.0 / n);
    for (int u = 0; u < n; ++u)
      for (int v = u + 1; v < n; ++v)
        if (grng.bernoulli(p)) edges.emplace_back(u, v);
    auto g = std::make_shared<Graph>(make_graph(n, edges));
    const BlockSparseOperator op =
        assemble_sheaf_laplacian(identity_sheaf(g, d), SheafLaplacianMode::degree_normalized);
    const Matrix x = random_matrix(n * d, f, rng);
    Matrix out_s(n * d, f), out_p(n * d, f);
    const double t_s = time_best_of(reps, [&] { kernels::serial::block_spmm(op, x, out_s); });
    const double t_p = time_best_of(reps, [&] { kernels::omp::block_spmm(op, x, out_p); });
    report("block_spmm", 2.0 * op.block_count() * d * d * f, t_s, t_p,
           max_abs_diff(out_s, out_p));
  }
  {
    const Matrix w = random_matrix(d, d, rng);
    const Matrix x = random_matrix(n * d, f, rng);
    Matrix out_s(n * d, f), out_p(n * d, f);
    const double t_s =
        time_best_of(reps, [&] { kernels::serial::stalk_mix(w, x, d, out_s); });
    const double t_p = time_best_of(reps, [&] { kernels::omp::stalk_mix(w, x, d, out_p); });
    report("stalk_mix", 2.0 * n * d * d * f, t_s, t_p, max_abs_diff(out_s, out_p));
  }
  return 0;
}
