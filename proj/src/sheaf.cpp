#include "sheafnet/sheaf.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "sheafnet/kernels.hpp"

namespace sheafnet {

namespace {

void check_graph(const std::shared_ptr<const Graph>& g) {
  if (!g) throw std::invalid_argument("sheaf requires a graph");
}

// c += a^T b for d x d row-major blocks
void accum_at_b(const double* a, const double* b, int d, double* c) {
  for (int r = 0; r < d; ++r)
    for (int k = 0; k < d; ++k) {
      const double av = a[k * d + r];
      if (av == 0.0) continue;
      for (int col = 0; col < d; ++col) c[r * d + col] += av * b[k * d + col];
    }
}

}  // namespace

CellularSheaf identity_sheaf(std::shared_ptr<const Graph> g, int d) {
  check_graph(g);
  if (d < 1) throw std::invalid_argument("stalk dimension must be >= 1");
  CellularSheaf s;
  s.graph = std::move(g);
  s.d = d;
  s.kind = MapKind::identity;
  s.orientation = s.graph->edges;
  s.maps.assign(static_cast<size_t>(s.graph->edge_count()) * 2 * d * d, 0.0);
  for (int e = 0; e < s.graph->edge_count(); ++e)
    for (int side = 0; side < 2; ++side)
      for (int k = 0; k < d; ++k) s.map(e, side)[k * d + k] = 1.0;
  return s;
}

CellularSheaf diagonal_sheaf(std::shared_ptr<const Graph> g, int d, const Matrix& diag_entries) {
  check_graph(g);
  if (d < 1) throw std::invalid_argument("stalk dimension must be >= 1");
  if (diag_entries.rows() != g->edge_count() || diag_entries.cols() != 2 * d)
    throw std::invalid_argument("diagonal_sheaf: entries must be |E| x 2d");
  CellularSheaf s;
  s.graph = std::move(g);
  s.d = d;
  s.kind = MapKind::diagonal;
  s.orientation = s.graph->edges;
  s.maps.assign(static_cast<size_t>(s.graph->edge_count()) * 2 * d * d, 0.0);
  for (int e = 0; e < s.graph->edge_count(); ++e)
    for (int side = 0; side < 2; ++side)
      for (int k = 0; k < d; ++k) s.map(e, side)[k * d + k] = diag_entries(e, side * d + k);
  return s;
}

CellularSheaf general_sheaf(std::shared_ptr<const Graph> g, int d, std::vector<double> maps) {
  check_graph(g);
  if (d < 1) throw std::invalid_argument("stalk dimension must be >= 1");
  if (maps.size() != static_cast<size_t>(g->edge_count()) * 2 * d * d)
    throw std::invalid_argument("general_sheaf: wrong map buffer size");
  CellularSheaf s;
  s.graph = std::move(g);
  s.d = d;
  s.kind = MapKind::general;
  s.orientation = s.graph->edges;
  s.maps = std::move(maps);
  return s;
}

Matrix coboundary_apply(const CellularSheaf& sheaf, const Matrix& x) {
  const Graph& g = *sheaf.graph;
  const int d = sheaf.d;
  if (x.rows() != g.n * d)
    throw std::invalid_argument("coboundary_apply: X must have n*d rows");
  const int f = x.cols();
  Matrix out(g.edge_count() * d, f);
  const bool par = kernels::parallel_enabled();
#pragma omp parallel for if (par) schedule(static)
  for (int e = 0; e < g.edge_count(); ++e) {
    const auto [u, v] = sheaf.orientation[e];
    const double* fu = sheaf.map(e, 0);
    const double* fv = sheaf.map(e, 1);
    for (int r = 0; r < d; ++r) {
      double* o = out.row(e * d + r);
      for (int c = 0; c < d; ++c) {
        const double a = fu[r * d + c];
        const double b = fv[r * d + c];
        const double* xu = x.row(u * d + c);
        const double* xv = x.row(v * d + c);
        for (int j = 0; j < f; ++j) o[j] += a * xu[j] - b * xv[j];
      }
    }
  }
  return out;
}

BlockSparseOperator assemble_sheaf_laplacian(const CellularSheaf& sheaf,
                                             SheafLaplacianMode mode) {
  if (!sheaf.all_finite())
    throw std::invalid_argument("assemble_sheaf_laplacian: non-finite restriction map entries");
  const Graph& g = *sheaf.graph;
  const int d = sheaf.d;
  const int dd = d * d;

  BlockSparseOperator op;
  op.n_blocks = g.n;
  op.d = d;
  op.symmetric = true;
  op.row_ptr.assign(g.n + 1, 0);
  for (int u = 0; u < g.n; ++u) op.row_ptr[u + 1] = op.row_ptr[u] + 1 + g.degree[u];
  op.col_idx.resize(op.row_ptr[g.n]);
  op.vals.assign(static_cast<size_t>(op.row_ptr[g.n]) * dd, 0.0);

  // Per block row: sorted columns {u} + neighbors, plus the edge behind each
  // off-diagonal column so the fill loop needs no lookups.
  std::vector<int> slot_edge(op.col_idx.size(), -1);
  for (int u = 0; u < g.n; ++u) {
    std::vector<std::pair<int, int>> cols;  // (col, edge or -1 for diagonal)
    cols.reserve(1 + g.degree[u]);
    cols.emplace_back(u, -1);
    for (const auto& end : g.incidence[u]) {
      const auto [a, b] = g.edges[end.edge];
      cols.emplace_back(end.side == 0 ? b : a, end.edge);
    }
    std::sort(cols.begin(), cols.end());
    for (size_t k = 0; k < cols.size(); ++k) {
      op.col_idx[op.row_ptr[u] + static_cast<int>(k)] = cols[k].first;
      slot_edge[op.row_ptr[u] + static_cast<int>(k)] = cols[k].second;
    }
  }

  const bool par = kernels::parallel_enabled();
#pragma omp parallel for if (par) schedule(static)
  for (int u = 0; u < g.n; ++u) {
    for (int s = op.row_ptr[u]; s < op.row_ptr[u + 1]; ++s) {
      const int v = op.col_idx[s];
      double* blk = op.block(s);
      if (v == u) {
        // diagonal: sum over incident edges of F_u^T F_u, in incidence order
        for (const auto& end : g.incidence[u]) {
          const int su = sheaf.side_of(end.edge, u);
          const double* fu = sheaf.map(end.edge, su);
          accum_at_b(fu, fu, d, blk);
        }
      } else {
        const int e = slot_edge[s];
        const int su = sheaf.side_of(e, u);
        const double* fu = sheaf.map(e, su);
        const double* fv = sheaf.map(e, 1 - su);
        for (int k = 0; k < dd; ++k) blk[k] = 0.0;
        accum_at_b(fu, fv, d, blk);
        for (int k = 0; k < dd; ++k) blk[k] = -blk[k];
      }
    }
  }

  if (mode == SheafLaplacianMode::degree_normalized) {
    // S_u = pinv sqrt of the diagonal block, then block(u,v) <- S_u B S_v
    std::vector<double> scalers(static_cast<size_t>(g.n) * dd);
#pragma omp parallel for if (par) schedule(static)
    for (int u = 0; u < g.n; ++u) {
      const int s = op.find_slot(u, u);
      pinv_sqrt_small(op.block(s), d, 1e-12, scalers.data() + static_cast<size_t>(u) * dd);
    }
    // normalize the upper triangle, then mirror transposes into the lower
    // triangle so the operator stays exactly symmetric
#pragma omp parallel for if (par) schedule(static)
    for (int u = 0; u < g.n; ++u) {
      std::vector<double> tmp(dd);
      for (int s = op.row_ptr[u]; s < op.row_ptr[u + 1]; ++s) {
        const int v = op.col_idx[s];
        if (v < u) continue;
        double* blk = op.block(s);
        const double* su = scalers.data() + static_cast<size_t>(u) * dd;
        const double* sv = scalers.data() + static_cast<size_t>(v) * dd;
        // tmp = S_u * blk
        std::fill(tmp.begin(), tmp.end(), 0.0);
        for (int r = 0; r < d; ++r)
          for (int k = 0; k < d; ++k) {
            const double a = su[r * d + k];
            if (a == 0.0) continue;
            for (int c = 0; c < d; ++c) tmp[r * d + c] += a * blk[k * d + c];
          }
        // blk = tmp * S_v
        for (int r = 0; r < d; ++r)
          for (int c = 0; c < d; ++c) {
            double acc = 0.0;
            for (int k = 0; k < d; ++k) acc += tmp[r * d + k] * sv[k * d + c];
            blk[r * d + c] = acc;
          }
        if (v == u) {
          // S D S is symmetric up to rounding; pin it down exactly
          for (int r = 0; r < d; ++r)
            for (int c = r + 1; c < d; ++c) blk[c * d + r] = blk[r * d + c];
        }
      }
    }
#pragma omp parallel for if (par) schedule(static)
    for (int u = 0; u < g.n; ++u) {
      for (int s = op.row_ptr[u]; s < op.row_ptr[u + 1]; ++s) {
        const int v = op.col_idx[s];
        if (v >= u) continue;
        const double* upper = op.block(op.find_slot(v, u));
        double* blk = op.block(s);
        for (int r = 0; r < d; ++r)
          for (int c = 0; c < d; ++c) blk[r * d + c] = upper[c * d + r];
      }
    }
  }
  return op;
}

CellularSheaf augment_fixed_channels(const CellularSheaf& sheaf, bool add_lp, bool add_hp) {
  if (sheaf.kind == MapKind::general)
    throw std::invalid_argument("augment_fixed_channels: only identity/diagonal sheaves");
  if (!add_lp && !add_hp) return sheaf;

  const int d = sheaf.d;
  const int d2 = d + (add_lp ? 1 : 0) + (add_hp ? 1 : 0);
  CellularSheaf out;
  out.graph = sheaf.graph;
  out.d = d2;
  // a high-pass channel flips the sign on one side, so the maps stop being I
  out.kind = (sheaf.kind == MapKind::identity && !add_hp) ? MapKind::identity
                                                          : MapKind::diagonal;
  out.orientation = sheaf.orientation;
  out.maps.assign(static_cast<size_t>(sheaf.edge_count()) * 2 * d2 * d2, 0.0);
  for (int e = 0; e < sheaf.edge_count(); ++e) {
    for (int side = 0; side < 2; ++side) {
      const double* src = sheaf.map(e, side);
      double* dst = out.map(e, side);
      for (int r = 0; r < d; ++r)
        for (int c = 0; c < d; ++c) dst[r * d2 + c] = src[r * d + c];
      int k = d;
      if (add_lp) {
        dst[k * d2 + k] = 1.0;  // +1 on both sides: product +1
        ++k;
      }
      if (add_hp) {
        dst[k * d2 + k] = (side == 0) ? 1.0 : -1.0;  // product -1
        ++k;
      }
    }
  }
  return out;
}

void sym_eigen_small(const double* m, int d, std::vector<double>& evals,
                     std::vector<double>& evecs) {
  std::vector<double> a(m, m + static_cast<size_t>(d) * d);
  evecs.assign(static_cast<size_t>(d) * d, 0.0);
  for (int i = 0; i < d; ++i) evecs[i * d + i] = 1.0;
  evals.assign(d, 0.0);

  if (d == 1) {
    evals[0] = a[0];
    return;
  }

  auto off_norm = [&]() {
    double s = 0.0;
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        if (i != j) s += a[i * d + j] * a[i * d + j];
    return s;
  };

  for (int sweep = 0; sweep < 64 && off_norm() > 1e-28; ++sweep) {
    for (int p = 0; p < d - 1; ++p) {
      for (int q = p + 1; q < d; ++q) {
        const double apq = a[p * d + q];
        if (std::fabs(apq) < 1e-300) continue;
        const double app = a[p * d + p];
        const double aqq = a[q * d + q];
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < d; ++k) {
          const double akp = a[k * d + p];
          const double akq = a[k * d + q];
          a[k * d + p] = c * akp - s * akq;
          a[k * d + q] = s * akp + c * akq;
        }
        for (int k = 0; k < d; ++k) {
          const double apk = a[p * d + k];
          const double aqk = a[q * d + k];
          a[p * d + k] = c * apk - s * aqk;
          a[q * d + k] = s * apk + c * aqk;
        }
        for (int k = 0; k < d; ++k) {
          const double vkp = evecs[k * d + p];
          const double vkq = evecs[k * d + q];
          evecs[k * d + p] = c * vkp - s * vkq;
          evecs[k * d + q] = s * vkp + c * vkq;
        }
      }
    }
  }
  for (int i = 0; i < d; ++i) evals[i] = a[i * d + i];

  // sort ascending, permuting eigenvector columns alongside
  std::vector<int> order(d);
  for (int i = 0; i < d; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](int x, int y) { return evals[x] < evals[y]; });
  std::vector<double> ev_sorted(d);
  std::vector<double> vec_sorted(static_cast<size_t>(d) * d);
  for (int i = 0; i < d; ++i) {
    ev_sorted[i] = evals[order[i]];
    for (int k = 0; k < d; ++k) vec_sorted[k * d + i] = evecs[k * d + order[i]];
  }
  evals = std::move(ev_sorted);
  evecs = std::move(vec_sorted);
}

void pinv_sqrt_small(const double* m, int d, double floor, double* out) {
  std::vector<double> evals, evecs;
  sym_eigen_small(m, d, evals, evecs);
  for (int r = 0; r < d; ++r)
    for (int c = 0; c < d; ++c) {
      double acc = 0.0;
      for (int k = 0; k < d; ++k) {
        if (evals[k] <= floor) continue;
        acc += evecs[r * d + k] * evecs[c * d + k] / std::sqrt(evals[k]);
      }
      out[r * d + c] = acc;
    }
}

}  // namespace sheafnet
