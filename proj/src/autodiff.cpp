#include "sheafnet/autodiff.hpp"

#include <cmath>
#include <stdexcept>

#include "sheafnet/kernels.hpp"

namespace sheafnet::ad {

Activation activation_from_string(const std::string& s) {
  if (s == "identity") return Activation::identity;
  if (s == "relu") return Activation::relu;
  if (s == "elu") return Activation::elu;
  if (s == "tanh") return Activation::tanh;
  throw std::invalid_argument("unknown activation: " + s);
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::elu: return "elu";
    case Activation::tanh: return "tanh";
  }
  return "?";
}

namespace {

double act_forward(Activation act, double x) {
  switch (act) {
    case Activation::identity: return x;
    case Activation::relu: return x > 0.0 ? x : 0.0;
    case Activation::elu: return x > 0.0 ? x : std::expm1(x);
    case Activation::tanh: return std::tanh(x);
  }
  return x;
}

double act_derivative(Activation act, double x) {
  switch (act) {
    case Activation::identity: return 1.0;
    case Activation::relu: return x > 0.0 ? 1.0 : 0.0;
    case Activation::elu: return x > 0.0 ? 1.0 : std::exp(x);
    case Activation::tanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
  }
  return 1.0;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.rows != b.rows || a.cols != b.cols)
    throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

}  // namespace

Matrix& Tape::grad_buffer(int id) {
  Node& n = nodes_[id];
  if (n.grad.empty() && !n.value.empty()) n.grad = Matrix(n.value.rows(), n.value.cols());
  return n.grad;
}

const Matrix& Tape::grad(Tensor t) {
  Node& n = nodes_[t.id];
  if (n.grad.empty()) {
    zero_ = Matrix(n.value.rows(), n.value.cols());
    return zero_;
  }
  return n.grad;
}

Tensor Tape::emplace(Matrix value, bool requires_grad, std::vector<int> inputs,
                     std::unique_ptr<OpBase> op) {
  const int id = static_cast<int>(nodes_.size());
  for (int in : inputs)
    if (in < 0 || in >= id)
      throw std::runtime_error("tape cycle detected: node references a later node");
  Tensor t{id, value.rows(), value.cols()};
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.inputs = std::move(inputs);
  n.op = std::move(op);
  nodes_.push_back(std::move(n));
  return t;
}

Tensor Tape::input(const Matrix& value) { return emplace(value, true, {}, nullptr); }
Tensor Tape::constant(const Matrix& value) { return emplace(value, false, {}, nullptr); }

// ---------------------------------------------------------------------------
// elementwise / linear ops
// ---------------------------------------------------------------------------

namespace {

struct AddOp : OpBase {
  void backward(Tape& t, int out) override {
    const Matrix& g = t.node(out).grad;
    for (int k = 0; k < 2; ++k) {
      const int in = t.node(out).inputs[k];
      if (t.node(in).requires_grad) add_inplace(t.grad_buffer(in), g);
    }
  }
};

struct SubOp : OpBase {
  void backward(Tape& t, int out) override {
    const Matrix& g = t.node(out).grad;
    const int a = t.node(out).inputs[0];
    const int b = t.node(out).inputs[1];
    if (t.node(a).requires_grad) add_inplace(t.grad_buffer(a), g);
    if (t.node(b).requires_grad) axpy_inplace(t.grad_buffer(b), -1.0, g);
  }
};

struct ScaleOp : OpBase {
  explicit ScaleOp(double c) : c(c) {}
  double c;
  void backward(Tape& t, int out) override {
    const int a = t.node(out).inputs[0];
    if (t.node(a).requires_grad) axpy_inplace(t.grad_buffer(a), c, t.node(out).grad);
  }
};

struct ScaleByOp : OpBase {
  void backward(Tape& t, int out) override {
    const Matrix& g = t.node(out).grad;
    const int x = t.node(out).inputs[0];
    const int s = t.node(out).inputs[1];
    const double sv = t.node(s).value(0, 0);
    if (t.node(x).requires_grad) axpy_inplace(t.grad_buffer(x), sv, g);
    if (t.node(s).requires_grad)
      t.grad_buffer(s)(0, 0) += kernels::dot_trace(t.node(x).value, g);
  }
};

struct MatmulOp : OpBase {
  void backward(Tape& t, int out) override {
    const Matrix& g = t.node(out).grad;
    const int a = t.node(out).inputs[0];
    const int b = t.node(out).inputs[1];
    if (t.node(a).requires_grad)
      add_inplace(t.grad_buffer(a), kernels::matmul_nt(g, t.node(b).value));
    if (t.node(b).requires_grad)
      add_inplace(t.grad_buffer(b), kernels::matmul_tn(t.node(a).value, g));
  }
};

struct AddBiasOp : OpBase {
  void backward(Tape& t, int out) override {
    const Matrix& g = t.node(out).grad;
    const int a = t.node(out).inputs[0];
    const int bias = t.node(out).inputs[1];
    if (t.node(a).requires_grad) add_inplace(t.grad_buffer(a), g);
    if (t.node(bias).requires_grad) {
      Matrix& gb = t.grad_buffer(bias);
      for (int i = 0; i < g.rows(); ++i) {
        const double* gr = g.row(i);
        for (int j = 0; j < g.cols(); ++j) gb(0, j) += gr[j];
      }
    }
  }
};

struct ActivationOp : OpBase {
  explicit ActivationOp(Activation act) : act(act) {}
  Activation act;
  void backward(Tape& t, int out) override {
    const Matrix& g = t.node(out).grad;
    const int a = t.node(out).inputs[0];
    if (!t.node(a).requires_grad) return;
    const Matrix& x = t.node(a).value;
    Matrix& gx = t.grad_buffer(a);
    const double* px = x.data();
    const double* pg = g.data();
    double* pgx = gx.data();
    for (size_t i = 0; i < x.size(); ++i) pgx[i] += pg[i] * act_derivative(act, px[i]);
  }
};

struct ConcatColsOp : OpBase {
  void backward(Tape& t, int out) override {
    const Matrix& g = t.node(out).grad;
    const int a = t.node(out).inputs[0];
    const int b = t.node(out).inputs[1];
    const int ca = t.node(a).value.cols();
    if (t.node(a).requires_grad) {
      Matrix& ga = t.grad_buffer(a);
      for (int i = 0; i < g.rows(); ++i)
        for (int j = 0; j < ca; ++j) ga(i, j) += g(i, j);
    }
    if (t.node(b).requires_grad) {
      Matrix& gb = t.grad_buffer(b);
      const int cb = t.node(b).value.cols();
      for (int i = 0; i < g.rows(); ++i)
        for (int j = 0; j < cb; ++j) gb(i, j) += g(i, ca + j);
    }
  }
};

struct SliceColsOp : OpBase {
  SliceColsOp(int begin, int end) : begin(begin), end(end) {}
  int begin, end;
  void backward(Tape& t, int out) override {
    const Matrix& g = t.node(out).grad;
    const int a = t.node(out).inputs[0];
    if (!t.node(a).requires_grad) return;
    Matrix& ga = t.grad_buffer(a);
    for (int i = 0; i < g.rows(); ++i)
      for (int j = begin; j < end; ++j) ga(i, j) += g(i, j - begin);
  }
};

struct DropoutOp : OpBase {
  Matrix mask;  // entries 0 or 1/(1-p)
  void backward(Tape& t, int out) override {
    const Matrix& g = t.node(out).grad;
    const int a = t.node(out).inputs[0];
    if (!t.node(a).requires_grad) return;
    Matrix& ga = t.grad_buffer(a);
    const double* pm = mask.data();
    const double* pg = g.data();
    double* pga = ga.data();
    for (size_t i = 0; i < mask.size(); ++i) pga[i] += pg[i] * pm[i];
  }
};

struct SpmmOp : OpBase {
  explicit SpmmOp(const BlockSparseOperator* op) : op(op) {}
  const BlockSparseOperator* op;
  void backward(Tape& t, int out) override {
    const int x = t.node(out).inputs[0];
    if (!t.node(x).requires_grad) return;
    // operator is symmetric, so d(op x)/dx pulls back through op itself
    add_inplace(t.grad_buffer(x), kernels::block_spmm(*op, t.node(out).grad));
  }
};

struct StalkMixOp : OpBase {
  explicit StalkMixOp(int d) : d(d) {}
  int d;
  void backward(Tape& t, int out) override {
    const Matrix& g = t.node(out).grad;
    const int w = t.node(out).inputs[0];
    const int x = t.node(out).inputs[1];
    const Matrix& xv = t.node(x).value;
    const Matrix& wv = t.node(w).value;
    const int n = xv.rows() / d;
    const int f = xv.cols();
    if (t.node(w).requires_grad) {
      // dW += sum_u g_u x_u^T, accumulated in node order
      Matrix& gw = t.grad_buffer(w);
      for (int u = 0; u < n; ++u)
        for (int r = 0; r < d; ++r) {
          const double* gr = g.row(u * d + r);
          for (int c = 0; c < d; ++c) {
            const double* xr = xv.row(u * d + c);
            double acc = 0.0;
            for (int j = 0; j < f; ++j) acc += gr[j] * xr[j];
            gw(r, c) += acc;
          }
        }
    }
    if (t.node(x).requires_grad) {
      // dx_u += W^T g_u
      Matrix& gx = t.grad_buffer(x);
      const bool par = kernels::parallel_enabled();
#pragma omp parallel for if (par) schedule(static)
      for (int u = 0; u < n; ++u)
        for (int r = 0; r < d; ++r) {
          double* o = gx.row(u * d + r);
          for (int c = 0; c < d; ++c) {
            const double w_cr = wv(c, r);
            if (w_cr == 0.0) continue;
            const double* gr = g.row(u * d + c);
            for (int j = 0; j < f; ++j) o[j] += w_cr * gr[j];
          }
        }
    }
  }
};

struct StackStalksOp : OpBase {
  explicit StackStalksOp(int d) : d(d) {}
  int d;
  void backward(Tape& t, int out) override {
    const Matrix& g = t.node(out).grad;  // nd x f
    const int a = t.node(out).inputs[0];
    if (!t.node(a).requires_grad) return;
    Matrix& ga = t.grad_buffer(a);  // n x (d f)
    const int f = g.cols();
    const int n = ga.rows();
    for (int u = 0; u < n; ++u)
      for (int k = 0; k < d; ++k)
        for (int j = 0; j < f; ++j) ga(u, k * f + j) += g(u * d + k, j);
  }
};

struct UnstackStalksOp : OpBase {
  explicit UnstackStalksOp(int d) : d(d) {}
  int d;
  void backward(Tape& t, int out) override {
    const Matrix& g = t.node(out).grad;  // n x (d f)
    const int a = t.node(out).inputs[0];
    if (!t.node(a).requires_grad) return;
    Matrix& ga = t.grad_buffer(a);  // nd x f
    const int f = ga.cols();
    const int n = g.rows();
    for (int u = 0; u < n; ++u)
      for (int k = 0; k < d; ++k)
        for (int j = 0; j < f; ++j) ga(u * d + k, j) += g(u, k * f + j);
  }
};

struct GatherPairsOp : OpBase {
  GatherPairsOp(const Graph* g, bool reversed) : graph(g), reversed(reversed) {}
  const Graph* graph;
  bool reversed;
  void backward(Tape& t, int out) override {
    const Matrix& g = t.node(out).grad;  // E x 2m
    const int a = t.node(out).inputs[0];
    if (!t.node(a).requires_grad) return;
    Matrix& ga = t.grad_buffer(a);  // n x m
    const int m = ga.cols();
    const bool par = kernels::parallel_enabled();
#pragma omp parallel for if (par) schedule(static)
    for (int u = 0; u < graph->n; ++u) {
      double* o = ga.row(u);
      for (const auto& end : graph->incidence[u]) {
        const int half = reversed ? 1 - end.side : end.side;
        const double* gr = g.row(end.edge) + half * m;
        for (int j = 0; j < m; ++j) o[j] += gr[j];
      }
    }
  }
};

struct ScatterSquareSumsOp : OpBase {
  explicit ScatterSquareSumsOp(const Graph* g) : graph(g) {}
  const Graph* graph;
  void backward(Tape& t, int out) override {
    const Matrix& g = t.node(out).grad;  // nD x 1
    const int a = t.node(out).inputs[0];
    const int b = t.node(out).inputs[1];
    const Matrix& av = t.node(a).value;
    const Matrix& bv = t.node(b).value;
    const int D = av.cols();
    const bool par = kernels::parallel_enabled();
    if (t.node(a).requires_grad || t.node(b).requires_grad) {
      Matrix& ga = t.grad_buffer(a);
      Matrix& gb = t.grad_buffer(b);
#pragma omp parallel for if (par) schedule(static)
      for (int e = 0; e < graph->edge_count(); ++e) {
        const auto [u, v] = graph->edges[e];
        for (int k = 0; k < D; ++k) {
          ga(e, k) += 2.0 * av(e, k) * g(u * D + k, 0);
          gb(e, k) += 2.0 * bv(e, k) * g(v * D + k, 0);
        }
      }
    }
  }
};

struct RsqrtFloorOp : OpBase {
  explicit RsqrtFloorOp(double floor) : floor(floor) {}
  double floor;
  void backward(Tape& t, int out) override {
    const Matrix& g = t.node(out).grad;
    const int a = t.node(out).inputs[0];
    if (!t.node(a).requires_grad) return;
    const Matrix& v = t.node(a).value;
    Matrix& ga = t.grad_buffer(a);
    const double* pv = v.data();
    const double* pg = g.data();
    double* pga = ga.data();
    for (size_t i = 0; i < v.size(); ++i) {
      if (pv[i] <= floor) continue;
      pga[i] += pg[i] * (-0.5 / (pv[i] * std::sqrt(pv[i])));
    }
  }
};

struct RowScaleOp : OpBase {
  void backward(Tape& t, int out) override {
    const Matrix& g = t.node(out).grad;
    const int x = t.node(out).inputs[0];
    const int s = t.node(out).inputs[1];
    const Matrix& xv = t.node(x).value;
    const Matrix& sv = t.node(s).value;
    const int f = xv.cols();
    if (t.node(x).requires_grad) {
      Matrix& gx = t.grad_buffer(x);
      const bool par = kernels::parallel_enabled();
#pragma omp parallel for if (par) schedule(static)
      for (int i = 0; i < xv.rows(); ++i) {
        const double si = sv(i, 0);
        double* o = gx.row(i);
        const double* gr = g.row(i);
        for (int j = 0; j < f; ++j) o[j] += gr[j] * si;
      }
    }
    if (t.node(s).requires_grad) {
      Matrix& gs = t.grad_buffer(s);
      for (int i = 0; i < xv.rows(); ++i) {
        const double* gr = g.row(i);
        const double* xr = xv.row(i);
        double acc = 0.0;
        for (int j = 0; j < f; ++j) acc += gr[j] * xr[j];
        gs(i, 0) += acc;
      }
    }
  }
};

struct DiagSheafApplyOp : OpBase {
  explicit DiagSheafApplyOp(const Graph* g) : graph(g) {}
  const Graph* graph;
  void backward(Tape& t, int out) override {
    const Matrix& g = t.node(out).grad;  // nD x f
    const int a = t.node(out).inputs[0];
    const int b = t.node(out).inputs[1];
    const int y = t.node(out).inputs[2];
    const Matrix& av = t.node(a).value;
    const Matrix& bv = t.node(b).value;
    const Matrix& yv = t.node(y).value;
    const int D = av.cols();
    const int f = yv.cols();
    const bool par = kernels::parallel_enabled();

    if (t.node(a).requires_grad || t.node(b).requires_grad) {
      Matrix& ga = t.grad_buffer(a);
      Matrix& gb = t.grad_buffer(b);
#pragma omp parallel for if (par) schedule(static)
      for (int e = 0; e < graph->edge_count(); ++e) {
        const auto [u, v] = graph->edges[e];
        for (int k = 0; k < D; ++k) {
          const double ak = av(e, k);
          const double bk = bv(e, k);
          const double* yu = yv.row(u * D + k);
          const double* yvr = yv.row(v * D + k);
          const double* gu = g.row(u * D + k);
          const double* gv = g.row(v * D + k);
          double da = 0.0, db = 0.0;
          for (int j = 0; j < f; ++j) {
            da += gu[j] * (2.0 * ak * yu[j] - bk * yvr[j]) - gv[j] * bk * yu[j];
            db += gv[j] * (2.0 * bk * yvr[j] - ak * yu[j]) - gu[j] * ak * yvr[j];
          }
          ga(e, k) += da;
          gb(e, k) += db;
        }
      }
    }
    if (t.node(y).requires_grad) {
      Matrix& gy = t.grad_buffer(y);
#pragma omp parallel for if (par) schedule(static)
      for (int u = 0; u < graph->n; ++u) {
        for (const auto& end : graph->incidence[u]) {
          const auto [p, q] = graph->edges[end.edge];
          const int other = (end.side == 0) ? q : p;
          for (int k = 0; k < D; ++k) {
            const double self_c = (end.side == 0) ? av(end.edge, k) : bv(end.edge, k);
            const double other_c = (end.side == 0) ? bv(end.edge, k) : av(end.edge, k);
            double* o = gy.row(u * D + k);
            const double* gself = g.row(u * D + k);
            const double* gother = g.row(other * D + k);
            for (int j = 0; j < f; ++j)
              o[j] += self_c * self_c * gself[j] - self_c * other_c * gother[j];
          }
        }
      }
    }
  }
};

struct SoftmaxCrossEntropyOp : OpBase {
  const std::vector<int>* labels;
  const std::vector<int>* indices;
  Matrix probs;  // |indices| x c softmax rows, saved by forward
  void backward(Tape& t, int out) override {
    const double g = t.node(out).grad(0, 0);
    const int logits = t.node(out).inputs[0];
    if (!t.node(logits).requires_grad) return;
    Matrix& gl = t.grad_buffer(logits);
    const int c = gl.cols();
    const double scale = g / static_cast<double>(indices->size());
    for (size_t r = 0; r < indices->size(); ++r) {
      const int i = (*indices)[r];
      double* o = gl.row(i);
      const double* p = probs.row(static_cast<int>(r));
      for (int j = 0; j < c; ++j) o[j] += scale * p[j];
      o[(*labels)[i]] -= scale;
    }
  }
};

}  // namespace

// ---------------------------------------------------------------------------
// forward builders
// ---------------------------------------------------------------------------

Tensor Tape::add(Tensor a, Tensor b) {
  check_same_shape(a, b, "add");
  Matrix out = node(a.id).value;
  add_inplace(out, node(b.id).value);
  const bool rg = node(a.id).requires_grad || node(b.id).requires_grad;
  return emplace(std::move(out), rg, {a.id, b.id}, std::make_unique<AddOp>());
}

Tensor Tape::sub(Tensor a, Tensor b) {
  check_same_shape(a, b, "sub");
  Matrix out = node(a.id).value;
  axpy_inplace(out, -1.0, node(b.id).value);
  const bool rg = node(a.id).requires_grad || node(b.id).requires_grad;
  return emplace(std::move(out), rg, {a.id, b.id}, std::make_unique<SubOp>());
}

Tensor Tape::scale(Tensor a, double c) {
  Matrix out = node(a.id).value;
  scale_inplace(out, c);
  return emplace(std::move(out), node(a.id).requires_grad, {a.id},
                 std::make_unique<ScaleOp>(c));
}

Tensor Tape::scale_by(Tensor x, Tensor s) {
  if (s.rows != 1 || s.cols != 1) throw std::invalid_argument("scale_by: s must be 1x1");
  Matrix out = node(x.id).value;
  scale_inplace(out, node(s.id).value(0, 0));
  const bool rg = node(x.id).requires_grad || node(s.id).requires_grad;
  return emplace(std::move(out), rg, {x.id, s.id}, std::make_unique<ScaleByOp>());
}

Tensor Tape::matmul(Tensor a, Tensor b) {
  Matrix out = kernels::matmul(node(a.id).value, node(b.id).value);
  const bool rg = node(a.id).requires_grad || node(b.id).requires_grad;
  return emplace(std::move(out), rg, {a.id, b.id}, std::make_unique<MatmulOp>());
}

Tensor Tape::add_bias(Tensor a, Tensor bias) {
  if (bias.rows != 1 || bias.cols != a.cols)
    throw std::invalid_argument("add_bias: bias must be 1 x cols(a)");
  Matrix out = node(a.id).value;
  const Matrix& bv = node(bias.id).value;
  for (int i = 0; i < out.rows(); ++i) {
    double* o = out.row(i);
    for (int j = 0; j < out.cols(); ++j) o[j] += bv(0, j);
  }
  const bool rg = node(a.id).requires_grad || node(bias.id).requires_grad;
  return emplace(std::move(out), rg, {a.id, bias.id}, std::make_unique<AddBiasOp>());
}

Tensor Tape::activation(Tensor a, Activation act) {
  Matrix out = node(a.id).value;
  double* p = out.data();
  for (size_t i = 0; i < out.size(); ++i) p[i] = act_forward(act, p[i]);
  return emplace(std::move(out), node(a.id).requires_grad, {a.id},
                 std::make_unique<ActivationOp>(act));
}

Tensor Tape::concat_cols(Tensor a, Tensor b) {
  if (a.rows != b.rows) throw std::invalid_argument("concat_cols: row mismatch");
  const Matrix& av = node(a.id).value;
  const Matrix& bv = node(b.id).value;
  Matrix out(a.rows, a.cols + b.cols);
  for (int i = 0; i < a.rows; ++i) {
    double* o = out.row(i);
    const double* pa = av.row(i);
    const double* pb = bv.row(i);
    for (int j = 0; j < a.cols; ++j) o[j] = pa[j];
    for (int j = 0; j < b.cols; ++j) o[a.cols + j] = pb[j];
  }
  const bool rg = node(a.id).requires_grad || node(b.id).requires_grad;
  return emplace(std::move(out), rg, {a.id, b.id}, std::make_unique<ConcatColsOp>());
}

Tensor Tape::slice_cols(Tensor a, int begin, int end) {
  if (begin < 0 || end > a.cols || begin >= end)
    throw std::invalid_argument("slice_cols: bad range");
  const Matrix& av = node(a.id).value;
  Matrix out(a.rows, end - begin);
  for (int i = 0; i < a.rows; ++i)
    for (int j = begin; j < end; ++j) out(i, j - begin) = av(i, j);
  return emplace(std::move(out), node(a.id).requires_grad, {a.id},
                 std::make_unique<SliceColsOp>(begin, end));
}

Tensor Tape::dropout(Tensor a, double p, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout: p must be in [0, 1)");
  auto op = std::make_unique<DropoutOp>();
  op->mask = Matrix(a.rows, a.cols);
  const double keep_scale = 1.0 / (1.0 - p);
  double* pm = op->mask.data();
  for (size_t i = 0; i < op->mask.size(); ++i) pm[i] = rng.bernoulli(p) ? 0.0 : keep_scale;
  Matrix out = node(a.id).value;
  double* po = out.data();
  for (size_t i = 0; i < out.size(); ++i) po[i] *= pm[i];
  return emplace(std::move(out), node(a.id).requires_grad, {a.id}, std::move(op));
}

Tensor Tape::spmm(const BlockSparseOperator* op, Tensor x) {
  if (!op->symmetric)
    throw std::invalid_argument("spmm: operator must be symmetric");
  Matrix out = kernels::block_spmm(*op, node(x.id).value);
  return emplace(std::move(out), node(x.id).requires_grad, {x.id},
                 std::make_unique<SpmmOp>(op));
}

Tensor Tape::stalk_mix(Tensor w, Tensor x, int d) {
  Matrix out = kernels::stalk_mix(node(w.id).value, node(x.id).value, d);
  const bool rg = node(w.id).requires_grad || node(x.id).requires_grad;
  return emplace(std::move(out), rg, {w.id, x.id}, std::make_unique<StalkMixOp>(d));
}

Tensor Tape::stack_stalks(Tensor x, int d) {
  if (x.cols % d != 0) throw std::invalid_argument("stack_stalks: cols not divisible by d");
  const Matrix& xv = node(x.id).value;
  const int f = x.cols / d;
  Matrix out(x.rows * d, f);
  for (int u = 0; u < x.rows; ++u)
    for (int k = 0; k < d; ++k)
      for (int j = 0; j < f; ++j) out(u * d + k, j) = xv(u, k * f + j);
  return emplace(std::move(out), node(x.id).requires_grad, {x.id},
                 std::make_unique<StackStalksOp>(d));
}

Tensor Tape::unstack_stalks(Tensor x, int d) {
  if (x.rows % d != 0) throw std::invalid_argument("unstack_stalks: rows not divisible by d");
  const Matrix& xv = node(x.id).value;
  const int n = x.rows / d;
  Matrix out(n, d * x.cols);
  for (int u = 0; u < n; ++u)
    for (int k = 0; k < d; ++k)
      for (int j = 0; j < x.cols; ++j) out(u, k * x.cols + j) = xv(u * d + k, j);
  return emplace(std::move(out), node(x.id).requires_grad, {x.id},
                 std::make_unique<UnstackStalksOp>(d));
}

Tensor Tape::gather_pairs(Tensor x, const Graph* g, bool reversed) {
  if (x.rows != g->n) throw std::invalid_argument("gather_pairs: x must have n rows");
  const Matrix& xv = node(x.id).value;
  const int m = x.cols;
  Matrix out(g->edge_count(), 2 * m);
  const bool par = kernels::parallel_enabled();
#pragma omp parallel for if (par) schedule(static)
  for (int e = 0; e < g->edge_count(); ++e) {
    const auto [u, v] = g->edges[e];
    double* o = out.row(e);
    const double* pu = xv.row(reversed ? v : u);
    const double* pv = xv.row(reversed ? u : v);
    for (int j = 0; j < m; ++j) o[j] = pu[j];
    for (int j = 0; j < m; ++j) o[m + j] = pv[j];
  }
  return emplace(std::move(out), node(x.id).requires_grad, {x.id},
                 std::make_unique<GatherPairsOp>(g, reversed));
}

Tensor Tape::scatter_square_sums(Tensor a, Tensor b, const Graph* g) {
  check_same_shape(a, b, "scatter_square_sums");
  if (a.rows != g->edge_count())
    throw std::invalid_argument("scatter_square_sums: need one row per edge");
  const Matrix& av = node(a.id).value;
  const Matrix& bv = node(b.id).value;
  const int D = a.cols;
  Matrix out(g->n * D, 1);
  const bool par = kernels::parallel_enabled();
#pragma omp parallel for if (par) schedule(static)
  for (int u = 0; u < g->n; ++u)
    for (const auto& end : g->incidence[u]) {
      const Matrix& side_vals = (end.side == 0) ? av : bv;
      for (int k = 0; k < D; ++k) {
        const double c = side_vals(end.edge, k);
        out(u * D + k, 0) += c * c;
      }
    }
  const bool rg = node(a.id).requires_grad || node(b.id).requires_grad;
  return emplace(std::move(out), rg, {a.id, b.id},
                 std::make_unique<ScatterSquareSumsOp>(g));
}

Tensor Tape::rsqrt_floor(Tensor v, double floor) {
  Matrix out = node(v.id).value;
  double* p = out.data();
  for (size_t i = 0; i < out.size(); ++i) p[i] = p[i] <= floor ? 0.0 : 1.0 / std::sqrt(p[i]);
  return emplace(std::move(out), node(v.id).requires_grad, {v.id},
                 std::make_unique<RsqrtFloorOp>(floor));
}

Tensor Tape::row_scale(Tensor x, Tensor s) {
  if (s.cols != 1 || s.rows != x.rows)
    throw std::invalid_argument("row_scale: s must be rows(x) x 1");
  const Matrix& xv = node(x.id).value;
  const Matrix& sv = node(s.id).value;
  Matrix out(x.rows, x.cols);
  for (int i = 0; i < x.rows; ++i) {
    const double si = sv(i, 0);
    double* o = out.row(i);
    const double* xr = xv.row(i);
    for (int j = 0; j < x.cols; ++j) o[j] = xr[j] * si;
  }
  const bool rg = node(x.id).requires_grad || node(s.id).requires_grad;
  return emplace(std::move(out), rg, {x.id, s.id}, std::make_unique<RowScaleOp>());
}

Tensor Tape::diag_sheaf_apply(Tensor a, Tensor b, Tensor y, const Graph* g) {
  check_same_shape(a, b, "diag_sheaf_apply");
  if (a.rows != g->edge_count())
    throw std::invalid_argument("diag_sheaf_apply: need one map row per edge");
  const int D = a.cols;
  if (y.rows != g->n * D)
    throw std::invalid_argument("diag_sheaf_apply: y must have n*D rows");
  const Matrix& av = node(a.id).value;
  const Matrix& bv = node(b.id).value;
  const Matrix& yv = node(y.id).value;
  const int f = y.cols;
  Matrix out(y.rows, f);
  const bool par = kernels::parallel_enabled();
#pragma omp parallel for if (par) schedule(static)
  for (int u = 0; u < g->n; ++u) {
    for (const auto& end : g->incidence[u]) {
      const auto [p, q] = g->edges[end.edge];
      const int other = (end.side == 0) ? q : p;
      for (int k = 0; k < D; ++k) {
        const double self_c =
            (end.side == 0) ? av(end.edge, k) : bv(end.edge, k);
        const double other_c =
            (end.side == 0) ? bv(end.edge, k) : av(end.edge, k);
        double* o = out.row(u * D + k);
        const double* yu = yv.row(u * D + k);
        const double* yo = yv.row(other * D + k);
        for (int j = 0; j < f; ++j) o[j] += self_c * (self_c * yu[j] - other_c * yo[j]);
      }
    }
  }
  const bool rg =
      node(a.id).requires_grad || node(b.id).requires_grad || node(y.id).requires_grad;
  return emplace(std::move(out), rg, {a.id, b.id, y.id},
                 std::make_unique<DiagSheafApplyOp>(g));
}

Tensor Tape::softmax_cross_entropy(Tensor logits, const std::vector<int>* labels,
                                   const std::vector<int>* indices) {
  if (indices->empty()) throw std::invalid_argument("softmax_cross_entropy: empty index set");
  const Matrix& lv = node(logits.id).value;
  const int c = logits.cols;
  for (int i : *indices) {
    if (i < 0 || i >= logits.rows)
      throw std::invalid_argument("softmax_cross_entropy: index out of range");
    if ((*labels)[i] < 0 || (*labels)[i] >= c)
      throw std::invalid_argument("softmax_cross_entropy: label out of range");
  }
  auto op = std::make_unique<SoftmaxCrossEntropyOp>();
  op->labels = labels;
  op->indices = indices;
  op->probs = Matrix(static_cast<int>(indices->size()), c);
  double loss = 0.0;
  for (size_t r = 0; r < indices->size(); ++r) {
    const int i = (*indices)[r];
    const double* row = lv.row(i);
    double mx = row[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (int j = 0; j < c; ++j) sum += std::exp(row[j] - mx);
    const double lse = mx + std::log(sum);
    loss += lse - row[(*labels)[i]];
    for (int j = 0; j < c; ++j) op->probs(static_cast<int>(r), j) = std::exp(row[j] - lse);
  }
  Matrix out(1, 1);
  out(0, 0) = loss / static_cast<double>(indices->size());
  return emplace(std::move(out), node(logits.id).requires_grad, {logits.id}, std::move(op));
}

void Tape::backward(Tensor loss) {
  if (loss.rows != 1 || loss.cols != 1)
    throw std::invalid_argument("backward: loss must be a 1x1 scalar");
  grad_buffer(loss.id)(0, 0) = 1.0;
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.op || n.grad.empty() || !n.requires_grad) continue;
    n.op->backward(*this, id);
  }
}

}  // namespace sheafnet::ad
