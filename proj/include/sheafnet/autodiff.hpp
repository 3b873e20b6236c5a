#pragma once

#include <memory>
#include <vector>

#include "sheafnet/block_sparse.hpp"
#include "sheafnet/graph.hpp"
#include "sheafnet/matrix.hpp"
#include "sheafnet/rng.hpp"

namespace sheafnet::ad {

enum class Activation { identity, relu, elu, tanh };

Activation activation_from_string(const std::string& s);
std::string to_string(Activation a);

class Tape;

// Lightweight handle into a Tape.
struct Tensor {
  int id = -1;
  int rows = 0;
  int cols = 0;
  bool valid() const { return id >= 0; }
};

struct OpBase {
  virtual ~OpBase() = default;
  virtual void backward(Tape& tape, int out_id) = 0;
};

// Reverse-mode tape over dense matrices. One tape records one forward pass;
// parameters live outside and are copied in as leaf inputs. Pointers passed
// to spmm / the graph-structured primitives must outlive the tape.
class Tape {
 public:
  Tensor input(const Matrix& value);     // leaf that accumulates a gradient
  Tensor constant(const Matrix& value);  // leaf without gradient

  Tensor add(Tensor a, Tensor b);
  Tensor sub(Tensor a, Tensor b);
  Tensor scale(Tensor a, double c);
  // out = s * x with s a 1x1 tensor (learnable scalar).
  Tensor scale_by(Tensor x, Tensor s);
  Tensor matmul(Tensor a, Tensor b);
  Tensor add_bias(Tensor a, Tensor bias);  // bias is 1 x cols, broadcast over rows
  Tensor activation(Tensor a, Activation act);
  Tensor concat_cols(Tensor a, Tensor b);
  Tensor slice_cols(Tensor a, int begin, int end);
  // Inverted dropout with the Bernoulli mask stored for backward.
  Tensor dropout(Tensor a, double p, Rng& rng);
  // Constant symmetric block-sparse operator times dense tensor.
  Tensor spmm(const BlockSparseOperator* op, Tensor x);
  // (I_n (x) W) X: applies the d x d tensor w to every node block of x.
  Tensor stalk_mix(Tensor w, Tensor x, int d);
  // n x (d f)  ->  nd x f   (row u, entry k*f+j  ->  row u*d+k, col j)
  Tensor stack_stalks(Tensor x, int d);
  // nd x f  ->  n x (d f)
  Tensor unstack_stalks(Tensor x, int d);
  // Per edge (u,v): row e = [x_u , x_v] ([x_v , x_u] when reversed). x is
  // n x m, result |E| x 2m.
  Tensor gather_pairs(Tensor x, const Graph* g, bool reversed = false);
  // Diagonal-degree vector of the diagonal sheaf: out(u*D+k) =
  // sum_{e: u first} a(e,k)^2 + sum_{e: u second} b(e,k)^2, shape nD x 1.
  Tensor scatter_square_sums(Tensor a, Tensor b, const Graph* g);
  // out_i = v_i <= floor ? 0 : 1/sqrt(v_i)  (pseudo-inverse square root)
  Tensor rsqrt_floor(Tensor v, double floor);
  // out(i,j) = x(i,j) * s(i,0)
  Tensor row_scale(Tensor x, Tensor s);
  // Unnormalized diagonal-sheaf Laplacian action: per edge e=(u,v) with
  // diagonal maps a = a(e,:), b = b(e,:):
  //   out_u += a . (a . y_u - b . y_v),  out_v += b . (b . y_v - a . y_u)
  // a, b are |E| x D, y is nD x f.
  Tensor diag_sheaf_apply(Tensor a, Tensor b, Tensor y, const Graph* g);
  // Mean over `indices` of  logsumexp(logits_i) - logits_i[label_i].
  Tensor softmax_cross_entropy(Tensor logits, const std::vector<int>* labels,
                               const std::vector<int>* indices);

  // Seeds d(loss) = 1 and accumulates gradients in reverse topological
  // order. loss must be 1 x 1.
  void backward(Tensor loss);

  const Matrix& value(Tensor t) const { return node(t.id).value; }
  // Gradient accumulated for t; zero matrix when nothing reached it.
  const Matrix& grad(Tensor t);
  bool requires_grad(Tensor t) const { return node(t.id).requires_grad; }
  size_t node_count() const { return nodes_.size(); }

  struct Node {
    Matrix value;
    Matrix grad;  // empty until touched
    bool requires_grad = false;
    std::vector<int> inputs;
    std::unique_ptr<OpBase> op;  // null for leaves
  };

  Node& node(int id) { return nodes_[id]; }
  const Node& node(int id) const { return nodes_[id]; }
  // Accumulation target for input gradients, allocated zero on first use.
  Matrix& grad_buffer(int id);

 private:
  Tensor emplace(Matrix value, bool requires_grad, std::vector<int> inputs,
                 std::unique_ptr<OpBase> op);
  std::vector<Node> nodes_;
  Matrix zero_;
};

}  // namespace sheafnet::ad
