#pragma once

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "equipose/tensor.hpp"

namespace equipose::ad {

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Sparse aggregation plan shared by the point-convolution ops: each entry
/// adds mu * (feats[src] . W[k]) into output row ctr.
struct ConvPlan {
  std::size_t n_ctr = 0;
  std::size_t num_kernels = 0;
  struct Entry {
    int ctr;
    int src;
    int k;
    double mu;
  };
  std::vector<Entry> entries;
};

/// Row-mixing plan: out[i] = sum_j w_ij * in[src_ij]. Covers inverse-distance
/// interpolation, neighborhood sums, and segment reductions.
using GatherPlan = std::vector<std::vector<std::pair<int, double>>>;

/// Reverse-mode tape. Values are computed eagerly; backward closures are
/// recorded only when grad_enabled. Nodes are topologically ordered by
/// construction, so backward() is a single reverse sweep.
class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  Var constant(Tensor v);
  /// Parameter leaf. After backward(), the gradient is accumulated into
  /// *sink (if non-null). The tensor is copied onto the tape.
  Var leaf(const Tensor& v, Tensor* sink);

  const Tensor& value(Var v) const;
  /// Gradient of the loss w.r.t. node v; valid after backward().
  const Tensor& grad(Var v) const;

  // Elementwise and scalar ops.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double c);
  Var add_scalar(Var a, double c);
  Var relu(Var a);
  Var exp_(Var a);
  Var log_(Var a);
  Var sqrt_(Var a);
  Var max_elem(Var a, Var b);

  // Linear algebra.
  Var matmul(Var a, Var b, bool trans_a = false, bool trans_b = false);
  /// a: n x d, bias: 1 x d (or length-d vector) broadcast-added to each row.
  Var rows_add_vec(Var a, Var bias);

  // Reductions.
  Var sum(Var a);                 // -> scalar {1}
  Var dot(Var a, Var b);          // -> scalar {1}
  Var sum_rows(Var a);            // n x d -> 1 x d
  Var max_over_rows(Var a);       // n x d -> 1 x d (first index wins ties)

  // Shape ops.
  Var concat_cols(Var a, Var b);
  Var concat_rows(Var a, Var b);
  Var slice_rows(Var a, std::size_t start, std::size_t count);
  Var gather_rows(Var a, std::vector<int> idx);
  Var broadcast_rows(Var a, std::size_t n);  // 1 x d -> n x d

  // Row-structured nonlinearities.
  Var softmax_rows(Var a);
  Var layer_norm_rows(Var x, Var gamma, Var beta, double eps = 1e-5);
  Var l2_normalize_rows(Var a, double eps = 1e-12);

  // Sparse mixing.
  Var weighted_gather_rows(Var a, std::shared_ptr<const GatherPlan> plan);
  /// feats: n_src x d_in, weights: K x d_in x d_out -> n_ctr x d_out.
  Var conv_aggregate(Var feats, Var weights, std::shared_ptr<const ConvPlan> plan);

  void backward(Var loss);

  std::size_t num_nodes() const { return nodes_.size(); }
  bool grad_enabled() const { return grad_enabled_; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool grad_live = false;
    std::function<void(Tape&)> back;
  };

  Var push(Tensor value, std::function<void(Tape&)> back);
  Tensor& grad_slot(int id);

  std::vector<Node> nodes_;
  bool grad_enabled_ = true;
};

}  // namespace equipose::ad
