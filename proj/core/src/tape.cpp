#include "equipose/tape.hpp"

#include <algorithm>
#include <cmath>

#include "equipose/common.hpp"

namespace equipose::ad {

Var Tape::push(Tensor value, std::function<void(Tape&)> back) {
  Node n;
  n.value = std::move(value);
  if (grad_enabled_) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Tensor& Tape::grad_slot(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.grad_live) {
    n.grad = Tensor(n.value.shape());
    n.grad_live = true;
  }
  return n.grad;
}

const Tensor& Tape::value(Var v) const {
  EQP_REQUIRE(v.valid() && v.id < static_cast<int>(nodes_.size()), "tape: bad var");
  return nodes_[static_cast<std::size_t>(v.id)].value;
}

const Tensor& Tape::grad(Var v) const {
  const Node& n = nodes_.at(static_cast<std::size_t>(v.id));
  EQP_REQUIRE(n.grad_live, "tape: gradient not computed for this node");
  return n.grad;
}

Var Tape::constant(Tensor v) { return push(std::move(v), nullptr); }

Var Tape::leaf(const Tensor& v, Tensor* sink) {
  Var out = push(v, nullptr);
  if (grad_enabled_ && sink != nullptr) {
    int id = out.id;
    nodes_.back().back = [id, sink](Tape& t) {
      const Tensor& g = t.nodes_[static_cast<std::size_t>(id)].grad;
      EQP_REQUIRE(sink->same_shape(g), "leaf: grad sink shape mismatch");
      for (std::size_t i = 0; i < g.size(); ++i) (*sink)[i] += g[i];
    };
  }
  return out;
}

Var Tape::add(Var a, Var b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  EQP_REQUIRE(va.same_shape(vb), "add: shape mismatch");
  Tensor out = va;
  out.vec() += vb.vec();
  int ia = a.id, ib = b.id;
  Var o = push(std::move(out), nullptr);
  if (grad_enabled_) {
    int self = o.id;
    nodes_.back().back = [self, ia, ib](Tape& t) {
      const Tensor& g = t.nodes_[static_cast<std::size_t>(self)].grad;
      t.grad_slot(ia).vec() += g.vec();
      t.grad_slot(ib).vec() += g.vec();
    };
  }
  return o;
}

Var Tape::sub(Var a, Var b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  EQP_REQUIRE(va.same_shape(vb), "sub: shape mismatch");
  Tensor out = va;
  out.vec() -= vb.vec();
  int ia = a.id, ib = b.id;
  Var o = push(std::move(out), nullptr);
  if (grad_enabled_) {
    int self = o.id;
    nodes_.back().back = [self, ia, ib](Tape& t) {
      const Tensor& g = t.nodes_[static_cast<std::size_t>(self)].grad;
      t.grad_slot(ia).vec() += g.vec();
      t.grad_slot(ib).vec() -= g.vec();
    };
  }
  return o;
}

Var Tape::mul(Var a, Var b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  EQP_REQUIRE(va.same_shape(vb), "mul: shape mismatch");
  Tensor out = va;
  out.vec().array() *= vb.vec().array();
  int ia = a.id, ib = b.id;
  Var o = push(std::move(out), nullptr);
  if (grad_enabled_) {
    int self = o.id;
    nodes_.back().back = [self, ia, ib](Tape& t) {
      const Tensor& g = t.nodes_[static_cast<std::size_t>(self)].grad;
      const Tensor& xa = t.nodes_[static_cast<std::size_t>(ia)].value;
      const Tensor& xb = t.nodes_[static_cast<std::size_t>(ib)].value;
      t.grad_slot(ia).vec().array() += g.vec().array() * xb.vec().array();
      t.grad_slot(ib).vec().array() += g.vec().array() * xa.vec().array();
    };
  }
  return o;
}

Var Tape::scale(Var a, double c) {
  Tensor out = value(a);
  out.vec() *= c;
  int ia = a.id;
  Var o = push(std::move(out), nullptr);
  if (grad_enabled_) {
    int self = o.id;
    nodes_.back().back = [self, ia, c](Tape& t) {
      t.grad_slot(ia).vec() += c * t.nodes_[static_cast<std::size_t>(self)].grad.vec();
    };
  }
  return o;
}

Var Tape::add_scalar(Var a, double c) {
  Tensor out = value(a);
  out.vec().array() += c;
  int ia = a.id;
  Var o = push(std::move(out), nullptr);
  if (grad_enabled_) {
    int self = o.id;
    nodes_.back().back = [self, ia](Tape& t) {
      t.grad_slot(ia).vec() += t.nodes_[static_cast<std::size_t>(self)].grad.vec();
    };
  }
  return o;
}

Var Tape::relu(Var a) {
  Tensor out = value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0, out[i]);
  int ia = a.id;
  Var o = push(std::move(out), nullptr);
  if (grad_enabled_) {
    int self = o.id;
    nodes_.back().back = [self, ia](Tape& t) {
      const Tensor& g = t.nodes_[static_cast<std::size_t>(self)].grad;
      const Tensor& x = t.nodes_[static_cast<std::size_t>(ia)].value;
      Tensor& gx = t.grad_slot(ia);
      for (std::size_t i = 0; i < g.size(); ++i)
        if (x[i] > 0.0) gx[i] += g[i];
    };
  }
  return o;
}

Var Tape::exp_(Var a) {
  Tensor out = value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(out[i]);
  int ia = a.id;
  Var o = push(std::move(out), nullptr);
  if (grad_enabled_) {
    int self = o.id;
    nodes_.back().back = [self, ia](Tape& t) {
      const Tensor& g = t.nodes_[static_cast<std::size_t>(self)].grad;
      const Tensor& y = t.nodes_[static_cast<std::size_t>(self)].value;
      t.grad_slot(ia).vec().array() += g.vec().array() * y.vec().array();
    };
  }
  return o;
}

Var Tape::log_(Var a) {
  Tensor out = value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(out[i]);
  int ia = a.id;
  Var o = push(std::move(out), nullptr);
  if (grad_enabled_) {
    int self = o.id;
    nodes_.back().back = [self, ia](Tape& t) {
      const Tensor& g = t.nodes_[static_cast<std::size_t>(self)].grad;
      const Tensor& x = t.nodes_[static_cast<std::size_t>(ia)].value;
      t.grad_slot(ia).vec().array() += g.vec().array() / x.vec().array();
    };
  }
  return o;
}

Var Tape::sqrt_(Var a) {
  Tensor out = value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::sqrt(out[i]);
  int ia = a.id;
  Var o = push(std::move(out), nullptr);
  if (grad_enabled_) {
    int self = o.id;
    nodes_.back().back = [self, ia](Tape& t) {
      const Tensor& g = t.nodes_[static_cast<std::size_t>(self)].grad;
      const Tensor& y = t.nodes_[static_cast<std::size_t>(self)].value;
      t.grad_slot(ia).vec().array() += 0.5 * g.vec().array() / y.vec().array();
    };
  }
  return o;
}

Var Tape::max_elem(Var a, Var b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  EQP_REQUIRE(va.same_shape(vb), "max_elem: shape mismatch");
  Tensor out = va;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(va[i], vb[i]);
  int ia = a.id, ib = b.id;
  Var o = push(std::move(out), nullptr);
  if (grad_enabled_) {
    int self = o.id;
    nodes_.back().back = [self, ia, ib](Tape& t) {
      const Tensor& g = t.nodes_[static_cast<std::size_t>(self)].grad;
      const Tensor& xa = t.nodes_[static_cast<std::size_t>(ia)].value;
      const Tensor& xb = t.nodes_[static_cast<std::size_t>(ib)].value;
      Tensor& ga = t.grad_slot(ia);
      Tensor& gb = t.grad_slot(ib);
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (xa[i] >= xb[i])
          ga[i] += g[i];
        else
          gb[i] += g[i];
      }
    };
  }
  return o;
}

Var Tape::matmul(Var a, Var b, bool trans_a, bool trans_b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  const std::size_t am = trans_a ? va.cols() : va.rows();
  const std::size_t ak = trans_a ? va.rows() : va.cols();
  const std::size_t bk = trans_b ? vb.cols() : vb.rows();
  const std::size_t bn = trans_b ? vb.rows() : vb.cols();
  EQP_REQUIRE(ak == bk, "matmul: inner dimension mismatch");
  Tensor out({am, bn});
  {
    auto A = va.mat();
    auto B = vb.mat();
    auto O = out.mat();
    if (!trans_a && !trans_b)
      O.noalias() = A * B;
    else if (trans_a && !trans_b)
      O.noalias() = A.transpose() * B;
    else if (!trans_a && trans_b)
      O.noalias() = A * B.transpose();
    else
      O.noalias() = A.transpose() * B.transpose();
  }
  int ia = a.id, ib = b.id;
  Var o = push(std::move(out), nullptr);
  if (grad_enabled_) {
    int self = o.id;
    nodes_.back().back = [self, ia, ib, trans_a, trans_b](Tape& t) {
      const Tensor& g = t.nodes_[static_cast<std::size_t>(self)].grad;
      const Tensor& va2 = t.nodes_[static_cast<std::size_t>(ia)].value;
      const Tensor& vb2 = t.nodes_[static_cast<std::size_t>(ib)].value;
      auto G = g.mat();
      auto A = va2.mat();
      auto B = vb2.mat();
      auto GA = t.grad_slot(ia).mat();
      auto GB = t.grad_slot(ib).mat();
      if (!trans_a && !trans_b) {
        GA.noalias() += G * B.transpose();
        GB.noalias() += A.transpose() * G;
      } else if (trans_a && !trans_b) {
        GA.noalias() += B * G.transpose();
        GB.noalias() += A * G;
      } else if (!trans_a && trans_b) {
        GA.noalias() += G * B;
        GB.noalias() += G.transpose() * A;
      } else {
        GA.noalias() += B.transpose() * G.transpose();
        GB.noalias() += G.transpose() * A.transpose();
      }
    };
  }
  return o;
}

Var Tape::rows_add_vec(Var a, Var bias) {
  const Tensor& va = value(a);
  const Tensor& vb = value(bias);
  EQP_REQUIRE(vb.size() == va.cols(), "rows_add_vec: width mismatch");
  Tensor out = va;
  {
    auto O = out.mat();
    auto B = vb.mat();  // 1 x d
    O.rowwise() += B.row(0);
  }
  int ia = a.id, ib = bias.id;
  Var o = push(std::move(out), nullptr);
  if (grad_enabled_) {
    int self = o.id;
    nodes_.back().back = [self, ia, ib](Tape& t) {
      const Tensor& g = t.nodes_[static_cast<std::size_t>(self)].grad;
      t.grad_slot(ia).vec() += g.vec();
      auto GB = t.grad_slot(ib).mat();
      GB.row(0) += g.mat().colwise().sum();
    };
  }
  return o;
}

Var Tape::sum(Var a) {
  Tensor out = Tensor::scalar(value(a).vec().sum());
  int ia = a.id;
  Var o = push(std::move(out), nullptr);
  if (grad_enabled_) {
    int self = o.id;
    nodes_.back().back = [self, ia](Tape& t) {
      const double g = t.nodes_[static_cast<std::size_t>(self)].grad[0];
      t.grad_slot(ia).vec().array() += g;
    };
  }
  return o;
}

Var Tape::dot(Var a, Var b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  EQP_REQUIRE(va.same_shape(vb), "dot: shape mismatch");
  Tensor out = Tensor::scalar(va.vec().dot(vb.vec()));
  int ia = a.id, ib = b.id;
  Var o = push(std::move(out), nullptr);
  if (grad_enabled_) {
    int self = o.id;
    nodes_.back().back = [self, ia, ib](Tape& t) {
      const double g = t.nodes_[static_cast<std::size_t>(self)].grad[0];
      const Tensor& xa = t.nodes_[static_cast<std::size_t>(ia)].value;
      const Tensor& xb = t.nodes_[static_cast<std::size_t>(ib)].value;
      t.grad_slot(ia).vec() += g * xb.vec();
      t.grad_slot(ib).vec() += g * xa.vec();
    };
  }
  return o;
}

Var Tape::sum_rows(Var a) {
  const Tensor& va = value(a);
  Tensor out({1, va.cols()});
  out.mat().row(0) = va.mat().colwise().sum();
  int ia = a.id;
  Var o = push(std::move(out), nullptr);
  if (grad_enabled_) {
    int self = o.id;
    nodes_.back().back = [self, ia](Tape& t) {
      const Tensor& g = t.nodes_[static_cast<std::size_t>(self)].grad;
      auto GA = t.grad_slot(ia).mat();
      GA.rowwise() += g.mat().row(0);
    };
  }
  return o;
}

Var Tape::max_over_rows(Var a) {
  const Tensor& va = value(a);
  const std::size_t n = va.rows(), d = va.cols();
  EQP_REQUIRE(n > 0, "max_over_rows: empty input");
  Tensor out({1, d});
  std::vector<int> arg(d, 0);
  for (std::size_t j = 0; j < d; ++j) {
    double best = va.at(0, j);
    int bi = 0;
    for (std::size_t i = 1; i < n; ++i) {
      if (va.at(i, j) > best) {
        best = va.at(i, j);
        bi = static_cast<int>(i);
      }
    }
    out.at(0, j) = best;
    arg[j] = bi;
  }
  int ia = a.id;
  Var o = push(std::move(out), nullptr);
  if (grad_enabled_) {
    int self = o.id;
    nodes_.back().back = [self, ia, arg](Tape& t) {
      const Tensor& g = t.nodes_[static_cast<std::size_t>(self)].grad;
      Tensor& gx = t.grad_slot(ia);
      for (std::size_t j = 0; j < g.size(); ++j)
        gx.at(static_cast<std::size_t>(arg[j]), j) += g[j];
    };
  }
  return o;
}

Var Tape::concat_cols(Var a, Var b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  EQP_REQUIRE(va.rows() == vb.rows(), "concat_cols: row mismatch");
  const std::size_t n = va.rows(), p = va.cols(), q = vb.cols();
  Tensor out({n, p + q});
  out.mat().leftCols(static_cast<Eigen::Index>(p)) = va.mat();
  out.mat().rightCols(static_cast<Eigen::Index>(q)) = vb.mat();
  int ia = a.id, ib = b.id;
  Var o = push(std::move(out), nullptr);
  if (grad_enabled_) {
    int self = o.id;
    nodes_.back().back = [self, ia, ib, p, q](Tape& t) {
      const Tensor& g = t.nodes_[static_cast<std::size_t>(self)].grad;
      t.grad_slot(ia).mat() += g.mat().leftCols(static_cast<Eigen::Index>(p));
      t.grad_slot(ib).mat() += g.mat().rightCols(static_cast<Eigen::Index>(q));
    };
  }
  return o;
}

Var Tape::concat_rows(Var a, Var b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  EQP_REQUIRE(va.cols() == vb.cols(), "concat_rows: column mismatch");
  const std::size_t na = va.rows(), nb = vb.rows(), d = va.cols();
  Tensor out({na + nb, d});
  out.mat().topRows(static_cast<Eigen::Index>(na)) = va.mat();
  out.mat().bottomRows(static_cast<Eigen::Index>(nb)) = vb.mat();
  int ia = a.id, ib = b.id;
  Var o = push(std::move(out), nullptr);
  if (grad_enabled_) {
    int self = o.id;
    nodes_.back().back = [self, ia, ib, na, nb](Tape& t) {
      const Tensor& g = t.nodes_[static_cast<std::size_t>(self)].grad;
      t.grad_slot(ia).mat() += g.mat().topRows(static_cast<Eigen::Index>(na));
      t.grad_slot(ib).mat() += g.mat().bottomRows(static_cast<Eigen::Index>(nb));
    };
  }
  return o;
}

Var Tape::slice_rows(Var a, std::size_t start, std::size_t count) {
  const Tensor& va = value(a);
  EQP_REQUIRE(start + count <= va.rows(), "slice_rows: out of range");
  Tensor out({count, va.cols()});
  out.mat() = va.mat().middleRows(static_cast<Eigen::Index>(start),
                                  static_cast<Eigen::Index>(count));
  int ia = a.id;
  Var o = push(std::move(out), nullptr);
  if (grad_enabled_) {
    int self = o.id;
    nodes_.back().back = [self, ia, start, count](Tape& t) {
      const Tensor& g = t.nodes_[static_cast<std::size_t>(self)].grad;
      t.grad_slot(ia).mat().middleRows(static_cast<Eigen::Index>(start),
                                       static_cast<Eigen::Index>(count)) += g.mat();
    };
  }
  return o;
}

Var Tape::gather_rows(Var a, std::vector<int> idx) {
  const Tensor& va = value(a);
  Tensor out({idx.size(), va.cols()});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    EQP_REQUIRE(idx[i] >= 0 && static_cast<std::size_t>(idx[i]) < va.rows(),
                "gather_rows: index out of range");
    out.mat().row(static_cast<Eigen::Index>(i)) = va.mat().row(idx[i]);
  }
  int ia = a.id;
  Var o = push(std::move(out), nullptr);
  if (grad_enabled_) {
    int self = o.id;
    nodes_.back().back = [self, ia, idx = std::move(idx)](Tape& t) {
      const Tensor& g = t.nodes_[static_cast<std::size_t>(self)].grad;
      auto GA = t.grad_slot(ia).mat();
      for (std::size_t i = 0; i < idx.size(); ++i)
        GA.row(idx[i]) += g.mat().row(static_cast<Eigen::Index>(i));
    };
  }
  return o;
}

Var Tape::broadcast_rows(Var a, std::size_t n) {
  const Tensor& va = value(a);
  EQP_REQUIRE(va.rows() == 1, "broadcast_rows: expects a single row");
  Tensor out({n, va.cols()});
  out.mat().rowwise() = va.mat().row(0);
  int ia = a.id;
  Var o = push(std::move(out), nullptr);
  if (grad_enabled_) {
    int self = o.id;
    nodes_.back().back = [self, ia](Tape& t) {
      const Tensor& g = t.nodes_[static_cast<std::size_t>(self)].grad;
      t.grad_slot(ia).mat().row(0) += g.mat().colwise().sum();
    };
  }
  return o;
}

Var Tape::softmax_rows(Var a) {
  Tensor out = value(a);
  auto O = out.mat();
  for (Eigen::Index i = 0; i < O.rows(); ++i) {
    const double m = O.row(i).maxCoeff();
    O.row(i) = (O.row(i).array() - m).exp();
    O.row(i) /= O.row(i).sum();
  }
  int ia = a.id;
  Var o = push(std::move(out), nullptr);
  if (grad_enabled_) {
    int self = o.id;
    nodes_.back().back = [self, ia](Tape& t) {
      const Tensor& g = t.nodes_[static_cast<std::size_t>(self)].grad;
      const Tensor& y = t.nodes_[static_cast<std::size_t>(self)].value;
      auto GA = t.grad_slot(ia).mat();
      auto G = g.mat();
      auto Y = y.mat();
      for (Eigen::Index i = 0; i < Y.rows(); ++i) {
        const double s = G.row(i).dot(Y.row(i));
        GA.row(i) += (G.row(i).array() - s).matrix().cwiseProduct(Y.row(i));
      }
    };
  }
  return o;
}

Var Tape::layer_norm_rows(Var x, Var gamma, Var beta, double eps) {
  const Tensor& vx = value(x);
  const Tensor& vg = value(gamma);
  const Tensor& vb = value(beta);
  const std::size_t n = vx.rows(), d = vx.cols();
  EQP_REQUIRE(vg.size() == d && vb.size() == d, "layer_norm: width mismatch");
  Tensor out({n, d});
  Tensor xhat({n, d});
  std::vector<double> inv_sigma(n);
  for (std::size_t i = 0; i < n; ++i) {
    double mu = 0;
    for (std::size_t j = 0; j < d; ++j) mu += vx.at(i, j);
    mu /= static_cast<double>(d);
    double var = 0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = vx.at(i, j) - mu;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_sigma[i] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (vx.at(i, j) - mu) * is;
      xhat.at(i, j) = h;
      out.at(i, j) = vg[j] * h + vb[j];
    }
  }
  int ix = x.id, ig = gamma.id, ib = beta.id;
  Var o = push(std::move(out), nullptr);
  if (grad_enabled_) {
    int self = o.id;
    nodes_.back().back = [self, ix, ig, ib, xhat = std::move(xhat),
                          inv_sigma = std::move(inv_sigma)](Tape& t) {
      const Tensor& g = t.nodes_[static_cast<std::size_t>(self)].grad;
      const Tensor& vg2 = t.nodes_[static_cast<std::size_t>(ig)].value;
      const std::size_t n2 = g.rows(), d2 = g.cols();
      Tensor& gx = t.grad_slot(ix);
      Tensor& gg = t.grad_slot(ig);
      Tensor& gb = t.grad_slot(ib);
      for (std::size_t i = 0; i < n2; ++i) {
        double mean_dxhat = 0, mean_dxhat_xhat = 0;
        for (std::size_t j = 0; j < d2; ++j) {
          const double dxh = g.at(i, j) * vg2[j];
          mean_dxhat += dxh;
          mean_dxhat_xhat += dxh * xhat.at(i, j);
          gg[j] += g.at(i, j) * xhat.at(i, j);
          gb[j] += g.at(i, j);
        }
        mean_dxhat /= static_cast<double>(d2);
        mean_dxhat_xhat /= static_cast<double>(d2);
        for (std::size_t j = 0; j < d2; ++j) {
          const double dxh = g.at(i, j) * vg2[j];
          gx.at(i, j) +=
              inv_sigma[i] * (dxh - mean_dxhat - xhat.at(i, j) * mean_dxhat_xhat);
        }
      }
    };
  }
  return o;
}

Var Tape::l2_normalize_rows(Var a, double eps) {
  const Tensor& va = value(a);
  const std::size_t n = va.rows(), d = va.cols();
  Tensor out({n, d});
  std::vector<double> inv_norm(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < d; ++j) s += va.at(i, j) * va.at(i, j);
    const double inv = 1.0 / std::sqrt(s + eps);
    inv_norm[i] = inv;
    for (std::size_t j = 0; j < d; ++j) out.at(i, j) = va.at(i, j) * inv;
  }
  int ia = a.id;
  Var o = push(std::move(out), nullptr);
  if (grad_enabled_) {
    int self = o.id;
    nodes_.back().back = [self, ia, inv_norm = std::move(inv_norm)](Tape& t) {
      const Tensor& g = t.nodes_[static_cast<std::size_t>(self)].grad;
      const Tensor& y = t.nodes_[static_cast<std::size_t>(self)].value;
      Tensor& gx = t.grad_slot(ia);
      const std::size_t n2 = g.rows(), d2 = g.cols();
      for (std::size_t i = 0; i < n2; ++i) {
        double gy = 0;
        for (std::size_t j = 0; j < d2; ++j) gy += g.at(i, j) * y.at(i, j);
        for (std::size_t j = 0; j < d2; ++j)
          gx.at(i, j) += inv_norm[i] * (g.at(i, j) - y.at(i, j) * gy);
      }
    };
  }
  return o;
}

Var Tape::weighted_gather_rows(Var a, std::shared_ptr<const GatherPlan> plan) {
  const Tensor& va = value(a);
  const std::size_t d = va.cols();
  Tensor out({plan->size(), d});
  for (std::size_t i = 0; i < plan->size(); ++i) {
    auto row = out.mat().row(static_cast<Eigen::Index>(i));
    for (const auto& [src, w] : (*plan)[i]) {
      EQP_REQUIRE(src >= 0 && static_cast<std::size_t>(src) < va.rows(),
                  "weighted_gather_rows: index out of range");
      row += w * va.mat().row(src);
    }
  }
  int ia = a.id;
  Var o = push(std::move(out), nullptr);
  if (grad_enabled_) {
    int self = o.id;
    nodes_.back().back = [self, ia, plan](Tape& t) {
      const Tensor& g = t.nodes_[static_cast<std::size_t>(self)].grad;
      auto GA = t.grad_slot(ia).mat();
      for (std::size_t i = 0; i < plan->size(); ++i)
        for (const auto& [src, w] : (*plan)[i])
          GA.row(src) += w * g.mat().row(static_cast<Eigen::Index>(i));
    };
  }
  return o;
}

namespace {

// Accumulates the per-kernel weighted feature sums G_k used both in the
// forward pass and to form dW in the backward pass.
Tensor conv_kernel_sums(const Tensor& feats, const ConvPlan& plan) {
  const std::size_t d_in = feats.cols();
  Tensor G({plan.num_kernels, plan.n_ctr, d_in});
  for (const auto& e : plan.entries) {
    double* dst = G.data() + (static_cast<std::size_t>(e.k) * plan.n_ctr +
                              static_cast<std::size_t>(e.ctr)) *
                                 d_in;
    const double* src = feats.data() + static_cast<std::size_t>(e.src) * d_in;
    for (std::size_t j = 0; j < d_in; ++j) dst[j] += e.mu * src[j];
  }
  return G;
}

}  // namespace

Var Tape::conv_aggregate(Var feats, Var weights,
                         std::shared_ptr<const ConvPlan> plan) {
  const Tensor& vf = value(feats);
  const Tensor& vw = value(weights);
  EQP_REQUIRE(vw.rank() == 3, "conv_aggregate: weights must be K x d_in x d_out");
  EQP_REQUIRE(vw.dim(0) == plan->num_kernels, "conv_aggregate: kernel count mismatch");
  EQP_REQUIRE(vw.dim(1) == vf.cols(), "conv_aggregate: d_in mismatch");
  const std::size_t d_out = vw.dim(2);
  Tensor out({plan->n_ctr, d_out});
  {
    Tensor G = conv_kernel_sums(vf, *plan);
    for (std::size_t k = 0; k < plan->num_kernels; ++k)
      out.mat().noalias() += G.slab(k) * vw.slab(k);
  }
  int f_id = feats.id, w_id = weights.id;
  Var o = push(std::move(out), nullptr);
  if (grad_enabled_) {
    int self = o.id;
    nodes_.back().back = [self, f_id, w_id, plan](Tape& t) {
      const Tensor& g = t.nodes_[static_cast<std::size_t>(self)].grad;
      const Tensor& vf2 = t.nodes_[static_cast<std::size_t>(f_id)].value;
      const Tensor& vw2 = t.nodes_[static_cast<std::size_t>(w_id)].value;
      Tensor& gw = t.grad_slot(w_id);
      Tensor& gf = t.grad_slot(f_id);
      // dW_k = G_k^T * dOut  (G_k recomputed to avoid persisting it).
      Tensor G = conv_kernel_sums(vf2, *plan);
      for (std::size_t k = 0; k < plan->num_kernels; ++k)
        gw.slab(k).noalias() += G.slab(k).transpose() * g.mat();
      // dFeats[src] += mu * (dOut[ctr] . W_k^T).
      const std::size_t d_in = vf2.cols();
      Tensor H({plan->num_kernels, plan->n_ctr, d_in});
      for (std::size_t k = 0; k < plan->num_kernels; ++k)
        H.slab(k).noalias() = g.mat() * vw2.slab(k).transpose();
      for (const auto& e : plan->entries) {
        const double* src = H.data() + (static_cast<std::size_t>(e.k) * plan->n_ctr +
                                        static_cast<std::size_t>(e.ctr)) *
                                           d_in;
        double* dst = gf.data() + static_cast<std::size_t>(e.src) * d_in;
        for (std::size_t j = 0; j < d_in; ++j) dst[j] += e.mu * src[j];
      }
    };
  }
  return o;
}

void Tape::backward(Var loss) {
  EQP_REQUIRE(grad_enabled_, "backward: tape built with gradients disabled");
  EQP_REQUIRE(loss.valid() && loss.id < static_cast<int>(nodes_.size()),
              "backward: bad loss var");
  EQP_REQUIRE(value(loss).size() == 1, "backward: loss must be scalar");
  grad_slot(loss.id)[0] = 1.0;
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.grad_live && n.back) n.back(*this);
  }
}

}  // namespace equipose::ad
