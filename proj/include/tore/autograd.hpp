// Copyright 2026 The TORE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Tape-based reverse-mode differentiation over BasicTensor.
//
// A graph records every operation in application order. Parameters enter the
// tape by reference; constants are copied in. `backward` walks the tape in
// reverse and accumulates into Parameter::grad, so gradients of several
// graphs (one per sample) can be summed before an optimizer step.

#include <cmath>
#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tore/tensor.hpp"

namespace tore {

template <typename T>
struct Parameter {
  std::string name;
  BasicTensor<T> value;
  BasicTensor<T> grad;

  Parameter() = default;
  Parameter(std::string n, BasicTensor<T> v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad() { grad = BasicTensor<T>(value.shape()); }
};

template <typename T>
class BasicGraph;

/// Handle to one recorded value.
template <typename T>
struct Var {
  BasicGraph<T>* graph = nullptr;
  int id = -1;

  const BasicTensor<T>& value() const { return graph->value(id); }
  const std::vector<int>& shape() const { return value().shape(); }
};

template <typename T>
class BasicGraph {
 public:
  using Tensor = BasicTensor<T>;
  using BackwardFn = std::function<void(BasicGraph&, const Tensor&)>;

  /// A non-recording graph evaluates values only; nothing is differentiable.
  explicit BasicGraph(bool recording = true) : recording_(recording) {}

  BasicGraph(const BasicGraph&) = delete;
  BasicGraph& operator=(const BasicGraph&) = delete;

  bool recording() const noexcept { return recording_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  Var<T> constant(Tensor v) {
    Node n;
    n.owned = std::move(v);
    return append(std::move(n));
  }

  /// The same parameter used twice maps to the same tape entry.
  Var<T> param(Parameter<T>& p) {
    if (auto it = param_ids_.find(&p); it != param_ids_.end()) return {this, it->second};
    Node n;
    n.ref = &p.value;
    n.param = recording_ ? &p : nullptr;
    n.requires_grad = recording_;
    Var<T> v = append(std::move(n));
    param_ids_.emplace(&p, v.id);
    return v;
  }

  /// Read-only parameter use, e.g. inference through a const model.
  Var<T> param(const Parameter<T>& p) {
    if (recording_) return param(const_cast<Parameter<T>&>(p));
    if (auto it = param_ids_.find(&p); it != param_ids_.end()) return {this, it->second};
    Node n;
    n.ref = &p.value;
    Var<T> v = append(std::move(n));
    param_ids_.emplace(&p, v.id);
    return v;
  }

  const Tensor& value(int id) const {
    const Node& n = nodes_.at(static_cast<std::size_t>(id));
    return n.ref ? *n.ref : n.owned;
  }

  bool requires_grad(int id) const { return nodes_.at(static_cast<std::size_t>(id)).requires_grad; }

  /// Records an operation result. `fn` receives the gradient of the result
  /// and must route it to the inputs through `add_grad`.
  Var<T> push(Tensor value, std::initializer_list<Var<T>> inputs, BackwardFn fn) {
    return push(std::move(value), std::vector<Var<T>>(inputs), std::move(fn));
  }

  Var<T> push(Tensor value, const std::vector<Var<T>>& inputs, BackwardFn fn) {
    kernels::require_finite(value, "graph");
    Node n;
    n.owned = std::move(value);
    if (recording_) {
      for (const Var<T>& in : inputs) n.requires_grad = n.requires_grad || requires_grad(in.id);
      if (n.requires_grad) n.backward = std::move(fn);
    }
    return append(std::move(n));
  }

  void add_grad(int id, const Tensor& g) {
    Node& n = nodes_.at(static_cast<std::size_t>(id));
    if (!n.requires_grad) return;
    if (n.grad.empty()) {
      n.grad = g;
      if (n.grad.shape() != value(id).shape()) n.grad = n.grad.reshaped(value(id).shape());
    } else {
      for (std::size_t i = 0; i < g.size(); ++i) n.grad[i] += g[i];
    }
  }

  /// Gradient of the last `backward` loss with respect to a recorded value;
  /// zeros when the value did not influence the loss.
  Tensor grad(Var<T> v) const {
    const Node& n = nodes_.at(static_cast<std::size_t>(v.id));
    return n.grad.empty() ? Tensor(value(v.id).shape()) : n.grad;
  }

  /// Differentiates a one-element loss and accumulates into Parameter::grad.
  void backward(Var<T> loss) {
    if (!recording_) throw ContractError("backward: graph was built without recording");
    if (value(loss.id).size() != 1) {
      throw ContractError("backward: loss must be a scalar, got shape " +
                          Tensor::shape_string(value(loss.id).shape()));
    }
    for (Node& n : nodes_) n.grad = Tensor();
    add_grad(loss.id, Tensor::filled(value(loss.id).shape(), T(1)));
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      Node& n = nodes_[i];
      if (n.grad.empty()) continue;
      if (n.backward) n.backward(*this, n.grad);
      if (n.param) {
        if (n.param->grad.shape() != n.param->value.shape()) n.param->zero_grad();
        kernels::accumulate(n.param->grad, n.grad);
      }
    }
  }

 private:
  struct Node {
    Tensor owned;
    const Tensor* ref = nullptr;
    Parameter<T>* param = nullptr;
    bool requires_grad = false;
    BackwardFn backward;
    Tensor grad;
  };

  Var<T> append(Node n) {
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size() - 1)};
  }

  bool recording_;
  std::deque<Node> nodes_;
  std::unordered_map<const Parameter<T>*, int> param_ids_;
};

using Graph = BasicGraph<float>;

namespace ad {

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  auto& g = *a.graph;
  return g.push(kernels::matmul(a.value(), b.value()), {a, b}, [a, b](BasicGraph<T>& gr, const BasicTensor<T>& go) {
    if (gr.requires_grad(a.id)) gr.add_grad(a.id, kernels::matmul_nt(go, gr.value(b.id)));
    if (gr.requires_grad(b.id)) gr.add_grad(b.id, kernels::matmul_tn(gr.value(a.id), go));
  });
}

/// a·bᵀ
template <typename T>
Var<T> matmul_nt(Var<T> a, Var<T> b) {
  auto& g = *a.graph;
  return g.push(kernels::matmul_nt(a.value(), b.value()), {a, b}, [a, b](BasicGraph<T>& gr, const BasicTensor<T>& go) {
    if (gr.requires_grad(a.id)) gr.add_grad(a.id, kernels::matmul(go, gr.value(b.id)));
    if (gr.requires_grad(b.id)) gr.add_grad(b.id, kernels::matmul_tn(go, gr.value(a.id)));
  });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  auto& g = *a.graph;
  return g.push(kernels::add(a.value(), b.value()), {a, b}, [a, b](BasicGraph<T>& gr, const BasicTensor<T>& go) {
    gr.add_grad(a.id, go);
    gr.add_grad(b.id, go);
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  auto& g = *a.graph;
  return g.push(kernels::mul(a.value(), b.value()), {a, b}, [a, b](BasicGraph<T>& gr, const BasicTensor<T>& go) {
    if (gr.requires_grad(a.id)) gr.add_grad(a.id, kernels::mul(go, gr.value(b.id)));
    if (gr.requires_grad(b.id)) gr.add_grad(b.id, kernels::mul(go, gr.value(a.id)));
  });
}

template <typename T>
Var<T> scale(Var<T> a, T s) {
  auto& g = *a.graph;
  return g.push(kernels::scale(a.value(), s), {a}, [a, s](BasicGraph<T>& gr, const BasicTensor<T>& go) {
    gr.add_grad(a.id, kernels::scale(go, s));
  });
}

/// Adds a length-cols bias to every row.
template <typename T>
Var<T> add_row(Var<T> a, Var<T> bias) {
  auto& g = *a.graph;
  return g.push(kernels::add_row(a.value(), bias.value()), {a, bias},
                [a, bias](BasicGraph<T>& gr, const BasicTensor<T>& go) {
                  gr.add_grad(a.id, go);
                  if (gr.requires_grad(bias.id)) gr.add_grad(bias.id, kernels::sum_rows(go));
                });
}

/// x·W + b
template <typename T>
Var<T> linear(Var<T> x, Var<T> w, Var<T> b) {
  return add_row(matmul(x, w), b);
}

template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, T eps) {
  auto& g = *x.graph;
  auto stats = std::make_shared<kernels::NormStats<T>>();
  BasicTensor<T> y = kernels::layer_norm(x.value(), gain.value(), bias.value(), eps, stats.get());
  return g.push(std::move(y), {x, gain, bias}, [x, gain, bias, stats](BasicGraph<T>& gr, const BasicTensor<T>& go) {
    const BasicTensor<T>& xv = gr.value(x.id);
    const BasicTensor<T>& gv = gr.value(gain.id);
    const int d = xv.cols();
    BasicTensor<T> gx(xv.shape());
    BasicTensor<T> ggain({d});
    BasicTensor<T> gbias({d});
    std::vector<T> xhat(static_cast<std::size_t>(d)), gxhat(static_cast<std::size_t>(d));
    for (int r = 0; r < xv.rows(); ++r) {
      const T mean = stats->mean[static_cast<std::size_t>(r)];
      const T rstd = stats->rstd[static_cast<std::size_t>(r)];
      auto xr = xv.row(r);
      auto gr_ = go.row(r);
      T sum_g = 0, sum_gx = 0;
      for (int j = 0; j < d; ++j) {
        const auto jj = static_cast<std::size_t>(j);
        xhat[jj] = (xr[j] - mean) * rstd;
        gxhat[jj] = gr_[j] * gv[jj];
        ggain[jj] += gr_[j] * xhat[jj];
        gbias[jj] += gr_[j];
        sum_g += gxhat[jj];
        sum_gx += gxhat[jj] * xhat[jj];
      }
      auto out = gx.row(r);
      const T inv_d = T(1) / static_cast<T>(d);
      for (int j = 0; j < d; ++j) {
        const auto jj = static_cast<std::size_t>(j);
        out[j] = rstd * (gxhat[jj] - inv_d * sum_g - xhat[jj] * inv_d * sum_gx);
      }
    }
    gr.add_grad(x.id, gx);
    gr.add_grad(gain.id, ggain);
    gr.add_grad(bias.id, gbias);
  });
}

template <typename T>
Var<T> gelu(Var<T> x) {
  auto& g = *x.graph;
  return g.push(kernels::gelu(x.value()), {x}, [x](BasicGraph<T>& gr, const BasicTensor<T>& go) {
    const BasicTensor<T>& xv = gr.value(x.id);
    BasicTensor<T> gx(xv.shape());
    for (std::size_t i = 0; i < xv.size(); ++i) gx[i] = go[i] * kernels::gelu_derivative(xv[i]);
    gr.add_grad(x.id, gx);
  });
}

template <typename T>
Var<T> softmax_rows(Var<T> x) {
  auto& g = *x.graph;
  const int out_id = static_cast<int>(g.size());
  return g.push(kernels::softmax_rows(x.value()), {x}, [x, out_id](BasicGraph<T>& gr, const BasicTensor<T>& go) {
    gr.add_grad(x.id, kernels::softmax_rows_backward(gr.value(out_id), go));
  });
}

template <typename T>
Var<T> slice_cols(Var<T> x, int start, int len) {
  const BasicTensor<T>& xv = x.value();
  if (start < 0 || len <= 0 || start + len > xv.cols()) throw RangeError("slice_cols: out of range");
  BasicTensor<T> y({xv.rows(), len});
  for (int r = 0; r < xv.rows(); ++r) {
    auto src = xv.row(r);
    std::copy(src.begin() + start, src.begin() + start + len, y.row(r).begin());
  }
  return x.graph->push(std::move(y), {x}, [x, start, len](BasicGraph<T>& gr, const BasicTensor<T>& go) {
    const BasicTensor<T>& xv2 = gr.value(x.id);
    BasicTensor<T> gx(xv2.shape());
    for (int r = 0; r < xv2.rows(); ++r) {
      auto src = go.row(r);
      std::copy(src.begin(), src.end(), gx.row(r).begin() + start);
    }
    gr.add_grad(x.id, gx);
  });
}

template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const int rows = parts.front().value().rows();
  int cols = 0;
  for (const auto& p : parts) {
    if (p.value().rows() != rows) throw DimensionError("concat_cols: row counts differ");
    cols += p.value().cols();
  }
  BasicTensor<T> y({rows, cols});
  int off = 0;
  for (const auto& p : parts) {
    const BasicTensor<T>& pv = p.value();
    for (int r = 0; r < rows; ++r) std::copy(pv.row(r).begin(), pv.row(r).end(), y.row(r).begin() + off);
    off += pv.cols();
  }
  return parts.front().graph->push(std::move(y), parts, [parts](BasicGraph<T>& gr, const BasicTensor<T>& go) {
    int off2 = 0;
    for (const auto& p : parts) {
      const BasicTensor<T>& pv = gr.value(p.id);
      const int c = pv.cols();
      if (gr.requires_grad(p.id)) {
        BasicTensor<T> gp({pv.rows(), c});
        for (int r = 0; r < pv.rows(); ++r) {
          auto src = go.row(r);
          std::copy(src.begin() + off2, src.begin() + off2 + c, gp.row(r).begin());
        }
        gr.add_grad(p.id, gp);
      }
      off2 += c;
    }
  });
}

template <typename T>
Var<T> slice_rows(Var<T> x, int start, int len) {
  const BasicTensor<T>& xv = x.value();
  if (start < 0 || len <= 0 || start + len > xv.rows()) throw RangeError("slice_rows: out of range");
  const int c = xv.cols();
  std::vector<T> vals(xv.data().begin() + static_cast<std::ptrdiff_t>(start) * c,
                      xv.data().begin() + static_cast<std::ptrdiff_t>(start + len) * c);
  return x.graph->push(BasicTensor<T>({len, c}, std::move(vals)), {x},
                       [x, start](BasicGraph<T>& gr, const BasicTensor<T>& go) {
                         const BasicTensor<T>& xv2 = gr.value(x.id);
                         BasicTensor<T> gx(xv2.shape());
                         std::copy(go.data().begin(), go.data().end(),
                                   gx.data().begin() + static_cast<std::ptrdiff_t>(start) * xv2.cols());
                         gr.add_grad(x.id, gx);
                       });
}

/// Stacks matrices (or [1×d]-shaped rows) vertically.
template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ContractError("concat_rows: no inputs");
  const int cols = parts.front().value().cols();
  int rows = 0;
  for (const auto& p : parts) {
    if (p.value().cols() != cols) throw DimensionError("concat_rows: column counts differ");
    rows += p.value().rows();
  }
  std::vector<T> vals;
  vals.reserve(static_cast<std::size_t>(rows) * cols);
  for (const auto& p : parts) vals.insert(vals.end(), p.value().data().begin(), p.value().data().end());
  return parts.front().graph->push(
      BasicTensor<T>({rows, cols}, std::move(vals)), parts, [parts](BasicGraph<T>& gr, const BasicTensor<T>& go) {
        std::size_t off = 0;
        for (const auto& p : parts) {
          const BasicTensor<T>& pv = gr.value(p.id);
          if (gr.requires_grad(p.id)) {
            std::vector<T> gv(go.data().begin() + static_cast<std::ptrdiff_t>(off),
                              go.data().begin() + static_cast<std::ptrdiff_t>(off + pv.size()));
            gr.add_grad(p.id, BasicTensor<T>(pv.shape(), std::move(gv)));
          }
          off += pv.size();
        }
      });
}

/// Arithmetic mean of the rows: [m×n] -> [1×n]. Rows are summed in order.
template <typename T>
Var<T> mean_rows(Var<T> x) {
  const BasicTensor<T>& xv = x.value();
  const int m = xv.rows();
  BasicTensor<T> s = kernels::sum_rows(xv);
  for (std::size_t j = 0; j < s.size(); ++j) s[j] /= static_cast<T>(m);
  return x.graph->push(s.reshaped({1, xv.cols()}), {x}, [x, m](BasicGraph<T>& gr, const BasicTensor<T>& go) {
    const BasicTensor<T>& xv2 = gr.value(x.id);
    BasicTensor<T> gx(xv2.shape());
    for (int r = 0; r < xv2.rows(); ++r) {
      auto out = gx.row(r);
      for (int j = 0; j < xv2.cols(); ++j) out[j] = go[static_cast<std::size_t>(j)] / static_cast<T>(m);
    }
    gr.add_grad(x.id, gx);
  });
}

/// Sum of all elements, shape [1].
template <typename T>
Var<T> sum(Var<T> x) {
  T s = 0;
  for (T v : x.value().data()) s += v;
  return x.graph->push(BasicTensor<T>({1}, {s}), {x}, [x](BasicGraph<T>& gr, const BasicTensor<T>& go) {
    gr.add_grad(x.id, BasicTensor<T>::filled(gr.value(x.id).shape(), go[0]));
  });
}

/// -log softmax(logits)[label] for a single row of logits; shape [1].
template <typename T>
Var<T> cross_entropy(Var<T> logits, int label) {
  const BasicTensor<T>& lv = logits.value();
  if (lv.rows() != 1) throw DimensionError("cross_entropy: expected one row of logits");
  if (label < 0 || label >= lv.cols()) throw RangeError("cross_entropy: label " + std::to_string(label) + " out of range");
  BasicTensor<T> probs = kernels::softmax_rows(lv.reshaped({1, lv.cols()}));
  T mx = *std::max_element(lv.data().begin(), lv.data().end());
  T se = 0;
  for (T v : lv.data()) se += std::exp(v - mx);
  const T loss = std::log(se) + mx - lv[static_cast<std::size_t>(label)];
  return logits.graph->push(BasicTensor<T>({1}, {loss}), {logits},
                            [logits, label, probs](BasicGraph<T>& gr, const BasicTensor<T>& go) {
                              BasicTensor<T> gl = probs.reshaped(gr.value(logits.id).shape());
                              gl[static_cast<std::size_t>(label)] -= T(1);
                              for (std::size_t i = 0; i < gl.size(); ++i) gl[i] *= go[0];
                              gr.add_grad(logits.id, gl);
                            });
}

/// sqrt(mean squared error) over the rows flagged in `counted`; shape [1].
/// Zero (with zero gradient) when no row is counted or the error vanishes.
template <typename T>
Var<T> masked_rmse(Var<T> pred, const BasicTensor<T>& target, const std::vector<char>& counted) {
  const BasicTensor<T>& pv = pred.value();
  kernels::require_same_shape(pv, target, "masked_rmse");
  if (static_cast<int>(counted.size()) != pv.rows()) throw DimensionError("masked_rmse: mask length mismatch");
  T se = 0;
  std::size_t n = 0;
  for (int r = 0; r < pv.rows(); ++r) {
    if (!counted[static_cast<std::size_t>(r)]) continue;
    auto pr = pv.row(r);
    auto tr = target.row(r);
    for (int j = 0; j < pv.cols(); ++j) {
      const T e = pr[j] - tr[j];
      se += e * e;
    }
    n += static_cast<std::size_t>(pv.cols());
  }
  const T rmse = n ? std::sqrt(se / static_cast<T>(n)) : T(0);
  return pred.graph->push(BasicTensor<T>({1}, {rmse}), {pred},
                          [pred, target, counted, rmse, n](BasicGraph<T>& gr, const BasicTensor<T>& go) {
                            const BasicTensor<T>& pv2 = gr.value(pred.id);
                            BasicTensor<T> gp(pv2.shape());
                            if (n == 0 || rmse == T(0)) {
                              gr.add_grad(pred.id, gp);
                              return;
                            }
                            const T k = go[0] / (static_cast<T>(n) * rmse);
                            for (int r = 0; r < pv2.rows(); ++r) {
                              if (!counted[static_cast<std::size_t>(r)]) continue;
                              auto pr = pv2.row(r);
                              auto tr = target.row(r);
                              auto out = gp.row(r);
                              for (int j = 0; j < pv2.cols(); ++j) out[j] = (pr[j] - tr[j]) * k;
                            }
                            gr.add_grad(pred.id, gp);
                          });
}

/// Builds a [slots.size() × d] matrix whose row i is `src` row slots[i], or
/// the single `fill` row when slots[i] < 0.
template <typename T>
Var<T> assemble_rows(Var<T> src, Var<T> fill, const std::vector<int>& slots) {
  const BasicTensor<T>& sv = src.value();
  const BasicTensor<T>& fv = fill.value();
  const int d = sv.cols();
  if (fv.cols() != d || fv.rows() != 1) throw DimensionError("assemble_rows: fill must be one row of equal width");
  BasicTensor<T> y({static_cast<int>(slots.size()), d});
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const int s = slots[i];
    if (s >= sv.rows()) throw RangeError("assemble_rows: source row out of range");
    auto from = s >= 0 ? sv.row(s) : fv.row(0);
    std::copy(from.begin(), from.end(), y.row(static_cast<int>(i)).begin());
  }
  return src.graph->push(std::move(y), {src, fill}, [src, fill, slots](BasicGraph<T>& gr, const BasicTensor<T>& go) {
    BasicTensor<T> gs(gr.value(src.id).shape());
    BasicTensor<T> gf(gr.value(fill.id).shape());
    for (std::size_t i = 0; i < slots.size(); ++i) {
      auto from = go.row(static_cast<int>(i));
      auto to = slots[i] >= 0 ? gs.row(slots[i]) : gf.row(0);
      for (std::size_t j = 0; j < from.size(); ++j) to[j] += from[j];
    }
    gr.add_grad(src.id, gs);
    gr.add_grad(fill.id, gf);
  });
}

}  // namespace ad
}  // namespace tore
