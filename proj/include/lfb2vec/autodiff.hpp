// lfb2vec/autodiff.hpp

// Copyright 2026  lfb2vec authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef LFB2VEC_AUTODIFF_HPP_
#define LFB2VEC_AUTODIFF_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "lfb2vec/tensor.hpp"

namespace lfb2vec {
namespace autodiff {

// Handle into a Tape. Tapes are define-by-run and rebuilt every step, so a
// Var is only meaningful for the tape that produced it.
struct Var {
  std::int32_t idx = -1;
  bool valid() const { return idx >= 0; }
};

// Reverse-mode tape over dense tensors. Nodes record their output value and a
// closure that scatters the output gradient into the inputs' gradients.
// backward() walks nodes in reverse creation order, which is a reverse
// topological order by construction; gradients accumulate additively at
// fan-out.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor t, bool requires_grad = false) {
    return push(std::move(t), requires_grad, nullptr);
  }
  Var constant(Tensor t) { return leaf(std::move(t), false); }
  Var constant_scalar(double x) { return leaf(Tensor::scalar(x), false); }

  const Tensor& value(Var a) const { return node(a).val; }
  double scalar_value(Var a) const {
    check(node(a).val.shape.rank == 0, "scalar_value: not a scalar");
    return node(a).val.v[0];
  }

  // Gradient of the last backward() root w.r.t. `a`. Zero tensor if `a` was
  // never reached.
  Tensor grad(Var a) const {
    const Node& n = node(a);
    Tensor g(n.val.shape);
    if (!n.grad.empty()) g.v = n.grad;
    return g;
  }

  // ---- forward ops -------------------------------------------------------

  // y = x W + b with x either (n) or (T,n); W (n,m); b (m). b may be omitted.
  Var affine(Var x, Var w) { return affine_impl(x, w, Var{}); }
  Var affine(Var x, Var w, Var b) { return affine_impl(x, w, b); }

  // y = A x with A (n,m), x (m) -> (n).
  Var matvec(Var a, Var x) {
    const Tensor& av = val(a);
    const Tensor& xv = val(x);
    check(av.shape.rank == 2 && xv.shape.rank == 1 &&
              av.shape.d[1] == xv.shape.d[0],
          "matvec: shape mismatch " + av.shape.str() + " vs " + xv.shape.str());
    std::int64_t n = av.shape.d[0], m = av.shape.d[1];
    Tensor out(Shape::vector(n));
    for (std::int64_t i = 0; i < n; ++i) {
      double acc = 0.0;
      const double* row = av.v.data() + i * m;
      for (std::int64_t j = 0; j < m; ++j) acc += row[j] * xv.v[static_cast<std::size_t>(j)];
      out.v[static_cast<std::size_t>(i)] = acc;
    }
    bool ng = needs(a) || needs(x);
    Var y = push(std::move(out), ng, nullptr);
    if (ng)
      set_back(y, [this, a, x, y, n, m]() {
        const std::vector<double>& g = node(y).grad;
        const Tensor& av2 = val(a);
        const Tensor& xv2 = val(x);
        if (needs(a)) {
          std::vector<double>& ga = grad_buf(a);
          for (std::int64_t i = 0; i < n; ++i)
            for (std::int64_t j = 0; j < m; ++j)
              ga[static_cast<std::size_t>(i * m + j)] +=
                  g[static_cast<std::size_t>(i)] * xv2.v[static_cast<std::size_t>(j)];
        }
        if (needs(x)) {
          std::vector<double>& gx = grad_buf(x);
          for (std::int64_t i = 0; i < n; ++i) {
            double gi = g[static_cast<std::size_t>(i)];
            const double* row = av2.v.data() + i * m;
            for (std::int64_t j = 0; j < m; ++j) gx[static_cast<std::size_t>(j)] += gi * row[j];
          }
        }
      });
    return y;
  }

  Var add(Var a, Var b) { return ew_binary(a, b, Ew::kAdd); }
  Var sub(Var a, Var b) { return ew_binary(a, b, Ew::kSub); }
  Var mul(Var a, Var b) { return ew_binary(a, b, Ew::kMul); }

  // Elementwise a / b; b must be nonzero everywhere.
  Var div(Var a, Var b) { return ew_binary(a, b, Ew::kDiv); }

  Var scale(Var a, double c) {
    Tensor out = val(a);
    for (double& x : out.v) x *= c;
    bool ng = needs(a);
    Var y = push(std::move(out), ng, nullptr);
    if (ng)
      set_back(y, [this, a, y, c]() {
        const std::vector<double>& g = node(y).grad;
        std::vector<double>& ga = grad_buf(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
      });
    return y;
  }

  Var add_const(Var a, double c) {
    Tensor out = val(a);
    for (double& x : out.v) x += c;
    bool ng = needs(a);
    Var y = push(std::move(out), ng, nullptr);
    if (ng)
      set_back(y, [this, a, y]() {
        const std::vector<double>& g = node(y).grad;
        std::vector<double>& ga = grad_buf(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      });
    return y;
  }

  Var tanh_(Var a) { return unary(a, Un::kTanh); }
  Var sigmoid(Var a) { return unary(a, Un::kSigmoid); }
  Var exp_(Var a) { return unary(a, Un::kExp); }
  Var log_(Var a) { return unary(a, Un::kLog); }

  // Row t of a matrix as a rank-1 vector.
  Var row(Var x, std::int64_t t) {
    const Tensor& xv = val(x);
    check(xv.shape.rank == 2 && t >= 0 && t < xv.shape.d[0],
          "row: index " + std::to_string(t) + " out of " + xv.shape.str());
    std::int64_t c = xv.shape.d[1];
    Tensor out(Shape::vector(c));
    std::copy_n(xv.v.data() + t * c, c, out.v.data());
    bool ng = needs(x);
    Var y = push(std::move(out), ng, nullptr);
    if (ng)
      set_back(y, [this, x, y, t, c]() {
        const std::vector<double>& g = node(y).grad;
        std::vector<double>& gx = grad_buf(x);
        for (std::int64_t j = 0; j < c; ++j)
          gx[static_cast<std::size_t>(t * c + j)] += g[static_cast<std::size_t>(j)];
      });
    return y;
  }

  // Contiguous slice along the first axis (rows of a matrix or elements of a
  // vector).
  Var slice_rows(Var x, std::int64_t start, std::int64_t len) {
    const Tensor& xv = val(x);
    check(xv.shape.rank >= 1 && start >= 0 && len >= 0 &&
              start + len <= xv.shape.d[0],
          "slice_rows: [" + std::to_string(start) + "," +
              std::to_string(start + len) + ") out of " + xv.shape.str());
    std::int64_t c = xv.shape.rank == 2 ? xv.shape.d[1] : 1;
    Shape s = xv.shape.rank == 2 ? Shape::matrix(len, c) : Shape::vector(len);
    Tensor out(s);
    std::copy_n(xv.v.data() + start * c, len * c, out.v.data());
    bool ng = needs(x);
    Var y = push(std::move(out), ng, nullptr);
    if (ng)
      set_back(y, [this, x, y, start, len, c]() {
        const std::vector<double>& g = node(y).grad;
        std::vector<double>& gx = grad_buf(x);
        for (std::int64_t i = 0; i < len * c; ++i)
          gx[static_cast<std::size_t>(start * c + i)] += g[static_cast<std::size_t>(i)];
      });
    return y;
  }

  Var concat_rows(Var a, Var b) {
    const Tensor& av = val(a);
    const Tensor& bv = val(b);
    check(av.shape.rank == bv.shape.rank &&
              (av.shape.rank == 1 ||
               (av.shape.rank == 2 && av.shape.d[1] == bv.shape.d[1])),
          "concat_rows: shape mismatch " + av.shape.str() + " vs " +
              bv.shape.str());
    std::int64_t c = av.shape.rank == 2 ? av.shape.d[1] : 1;
    std::int64_t ra = av.shape.d[0], rb = bv.shape.d[0];
    Shape s = av.shape.rank == 2 ? Shape::matrix(ra + rb, c)
                                 : Shape::vector(ra + rb);
    Tensor out(s);
    std::copy(av.v.begin(), av.v.end(), out.v.begin());
    std::copy(bv.v.begin(), bv.v.end(), out.v.begin() + static_cast<std::ptrdiff_t>(ra * c));
    bool ng = needs(a) || needs(b);
    Var y = push(std::move(out), ng, nullptr);
    if (ng)
      set_back(y, [this, a, b, y, ra, rb, c]() {
        const std::vector<double>& g = node(y).grad;
        if (needs(a)) {
          std::vector<double>& ga = grad_buf(a);
          for (std::int64_t i = 0; i < ra * c; ++i) ga[static_cast<std::size_t>(i)] += g[static_cast<std::size_t>(i)];
        }
        if (needs(b)) {
          std::vector<double>& gb = grad_buf(b);
          for (std::int64_t i = 0; i < rb * c; ++i)
            gb[static_cast<std::size_t>(i)] += g[static_cast<std::size_t>(ra * c + i)];
        }
      });
    return y;
  }

  // Column-wise concat of two matrices with equal row counts.
  Var concat_cols(Var a, Var b) {
    const Tensor& av = val(a);
    const Tensor& bv = val(b);
    check(av.shape.rank == 2 && bv.shape.rank == 2 &&
              av.shape.d[0] == bv.shape.d[0],
          "concat_cols: shape mismatch " + av.shape.str() + " vs " +
              bv.shape.str());
    std::int64_t r = av.shape.d[0], ca = av.shape.d[1], cb = bv.shape.d[1];
    Tensor out(Shape::matrix(r, ca + cb));
    for (std::int64_t i = 0; i < r; ++i) {
      std::copy_n(av.v.data() + i * ca, ca, out.v.data() + i * (ca + cb));
      std::copy_n(bv.v.data() + i * cb, cb, out.v.data() + i * (ca + cb) + ca);
    }
    bool ng = needs(a) || needs(b);
    Var y = push(std::move(out), ng, nullptr);
    if (ng)
      set_back(y, [this, a, b, y, r, ca, cb]() {
        const std::vector<double>& g = node(y).grad;
        if (needs(a)) {
          std::vector<double>& ga = grad_buf(a);
          for (std::int64_t i = 0; i < r; ++i)
            for (std::int64_t j = 0; j < ca; ++j)
              ga[static_cast<std::size_t>(i * ca + j)] += g[static_cast<std::size_t>(i * (ca + cb) + j)];
        }
        if (needs(b)) {
          std::vector<double>& gb = grad_buf(b);
          for (std::int64_t i = 0; i < r; ++i)
            for (std::int64_t j = 0; j < cb; ++j)
              gb[static_cast<std::size_t>(i * cb + j)] += g[static_cast<std::size_t>(i * (ca + cb) + ca + j)];
        }
      });
    return y;
  }

  // Stack equal-length vectors as matrix rows.
  Var stack_rows(const std::vector<Var>& rows, std::int64_t cols_if_empty = 0) {
    if (rows.empty())
      return constant(Tensor(Shape::matrix(0, cols_if_empty)));
    std::int64_t c = val(rows[0]).shape.d[0];
    bool ng = false;
    for (Var r : rows) {
      check(val(r).shape.rank == 1 && val(r).shape.d[0] == c,
            "stack_rows: shape mismatch " + val(r).shape.str() + " vs [" +
                std::to_string(c) + "]");
      ng = ng || needs(r);
    }
    std::int64_t n = static_cast<std::int64_t>(rows.size());
    Tensor out(Shape::matrix(n, c));
    for (std::int64_t i = 0; i < n; ++i)
      std::copy_n(val(rows[static_cast<std::size_t>(i)]).v.data(), c,
                  out.v.data() + i * c);
    Var y = push(std::move(out), ng, nullptr);
    if (ng)
      set_back(y, [this, rows, y, c]() {
        const std::vector<double>& g = node(y).grad;
        for (std::size_t i = 0; i < rows.size(); ++i) {
          if (!needs(rows[i])) continue;
          std::vector<double>& gr = grad_buf(rows[i]);
          for (std::int64_t j = 0; j < c; ++j)
            gr[static_cast<std::size_t>(j)] += g[i * static_cast<std::size_t>(c) + static_cast<std::size_t>(j)];
        }
      });
    return y;
  }

  // Gather rows of a matrix by index (duplicates allowed); backward
  // scatter-adds.
  Var gather_rows(Var x, std::vector<std::int64_t> idx) {
    const Tensor& xv = val(x);
    check(xv.shape.rank == 2, "gather_rows: need matrix, got " + xv.shape.str());
    std::int64_t c = xv.shape.d[1];
    for (std::int64_t i : idx)
      check(i >= 0 && i < xv.shape.d[0],
            "gather_rows: index " + std::to_string(i) + " out of " +
                xv.shape.str());
    Tensor out(Shape::matrix(static_cast<std::int64_t>(idx.size()), c));
    for (std::size_t i = 0; i < idx.size(); ++i)
      std::copy_n(xv.v.data() + idx[i] * c, c, out.v.data() + static_cast<std::int64_t>(i) * c);
    bool ng = needs(x);
    Var y = push(std::move(out), ng, nullptr);
    if (ng)
      set_back(y, [this, x, y, idx = std::move(idx), c]() {
        const std::vector<double>& g = node(y).grad;
        std::vector<double>& gx = grad_buf(x);
        for (std::size_t i = 0; i < idx.size(); ++i)
          for (std::int64_t j = 0; j < c; ++j)
            gx[static_cast<std::size_t>(idx[i] * c + j)] +=
                g[i * static_cast<std::size_t>(c) + static_cast<std::size_t>(j)];
      });
    return y;
  }

  // Replace the rows flagged in `mask` (size = rows of x) by `fill` (vector of
  // x's column count). Gradient w.r.t. x is zeroed on masked rows; gradient
  // w.r.t. fill is the sum over masked rows.
  Var mask_rows(Var x, const std::vector<std::uint8_t>& mask, Var fill) {
    const Tensor& xv = val(x);
    const Tensor& fv = val(fill);
    check(xv.shape.rank == 2 &&
              mask.size() == static_cast<std::size_t>(xv.shape.d[0]) &&
              fv.shape.rank == 1 && fv.shape.d[0] == xv.shape.d[1],
          "mask_rows: shape mismatch " + xv.shape.str() + " vs fill " +
              fv.shape.str());
    std::int64_t r = xv.shape.d[0], c = xv.shape.d[1];
    Tensor out = xv;
    for (std::int64_t i = 0; i < r; ++i)
      if (mask[static_cast<std::size_t>(i)])
        std::copy_n(fv.v.data(), c, out.v.data() + i * c);
    bool ng = needs(x) || needs(fill);
    Var y = push(std::move(out), ng, nullptr);
    if (ng)
      set_back(y, [this, x, fill, y, mask, r, c]() {
        const std::vector<double>& g = node(y).grad;
        if (needs(x)) {
          std::vector<double>& gx = grad_buf(x);
          for (std::int64_t i = 0; i < r; ++i)
            if (!mask[static_cast<std::size_t>(i)])
              for (std::int64_t j = 0; j < c; ++j)
                gx[static_cast<std::size_t>(i * c + j)] += g[static_cast<std::size_t>(i * c + j)];
        }
        if (needs(fill)) {
          std::vector<double>& gf = grad_buf(fill);
          for (std::int64_t i = 0; i < r; ++i)
            if (mask[static_cast<std::size_t>(i)])
              for (std::int64_t j = 0; j < c; ++j)
                gf[static_cast<std::size_t>(j)] += g[static_cast<std::size_t>(i * c + j)];
        }
      });
    return y;
  }

  // Row-wise L2 normalization, y_i = x_i / (|x_i| + eps) with eps = 1e-12.
  // A rank-1 input is treated as a single row.
  Var l2_normalize_rows(Var x) {
    constexpr double kEps = 1e-12;
    const Tensor& xv = val(x);
    check(xv.shape.rank == 1 || xv.shape.rank == 2,
          "l2_normalize_rows: bad shape " + xv.shape.str());
    std::int64_t r = xv.shape.rank == 2 ? xv.shape.d[0] : 1;
    std::int64_t c = xv.shape.rank == 2 ? xv.shape.d[1] : xv.shape.d[0];
    Tensor out = xv;
    std::vector<double> norms(static_cast<std::size_t>(r));
    for (std::int64_t i = 0; i < r; ++i) {
      double ss = 0.0;
      for (std::int64_t j = 0; j < c; ++j) {
        double u = xv.v[static_cast<std::size_t>(i * c + j)];
        ss += u * u;
      }
      double n = std::sqrt(ss);
      norms[static_cast<std::size_t>(i)] = n;
      double inv = 1.0 / (n + kEps);
      for (std::int64_t j = 0; j < c; ++j) out.v[static_cast<std::size_t>(i * c + j)] *= inv;
    }
    bool ng = needs(x);
    Var y = push(std::move(out), ng, nullptr);
    if (ng)
      set_back(y, [this, x, y, norms = std::move(norms), r, c]() {
        const std::vector<double>& g = node(y).grad;
        const Tensor& xv2 = val(x);
        std::vector<double>& gx = grad_buf(x);
        for (std::int64_t i = 0; i < r; ++i) {
          double n = norms[static_cast<std::size_t>(i)];
          double d = n + kEps;
          double gdotx = 0.0;
          for (std::int64_t j = 0; j < c; ++j)
            gdotx += g[static_cast<std::size_t>(i * c + j)] * xv2.v[static_cast<std::size_t>(i * c + j)];
          double coef = n > 0.0 ? gdotx / (n * d * d) : 0.0;
          for (std::int64_t j = 0; j < c; ++j)
            gx[static_cast<std::size_t>(i * c + j)] +=
                g[static_cast<std::size_t>(i * c + j)] / d - coef * xv2.v[static_cast<std::size_t>(i * c + j)];
        }
      });
    return y;
  }

  // Dot product over flattened elements; shapes must have equal numel.
  Var dot(Var a, Var b) {
    const Tensor& av = val(a);
    const Tensor& bv = val(b);
    check(av.shape.numel() == bv.shape.numel(),
          "dot: shape mismatch " + av.shape.str() + " vs " + bv.shape.str());
    double acc = 0.0;
    for (std::size_t i = 0; i < av.v.size(); ++i) acc += av.v[i] * bv.v[i];
    bool ng = needs(a) || needs(b);
    Var y = push(Tensor::scalar(acc), ng, nullptr);
    if (ng)
      set_back(y, [this, a, b, y]() {
        double g = node(y).grad[0];
        const Tensor& av2 = val(a);
        const Tensor& bv2 = val(b);
        if (needs(a)) {
          std::vector<double>& ga = grad_buf(a);
          for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * bv2.v[i];
        }
        if (needs(b)) {
          std::vector<double>& gb = grad_buf(b);
          for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g * av2.v[i];
        }
      });
    return y;
  }

  // log sum exp over all elements, max-shifted for stability.
  Var logsumexp(Var a) {
    const Tensor& av = val(a);
    check(av.shape.numel() >= 1, "logsumexp: empty input");
    double m = -std::numeric_limits<double>::infinity();
    for (double x : av.v) m = std::max(m, x);
    double s = 0.0;
    for (double x : av.v) s += std::exp(x - m);
    double y_val = m + std::log(s);
    bool ng = needs(a);
    Var y = push(Tensor::scalar(y_val), ng, nullptr);
    if (ng)
      set_back(y, [this, a, y, y_val]() {
        double g = node(y).grad[0];
        const Tensor& av2 = val(a);
        std::vector<double>& ga = grad_buf(a);
        for (std::size_t i = 0; i < ga.size(); ++i)
          ga[i] += g * std::exp(av2.v[i] - y_val);
      });
    return y;
  }

  Var sum(Var a) { return reduce(a, false); }
  Var mean(Var a) { return reduce(a, true); }

  // Element i of a rank-1 vector as a scalar.
  Var element(Var x, std::int64_t i) {
    const Tensor& xv = val(x);
    check(xv.shape.rank == 1 && i >= 0 && i < xv.shape.d[0],
          "element: index " + std::to_string(i) + " out of " + xv.shape.str());
    bool ng = needs(x);
    Var y = push(Tensor::scalar(xv.v[static_cast<std::size_t>(i)]), ng, nullptr);
    if (ng)
      set_back(y, [this, x, y, i]() {
        grad_buf(x)[static_cast<std::size_t>(i)] += node(y).grad[0];
      });
    return y;
  }

  // y_i = a_i - b with scalar b broadcast over a.
  Var sub_broadcast(Var a, Var b) {
    const Tensor& av = val(a);
    const Tensor& bv = val(b);
    check(bv.shape.rank == 0, "sub_broadcast: second arg must be scalar, got " +
                                  bv.shape.str());
    Tensor out = av;
    for (double& x : out.v) x -= bv.v[0];
    bool ng = needs(a) || needs(b);
    Var y = push(std::move(out), ng, nullptr);
    if (ng)
      set_back(y, [this, a, b, y]() {
        const std::vector<double>& g = node(y).grad;
        if (needs(a)) {
          std::vector<double>& ga = grad_buf(a);
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (needs(b)) {
          double s = 0.0;
          for (double gi : g) s += gi;
          grad_buf(b)[0] -= s;
        }
      });
    return y;
  }

  Var stack_scalars(const std::vector<Var>& xs) {
    Tensor out(Shape::vector(static_cast<std::int64_t>(xs.size())));
    bool ng = false;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      check(val(xs[i]).shape.rank == 0,
            "stack_scalars: not a scalar at " + std::to_string(i));
      out.v[i] = val(xs[i]).v[0];
      ng = ng || needs(xs[i]);
    }
    Var y = push(std::move(out), ng, nullptr);
    if (ng)
      set_back(y, [this, xs, y]() {
        const std::vector<double>& g = node(y).grad;
        for (std::size_t i = 0; i < xs.size(); ++i)
          if (needs(xs[i])) grad_buf(xs[i])[0] += g[i];
      });
    return y;
  }

  // Mean (or sum) over rows of -log softmax(logits_t)[labels_t].
  Var softmax_xent(Var logits, const std::vector<std::int64_t>& labels,
                   bool mean_over_rows = true) {
    const Tensor& lv = val(logits);
    check(lv.shape.rank == 2, "softmax_xent: need matrix, got " + lv.shape.str());
    std::int64_t t_rows = lv.shape.d[0], k = lv.shape.d[1];
    check(labels.size() == static_cast<std::size_t>(t_rows),
          "softmax_xent: labels size " + std::to_string(labels.size()) +
              " vs rows " + std::to_string(t_rows));
    for (std::int64_t lab : labels)
      check(lab >= 0 && lab < k,
            "softmax_xent: label " + std::to_string(lab) + " out of [0," +
                std::to_string(k) + ")");
    std::vector<double> probs(static_cast<std::size_t>(t_rows * k));
    double total = 0.0;
    for (std::int64_t t = 0; t < t_rows; ++t) {
      const double* rowp = lv.v.data() + t * k;
      double m = -std::numeric_limits<double>::infinity();
      for (std::int64_t j = 0; j < k; ++j) m = std::max(m, rowp[j]);
      double s = 0.0;
      for (std::int64_t j = 0; j < k; ++j) s += std::exp(rowp[j] - m);
      double lse = m + std::log(s);
      for (std::int64_t j = 0; j < k; ++j)
        probs[static_cast<std::size_t>(t * k + j)] = std::exp(rowp[j] - lse);
      total += lse - rowp[labels[static_cast<std::size_t>(t)]];
    }
    double denom = mean_over_rows && t_rows > 0 ? static_cast<double>(t_rows) : 1.0;
    bool ng = needs(logits);
    Var y = push(Tensor::scalar(total / denom), ng, nullptr);
    if (ng)
      set_back(y, [this, logits, y, labels, probs = std::move(probs), t_rows, k,
                   denom]() {
        double g = node(y).grad[0] / denom;
        std::vector<double>& gl = grad_buf(logits);
        for (std::int64_t t = 0; t < t_rows; ++t)
          for (std::int64_t j = 0; j < k; ++j) {
            double p = probs[static_cast<std::size_t>(t * k + j)];
            double ind = j == labels[static_cast<std::size_t>(t)] ? 1.0 : 0.0;
            gl[static_cast<std::size_t>(t * k + j)] += g * (p - ind);
          }
      });
    return y;
  }

  // Identity forward, gradient barrier backward.
  Var detach(Var a) { return push(val(a), false, nullptr); }

  // ---- backward ----------------------------------------------------------

  void backward(Var root) {
    check(node(root).val.shape.rank == 0, "backward: root must be scalar");
    grad_buf(root)[0] += 1.0;
    for (std::int32_t i = root.idx; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (!n.needs_grad || n.grad.empty() || !n.back) continue;
      n.back();
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  enum class Ew { kAdd, kSub, kMul, kDiv };
  enum class Un { kTanh, kSigmoid, kExp, kLog };

  struct Node {
    Tensor val;
    std::vector<double> grad;  // lazily sized on first touch
    bool needs_grad = false;
    std::function<void()> back;
  };

  static void check(bool ok, const std::string& msg) {
    if (!ok) throw NumericalError(msg);
  }

  const Node& node(Var a) const {
    check(a.valid() && static_cast<std::size_t>(a.idx) < nodes_.size(),
          "invalid Var");
    return nodes_[static_cast<std::size_t>(a.idx)];
  }
  Node& node(Var a) {
    check(a.valid() && static_cast<std::size_t>(a.idx) < nodes_.size(),
          "invalid Var");
    return nodes_[static_cast<std::size_t>(a.idx)];
  }

  const Tensor& val(Var a) const { return node(a).val; }
  bool needs(Var a) const { return node(a).needs_grad; }

  std::vector<double>& grad_buf(Var a) {
    Node& n = node(a);
    if (n.grad.empty()) n.grad.assign(n.val.v.size(), 0.0);
    return n.grad;
  }

  Var push(Tensor t, bool needs_grad, std::function<void()> back) {
    Node n;
    n.val = std::move(t);
    n.needs_grad = needs_grad;
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
  }

  void set_back(Var y, std::function<void()> fn) { node(y).back = std::move(fn); }

  Var affine_impl(Var x, Var w, Var b) {
    const Tensor& xv = val(x);
    const Tensor& wv = val(w);
    check(wv.shape.rank == 2, "affine: W must be matrix, got " + wv.shape.str());
    std::int64_t n = wv.shape.d[0], m = wv.shape.d[1];
    bool matrix_in = xv.shape.rank == 2;
    check((matrix_in && xv.shape.d[1] == n) ||
              (xv.shape.rank == 1 && xv.shape.d[0] == n),
          "affine: shape mismatch " + xv.shape.str() + " vs " + wv.shape.str());
    if (b.valid())
      check(val(b).shape.rank == 1 && val(b).shape.d[0] == m,
            "affine: bias shape " + val(b).shape.str() + " vs [" +
                std::to_string(m) + "]");
    std::int64_t t_rows = matrix_in ? xv.shape.d[0] : 1;
    Tensor out(matrix_in ? Shape::matrix(t_rows, m) : Shape::vector(m));
    const double* bp = b.valid() ? val(b).v.data() : nullptr;
    for (std::int64_t t = 0; t < t_rows; ++t) {
      double* op = out.v.data() + t * m;
      if (bp)
        std::copy_n(bp, m, op);
      for (std::int64_t i = 0; i < n; ++i) {
        double xi = xv.v[static_cast<std::size_t>(t * n + i)];
        if (xi == 0.0) continue;
        const double* wrow = wv.v.data() + i * m;
        for (std::int64_t j = 0; j < m; ++j) op[j] += xi * wrow[j];
      }
    }
    bool ng = needs(x) || needs(w) || (b.valid() && needs(b));
    Var y = push(std::move(out), ng, nullptr);
    if (ng)
      set_back(y, [this, x, w, b, y, t_rows, n, m]() {
        const std::vector<double>& g = node(y).grad;
        const Tensor& xv2 = val(x);
        const Tensor& wv2 = val(w);
        if (needs(x)) {
          std::vector<double>& gx = grad_buf(x);
          for (std::int64_t t = 0; t < t_rows; ++t)
            for (std::int64_t i = 0; i < n; ++i) {
              const double* wrow = wv2.v.data() + i * m;
              const double* grow = g.data() + t * m;
              double acc = 0.0;
              for (std::int64_t j = 0; j < m; ++j) acc += wrow[j] * grow[j];
              gx[static_cast<std::size_t>(t * n + i)] += acc;
            }
        }
        if (needs(w)) {
          std::vector<double>& gw = grad_buf(w);
          for (std::int64_t t = 0; t < t_rows; ++t)
            for (std::int64_t i = 0; i < n; ++i) {
              double xi = xv2.v[static_cast<std::size_t>(t * n + i)];
              if (xi == 0.0) continue;
              const double* grow = g.data() + t * m;
              double* gwrow = gw.data() + i * m;
              for (std::int64_t j = 0; j < m; ++j) gwrow[j] += xi * grow[j];
            }
        }
        if (b.valid() && needs(b)) {
          std::vector<double>& gb = grad_buf(b);
          for (std::int64_t t = 0; t < t_rows; ++t)
            for (std::int64_t j = 0; j < m; ++j)
              gb[static_cast<std::size_t>(j)] += g[static_cast<std::size_t>(t * m + j)];
        }
      });
    return y;
  }

  Var ew_binary(Var a, Var b, Ew op) {
    const Tensor& av = val(a);
    const Tensor& bv = val(b);
    check(av.shape == bv.shape, "elementwise: shape mismatch " +
                                    av.shape.str() + " vs " + bv.shape.str());
    Tensor out = av;
    for (std::size_t i = 0; i < out.v.size(); ++i) {
      switch (op) {
        case Ew::kAdd: out.v[i] += bv.v[i]; break;
        case Ew::kSub: out.v[i] -= bv.v[i]; break;
        case Ew::kMul: out.v[i] *= bv.v[i]; break;
        case Ew::kDiv:
          check(bv.v[i] != 0.0, "div: zero denominator");
          out.v[i] /= bv.v[i];
          break;
      }
    }
    bool ng = needs(a) || needs(b);
    Var y = push(std::move(out), ng, nullptr);
    if (ng)
      set_back(y, [this, a, b, y, op]() {
        const std::vector<double>& g = node(y).grad;
        const Tensor& av2 = val(a);
        const Tensor& bv2 = val(b);
        if (needs(a)) {
          std::vector<double>& ga = grad_buf(a);
          for (std::size_t i = 0; i < g.size(); ++i) {
            switch (op) {
              case Ew::kAdd:
              case Ew::kSub: ga[i] += g[i]; break;
              case Ew::kMul: ga[i] += g[i] * bv2.v[i]; break;
              case Ew::kDiv: ga[i] += g[i] / bv2.v[i]; break;
            }
          }
        }
        if (needs(b)) {
          std::vector<double>& gb = grad_buf(b);
          for (std::size_t i = 0; i < g.size(); ++i) {
            switch (op) {
              case Ew::kAdd: gb[i] += g[i]; break;
              case Ew::kSub: gb[i] -= g[i]; break;
              case Ew::kMul: gb[i] += g[i] * av2.v[i]; break;
              case Ew::kDiv:
                gb[i] -= g[i] * av2.v[i] / (bv2.v[i] * bv2.v[i]);
                break;
            }
          }
        }
      });
    return y;
  }

  Var unary(Var a, Un op) {
    Tensor out = val(a);
    for (double& x : out.v) {
      switch (op) {
        case Un::kTanh: x = std::tanh(x); break;
        case Un::kSigmoid: x = 1.0 / (1.0 + std::exp(-x)); break;
        case Un::kExp: x = std::exp(x); break;
        case Un::kLog:
          check(x > 0.0, "log: non-positive input");
          x = std::log(x);
          break;
      }
    }
    bool ng = needs(a);
    Var y = push(std::move(out), ng, nullptr);
    if (ng)
      set_back(y, [this, a, y, op]() {
        const std::vector<double>& g = node(y).grad;
        const Tensor& av2 = val(a);
        const Tensor& yv = node(y).val;
        std::vector<double>& ga = grad_buf(a);
        for (std::size_t i = 0; i < g.size(); ++i) {
          switch (op) {
            case Un::kTanh: ga[i] += g[i] * (1.0 - yv.v[i] * yv.v[i]); break;
            case Un::kSigmoid: ga[i] += g[i] * yv.v[i] * (1.0 - yv.v[i]); break;
            case Un::kExp: ga[i] += g[i] * yv.v[i]; break;
            case Un::kLog: ga[i] += g[i] / av2.v[i]; break;
          }
        }
      });
    return y;
  }

  Var reduce(Var a, bool mean_flag) {
    const Tensor& av = val(a);
    double s = 0.0;
    for (double x : av.v) s += x;
    double n = static_cast<double>(av.v.size());
    if (mean_flag) {
      check(!av.v.empty(), "mean: empty input");
      s /= n;
    }
    bool ng = needs(a);
    Var y = push(Tensor::scalar(s), ng, nullptr);
    if (ng)
      set_back(y, [this, a, y, mean_flag, n]() {
        double g = node(y).grad[0];
        if (mean_flag) g /= n;
        std::vector<double>& ga = grad_buf(a);
        for (double& x : ga) x += g;
      });
    return y;
  }

  std::vector<Node> nodes_;
};

// Central-finite-difference validation of reverse-mode gradients. `build`
// must construct a scalar from the leaf vars it is handed; it is re-run many
// times, so it must be deterministic (checked by evaluating twice).
struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst;  // "p<i>[<j>]" coordinate of the worst mismatch
};

inline GradCheckReport grad_check(
    const std::function<Var(Tape&, const std::vector<Var>&)>& build,
    const std::vector<Tensor>& params, double eps = 1e-5) {
  auto eval = [&](const std::vector<Tensor>& p, bool with_grad,
                  std::vector<Tensor>* grads) {
    Tape tape;
    std::vector<Var> leaves;
    leaves.reserve(p.size());
    for (const Tensor& t : p) leaves.push_back(tape.leaf(t, with_grad));
    Var root = build(tape, leaves);
    double v = tape.scalar_value(root);
    if (with_grad) {
      tape.backward(root);
      grads->clear();
      for (Var l : leaves) grads->push_back(tape.grad(l));
    }
    return v;
  };

  std::vector<Tensor> analytic;
  double v0 = eval(params, true, &analytic);
  double v1 = eval(params, false, nullptr);
  if (v0 != v1)
    throw NumericalError("grad_check: function is non-deterministic (" +
                         std::to_string(v0) + " vs " + std::to_string(v1) + ")");

  GradCheckReport report;
  std::vector<Tensor> work = params;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    for (std::size_t j = 0; j < params[pi].v.size(); ++j) {
      double orig = work[pi].v[j];
      work[pi].v[j] = orig + eps;
      double fp = eval(work, false, nullptr);
      work[pi].v[j] = orig - eps;
      double fm = eval(work, false, nullptr);
      work[pi].v[j] = orig;
      double numeric = (fp - fm) / (2.0 * eps);
      double a = analytic[pi].v[j];
      double rel = std::fabs(a - numeric) /
                   std::max({std::fabs(a), std::fabs(numeric), 1e-8});
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst = "p" + std::to_string(pi) + "[" + std::to_string(j) + "]";
      }
    }
  }
  return report;
}

}  // namespace autodiff
}  // namespace lfb2vec

#endif  // LFB2VEC_AUTODIFF_HPP_
