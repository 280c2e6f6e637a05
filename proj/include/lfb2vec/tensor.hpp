// lfb2vec/tensor.hpp

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

#ifndef LFB2VEC_TENSOR_HPP_
#define LFB2VEC_TENSOR_HPP_

#include <array>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <vector>

#include "lfb2vec/common.hpp"

namespace lfb2vec {

// Dense shapes up to rank 3 (batch x time x feature is the largest layout any
// model here needs). No broadcasting: mismatches are hard errors.
struct Shape {
  std::array<std::int64_t, 3> d{1, 1, 1};
  int rank = 0;

  static Shape scalar() { return Shape{}; }
  static Shape vector(std::int64_t n) { return Shape{{n, 1, 1}, 1}; }
  static Shape matrix(std::int64_t r, std::int64_t c) { return Shape{{r, c, 1}, 2}; }
  static Shape cube(std::int64_t a, std::int64_t b, std::int64_t c) {
    return Shape{{a, b, c}, 3};
  }

  std::int64_t numel() const {
    std::int64_t n = 1;
    for (int i = 0; i < rank; ++i) n *= d[static_cast<std::size_t>(i)];
    return n;
  }

  std::int64_t rows() const { return rank >= 1 ? d[0] : 1; }
  std::int64_t cols() const { return rank >= 2 ? d[1] : 1; }

  bool operator==(const Shape& o) const {
    if (rank != o.rank) return false;
    for (int i = 0; i < rank; ++i)
      if (d[static_cast<std::size_t>(i)] != o.d[static_cast<std::size_t>(i)])
        return false;
    return true;
  }
  bool operator!=(const Shape& o) const { return !(*this == o); }

  std::string str() const {
    std::ostringstream os;
    os << "[";
    for (int i = 0; i < rank; ++i)
      os << (i ? "," : "") << d[static_cast<std::size_t>(i)];
    os << "]";
    return os.str();
  }
};

struct Tensor {
  Shape shape;
  std::vector<double> v;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0)
      : shape(s), v(static_cast<std::size_t>(s.numel()), fill) {}

  static Tensor scalar(double x) {
    Tensor t(Shape::scalar());
    t.v[0] = x;
    return t;
  }
  static Tensor vector(std::vector<double> data) {
    Tensor t;
    t.shape = Shape::vector(static_cast<std::int64_t>(data.size()));
    t.v = std::move(data);
    return t;
  }
  static Tensor matrix(std::int64_t r, std::int64_t c,
                       std::vector<double> data = {}) {
    Tensor t(Shape::matrix(r, c));
    if (!data.empty()) t.v = std::move(data);
    return t;
  }

  double& at(std::int64_t i) { return v[static_cast<std::size_t>(i)]; }
  double at(std::int64_t i) const { return v[static_cast<std::size_t>(i)]; }
  double& at(std::int64_t i, std::int64_t j) {
    return v[static_cast<std::size_t>(i * shape.d[1] + j)];
  }
  double at(std::int64_t i, std::int64_t j) const {
    return v[static_cast<std::size_t>(i * shape.d[1] + j)];
  }

  bool is_finite() const {
    for (double x : v)
      if (!std::isfinite(x)) return false;
    return true;
  }
};

}  // namespace lfb2vec

#endif  // LFB2VEC_TENSOR_HPP_
