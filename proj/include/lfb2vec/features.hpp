// lfb2vec/features.hpp

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

#ifndef LFB2VEC_FEATURES_HPP_
#define LFB2VEC_FEATURES_HPP_

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "lfb2vec/common.hpp"
#include "lfb2vec/tensor.hpp"

namespace lfb2vec {

// A T x D sequence of log-Mel frames (natural-log energies), row-major.
struct FeatureMatrix {
  std::int64_t n_frames = 0;
  std::int64_t n_mels = 0;
  std::vector<double> v;

  FeatureMatrix() = default;
  FeatureMatrix(std::int64_t t, std::int64_t d, double fill = 0.0)
      : n_frames(t), n_mels(d), v(static_cast<std::size_t>(t * d), fill) {}

  double& at(std::int64_t t, std::int64_t d) {
    return v[static_cast<std::size_t>(t * n_mels + d)];
  }
  double at(std::int64_t t, std::int64_t d) const {
    return v[static_cast<std::size_t>(t * n_mels + d)];
  }

  Tensor to_tensor() const {
    Tensor t(Shape::matrix(n_frames, n_mels));
    t.v = v;
    return t;
  }
};

// On-disk layout: magic "LFB1", little-endian u32 n_frames, u32 n_mels, then
// row-major 32-bit floats. The payload is bit-exact at stored (f32) precision.
inline void write_features(const FeatureMatrix& m, const std::string& path) {
  for (double x : m.v)
    if (!std::isfinite(x))
      throw DataError("write_features: non-finite value, refusing " + path);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write feature file: " + path);
  out.write("LFB1", 4);
  std::uint32_t dims[2] = {static_cast<std::uint32_t>(m.n_frames),
                           static_cast<std::uint32_t>(m.n_mels)};
  out.write(reinterpret_cast<const char*>(dims), 8);
  std::vector<float> row(m.v.size());
  for (std::size_t i = 0; i < m.v.size(); ++i)
    row[i] = static_cast<float>(m.v[i]);
  out.write(reinterpret_cast<const char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(float)));
  if (!out) throw DataError("short write on feature file: " + path);
}

inline FeatureMatrix read_features(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open feature file: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "LFB1", 4) != 0)
    throw DataError("bad magic in feature file: " + path);
  std::uint32_t dims[2];
  in.read(reinterpret_cast<char*>(dims), 8);
  if (!in) throw DataError("truncated feature header: " + path);
  FeatureMatrix m(dims[0], dims[1]);
  std::vector<float> raw(m.v.size());
  in.read(reinterpret_cast<char*>(raw.data()),
          static_cast<std::streamsize>(raw.size() * sizeof(float)));
  if (in.gcount() != static_cast<std::streamsize>(raw.size() * sizeof(float)))
    throw DataError("truncated feature payload in " + path + ": expected " +
                    std::to_string(raw.size() * sizeof(float)) + " bytes");
  for (std::size_t i = 0; i < raw.size(); ++i) m.v[i] = raw[i];
  return m;
}

}  // namespace lfb2vec

#endif  // LFB2VEC_FEATURES_HPP_
