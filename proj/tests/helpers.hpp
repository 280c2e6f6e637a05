// tests/helpers.hpp

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

#ifndef LFB2VEC_TESTS_HELPERS_HPP_
#define LFB2VEC_TESTS_HELPERS_HPP_

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace testutil {

// Self-cleaning unique directory under the system temp root.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("lfb2vec_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string str() const { return path_.string(); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << content;
}

inline bool same_bytes(const std::string& a, const std::string& b) {
  return read_file(a) == read_file(b);
}

// Recursively compares two directory trees byte-for-byte; returns the list of
// relative paths that differ (or exist on one side only).
inline std::vector<std::string> tree_diff(const std::string& a, const std::string& b) {
  namespace fs = std::filesystem;
  std::vector<std::string> diffs;
  std::vector<std::string> rel_a;
  for (const auto& e : fs::recursive_directory_iterator(a))
    if (e.is_regular_file())
      rel_a.push_back(fs::relative(e.path(), a).string());
  std::sort(rel_a.begin(), rel_a.end());
  for (const std::string& r : rel_a) {
    fs::path pb = fs::path(b) / r;
    if (!fs::exists(pb) || read_file((fs::path(a) / r).string()) != read_file(pb.string()))
      diffs.push_back(r);
  }
  for (const auto& e : fs::recursive_directory_iterator(b))
    if (e.is_regular_file()) {
      std::string r = fs::relative(e.path(), b).string();
      if (!fs::exists(fs::path(a) / r)) diffs.push_back(r + " (only in second)");
    }
  return diffs;
}

}  // namespace testutil

#endif  // LFB2VEC_TESTS_HELPERS_HPP_
