// lfb2vec/checkpoint.hpp

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

// Versioned checkpoint container. Layout: magic "LFCK", little-endian u32
// header length, header JSON (version, provenance, tensor directory with
// byte offsets, payload CRC32), then raw little-endian f64 tensor payloads.
// Saving is canonical (sorted tensor names, stable JSON), so save -> load ->
// save reproduces the file byte for byte.

#ifndef LFB2VEC_CHECKPOINT_HPP_
#define LFB2VEC_CHECKPOINT_HPP_

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "lfb2vec/common.hpp"
#include "lfb2vec/tensor.hpp"

namespace lfb2vec {
namespace train {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  int version = kCheckpointVersion;
  std::string mode;         // provenance: which trainer produced it
  std::string config_hash;  // hash of the resolved config
  std::uint64_t seed = 0;
  long long step = 0;
  // model tensors plus optimizer state under reserved prefixes
  // ("opt.m.<name>", "opt.v.<name>", "opt.t.<name>").
  std::map<std::string, Tensor> tensors;
};

namespace detail {

inline std::uint32_t crc32(const unsigned char* data, std::size_t len) {
  static const std::array<std::uint32_t, 256> table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t crc = 0xffffffffu;
  for (std::size_t i = 0; i < len; ++i)
    crc = table[(crc ^ data[i]) & 0xffu] ^ (crc >> 8);
  return crc ^ 0xffffffffu;
}

}  // namespace detail

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::string payload;
  nlohmann::json dir = nlohmann::json::array();
  for (const auto& [name, t] : ckpt.tensors) {  // std::map: sorted, canonical
    if (!t.is_finite())
      throw NumericalError("checkpoint: non-finite values in tensor '" + name + "'");
    nlohmann::json entry;
    entry["name"] = name;
    entry["dtype"] = "f64";
    entry["shape"] = nlohmann::json::array();
    for (int i = 0; i < t.shape.rank; ++i)
      entry["shape"].push_back(t.shape.d[static_cast<std::size_t>(i)]);
    entry["offset"] = payload.size();
    entry["nbytes"] = t.v.size() * sizeof(double);
    dir.push_back(entry);
    std::size_t pos = payload.size();
    payload.resize(pos + t.v.size() * sizeof(double));
    std::memcpy(payload.data() + pos, t.v.data(), t.v.size() * sizeof(double));
  }

  nlohmann::json header;
  header["version"] = ckpt.version;
  header["provenance"] = {{"mode", ckpt.mode},
                          {"config_hash", ckpt.config_hash},
                          {"seed", ckpt.seed},
                          {"step", ckpt.step}};
  header["tensors"] = dir;
  header["crc32"] = detail::crc32(
      reinterpret_cast<const unsigned char*>(payload.data()), payload.size());
  std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  out.write("LFCK", 4);
  std::uint32_t hlen = static_cast<std::uint32_t>(header_str.size());
  out.write(reinterpret_cast<const char*>(&hlen), 4);
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw DataError("short write on checkpoint: " + path);
}

// `name_prefix` filters the loaded tensors ("" loads everything, "enc." loads
// the encoder only, for fine-tune initialization).
inline Checkpoint load_checkpoint(const std::string& path,
                                  const std::string& name_prefix = "") {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "LFCK", 4) != 0)
    throw DataError("bad magic in checkpoint: " + path);
  std::uint32_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), 4);
  if (!in) throw DataError("truncated checkpoint header: " + path);
  std::string header_str(hlen, '\0');
  in.read(header_str.data(), hlen);
  if (!in) throw DataError("truncated checkpoint header: " + path);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_str);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("corrupt checkpoint header in " + path + ": " + e.what());
  }

  Checkpoint ckpt;
  ckpt.version = header.at("version").get<int>();
  if (ckpt.version != kCheckpointVersion)
    throw DataError("checkpoint version mismatch: file has " +
                    std::to_string(ckpt.version) + ", this build expects " +
                    std::to_string(kCheckpointVersion));
  const auto& prov = header.at("provenance");
  ckpt.mode = prov.at("mode").get<std::string>();
  ckpt.config_hash = prov.at("config_hash").get<std::string>();
  ckpt.seed = prov.at("seed").get<std::uint64_t>();
  ckpt.step = prov.at("step").get<long long>();

  std::string payload((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
  std::uint32_t expect_crc = header.at("crc32").get<std::uint32_t>();
  std::uint32_t got_crc = detail::crc32(
      reinterpret_cast<const unsigned char*>(payload.data()), payload.size());
  if (expect_crc != got_crc)
    throw DataError("checkpoint payload checksum mismatch in " + path +
                    " (expected " + std::to_string(expect_crc) + ", got " +
                    std::to_string(got_crc) + ")");

  for (const auto& entry : header.at("tensors")) {
    std::string name = entry.at("name").get<std::string>();
    if (!name_prefix.empty() && name.rfind(name_prefix, 0) != 0) continue;
    if (entry.at("dtype").get<std::string>() != "f64")
      throw DataError("unsupported dtype in checkpoint tensor '" + name + "'");
    Shape shape;
    shape.rank = static_cast<int>(entry.at("shape").size());
    if (shape.rank > 3)
      throw DataError("checkpoint tensor '" + name + "' has rank > 3");
    for (int i = 0; i < shape.rank; ++i)
      shape.d[static_cast<std::size_t>(i)] = entry.at("shape")[static_cast<std::size_t>(i)].get<std::int64_t>();
    std::size_t offset = entry.at("offset").get<std::size_t>();
    std::size_t nbytes = entry.at("nbytes").get<std::size_t>();
    if (offset + nbytes > payload.size())
      throw DataError("checkpoint tensor '" + name + "' overruns the payload");
    Tensor t(shape);
    if (t.v.size() * sizeof(double) != nbytes)
      throw DataError("checkpoint tensor '" + name + "' length mismatch");
    std::memcpy(t.v.data(), payload.data() + offset, nbytes);
    ckpt.tensors[name] = std::move(t);
  }
  return ckpt;
}

}  // namespace train
}  // namespace lfb2vec

#endif  // LFB2VEC_CHECKPOINT_HPP_
