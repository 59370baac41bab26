#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include <json.hpp>

#include "patchlab/common.hpp"
#include "patchlab/nn.hpp"

namespace patchlab {

static_assert(std::endian::native == std::endian::little,
              "weight files are little-endian");

// Named-tensor container: 8-byte magic, u64 JSON header length, JSON header
// (schema, metadata, tensor directory), float32 payloads in directory order.
struct WeightsFile {
  nlohmann::ordered_json meta;
  std::map<std::string, Tensor<float>> tensors;
};

inline constexpr char kWeightsMagic[8] = {'P', 'L', 'W', 'T', 'S', '1', '\n', '\0'};

inline void save_weights(const WeightsFile& wf, const std::string& path) {
  nlohmann::ordered_json header;
  header["schema"] = "patchlab.weights.v1";
  header["meta"] = wf.meta;
  auto dir = nlohmann::ordered_json::array();
  for (const auto& [name, t] : wf.tensors) {
    dir.push_back({{"name", name}, {"shape", t.shape},
                   {"count", static_cast<std::uint64_t>(t.numel())}});
  }
  header["tensors"] = dir;
  std::string hs = header.dump();

  // atomic: write sibling temp file, then rename over the target
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write " + tmp);
    out.write(kWeightsMagic, 8);
    std::uint64_t len = hs.size();
    out.write(reinterpret_cast<const char*>(&len), 8);
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const auto& [name, t] : wf.tensors)
      out.write(reinterpret_cast<const char*>(t.ptr()),
                static_cast<std::streamsize>(t.numel() * sizeof(float)));
    if (!out) throw IoError("short write: " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp + " to " + path + ": " + ec.message());
}

inline WeightsFile load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open weights " + path);
  char magic[8];
  in.read(magic, 8);
  if (in.gcount() != 8 || std::memcmp(magic, kWeightsMagic, 8) != 0)
    throw IoError("not a patchlab weights file: " + path);
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), 8);
  std::string hs(len, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(len));
  if (in.gcount() != static_cast<std::streamsize>(len))
    throw IoError("truncated weights header: " + path);
  nlohmann::json header = nlohmann::json::parse(hs, nullptr, false);
  if (header.is_discarded() || header.value("schema", "") != "patchlab.weights.v1")
    throw IoError("bad weights header: " + path);

  WeightsFile wf;
  wf.meta = header.value("meta", nlohmann::ordered_json::object());
  for (const auto& e : header.at("tensors")) {
    Tensor<float> t(e.at("shape").get<std::vector<int>>());
    if (t.numel() != e.at("count").get<std::uint64_t>())
      throw IoError("inconsistent tensor directory in " + path);
    in.read(reinterpret_cast<char*>(t.ptr()),
            static_cast<std::streamsize>(t.numel() * sizeof(float)));
    if (in.gcount() != static_cast<std::streamsize>(t.numel() * sizeof(float)))
      throw IoError("truncated weights payload: " + path);
    wf.tensors.emplace(e.at("name").get<std::string>(), std::move(t));
  }
  return wf;
}

// Snapshot every parameter and buffer of the model.
inline WeightsFile snapshot_model(nn::ResNet18<float>& model,
                                  nlohmann::ordered_json meta = {}) {
  WeightsFile wf;
  wf.meta = std::move(meta);
  for (const auto& p : model.parameters()) wf.tensors[p.name] = *p.value;
  for (const auto& b : model.buffers()) wf.tensors[b.name] = *b.value;
  return wf;
}

// Strict restore: every parameter and buffer must be present with a matching
// shape. Unknown extra tensors are rejected too, so a wrong file fails loud.
inline void restore_model(nn::ResNet18<float>& model, const WeightsFile& wf) {
  std::size_t used = 0;
  auto take = [&](const std::string& name, Tensor<float>* dst) {
    auto it = wf.tensors.find(name);
    if (it == wf.tensors.end())
      throw ConfigError("weights file is missing tensor '" + name + "'");
    if (it->second.shape != dst->shape)
      throw ConfigError("weights tensor '" + name + "' has the wrong shape");
    *dst = it->second;
    ++used;
  };
  for (const auto& p : model.parameters()) take(p.name, p.value);
  for (const auto& b : model.buffers()) take(b.name, b.value);
  if (used != wf.tensors.size())
    throw ConfigError("weights file carries unexpected extra tensors");
}

}  // namespace patchlab
