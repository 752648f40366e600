#pragma once

// Model checkpoints: a flat little-endian binary container holding a JSON
// model description followed by every named parameter tensor. Loading is
// all-or-nothing: the file is fully read and validated against the target
// model before any parameter is overwritten.
//
// Layout:
//   "HITR"                      4-byte magic
//   u32  version                currently 1
//   u32  scalar_bytes           sizeof the parameter scalar (4 or 8)
//   u64  config_len             length of the JSON blob
//   ...  config JSON            model hyperparameters + vocabulary sizes
//   u64  param_count
//   per parameter:
//     u64 name_len, name bytes
//     u32 rank, u64 dims[rank]
//     raw scalar payload (numel * scalar_bytes)

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "hitter/common.hpp"
#include "hitter/model.hpp"

namespace hitter {

inline constexpr uint32_t kCheckpointVersion = 1;

// JSON round-trip for the model description stored in checkpoints.
std::string model_config_to_json(const ModelConfig& cfg, int64_t num_entities,
                                 int64_t num_relations);
void model_config_from_json(const std::string& json, ModelConfig& cfg, int64_t& num_entities,
                            int64_t& num_relations);

struct CheckpointInfo {
  uint32_t version = 0;
  uint32_t scalar_bytes = 0;
  std::string config_json;
};

// Header + config of a checkpoint without touching any model.
CheckpointInfo read_checkpoint_info(const std::string& path);

namespace detail {

template <typename V>
void write_pod(std::ostream& out, const V& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V read_pod(std::istream& in, const std::string& path) {
  V v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(V)))
    throw IoError("checkpoint " + path + ": truncated file");
  return v;
}

inline std::string read_bytes(std::istream& in, uint64_t len, const std::string& path) {
  std::string s(static_cast<size_t>(len), '\0');
  if (len > 0 && !in.read(s.data(), static_cast<std::streamsize>(len)))
    throw IoError("checkpoint " + path + ": truncated file");
  return s;
}

}  // namespace detail

template <typename T>
void save_checkpoint(const std::string& path, const HitterModelT<T>& model) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("checkpoint " + path + ": cannot open for writing");
  out.write("HITR", 4);
  detail::write_pod(out, kCheckpointVersion);
  detail::write_pod(out, static_cast<uint32_t>(sizeof(T)));
  const std::string cfg =
      model_config_to_json(model.config(), model.num_entities(), model.num_relations());
  detail::write_pod(out, static_cast<uint64_t>(cfg.size()));
  out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  detail::write_pod(out, static_cast<uint64_t>(model.params().size()));
  for (const ParamT<T>& p : model.params()) {
    detail::write_pod(out, static_cast<uint64_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    detail::write_pod(out, static_cast<uint32_t>(p.tensor.shape().size()));
    for (int64_t d : p.tensor.shape()) detail::write_pod(out, static_cast<uint64_t>(d));
    out.write(reinterpret_cast<const char*>(p.tensor.values().data()),
              static_cast<std::streamsize>(p.tensor.values().size() * sizeof(T)));
  }
  out.flush();
  if (!out) throw IoError("checkpoint " + path + ": write failed");
}

// Load parameters by name into an already-constructed model. Every model
// parameter must be present with an identical shape; the first mismatch (in
// model parameter order) is named in the error. The model is only modified
// after the whole file has validated.
template <typename T>
void load_checkpoint(const std::string& path, HitterModelT<T>& model) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint " + path + ": cannot open");
  char magic[4] = {};
  if (!in.read(magic, 4) || std::memcmp(magic, "HITR", 4) != 0)
    throw IoError("checkpoint " + path + ": not a checkpoint file");
  const auto version = detail::read_pod<uint32_t>(in, path);
  if (version != kCheckpointVersion)
    throw IoError("checkpoint " + path + ": unsupported version " + std::to_string(version));
  const auto scalar_bytes = detail::read_pod<uint32_t>(in, path);
  if (scalar_bytes != sizeof(T))
    throw IoError("checkpoint " + path + ": scalar width " + std::to_string(scalar_bytes) +
                  " does not match the model's " + std::to_string(sizeof(T)));
  const auto cfg_len = detail::read_pod<uint64_t>(in, path);
  (void)detail::read_bytes(in, cfg_len, path);

  struct Record {
    Shape shape;
    std::vector<T> values;
  };
  std::unordered_map<std::string, Record> records;
  const auto count = detail::read_pod<uint64_t>(in, path);
  for (uint64_t i = 0; i < count; ++i) {
    const auto name_len = detail::read_pod<uint64_t>(in, path);
    const std::string name = detail::read_bytes(in, name_len, path);
    const auto rank = detail::read_pod<uint32_t>(in, path);
    Record rec;
    int64_t numel = 1;
    for (uint32_t r = 0; r < rank; ++r) {
      const auto d = static_cast<int64_t>(detail::read_pod<uint64_t>(in, path));
      rec.shape.push_back(d);
      numel *= d;
    }
    rec.values.resize(static_cast<size_t>(numel));
    if (numel > 0 && !in.read(reinterpret_cast<char*>(rec.values.data()),
                              static_cast<std::streamsize>(rec.values.size() * sizeof(T))))
      throw IoError("checkpoint " + path + ": truncated file");
    records.emplace(name, std::move(rec));
  }

  if (records.size() != model.params().size())
    throw IoError("checkpoint " + path + ": holds " + std::to_string(records.size()) +
                  " parameters, model has " + std::to_string(model.params().size()));
  for (const ParamT<T>& p : model.params()) {
    auto it = records.find(p.name);
    if (it == records.end())
      throw IoError("checkpoint " + path + ": missing parameter " + p.name);
    if (it->second.shape != p.tensor.shape())
      throw ShapeError("checkpoint " + path + ": parameter " + p.name + " has shape " +
                       shape_str(it->second.shape) + ", model expects " +
                       shape_str(p.tensor.shape()));
  }
  // everything validated; now copy
  for (ParamT<T>& p : model.params()) p.tensor.values() = std::move(records.at(p.name).values);
}

}  // namespace hitter
