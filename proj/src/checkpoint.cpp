#include "hitter/checkpoint.hpp"

#include <nlohmann/json.hpp>

namespace hitter {

std::string model_config_to_json(const ModelConfig& cfg, int64_t num_entities,
                                 int64_t num_relations) {
  nlohmann::ordered_json j;
  j["d_model"] = cfg.d_model;
  j["ffn_dim"] = cfg.ffn_dim;
  j["heads"] = cfg.heads;
  j["entity_layers"] = cfg.entity_layers;
  j["context_layers"] = cfg.context_layers;
  j["dropout"] = cfg.dropout;
  j["embedding_dropout"] = cfg.embedding_dropout;
  j["label_smoothing"] = cfg.label_smoothing;
  j["context_enabled"] = cfg.context_enabled;
  j["mep_aux_enabled"] = cfg.mep_aux_enabled;
  j["pre_norm"] = cfg.pre_norm;
  j["gelu_ffn"] = cfg.gelu_ffn;
  j["num_entities"] = num_entities;
  j["num_relations"] = num_relations;
  return j.dump();
}

void model_config_from_json(const std::string& json, ModelConfig& cfg, int64_t& num_entities,
                            int64_t& num_relations) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("model config: invalid JSON: ") + e.what());
  }
  try {
    cfg.d_model = j.at("d_model").get<int64_t>();
    cfg.ffn_dim = j.at("ffn_dim").get<int64_t>();
    cfg.heads = j.at("heads").get<int64_t>();
    cfg.entity_layers = j.at("entity_layers").get<int64_t>();
    cfg.context_layers = j.at("context_layers").get<int64_t>();
    cfg.dropout = j.at("dropout").get<double>();
    cfg.embedding_dropout = j.at("embedding_dropout").get<double>();
    cfg.label_smoothing = j.at("label_smoothing").get<double>();
    cfg.context_enabled = j.at("context_enabled").get<bool>();
    cfg.mep_aux_enabled = j.at("mep_aux_enabled").get<bool>();
    cfg.pre_norm = j.at("pre_norm").get<bool>();
    cfg.gelu_ffn = j.at("gelu_ffn").get<bool>();
    num_entities = j.at("num_entities").get<int64_t>();
    num_relations = j.at("num_relations").get<int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("model config: missing or mistyped field: ") + e.what());
  }
}

CheckpointInfo read_checkpoint_info(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint " + path + ": cannot open");
  char magic[4] = {};
  if (!in.read(magic, 4) || std::memcmp(magic, "HITR", 4) != 0)
    throw IoError("checkpoint " + path + ": not a checkpoint file");
  CheckpointInfo info;
  info.version = detail::read_pod<uint32_t>(in, path);
  info.scalar_bytes = detail::read_pod<uint32_t>(in, path);
  const auto len = detail::read_pod<uint64_t>(in, path);
  info.config_json = detail::read_bytes(in, len, path);
  return info;
}

}  // namespace hitter
