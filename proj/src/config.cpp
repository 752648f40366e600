#include <hitter/config.hpp>

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace hitter {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const json& value) {
  throw ConfigError("config: invalid value for '" + key + "': " + value.dump());
}

int64_t to_i64(const std::string& key, const json& v) {
  if (v.is_number_integer()) return v.get<int64_t>();
  if (v.is_string()) {
    try {
      size_t pos = 0;
      const std::string s = trim(v.get<std::string>());
      int64_t out = std::stoll(s, &pos);
      if (pos == s.size() && !s.empty()) return out;
    } catch (const std::exception&) {
    }
  }
  bad_value(key, v);
}

uint64_t to_u64(const std::string& key, const json& v) {
  if (v.is_number_unsigned()) return v.get<uint64_t>();
  if (v.is_number_integer()) {
    int64_t s = v.get<int64_t>();
    if (s >= 0) return static_cast<uint64_t>(s);
  }
  if (v.is_string()) {
    try {
      size_t pos = 0;
      const std::string s = trim(v.get<std::string>());
      if (!s.empty() && s[0] != '-') {
        uint64_t out = std::stoull(s, &pos);
        if (pos == s.size()) return out;
      }
    } catch (const std::exception&) {
    }
  }
  bad_value(key, v);
}

double to_f64(const std::string& key, const json& v) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    try {
      size_t pos = 0;
      const std::string s = trim(v.get<std::string>());
      double out = std::stod(s, &pos);
      if (pos == s.size() && !s.empty()) return out;
    } catch (const std::exception&) {
    }
  }
  bad_value(key, v);
}

bool to_bool(const std::string& key, const json& v) {
  if (v.is_boolean()) return v.get<bool>();
  if (v.is_string()) {
    const std::string s = trim(v.get<std::string>());
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
  }
  if (v.is_number_integer()) {
    int64_t n = v.get<int64_t>();
    if (n == 0 || n == 1) return n == 1;
  }
  bad_value(key, v);
}

std::string to_str(const std::string& key, const json& v) {
  if (v.is_string()) return v.get<std::string>();
  bad_value(key, v);
}

AdamStyle parse_adam_style(const std::string& key, const json& v) {
  const std::string s = to_str(key, v);
  if (s == "decoupled") return AdamStyle::Decoupled;
  if (s == "coupled") return AdamStyle::Coupled;
  bad_value(key, v);
}

TiePolicy parse_tie_policy(const std::string& key, const json& v) {
  const std::string s = to_str(key, v);
  if (s == "average") return TiePolicy::Average;
  if (s == "pessimistic") return TiePolicy::Pessimistic;
  if (s == "optimistic") return TiePolicy::Optimistic;
  bad_value(key, v);
}

const char* adam_style_name(AdamStyle s) {
  return s == AdamStyle::Decoupled ? "decoupled" : "coupled";
}

const char* tie_policy_name(TiePolicy t) {
  switch (t) {
    case TiePolicy::Average: return "average";
    case TiePolicy::Pessimistic: return "pessimistic";
    case TiePolicy::Optimistic: return "optimistic";
  }
  return "average";
}

}  // namespace

void apply_preset(RunConfig& cfg, const std::string& name) {
  if (name == "custom") {
    cfg.preset = name;
    return;
  }
  if (name != "fb15k237" && name != "wn18rr")
    throw ConfigError("config: unknown preset '" + name + "'");

  // Values shared by both dataset presets.
  cfg.model.d_model = 320;
  cfg.model.ffn_dim = 1280;
  cfg.model.heads = 8;
  cfg.model.entity_layers = 3;
  cfg.model.context_layers = 6;
  cfg.model.dropout = 0.1;
  cfg.model.embedding_dropout = 0.6;
  cfg.model.label_smoothing = 0.1;
  cfg.model.context_enabled = true;
  cfg.model.pre_norm = true;
  cfg.model.gelu_ffn = true;
  cfg.train.lr = 0.01;
  cfg.train.weight_decay = 0.1;
  cfg.train.batch_size = 512;
  cfg.train.max_epochs = 500;
  cfg.train.warmup_fraction = 0.1;
  cfg.train.adam_style = AdamStyle::Decoupled;

  if (name == "fb15k237") {
    cfg.train.neighbor_cap = 50;
    cfg.train.keep_frac = 0.7;
    cfg.train.eval.neighbor_cap = 50;
    // Half of all source entities are masked; no replaced/unchanged groups and
    // no auxiliary recovery loss.
    cfg.train.mep.select_prob = 1.0;
    cfg.train.mep.mask_frac = 0.5;
    cfg.train.mep.replace_frac = 0.0;
    cfg.train.mep.keep_frac = 0.5;
    cfg.train.mep.use_aux_loss = false;
    cfg.model.mep_aux_enabled = false;
  } else {  // wn18rr
    cfg.train.neighbor_cap = 12;
    cfg.train.keep_frac = 0.5;
    cfg.train.eval.neighbor_cap = 12;
    // 80% of examples enter the perturbation pool; of those, 60% are masked
    // and the rest split 3:7 between random replacement and kept-as-is.
    cfg.train.mep.select_prob = 0.8;
    cfg.train.mep.mask_frac = 0.6;
    cfg.train.mep.replace_frac = 0.12;
    cfg.train.mep.keep_frac = 0.28;
    cfg.train.mep.use_aux_loss = true;
    cfg.model.mep_aux_enabled = true;
  }
  cfg.preset = name;
}

void set_key(RunConfig& cfg, const std::string& key, const json& value) {
  // Run-level keys.
  if (key == "preset") {
    apply_preset(cfg, to_str(key, value));
    return;
  }
  if (key == "dataset_dir") { cfg.dataset_dir = to_str(key, value); return; }
  if (key == "output_dir") { cfg.output_dir = to_str(key, value); return; }
  if (key == "seed") {
    cfg.seed = to_u64(key, value);
    cfg.train.seed = cfg.seed;
    cfg.train.eval.seed = cfg.seed;
    return;
  }
  if (key == "no_context") { cfg.no_context = to_bool(key, value); return; }
  if (key == "no_mep") { cfg.no_mep = to_bool(key, value); return; }

  // Model keys.
  if (key == "model.d_model") { cfg.model.d_model = to_i64(key, value); return; }
  if (key == "model.ffn_dim") { cfg.model.ffn_dim = to_i64(key, value); return; }
  if (key == "model.heads") { cfg.model.heads = to_i64(key, value); return; }
  if (key == "model.entity_layers") { cfg.model.entity_layers = to_i64(key, value); return; }
  if (key == "model.context_layers") { cfg.model.context_layers = to_i64(key, value); return; }
  if (key == "model.dropout") { cfg.model.dropout = to_f64(key, value); return; }
  if (key == "model.embedding_dropout") { cfg.model.embedding_dropout = to_f64(key, value); return; }
  if (key == "model.label_smoothing") { cfg.model.label_smoothing = to_f64(key, value); return; }
  if (key == "model.context_enabled") { cfg.model.context_enabled = to_bool(key, value); return; }
  if (key == "model.mep_aux_enabled") { cfg.model.mep_aux_enabled = to_bool(key, value); return; }
  if (key == "model.pre_norm") { cfg.model.pre_norm = to_bool(key, value); return; }
  if (key == "model.gelu_ffn") { cfg.model.gelu_ffn = to_bool(key, value); return; }

  // Train keys.
  if (key == "train.lr") { cfg.train.lr = to_f64(key, value); return; }
  if (key == "train.weight_decay") { cfg.train.weight_decay = to_f64(key, value); return; }
  if (key == "train.batch_size") { cfg.train.batch_size = to_i64(key, value); return; }
  if (key == "train.max_epochs") { cfg.train.max_epochs = to_i64(key, value); return; }
  if (key == "train.warmup_fraction") { cfg.train.warmup_fraction = to_f64(key, value); return; }
  if (key == "train.eval_every_epochs") { cfg.train.eval_every_epochs = to_i64(key, value); return; }
  if (key == "train.patience") { cfg.train.patience = to_i64(key, value); return; }
  if (key == "train.seed") { cfg.train.seed = to_u64(key, value); return; }
  if (key == "train.neighbor_cap") { cfg.train.neighbor_cap = to_i64(key, value); return; }
  if (key == "train.keep_frac") { cfg.train.keep_frac = to_f64(key, value); return; }
  if (key == "train.clip_norm") { cfg.train.clip_norm = to_f64(key, value); return; }
  if (key == "train.adam_style") { cfg.train.adam_style = parse_adam_style(key, value); return; }
  if (key == "train.checkpoint_path") { cfg.train.checkpoint_path = to_str(key, value); return; }

  // Masked-entity-prediction keys.
  if (key == "mep.select_prob") { cfg.train.mep.select_prob = to_f64(key, value); return; }
  if (key == "mep.mask_frac") { cfg.train.mep.mask_frac = to_f64(key, value); return; }
  if (key == "mep.replace_frac") { cfg.train.mep.replace_frac = to_f64(key, value); return; }
  if (key == "mep.keep_frac") { cfg.train.mep.keep_frac = to_f64(key, value); return; }
  if (key == "mep.use_aux_loss") { cfg.train.mep.use_aux_loss = to_bool(key, value); return; }

  // Eval keys.
  if (key == "eval.batch_size") { cfg.train.eval.batch_size = to_i64(key, value); return; }
  if (key == "eval.neighbor_cap") { cfg.train.eval.neighbor_cap = to_i64(key, value); return; }
  if (key == "eval.seed") { cfg.train.eval.seed = to_u64(key, value); return; }
  if (key == "eval.ties") { cfg.train.eval.ties = parse_tie_policy(key, value); return; }

  throw ConfigError("config: unknown key '" + key + "'");
}

std::vector<std::pair<std::string, json>> parse_config_text(const std::string& text) {
  std::vector<std::pair<std::string, json>> out;
  const size_t first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    ordered_json doc;
    try {
      doc = ordered_json::parse(text);
    } catch (const std::exception& e) {
      throw ParseError(std::string("config: invalid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ParseError("config: JSON config must be an object");
    for (const auto& item : doc.items()) {
      if (item.value().is_object() || item.value().is_array())
        throw ParseError("config: key '" + item.key() + "' must be a scalar (flat object)");
      out.emplace_back(item.key(), item.value());
    }
    return out;
  }

  std::istringstream in(text);
  std::string line;
  int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ParseError("config: line " + std::to_string(lineno) + " is not key=value: '" + t + "'");
    const std::string key = trim(t.substr(0, eq));
    const std::string val = trim(t.substr(eq + 1));
    if (key.empty())
      throw ParseError("config: line " + std::to_string(lineno) + " has an empty key");
    out.emplace_back(key, json(val));
  }
  return out;
}

RunConfig load_run_config(const std::string& config_path,
                          const std::vector<std::string>& overrides) {
  RunConfig cfg;
  if (!config_path.empty()) {
    std::ifstream in(config_path, std::ios::binary);
    if (!in) throw IoError("config: cannot open '" + config_path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    for (const auto& [key, value] : parse_config_text(buf.str())) set_key(cfg, key, value);
  }
  for (const std::string& kv : overrides) {
    const size_t eq = kv.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: override '" + kv + "' is not key=value");
    set_key(cfg, trim(kv.substr(0, eq)), json(trim(kv.substr(eq + 1))));
  }
  return cfg;
}

void finalize(RunConfig& cfg) {
  if (cfg.no_context) {
    cfg.model.context_enabled = false;
    cfg.model.mep_aux_enabled = false;
    cfg.train.mep = MepConfig{};
  }
  if (cfg.no_mep) {
    cfg.model.mep_aux_enabled = false;
    cfg.train.mep = MepConfig{};
  }
  cfg.train.mep.use_aux_loss = cfg.model.mep_aux_enabled;
  cfg.model.validate();
  cfg.train.validate();
}

ordered_json resolved_json(const RunConfig& cfg) {
  ordered_json j;
  j["preset"] = cfg.preset;
  j["dataset_dir"] = cfg.dataset_dir;
  j["output_dir"] = cfg.output_dir;
  j["seed"] = cfg.seed;
  j["no_context"] = cfg.no_context;
  j["no_mep"] = cfg.no_mep;

  j["model.d_model"] = cfg.model.d_model;
  j["model.ffn_dim"] = cfg.model.ffn_dim;
  j["model.heads"] = cfg.model.heads;
  j["model.entity_layers"] = cfg.model.entity_layers;
  j["model.context_layers"] = cfg.model.context_layers;
  j["model.dropout"] = cfg.model.dropout;
  j["model.embedding_dropout"] = cfg.model.embedding_dropout;
  j["model.label_smoothing"] = cfg.model.label_smoothing;
  j["model.context_enabled"] = cfg.model.context_enabled;
  j["model.mep_aux_enabled"] = cfg.model.mep_aux_enabled;
  j["model.pre_norm"] = cfg.model.pre_norm;
  j["model.gelu_ffn"] = cfg.model.gelu_ffn;

  j["train.lr"] = cfg.train.lr;
  j["train.weight_decay"] = cfg.train.weight_decay;
  j["train.batch_size"] = cfg.train.batch_size;
  j["train.max_epochs"] = cfg.train.max_epochs;
  j["train.warmup_fraction"] = cfg.train.warmup_fraction;
  j["train.eval_every_epochs"] = cfg.train.eval_every_epochs;
  j["train.patience"] = cfg.train.patience;
  j["train.seed"] = cfg.train.seed;
  j["train.neighbor_cap"] = cfg.train.neighbor_cap;
  j["train.keep_frac"] = cfg.train.keep_frac;
  j["train.clip_norm"] = cfg.train.clip_norm;
  j["train.adam_style"] = adam_style_name(cfg.train.adam_style);
  j["train.checkpoint_path"] = cfg.train.checkpoint_path;

  j["mep.select_prob"] = cfg.train.mep.select_prob;
  j["mep.mask_frac"] = cfg.train.mep.mask_frac;
  j["mep.replace_frac"] = cfg.train.mep.replace_frac;
  j["mep.keep_frac"] = cfg.train.mep.keep_frac;
  j["mep.use_aux_loss"] = cfg.train.mep.use_aux_loss;

  j["eval.batch_size"] = cfg.train.eval.batch_size;
  j["eval.neighbor_cap"] = cfg.train.eval.neighbor_cap;
  j["eval.seed"] = cfg.train.eval.seed;
  j["eval.ties"] = tie_policy_name(cfg.train.eval.ties);
  return j;
}

}  // namespace hitter
