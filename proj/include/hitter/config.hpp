#pragma once

// Run-level configuration: a flat key=value surface over every tunable in the
// project, with named dataset presets, config files (key=value text or a flat
// JSON object), ordered overrides, and a resolved-config echo that reproduces
// the run when fed back in.

#include <hitter/trainer.hpp>

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

namespace hitter {

// Everything a run needs. `seed` is the master seed: assigning the `seed` key
// also assigns train.seed and eval.seed (individual keys may still override
// them afterwards, later assignments win).
struct RunConfig {
  std::string dataset_dir;
  std::string preset = "custom";  // fb15k237 | wn18rr | custom
  std::string output_dir = "out";
  uint64_t seed = 0;
  bool no_context = false;  // ablation: disable the context block (and MEP)
  bool no_mep = false;      // ablation: disable source perturbation + aux loss

  ModelConfig model;
  TrainConfig train;  // embeds MepConfig (keys mep.*) and EvalConfig (keys eval.*)
};

// Overwrites the preset-controlled fields of `cfg` with the named defaults and
// records the name in cfg.preset. "custom" only records the name. Unknown
// names throw ConfigError.
void apply_preset(RunConfig& cfg, const std::string& name);

// Assigns one key. `value` may be a JSON string, number, or boolean; strings
// are coerced to the field's type ("true"/"false"/"1"/"0" for booleans).
// The key "preset" applies the preset immediately, so later assignments
// override preset values. Unknown keys and unparseable values throw
// ConfigError naming the key.
void set_key(RunConfig& cfg, const std::string& key, const nlohmann::json& value);

// Parses config-file text into ordered (key, value) assignments. If the first
// non-whitespace character is '{' the text is a flat JSON object (document
// key order preserved); otherwise it is key=value lines where blank lines and
// lines starting with '#' are skipped.
std::vector<std::pair<std::string, nlohmann::json>> parse_config_text(const std::string& text);

// defaults -> config file (if path nonempty) -> overrides, each "key=value",
// applied in order. Does not finalize.
RunConfig load_run_config(const std::string& config_path,
                          const std::vector<std::string>& overrides);

// Applies the ablation flags (no_context forces the context block, MEP, and
// the aux loss off; no_mep forces MEP and the aux loss off), syncs
// mep.use_aux_loss to the model's aux flag, and validates everything.
void finalize(RunConfig& cfg);

// Flat JSON object holding every settable key at its current value, `preset`
// first so feeding the echo back through --config reproduces this state
// exactly.
nlohmann::ordered_json resolved_json(const RunConfig& cfg);

}  // namespace hitter
