// Command-line entry point: subcommands wiring config, data, training,
// evaluation, and analysis over the library.
//
//   train          fit a model on a dataset directory, writing the resolved
//                  config, the best checkpoint, and a per-epoch ledger CSV
//   eval           rank a split under a trained checkpoint, writing a JSON
//                  aggregate plus relation/hop/rank CSV breakdowns
//   analyze        nearest neighbors in embedding space and a hop histogram
//   stats          dataset summary (entity/relation/triple counts, degree)
//   gen-synthetic  write a synthetic dataset with a verifiable planted rule
//
// Every flag maps to a config key; --config FILE loads key=value lines or a
// flat JSON object, and repeated --set key=value overrides win last.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "hitter/checkpoint.hpp"
#include "hitter/config.hpp"
#include "hitter/eval.hpp"
#include "hitter/synthetic.hpp"
#include "hitter/trainer.hpp"
#include "hitter/version.hpp"

namespace {

using hitter::EvalConfig;
using hitter::RunConfig;
using nlohmann::ordered_json;

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw hitter::IoError("cannot write " + path);
  out << text;
}

// Shared config surface for subcommands that take a full run config.
struct ConfigArgs {
  std::string config_path;
  std::vector<std::string> sets;
  std::vector<std::string> flag_sets;  // from named convenience flags

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path,
                    "Config file: key=value lines or a flat JSON object");
    cmd->add_option("--set", sets, "Override one key, e.g. --set train.lr=0.003")
        ->take_all();
    auto passthrough = [this](const std::string& key) {
      return [this, key](const std::string& value) { flag_sets.push_back(key + "=" + value); };
    };
    cmd->add_option_function<std::string>("--dataset-dir", passthrough("dataset_dir"),
                                          "Directory with train.txt/valid.txt/test.txt");
    cmd->add_option_function<std::string>("--preset", passthrough("preset"),
                                          "Hyperparameter preset: fb15k237 | wn18rr | custom");
    cmd->add_option_function<std::string>("--output-dir", passthrough("output_dir"),
                                          "Directory for run artifacts");
    cmd->add_option_function<std::string>("--seed", passthrough("seed"), "Master RNG seed");
    cmd->add_flag_callback("--no-context",
                           [this] { flag_sets.push_back("no_context=true"); },
                           "Ablation: score source pairs without neighborhood context");
    cmd->add_flag_callback("--no-mep",
                           [this] { flag_sets.push_back("no_mep=true"); },
                           "Ablation: no masked-source perturbation or auxiliary loss");
  }

  // defaults -> file -> named flags -> --set, later assignments win.
  RunConfig resolve() const {
    std::vector<std::string> overrides = flag_sets;
    overrides.insert(overrides.end(), sets.begin(), sets.end());
    RunConfig cfg = hitter::load_run_config(config_path, overrides);
    hitter::finalize(cfg);
    return cfg;
  }
};

void require_dataset_dir(const RunConfig& cfg) {
  if (cfg.dataset_dir.empty())
    throw hitter::ConfigError("dataset_dir is required (--dataset-dir or --set dataset_dir=...)");
}

int run_train(const ConfigArgs& args) {
  RunConfig cfg = args.resolve();
  require_dataset_dir(cfg);
  std::filesystem::create_directories(cfg.output_dir);
  if (cfg.train.checkpoint_path.empty())
    cfg.train.checkpoint_path =
        (std::filesystem::path(cfg.output_dir) / "model.ckpt").string();

  const ordered_json echoed = hitter::resolved_json(cfg);
  std::cout << echoed.dump(2) << "\n";
  write_text((std::filesystem::path(cfg.output_dir) / "config.json").string(),
             echoed.dump(2) + "\n");

  hitter::Dataset data = hitter::load_dataset(cfg.dataset_dir);
  hitter::NeighborIndex index(data.train, data.vocab);
  hitter::FilterIndex filter(data.vocab, {&data.train, &data.valid, &data.test});

  hitter::HitterModel model(cfg.model, data.vocab.num_entities(), data.vocab.num_relations(),
                            cfg.seed);
  hitter::Trainer trainer(model, cfg.train);
  hitter::RunLedger ledger = trainer.fit(data.train, data.valid, data.vocab, index, filter);

  const std::string ledger_path =
      (std::filesystem::path(cfg.output_dir) / "ledger.csv").string();
  write_text(ledger_path, ledger.to_csv());

  ordered_json summary;
  summary["best_epoch"] = ledger.best_epoch;
  summary["best_dev_mrr"] = ledger.best_mrr;
  summary["epochs_run"] = ledger.rows.size();
  summary["checkpoint"] = cfg.train.checkpoint_path;
  summary["ledger"] = ledger_path;
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int run_eval(const std::string& checkpoint, const std::string& dataset_dir,
             const std::string& split_name, const std::string& output_dir,
             const std::vector<std::string>& sets) {
  // Eval knobs ride the run-config surface; only eval.* and seed apply here.
  RunConfig knobs = hitter::load_run_config("", sets);
  EvalConfig eval_cfg = knobs.train.eval;
  eval_cfg.validate();

  hitter::CheckpointInfo info = hitter::read_checkpoint_info(checkpoint);
  hitter::ModelConfig model_cfg;
  int64_t num_entities = 0, num_relations = 0;
  hitter::model_config_from_json(info.config_json, model_cfg, num_entities, num_relations);

  hitter::Dataset data = hitter::load_dataset(dataset_dir);
  if (data.vocab.num_entities() != num_entities ||
      data.vocab.num_relations() != num_relations)
    throw hitter::ConfigError(
        "checkpoint/dataset vocabulary mismatch: checkpoint has " +
        std::to_string(num_entities) + " entities / " + std::to_string(num_relations) +
        " relation ids, dataset has " + std::to_string(data.vocab.num_entities()) + " / " +
        std::to_string(data.vocab.num_relations()));

  hitter::HitterModel model(model_cfg, num_entities, num_relations, /*seed=*/0);
  hitter::load_checkpoint(checkpoint, model);

  const std::vector<hitter::Triple>* split = nullptr;
  if (split_name == "train") split = &data.train;
  else if (split_name == "valid") split = &data.valid;
  else if (split_name == "test") split = &data.test;
  else throw hitter::ConfigError("unknown split '" + split_name + "'");

  hitter::NeighborIndex index(data.train, data.vocab);
  hitter::FilterIndex filter(data.vocab, {&data.train, &data.valid, &data.test});
  hitter::EvalResult result =
      hitter::evaluate_split(model, *split, data.vocab, index, filter, eval_cfg);

  ordered_json out;
  out["split"] = split_name;
  out["checkpoint"] = checkpoint;
  out["filtered"] = ordered_json::parse(result.filtered.to_json());
  out["raw"] = ordered_json::parse(result.raw.to_json());
  const std::string text = out.dump(2);
  std::cout << text << "\n";

  std::filesystem::create_directories(output_dir);
  const std::filesystem::path dir(output_dir);
  write_text((dir / "eval.json").string(), text + "\n");
  write_text((dir / "relation_breakdown.csv").string(),
             hitter::breakdown_csv(
                 hitter::breakdown_by_relation(result.records, data.vocab)));
  write_text((dir / "hop_breakdown.csv").string(),
             hitter::breakdown_csv(hitter::mrr_by_hops(result.records, index)));
  write_text((dir / "ranks.csv").string(), hitter::query_records_csv(result.records));
  return 0;
}

int run_analyze(const std::string& checkpoint, const std::string& dataset_dir,
                const std::string& entity, int64_t k, const std::string& hop_split) {
  hitter::CheckpointInfo info = hitter::read_checkpoint_info(checkpoint);
  hitter::ModelConfig model_cfg;
  int64_t num_entities = 0, num_relations = 0;
  hitter::model_config_from_json(info.config_json, model_cfg, num_entities, num_relations);
  hitter::HitterModel model(model_cfg, num_entities, num_relations, /*seed=*/0);
  hitter::load_checkpoint(checkpoint, model);

  hitter::Dataset data = hitter::load_dataset(dataset_dir);
  if (data.vocab.num_entities() != num_entities)
    throw hitter::ConfigError("checkpoint/dataset vocabulary mismatch");

  ordered_json out;
  if (!entity.empty()) {
    const hitter::EntityId id = data.vocab.entity_id(entity);
    ordered_json rows = ordered_json::array();
    for (const auto& [nid, sim] : hitter::nearest_entities(model.entity_table(), id, k)) {
      ordered_json row;
      row["entity"] = data.vocab.entity_name(nid);
      row["cosine"] = sim;
      rows.push_back(row);
    }
    out["entity"] = entity;
    out["nearest"] = rows;
  }
  if (!hop_split.empty()) {
    const std::vector<hitter::Triple>* split = nullptr;
    if (hop_split == "train") split = &data.train;
    else if (hop_split == "valid") split = &data.valid;
    else if (hop_split == "test") split = &data.test;
    else throw hitter::ConfigError("unknown split '" + hop_split + "'");
    hitter::NeighborIndex index(data.train, data.vocab);
    std::map<std::string, int64_t> histogram;
    for (const auto& t : *split) {
      const int64_t h = index.hop_distance(t.subject, t.object);
      std::string key = h < 0 ? "unreachable" : (h >= 5 ? "5+" : std::to_string(h));
      ++histogram[key];
    }
    out["hop_split"] = hop_split;
    out["hop_histogram"] = histogram;
  }
  if (out.empty())
    throw hitter::ConfigError("analyze: pass --entity NAME and/or --hop-split SPLIT");
  std::cout << out.dump(2) << "\n";
  return 0;
}

int run_stats(const std::string& dataset_dir) {
  hitter::Dataset data = hitter::load_dataset(dataset_dir);
  std::cout << hitter::dataset_stats(data.vocab, data.train, data.valid, data.test).to_json()
            << "\n";
  return 0;
}

int run_gen_synthetic(const hitter::SyntheticSpec& spec, const std::string& out_dir) {
  hitter::SyntheticDataset d = hitter::gen_synthetic(spec);
  hitter::write_synthetic_dir(d, out_dir);
  ordered_json summary;
  summary["pattern"] = spec.pattern;
  summary["entities"] = d.entities.size();
  summary["relations"] = d.relations.size();
  summary["train"] = d.train.size();
  summary["valid"] = d.valid.size();
  summary["test"] = d.test.size();
  summary["dir"] = out_dir;
  std::cout << summary.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical transformer link prediction over knowledge graphs"};
  app.set_version_flag("--version", hitter::version());
  app.require_subcommand(1);

  ConfigArgs train_args;
  CLI::App* train = app.add_subcommand("train", "Fit a model and write run artifacts");
  train_args.attach(train);

  std::string eval_ckpt, eval_dir, eval_split = "test", eval_out = "out";
  std::vector<std::string> eval_sets;
  CLI::App* eval = app.add_subcommand("eval", "Rank a split under a trained checkpoint");
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
  eval->add_option("--dataset-dir", eval_dir, "Dataset directory")->required();
  eval->add_option("--split", eval_split, "train | valid | test");
  eval->add_option("--output-dir", eval_out, "Directory for reports");
  eval->add_option("--set", eval_sets, "Override eval keys, e.g. --set eval.neighbor_cap=12")
      ->take_all();

  std::string an_ckpt, an_dir, an_entity, an_hop_split;
  int64_t an_k = 10;
  CLI::App* analyze = app.add_subcommand("analyze", "Embedding neighbors and hop structure");
  analyze->add_option("--checkpoint", an_ckpt, "Checkpoint file")->required();
  analyze->add_option("--dataset-dir", an_dir, "Dataset directory")->required();
  analyze->add_option("--entity", an_entity, "Entity name for nearest-neighbor search");
  analyze->add_option("--k", an_k, "Number of neighbors to report");
  analyze->add_option("--hop-split", an_hop_split, "Split for the hop histogram");

  std::string stats_dir;
  CLI::App* stats = app.add_subcommand("stats", "Dataset summary as JSON");
  stats->add_option("--dataset-dir", stats_dir, "Dataset directory")->required();

  hitter::SyntheticSpec spec;
  std::string gen_out;
  CLI::App* gen = app.add_subcommand("gen-synthetic", "Write a synthetic dataset");
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--entities", spec.num_entities, "Number of entities");
  gen->add_option("--relations", spec.num_relations, "Number of relations");
  gen->add_option("--pattern", spec.pattern, "composition | chain | star");
  gen->add_option("--seed", spec.seed, "Generator seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return run_train(train_args);
    if (eval->parsed()) return run_eval(eval_ckpt, eval_dir, eval_split, eval_out, eval_sets);
    if (analyze->parsed()) return run_analyze(an_ckpt, an_dir, an_entity, an_k, an_hop_split);
    if (stats->parsed()) return run_stats(stats_dir);
    if (gen->parsed()) return run_gen_synthetic(spec, gen_out);
  } catch (const hitter::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
