// umie: synthetic-corpus generation, instruction tuning, and the evaluation
// harness (F1 reports, gate ablation, zero-shot exclusion, instruction
// robustness, gate tracing) behind one reproducible command-line surface.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "umie/data.hpp"
#include "umie/eval.hpp"
#include "umie/model.hpp"
#include "umie/trainer.hpp"

namespace {

using namespace umie;

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  nlohmann::json j;
  in >> j;
  return j;
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << content;
}

std::map<std::string, double> parse_ratios(const std::string& s) {
  std::map<std::string, double> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) {
    const auto eq = part.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("bad ratio entry '" + part + "' (expected domain=value)");
    out[part.substr(0, eq)] = std::stod(part.substr(eq + 1));
  }
  return out;
}

std::vector<double> parse_grid(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) out.push_back(std::stod(part));
  return out;
}

void attach_features(Dataset& ds, const std::string& feature_path) {
  if (feature_path.empty()) return;
  auto features = load_feature_file(feature_path);
  for (Instance& inst : ds.instances) {
    if (!inst.visual && !inst.image_id.empty()) {
      auto it = features.find(inst.image_id);
      if (it == features.end())
        throw std::runtime_error("no features for image '" + inst.image_id + "'");
      inst.visual = it->second;
    }
  }
}

// every run records the exact configuration it resolved to
void write_resolved_config(const std::string& anchor, const nlohmann::ordered_json& cfg) {
  namespace fs = std::filesystem;
  fs::path p(anchor);
  fs::path out = fs::is_directory(p) ? p / "resolved_config.json"
                                     : p.parent_path() / (p.filename().string() + ".config.json");
  write_text(out.string(), cfg.dump(2) + "\n");
}

struct Shared {
  SchemaSet schemas = SchemaSet::defaults();
  InstructionRegistry registry = InstructionRegistry::defaults();
};

int cmd_synth(const std::string& spec_path, const std::string& out_path, int64_t seed_override) {
  CorpusSpec spec;
  if (!spec_path.empty()) spec = CorpusSpec::from_json(read_json_file(spec_path));
  else spec.counts = {{Task::MNER, {50, 10, 20}},
                      {Task::MRE, {50, 10, 20}},
                      {Task::MED, {50, 10, 20}},
                      {Task::MEAE, {50, 10, 20}}};
  if (seed_override >= 0) spec.seed = static_cast<uint64_t>(seed_override);
  Dataset ds = synth_corpus(spec);
  save_dataset(ds, out_path);
  write_resolved_config(out_path, spec.to_json());
  auto counts = ds.counts();
  std::cout << "wrote " << ds.instances.size() << " instances to " << out_path << "\n";
  for (const auto& [split, per_task] : counts) {
    for (const auto& [task, n] : per_task)
      std::cout << "  " << split << "/" << task << ": " << n << "\n";
  }
  return 0;
}

Dataset load_all(const std::vector<std::string>& paths, const std::string& features,
                 const SchemaSet& schemas) {
  Dataset merged;
  for (const std::string& p : paths) {
    Dataset ds = load_dataset(p, schemas);
    attach_features(ds, features);
    merged.instances.insert(merged.instances.end(),
                            std::make_move_iterator(ds.instances.begin()),
                            std::make_move_iterator(ds.instances.end()));
  }
  merged.name = paths.empty() ? "" : paths.front();
  return merged;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& data_paths,
              const std::string& features, const std::string& out_dir, int64_t seed_override,
              const std::string& gate, const std::string& ratios,
              const std::vector<std::string>& variants) {
  Shared sh;
  nlohmann::json cfg_json = config_path.empty() ? nlohmann::json::object()
                                                : read_json_file(config_path);
  ModelConfig mcfg = cfg_json.contains("model") ? ModelConfig::from_json(cfg_json.at("model"))
                                                : ModelConfig{};
  TrainConfig tcfg = cfg_json.contains("train") ? TrainConfig::from_json(cfg_json.at("train"))
                                                : TrainConfig{};
  if (seed_override >= 0) tcfg.seed = static_cast<uint64_t>(seed_override);
  if (!gate.empty()) tcfg.gate_mode = GateMode::parse(gate);
  if (!ratios.empty()) tcfg.ratios = parse_ratios(ratios);
  if (!variants.empty()) tcfg.instruction_variants = variants;
  tcfg.out_dir = out_dir;

  Dataset data = load_all(data_paths, features, sh.schemas);
  std::vector<const Dataset*> vocab_src = {&data};
  Vocab vocab = build_vocab(vocab_src, sh.schemas, sh.registry);
  mcfg.vocab_size = vocab.size();
  int max_dv = 0;
  for (const Instance& inst : data.instances)
    if (inst.visual) max_dv = std::max(max_dv, inst.visual->d_v);
  if (max_dv > 0) mcfg.d_v = max_dv;

  Model model(mcfg, std::move(vocab), tcfg.seed);
  std::filesystem::create_directories(out_dir);
  nlohmann::ordered_json resolved;
  resolved["model"] = mcfg.to_json();
  resolved["train"] = tcfg.to_json();
  write_resolved_config(out_dir, resolved);

  TrainResult res = train(model, data, tcfg, sh.schemas, sh.registry);
  std::cout << "trained " << res.log.records.size() << " epochs; best mean dev F1 "
            << res.best_dev_f1 << " at epoch " << res.best_epoch << "\n";
  std::cout << "checkpoints in " << out_dir << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::vector<std::string>& data_paths,
             const std::string& features, const std::string& task, const std::string& gate,
             const std::string& variant, const std::string& split, const std::string& out_path) {
  Shared sh;
  Model model = Model::load_checkpoint(ckpt);
  Dataset data = load_all(data_paths, features, sh.schemas);
  EvalOptions opts;
  if (!gate.empty()) opts.gate = GateMode::parse(gate);
  if (!variant.empty()) opts.variant = variant;
  std::vector<const Instance*> instances = data.split(split);

  nlohmann::ordered_json report;
  if (task.empty()) {
    for (const auto& [t, r] : run_eval_all(model, instances, sh.schemas, sh.registry, opts))
      report[t] = r.to_json();
  } else {
    Task t = task_from_name(task);
    std::vector<const Instance*> filtered;
    for (const Instance* i : instances)
      if (i->task == t) filtered.push_back(i);
    report[task] = run_eval(model, filtered, t, sh.schemas, sh.registry, opts).to_json();
  }
  const std::string text = report.dump(2) + "\n";
  if (out_path.empty()) std::cout << text;
  else {
    write_text(out_path, text);
    std::cout << "wrote " << out_path << "\n";
  }
  return 0;
}

int cmd_predict(const std::string& ckpt, const std::vector<std::string>& data_paths,
                const std::string& features, const std::string& gate, const std::string& variant,
                const std::string& split, const std::string& out_path) {
  Shared sh;
  Model model = Model::load_checkpoint(ckpt);
  Dataset data = load_all(data_paths, features, sh.schemas);
  GateMode mode = gate.empty() ? GateMode::dynamic() : GateMode::parse(gate);
  const std::string var = variant.empty() ? "default" : variant;
  NoGradGuard ng;
  std::string out;
  for (const Instance* inst : data.split(split)) {
    InstructionContext ctx;
    ctx.head = inst->head;
    ctx.tail = inst->tail;
    if (inst->task == Task::MEAE && !inst->gold.arguments.empty())
      ctx.event_type = inst->gold.arguments.front().event_type;
    const TaskSchema& schema = sh.schemas.for_task(inst->task);
    const std::string instr = sh.registry.render(inst->task, var, schema, ctx);
    AssembledInput in = assemble_input(instr, inst->text, model.vocab(),
                                       model.config().max_input_len);
    Tensor h_e = model.encode_text(in.ids);
    const VisualFeatureSet* vis = inst->visual ? &*inst->visual : nullptr;
    Model::Fused fused = model.fuse_modalities(h_e, vis, mode);
    const std::string text = model.vocab().decode(model.generate(fused.c).ids);
    ParseOutcome parsed = parse_output(text, schema, ctx.event_type);
    nlohmann::ordered_json j;
    j["id"] = inst->id;
    j["task"] = task_name(inst->task);
    j["output"] = text;
    j["malformed"] = parsed.malformed;
    out += j.dump() + "\n";
  }
  if (out_path.empty()) std::cout << out;
  else {
    write_text(out_path, out);
    std::cout << "wrote " << out_path << "\n";
  }
  return 0;
}

int cmd_ablate_gate(const std::string& ckpt, const std::vector<std::string>& data_paths,
                    const std::string& features, const std::string& grid,
                    const std::string& split, const std::string& out_path) {
  Shared sh;
  Model model = Model::load_checkpoint(ckpt);
  Dataset data = load_all(data_paths, features, sh.schemas);
  SweepResult sweep = gate_sweep(model, data.split(split), parse_grid(grid), sh.schemas,
                                 sh.registry);
  const std::string csv = sweep.to_csv();
  if (out_path.empty()) std::cout << csv;
  else {
    write_text(out_path, csv);
    std::cout << "wrote " << out_path << "\n";
  }
  return 0;
}

int cmd_zero_shot(const std::string& config_path, const std::vector<std::string>& data_paths,
                  const std::string& features, const std::string& hold_out,
                  int64_t seed_override, const std::string& out_path) {
  Shared sh;
  nlohmann::json cfg_json = config_path.empty() ? nlohmann::json::object()
                                                : read_json_file(config_path);
  ModelConfig mcfg = cfg_json.contains("model") ? ModelConfig::from_json(cfg_json.at("model"))
                                                : ModelConfig{};
  TrainConfig tcfg = cfg_json.contains("train") ? TrainConfig::from_json(cfg_json.at("train"))
                                                : TrainConfig{};
  if (seed_override >= 0) tcfg.seed = static_cast<uint64_t>(seed_override);
  std::vector<Dataset> datasets;
  for (const std::string& p : data_paths) {
    Dataset ds = load_dataset(p, sh.schemas);
    attach_features(ds, features);
    datasets.push_back(std::move(ds));
  }
  int max_dv = 0;
  for (const Dataset& ds : datasets)
    for (const Instance& inst : ds.instances)
      if (inst.visual) max_dv = std::max(max_dv, inst.visual->d_v);
  if (max_dv > 0) mcfg.d_v = max_dv;
  std::vector<const Dataset*> ptrs;
  for (const Dataset& ds : datasets) ptrs.push_back(&ds);

  auto reports = zero_shot_run(ptrs, hold_out, mcfg, tcfg, sh.schemas, sh.registry);
  nlohmann::ordered_json j;
  j["held_out"] = hold_out;
  for (const auto& [t, r] : reports) j[t] = r.to_json();
  const std::string text = j.dump(2) + "\n";
  if (out_path.empty()) std::cout << text;
  else {
    write_text(out_path, text);
    std::cout << "wrote " << out_path << "\n";
  }
  return 0;
}

int cmd_robustness(const std::string& ckpt, const std::vector<std::string>& data_paths,
                   const std::string& features, const std::string& task,
                   const std::vector<std::string>& variants, const std::string& split,
                   const std::string& out_path) {
  Shared sh;
  Model model = Model::load_checkpoint(ckpt);
  Dataset data = load_all(data_paths, features, sh.schemas);
  Task t = task_from_name(task);
  std::vector<const Instance*> instances;
  for (const Instance* i : data.split(split))
    if (i->task == t) instances.push_back(i);
  auto reports = instruction_robustness(model, instances, t, variants, sh.schemas, sh.registry);
  nlohmann::ordered_json j;
  for (const auto& [v, r] : reports) j[v] = r.to_json();
  const std::string text = j.dump(2) + "\n";
  if (out_path.empty()) std::cout << text;
  else {
    write_text(out_path, text);
    std::cout << "wrote " << out_path << "\n";
  }
  return 0;
}

int cmd_trace_gates(const std::string& ckpt, const std::vector<std::string>& data_paths,
                    const std::string& features, const std::string& split, double bin_width,
                    const std::string& out_path) {
  Shared sh;
  Model model = Model::load_checkpoint(ckpt);
  Dataset data = load_all(data_paths, features, sh.schemas);
  auto traces = trace_gates(model, data.split(split), sh.schemas, sh.registry,
                            GateMode::dynamic());
  const std::string csv = gate_trace_csv(traces);
  if (out_path.empty()) {
    std::cout << csv;
  } else {
    write_text(out_path, csv);
    write_text(out_path + ".hist.csv", gate_histogram_csv(traces, bin_width));
    std::cout << "wrote " << out_path << " and " << out_path << ".hist.csv\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"unified multimodal information extractor: corpus synthesis, "
               "instruction tuning, and evaluation harness"};
  app.require_subcommand(1);

  std::string spec_path, config_path, ckpt, out_path, features, gate, ratios, grid;
  std::string task, variant_single, hold_out, split = "test";
  std::vector<std::string> data_paths, variants;
  int64_t seed = -1;
  double bin_width = 0.01;

  auto* synth = app.add_subcommand("synth", "generate a deterministic synthetic corpus");
  synth->add_option("--spec", spec_path, "corpus spec JSON (defaults: 50/10/20 per task)");
  synth->add_option("--out", out_path, "output dataset (line-delimited JSON)")->required();
  synth->add_option("--seed", seed, "seed override");

  auto* train = app.add_subcommand("train", "multi-task instruction tuning");
  train->add_option("--config", config_path, "JSON config with 'model' and 'train' sections");
  train->add_option("--data", data_paths, "training dataset(s)")->required();
  train->add_option("--features", features, "feature file for image_id references");
  train->add_option("--out", out_path, "checkpoint/log directory")->required();
  train->add_option("--seed", seed, "seed override");
  train->add_option("--gate", gate, "gate mode: dynamic|off|fixed:<v>");
  train->add_option("--ratios", ratios, "domain ratios, e.g. twitter=0.5,news=0.5");
  train->add_option("--variant", variants, "instruction variant(s) rotated during training");

  auto* eval = app.add_subcommand("eval", "generate -> parse -> score a checkpoint");
  eval->add_option("--ckpt", ckpt, "checkpoint file")->required();
  eval->add_option("--data", data_paths, "dataset(s)")->required();
  eval->add_option("--features", features, "feature file for image_id references");
  eval->add_option("--task", task, "restrict to one task (mner|mre|med|meae)");
  eval->add_option("--gate", gate, "gate mode: dynamic|off|fixed:<v>");
  eval->add_option("--variant", variant_single, "instruction variant");
  eval->add_option("--split", split, "dataset split (default test)");
  eval->add_option("--out", out_path, "report JSON path (default stdout)");

  auto* predict = app.add_subcommand("predict", "write raw generations per instance");
  predict->add_option("--ckpt", ckpt, "checkpoint file")->required();
  predict->add_option("--data", data_paths, "dataset(s)")->required();
  predict->add_option("--features", features, "feature file for image_id references");
  predict->add_option("--gate", gate, "gate mode");
  predict->add_option("--variant", variant_single, "instruction variant");
  predict->add_option("--split", split, "dataset split (default test)");
  predict->add_option("--out", out_path, "predictions path (default stdout)");

  auto* ablate = app.add_subcommand("ablate-gate", "fixed-gate sweep plus a dynamic row");
  ablate->add_option("--ckpt", ckpt, "checkpoint file")->required();
  ablate->add_option("--data", data_paths, "dataset(s)")->required();
  ablate->add_option("--features", features, "feature file for image_id references");
  ablate->add_option("--grid", grid, "comma-separated fixed gate values")->required();
  ablate->add_option("--split", split, "dataset split (default test)");
  ablate->add_option("--out", out_path, "sweep CSV path (default stdout)");

  auto* zs = app.add_subcommand("zero-shot", "train without one dataset, score its test split");
  zs->add_option("--config", config_path, "JSON config with 'model' and 'train' sections");
  zs->add_option("--data", data_paths, "all datasets (name = path)")->required();
  zs->add_option("--features", features, "feature file for image_id references");
  zs->add_option("--hold-out", hold_out, "dataset to exclude from training")->required();
  zs->add_option("--seed", seed, "seed override");
  zs->add_option("--out", out_path, "report JSON path (default stdout)");

  auto* robust = app.add_subcommand("robustness", "score one task under several instructions");
  robust->add_option("--ckpt", ckpt, "checkpoint file")->required();
  robust->add_option("--data", data_paths, "dataset(s)")->required();
  robust->add_option("--features", features, "feature file for image_id references");
  robust->add_option("--task", task, "task to score")->required();
  robust->add_option("--variant", variants, "instruction variants")->required();
  robust->add_option("--split", split, "dataset split (default test)");
  robust->add_option("--out", out_path, "report JSON path (default stdout)");

  auto* trace = app.add_subcommand("trace-gates", "dynamic gate value per instance + histogram");
  trace->add_option("--ckpt", ckpt, "checkpoint file")->required();
  trace->add_option("--data", data_paths, "dataset(s)")->required();
  trace->add_option("--features", features, "feature file for image_id references");
  trace->add_option("--split", split, "dataset split (default test)");
  trace->add_option("--bin-width", bin_width, "histogram bin width (default 0.01)");
  trace->add_option("--out", out_path, "trace CSV path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (synth->parsed()) return cmd_synth(spec_path, out_path, seed);
    if (train->parsed())
      return cmd_train(config_path, data_paths, features, out_path, seed, gate, ratios, variants);
    if (eval->parsed())
      return cmd_eval(ckpt, data_paths, features, task, gate, variant_single, split, out_path);
    if (predict->parsed())
      return cmd_predict(ckpt, data_paths, features, gate, variant_single, split, out_path);
    if (ablate->parsed())
      return cmd_ablate_gate(ckpt, data_paths, features, grid, split, out_path);
    if (zs->parsed())
      return cmd_zero_shot(config_path, data_paths, features, hold_out, seed, out_path);
    if (robust->parsed())
      return cmd_robustness(ckpt, data_paths, features, task, variants, split, out_path);
    if (trace->parsed())
      return cmd_trace_gates(ckpt, data_paths, features, split, bin_width, out_path);
  } catch (const std::runtime_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
