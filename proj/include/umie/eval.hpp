#pragma once

#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "umie/data.hpp"
#include "umie/fusion.hpp"
#include "umie/model.hpp"
#include "umie/trainer.hpp"

namespace umie {

struct ScoreReport {
  Task task = Task::MNER;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  long tp = 0, fp = 0, fn = 0;
  long support = 0;      // gold items (non-"none" gold for relations)
  long n_instances = 0;
  int malformed = 0;

  nlohmann::ordered_json to_json() const;
};

// Micro-F1 with exact match on (type, normalized value); duplicates collapse.
ScoreReport score_spans(const std::vector<std::vector<Mention>>& pred,
                        const std::vector<std::vector<Mention>>& gold, Task task);
// (event type, role, normalized value) exact match.
ScoreReport score_arguments(const std::vector<std::vector<Argument>>& pred,
                            const std::vector<std::vector<Argument>>& gold);
// Relation decision per given head/tail pair; "none" gold is excluded from
// support, spurious non-"none" predictions count as false positives.
ScoreReport score_triples(const std::vector<Triple>& pred, const std::vector<Triple>& gold);

struct EvalOptions {
  GateMode gate = GateMode::dynamic();
  std::string variant = "default";
  bool cascade_meae = true;  // detect the event type with a MED pass first
};

// generate -> parse -> score over one task's instances.
ScoreReport run_eval(const Model& model, const std::vector<const Instance*>& instances, Task task,
                     const SchemaSet& schemas, const InstructionRegistry& registry,
                     const EvalOptions& opts = {});

// One report per task present in the dataset split.
std::map<std::string, ScoreReport> run_eval_all(const Model& model,
                                                const std::vector<const Instance*>& instances,
                                                const SchemaSet& schemas,
                                                const InstructionRegistry& registry,
                                                const EvalOptions& opts = {});

struct SweepResult {
  // row per grid value plus one Dynamic row; task name -> report
  std::vector<std::pair<std::string, std::map<std::string, ScoreReport>>> rows;
  std::string to_csv() const;  // gate,task,precision,recall,f1
};

SweepResult gate_sweep(const Model& model, const std::vector<const Instance*>& instances,
                       const std::vector<double>& grid, const SchemaSet& schemas,
                       const InstructionRegistry& registry, const EvalOptions& opts = {});

// Trains a fresh model on every dataset except the held-out one's train
// split, then scores the held-out test split per task.
std::map<std::string, ScoreReport> zero_shot_run(const std::vector<const Dataset*>& datasets,
                                                 const std::string& held_out_name,
                                                 const ModelConfig& mcfg, const TrainConfig& tcfg,
                                                 const SchemaSet& schemas,
                                                 const InstructionRegistry& registry);

// run_eval once per instruction variant, swapping only the prefix.
std::map<std::string, ScoreReport> instruction_robustness(
    const Model& model, const std::vector<const Instance*>& instances, Task task,
    const std::vector<std::string>& variants, const SchemaSet& schemas,
    const InstructionRegistry& registry, const EvalOptions& opts = {});

// Dynamic gate values per instance; any other mode is an error.
std::vector<FusionTrace> trace_gates(const Model& model,
                                     const std::vector<const Instance*>& instances,
                                     const SchemaSet& schemas, const InstructionRegistry& registry,
                                     GateMode mode, const std::string& variant = "default");

}  // namespace umie
