#pragma once

#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "umie/data.hpp"
#include "umie/fusion.hpp"
#include "umie/model.hpp"
#include "umie/optim.hpp"

namespace umie {

struct TrainConfig {
  AdamWConfig optim;  // lr defaults to 1e-4
  int epochs = 40;
  int batch_size = 16;
  double label_smoothing = 0.1;
  uint64_t seed = 0;
  GateMode gate_mode = GateMode::dynamic();
  std::map<std::string, double> ratios;  // domain ratios; empty = uniform
  double grad_clip = 1.0;
  int checkpoint_every = 0;  // epochs between numbered checkpoints; 0 = none
  int eval_every = 1;        // epochs between dev-F1 evaluations; 0 = never
  // instruction variants rotated across batches during training
  std::vector<std::string> instruction_variants = {"default"};
  // early stop once every task's eval F1 reaches this (<0 disables)
  double stop_at_f1 = -1.0;
  std::string out_dir;  // checkpoint/log destination; empty = keep in memory

  void validate() const;
  nlohmann::ordered_json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct EpochRecord {
  int epoch = 0;
  double mean_loss = 0.0;
  std::map<std::string, double> dev_f1;  // task name -> F1 (eval epochs only)
  double wall_time_s = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> records;
  // One JSON object per line. Wall time is run-dependent, so determinism
  // comparisons drop it.
  std::string to_jsonl(bool include_wall_time = true) const;
};

struct TrainResult {
  TrainLog log;
  double best_dev_f1 = 0.0;
  int best_epoch = -1;
  std::string best_checkpoint;  // set when out_dir given
  bool stopped_early = false;
};

// Token ids for one instance: instruction+text input, gold target (no BOS,
// ends with </s> implied by the loss shift).
struct EncodedExample {
  std::vector<int> input_ids;
  std::vector<int> target_ids;
  bool truncated = false;
};

EncodedExample encode_example(const Instance& inst, const Vocab& vocab, const SchemaSet& schemas,
                              const InstructionRegistry& registry, const std::string& variant,
                              int max_input_len, int max_output_len);

// Vocabulary over every text, rendered instruction variant, and serialized
// gold output the training run can see.
Vocab build_vocab(const std::vector<const Dataset*>& datasets, const SchemaSet& schemas,
                  const InstructionRegistry& registry, int min_count = 1);

// Teacher-forced label-smoothed loss, averaged per instance then over the
// batch. Returns a {1,1} tensor on the tape.
Tensor compute_loss(const Model& model, const std::vector<const Instance*>& batch,
                    const SchemaSet& schemas, const InstructionRegistry& registry,
                    const std::string& variant, GateMode gate, double label_smoothing);

// Multi-task instruction tuning. Trains in place; evaluates the dev split
// (or the train split when dev is empty) through the generate->parse->score
// path, keeps the best-mean-F1 checkpoint, aborts on non-finite loss.
TrainResult train(Model& model, const Dataset& data, const TrainConfig& cfg,
                  const SchemaSet& schemas, const InstructionRegistry& registry);

}  // namespace umie
