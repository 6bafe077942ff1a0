#include "umie/trainer.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <stdexcept>

#include "umie/eval.hpp"
#include "umie/ops.hpp"

namespace umie {

void TrainConfig::validate() const {
  if (epochs < 0) throw std::runtime_error("TrainConfig: epochs must be >= 0");
  if (batch_size <= 0) throw std::runtime_error("TrainConfig: batch_size must be positive");
  if (label_smoothing < 0.0 || label_smoothing >= 1.0)
    throw std::runtime_error("TrainConfig: label_smoothing must be in [0,1)");
  if (optim.lr <= 0.0) throw std::runtime_error("TrainConfig: learning rate must be positive");
  if (eval_every < 0) throw std::runtime_error("TrainConfig: eval_every must be >= 0");
  if (instruction_variants.empty())
    throw std::runtime_error("TrainConfig: need at least one instruction variant");
}

nlohmann::ordered_json TrainConfig::to_json() const {
  nlohmann::ordered_json j;
  j["learning_rate"] = optim.lr;
  j["beta1"] = optim.beta1;
  j["beta2"] = optim.beta2;
  j["adam_eps"] = optim.eps;
  j["weight_decay"] = optim.weight_decay;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["label_smoothing"] = label_smoothing;
  j["seed"] = seed;
  j["gate_mode"] = gate_mode.to_string();
  j["ratios"] = ratios;
  j["grad_clip"] = grad_clip;
  j["checkpoint_every"] = checkpoint_every;
  j["eval_every"] = eval_every;
  j["instruction_variants"] = instruction_variants;
  j["stop_at_f1"] = stop_at_f1;
  j["out_dir"] = out_dir;
  return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.optim.lr = j.value("learning_rate", c.optim.lr);
  c.optim.beta1 = j.value("beta1", c.optim.beta1);
  c.optim.beta2 = j.value("beta2", c.optim.beta2);
  c.optim.eps = j.value("adam_eps", c.optim.eps);
  c.optim.weight_decay = j.value("weight_decay", c.optim.weight_decay);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.label_smoothing = j.value("label_smoothing", c.label_smoothing);
  c.seed = j.value("seed", c.seed);
  if (j.contains("gate_mode")) c.gate_mode = GateMode::parse(j.at("gate_mode").get<std::string>());
  if (j.contains("ratios")) c.ratios = j.at("ratios").get<std::map<std::string, double>>();
  c.grad_clip = j.value("grad_clip", c.grad_clip);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.eval_every = j.value("eval_every", c.eval_every);
  if (j.contains("instruction_variants"))
    c.instruction_variants = j.at("instruction_variants").get<std::vector<std::string>>();
  c.stop_at_f1 = j.value("stop_at_f1", c.stop_at_f1);
  c.out_dir = j.value("out_dir", c.out_dir);
  c.validate();
  return c;
}

std::string TrainLog::to_jsonl(bool include_wall_time) const {
  std::string out;
  for (const EpochRecord& r : records) {
    nlohmann::ordered_json j;
    j["epoch"] = r.epoch;
    j["mean_loss"] = r.mean_loss;
    j["dev_f1"] = r.dev_f1;
    if (include_wall_time) j["wall_time_s"] = r.wall_time_s;
    out += j.dump() + "\n";
  }
  return out;
}

namespace {

InstructionContext context_for(const Instance& inst) {
  InstructionContext ctx;
  ctx.head = inst.head;
  ctx.tail = inst.tail;
  if (inst.task == Task::MEAE) {
    if (inst.gold.arguments.empty())
      throw std::runtime_error("instance '" + inst.id + "': MEAE instance without an event type");
    ctx.event_type = inst.gold.arguments.front().event_type;
  }
  return ctx;
}

}  // namespace

EncodedExample encode_example(const Instance& inst, const Vocab& vocab, const SchemaSet& schemas,
                              const InstructionRegistry& registry, const std::string& variant,
                              int max_input_len, int max_output_len) {
  EncodedExample ex;
  const std::string instr =
      registry.render(inst.task, variant, schemas.for_task(inst.task), context_for(inst));
  AssembledInput in = assemble_input(instr, inst.text, vocab, max_input_len);
  ex.input_ids = std::move(in.ids);
  ex.truncated = in.truncated;

  std::vector<int> target = vocab.encode(serialize_output(inst.gold));
  if (static_cast<int>(target.size()) + 1 > max_output_len) {
    std::cerr << "warning: target for instance '" << inst.id << "' truncated to "
              << max_output_len - 1 << " tokens\n";
    target.resize(max_output_len - 1);
    ex.truncated = true;
  }
  target.push_back(kEosId);
  ex.target_ids = std::move(target);
  return ex;
}

Vocab build_vocab(const std::vector<const Dataset*>& datasets, const SchemaSet& schemas,
                  const InstructionRegistry& registry, int min_count) {
  std::vector<std::string> corpus;
  for (const Dataset* ds : datasets) {
    for (const Instance& inst : ds->instances) {
      corpus.push_back(inst.text);
      corpus.push_back(serialize_output(inst.gold));
      for (const std::string& variant : registry.variants(inst.task)) {
        corpus.push_back(
            registry.render(inst.task, variant, schemas.for_task(inst.task), context_for(inst)));
      }
    }
  }
  return Vocab::build(corpus, min_count);
}

Tensor compute_loss(const Model& model, const std::vector<const Instance*>& batch,
                    const SchemaSet& schemas, const InstructionRegistry& registry,
                    const std::string& variant, GateMode gate, double label_smoothing) {
  if (batch.empty()) throw std::runtime_error("compute_loss: empty batch");
  const ModelConfig& cfg = model.config();
  Tensor total;
  for (const Instance* inst : batch) {
    EncodedExample ex = encode_example(*inst, model.vocab(), schemas, registry, variant,
                                       cfg.max_input_len, cfg.max_output_len);
    Tensor h_e = model.encode_text(ex.input_ids);
    const VisualFeatureSet* vis = inst->visual ? &*inst->visual : nullptr;
    Model::Fused fused = model.fuse_modalities(h_e, vis, gate);
    std::vector<int> dec_input(ex.target_ids.size());
    dec_input[0] = kBosId;
    for (std::size_t i = 1; i < ex.target_ids.size(); ++i) dec_input[i] = ex.target_ids[i - 1];
    Tensor logits = model.decode_logits(fused.c, dec_input);
    Tensor loss = cross_entropy_label_smoothed(logits, ex.target_ids, label_smoothing, kPadId);
    total = total.defined() ? add(total, loss) : loss;
  }
  return scale(total, 1.0 / static_cast<double>(batch.size()));
}

TrainResult train(Model& model, const Dataset& data, const TrainConfig& cfg,
                  const SchemaSet& schemas, const InstructionRegistry& registry) {
  cfg.validate();
  TrainResult result;
  std::vector<const Instance*> train_set = data.split("train");
  if (cfg.epochs == 0) return result;
  if (train_set.empty()) throw std::runtime_error("train: no training instances");

  std::vector<const Instance*> eval_set = data.split("dev");
  const bool eval_on_train = eval_set.empty();
  if (eval_on_train) eval_set = train_set;

  std::ofstream log_file;
  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    log_file.open(cfg.out_dir + "/train_log.jsonl");
  }

  BatchSampler sampler(train_set, cfg.ratios, cfg.batch_size, cfg.seed);
  const long steps_per_epoch =
      static_cast<long>((sampler.total() + cfg.batch_size - 1) / cfg.batch_size);
  std::vector<Parameter*> params = model.parameters();

  EvalOptions eopts;
  eopts.gate = cfg.gate_mode;
  eopts.variant = cfg.instruction_variants.front();

  long batch_counter = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    double loss_sum = 0.0;
    for (long step = 0; step < steps_per_epoch; ++step) {
      const std::string& variant =
          cfg.instruction_variants[batch_counter % cfg.instruction_variants.size()];
      ++batch_counter;
      std::vector<const Instance*> batch = sampler.next_batch();
      Tensor loss = compute_loss(model, batch, schemas, registry, variant, cfg.gate_mode,
                                 cfg.label_smoothing);
      const double lv = loss.item();
      if (!std::isfinite(lv)) {
        throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch) +
                                 " step " + std::to_string(step) + " (batch starting at instance '" +
                                 batch.front()->id + "')");
      }
      loss_sum += lv;
      backward(loss);
      clip_grad_norm(params, cfg.grad_clip);
      adamw_step(params, cfg.optim);
      zero_grads(params);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.mean_loss = loss_sum / static_cast<double>(steps_per_epoch);

    bool stop = false;
    if (cfg.eval_every > 0 && (epoch % cfg.eval_every == 0 || epoch == cfg.epochs)) {
      std::map<std::string, ScoreReport> reports =
          run_eval_all(model, eval_set, schemas, registry, eopts);
      double f1_sum = 0.0, f1_min = 1.0;
      for (const auto& [task, rep] : reports) {
        rec.dev_f1[task] = rep.f1;
        f1_sum += rep.f1;
        f1_min = std::min(f1_min, rep.f1);
      }
      const double mean_f1 = reports.empty() ? 0.0 : f1_sum / reports.size();
      if (result.best_epoch < 0 || mean_f1 > result.best_dev_f1) {
        result.best_dev_f1 = mean_f1;
        result.best_epoch = epoch;
        if (!cfg.out_dir.empty()) {
          result.best_checkpoint = cfg.out_dir + "/best.ckpt";
          model.save_checkpoint(result.best_checkpoint);
        }
      }
      if (cfg.stop_at_f1 >= 0.0 && !reports.empty() && f1_min >= cfg.stop_at_f1) {
        stop = true;
        result.stopped_early = true;
      }
    }

    if (!cfg.out_dir.empty() && cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0) {
      model.save_checkpoint(cfg.out_dir + "/epoch_" + std::to_string(epoch) + ".ckpt");
    }

    rec.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.records.push_back(std::move(rec));
    if (log_file.is_open()) {
      TrainLog one;
      one.records.push_back(result.log.records.back());
      log_file << one.to_jsonl();
      log_file.flush();
    }
    if (stop) break;
  }

  if (!cfg.out_dir.empty()) {
    model.save_checkpoint(cfg.out_dir + "/final.ckpt");
    if (result.best_checkpoint.empty()) {
      result.best_checkpoint = cfg.out_dir + "/best.ckpt";
      model.save_checkpoint(result.best_checkpoint);
    }
  }
  return result;
}

}  // namespace umie
