#include "umie/eval.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace umie {

namespace {

void finish_report(ScoreReport& r) {
  r.precision = (r.tp + r.fp) > 0 ? static_cast<double>(r.tp) / (r.tp + r.fp) : 0.0;
  r.recall = (r.tp + r.fn) > 0 ? static_cast<double>(r.tp) / (r.tp + r.fn) : 0.0;
  r.f1 = (r.precision + r.recall) > 0.0
             ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
             : 0.0;
}

bool is_none_relation(const std::string& rel) {
  return rel.empty() || normalize_text(rel) == "none";
}

}  // namespace

nlohmann::ordered_json ScoreReport::to_json() const {
  nlohmann::ordered_json j;
  j["task"] = task_name(task);
  j["precision"] = precision;
  j["recall"] = recall;
  j["f1"] = f1;
  j["tp"] = tp;
  j["fp"] = fp;
  j["fn"] = fn;
  j["support"] = support;
  j["n_instances"] = n_instances;
  j["malformed"] = malformed;
  return j;
}

ScoreReport score_spans(const std::vector<std::vector<Mention>>& pred,
                        const std::vector<std::vector<Mention>>& gold, Task task) {
  if (pred.size() != gold.size())
    throw std::runtime_error("score_spans: pred/gold instance count mismatch");
  ScoreReport r;
  r.task = task;
  r.n_instances = static_cast<long>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    std::set<std::pair<std::string, std::string>> p, g;
    for (const Mention& m : pred[i]) p.emplace(normalize_text(m.type), normalize_text(m.span));
    for (const Mention& m : gold[i]) g.emplace(normalize_text(m.type), normalize_text(m.span));
    r.support += static_cast<long>(g.size());
    for (const auto& item : p) {
      if (g.count(item)) ++r.tp;
      else ++r.fp;
    }
    for (const auto& item : g) {
      if (!p.count(item)) ++r.fn;
    }
  }
  finish_report(r);
  return r;
}

ScoreReport score_arguments(const std::vector<std::vector<Argument>>& pred,
                            const std::vector<std::vector<Argument>>& gold) {
  if (pred.size() != gold.size())
    throw std::runtime_error("score_arguments: pred/gold instance count mismatch");
  ScoreReport r;
  r.task = Task::MEAE;
  r.n_instances = static_cast<long>(pred.size());
  using Key = std::tuple<std::string, std::string, std::string>;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    std::set<Key> p, g;
    for (const Argument& a : pred[i])
      p.emplace(normalize_text(a.event_type), normalize_text(a.role), normalize_text(a.value));
    for (const Argument& a : gold[i])
      g.emplace(normalize_text(a.event_type), normalize_text(a.role), normalize_text(a.value));
    r.support += static_cast<long>(g.size());
    for (const auto& item : p) {
      if (g.count(item)) ++r.tp;
      else ++r.fp;
    }
    for (const auto& item : g) {
      if (!p.count(item)) ++r.fn;
    }
  }
  finish_report(r);
  return r;
}

ScoreReport score_triples(const std::vector<Triple>& pred, const std::vector<Triple>& gold) {
  if (pred.size() != gold.size())
    throw std::runtime_error("score_triples: pred/gold instance count mismatch");
  ScoreReport r;
  r.task = Task::MRE;
  r.n_instances = static_cast<long>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool gold_none = is_none_relation(gold[i].relation);
    const bool pred_none = is_none_relation(pred[i].relation);
    const bool match = !gold_none && !pred_none &&
                       normalize_text(pred[i].relation) == normalize_text(gold[i].relation);
    if (!gold_none) ++r.support;
    if (match) {
      ++r.tp;
    } else {
      if (!pred_none) ++r.fp;
      if (!gold_none) ++r.fn;
    }
  }
  finish_report(r);
  return r;
}

namespace {

struct Generated {
  std::string text;
  int malformed = 0;
};

std::string generate_text(const Model& model, const std::string& instruction,
                          const Instance& inst, GateMode gate) {
  AssembledInput in =
      assemble_input(instruction, inst.text, model.vocab(), model.config().max_input_len);
  Tensor h_e = model.encode_text(in.ids);
  const VisualFeatureSet* vis = inst.visual ? &*inst.visual : nullptr;
  Model::Fused fused = model.fuse_modalities(h_e, vis, gate);
  Model::GenResult gen = model.generate(fused.c);
  return model.vocab().decode(gen.ids);
}

// MED pass then one MEAE pass per predicted event type; arguments pooled.
std::vector<Argument> cascade_arguments(const Model& model, const Instance& inst,
                                        const SchemaSet& schemas,
                                        const InstructionRegistry& registry,
                                        const EvalOptions& opts, int& malformed) {
  const std::string med_instr =
      registry.render(Task::MED, opts.variant, schemas.med, InstructionContext{});
  ParseOutcome med =
      parse_output(generate_text(model, med_instr, inst, opts.gate), schemas.med);
  malformed += med.malformed;
  std::vector<std::string> types;
  for (const Mention& m : med.result.mentions) {
    if (std::find(types.begin(), types.end(), m.type) == types.end()) types.push_back(m.type);
  }
  std::vector<Argument> pooled;
  for (const std::string& type : types) {
    InstructionContext ctx;
    ctx.event_type = type;
    const std::string instr = registry.render(Task::MEAE, opts.variant, schemas.meae, ctx);
    ParseOutcome out =
        parse_output(generate_text(model, instr, inst, opts.gate), schemas.meae, type);
    malformed += out.malformed;
    for (Argument& a : out.result.arguments) pooled.push_back(std::move(a));
  }
  return pooled;
}

}  // namespace

ScoreReport run_eval(const Model& model, const std::vector<const Instance*>& instances, Task task,
                     const SchemaSet& schemas, const InstructionRegistry& registry,
                     const EvalOptions& opts) {
  NoGradGuard ng;
  const TaskSchema& schema = schemas.for_task(task);
  int malformed = 0;

  std::vector<std::vector<Mention>> pred_spans, gold_spans;
  std::vector<std::vector<Argument>> pred_args, gold_args;
  std::vector<Triple> pred_triples, gold_triples;

  for (const Instance* inst : instances) {
    if (inst->task != task)
      throw std::runtime_error("run_eval: instance '" + inst->id + "' has task " +
                               task_name(inst->task) + ", expected " + task_name(task));
    switch (task) {
      case Task::MNER:
      case Task::MED: {
        const std::string instr = registry.render(task, opts.variant, schema, {});
        ParseOutcome out = parse_output(generate_text(model, instr, *inst, opts.gate), schema);
        malformed += out.malformed;
        pred_spans.push_back(std::move(out.result.mentions));
        gold_spans.push_back(inst->gold.mentions);
        break;
      }
      case Task::MRE: {
        InstructionContext ctx;
        ctx.head = inst->head;
        ctx.tail = inst->tail;
        const std::string instr = registry.render(task, opts.variant, schema, ctx);
        ParseOutcome out = parse_output(generate_text(model, instr, *inst, opts.gate), schema);
        malformed += out.malformed;
        pred_triples.push_back(out.result.triple);
        gold_triples.push_back(inst->gold.triple);
        break;
      }
      case Task::MEAE: {
        if (opts.cascade_meae) {
          pred_args.push_back(
              cascade_arguments(model, *inst, schemas, registry, opts, malformed));
        } else {
          InstructionContext ctx;
          ctx.event_type = inst->gold.arguments.empty() ? schemas.med.labels.front()
                                                        : inst->gold.arguments.front().event_type;
          const std::string instr = registry.render(task, opts.variant, schema, ctx);
          ParseOutcome out = parse_output(generate_text(model, instr, *inst, opts.gate), schema,
                                          ctx.event_type);
          malformed += out.malformed;
          pred_args.push_back(std::move(out.result.arguments));
        }
        gold_args.push_back(inst->gold.arguments);
        break;
      }
    }
  }

  ScoreReport report;
  switch (task) {
    case Task::MNER:
    case Task::MED: report = score_spans(pred_spans, gold_spans, task); break;
    case Task::MRE: report = score_triples(pred_triples, gold_triples); break;
    case Task::MEAE: report = score_arguments(pred_args, gold_args); break;
  }
  report.malformed = malformed;
  return report;
}

std::map<std::string, ScoreReport> run_eval_all(const Model& model,
                                                const std::vector<const Instance*>& instances,
                                                const SchemaSet& schemas,
                                                const InstructionRegistry& registry,
                                                const EvalOptions& opts) {
  std::map<Task, std::vector<const Instance*>> by_task;
  for (const Instance* inst : instances) by_task[inst->task].push_back(inst);
  std::map<std::string, ScoreReport> out;
  for (const auto& [task, list] : by_task) {
    out[task_name(task)] = run_eval(model, list, task, schemas, registry, opts);
  }
  return out;
}

std::string SweepResult::to_csv() const {
  std::string out = "gate,task,precision,recall,f1\n";
  char buf[160];
  for (const auto& [gate, reports] : rows) {
    for (const auto& [task, r] : reports) {
      std::snprintf(buf, sizeof(buf), "%s,%s,%.6f,%.6f,%.6f\n", gate.c_str(), task.c_str(),
                    r.precision, r.recall, r.f1);
      out += buf;
    }
  }
  return out;
}

SweepResult gate_sweep(const Model& model, const std::vector<const Instance*>& instances,
                       const std::vector<double>& grid, const SchemaSet& schemas,
                       const InstructionRegistry& registry, const EvalOptions& opts) {
  SweepResult result;
  for (double v : grid) {
    EvalOptions o = opts;
    o.gate = GateMode::fixed(v);
    result.rows.emplace_back(o.gate.to_string(),
                             run_eval_all(model, instances, schemas, registry, o));
  }
  EvalOptions o = opts;
  o.gate = GateMode::dynamic();
  result.rows.emplace_back("dynamic", run_eval_all(model, instances, schemas, registry, o));
  return result;
}

std::map<std::string, ScoreReport> zero_shot_run(const std::vector<const Dataset*>& datasets,
                                                 const std::string& held_out_name,
                                                 const ModelConfig& mcfg, const TrainConfig& tcfg,
                                                 const SchemaSet& schemas,
                                                 const InstructionRegistry& registry) {
  const Dataset* held_out = nullptr;
  std::vector<const Dataset*> rest;
  for (const Dataset* ds : datasets) {
    if (ds->name == held_out_name) held_out = ds;
    else rest.push_back(ds);
  }
  if (!held_out) throw std::runtime_error("zero_shot_run: unknown dataset '" + held_out_name + "'");

  Dataset combined;
  combined.name = "zero-shot-train";
  for (const Dataset* ds : rest) {
    combined.instances.insert(combined.instances.end(), ds->instances.begin(),
                              ds->instances.end());
  }

  Vocab vocab = build_vocab(rest, schemas, registry);
  ModelConfig cfg = mcfg;
  cfg.vocab_size = vocab.size();
  Model model(cfg, std::move(vocab), tcfg.seed);
  train(model, combined, tcfg, schemas, registry);

  EvalOptions opts;
  opts.gate = tcfg.gate_mode;
  return run_eval_all(model, held_out->split("test"), schemas, registry, opts);
}

std::map<std::string, ScoreReport> instruction_robustness(
    const Model& model, const std::vector<const Instance*>& instances, Task task,
    const std::vector<std::string>& variants, const SchemaSet& schemas,
    const InstructionRegistry& registry, const EvalOptions& opts) {
  std::map<std::string, ScoreReport> out;
  for (const std::string& variant : variants) {
    if (!registry.has(task, variant))
      throw std::runtime_error("instruction_robustness: unregistered variant '" + variant + "'");
    EvalOptions o = opts;
    o.variant = variant;
    out[variant] = run_eval(model, instances, task, schemas, registry, o);
  }
  return out;
}

std::vector<FusionTrace> trace_gates(const Model& model,
                                     const std::vector<const Instance*>& instances,
                                     const SchemaSet& schemas, const InstructionRegistry& registry,
                                     GateMode mode, const std::string& variant) {
  if (!mode.is_dynamic())
    throw std::runtime_error("trace_gates: gate tracing requires the dynamic gate mode");
  NoGradGuard ng;
  std::vector<FusionTrace> traces;
  for (const Instance* inst : instances) {
    InstructionContext ctx;
    ctx.head = inst->head;
    ctx.tail = inst->tail;
    if (inst->task == Task::MEAE && !inst->gold.arguments.empty())
      ctx.event_type = inst->gold.arguments.front().event_type;
    const std::string instr =
        registry.render(inst->task, variant, schemas.for_task(inst->task), ctx);
    AssembledInput in =
        assemble_input(instr, inst->text, model.vocab(), model.config().max_input_len);
    Tensor h_e = model.encode_text(in.ids);
    const VisualFeatureSet* vis = inst->visual ? &*inst->visual : nullptr;
    Model::Fused fused = model.fuse_modalities(h_e, vis, mode);
    traces.push_back({inst->id, inst->task, fused.gate});
  }
  return traces;
}

}  // namespace umie
