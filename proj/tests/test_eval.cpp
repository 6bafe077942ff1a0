#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "umie/eval.hpp"

using namespace umie;

namespace {

const SchemaSet kSchemas = SchemaSet::defaults();
const InstructionRegistry kRegistry = InstructionRegistry::defaults();

Dataset tiny_corpus(uint64_t seed = 4) {
  CorpusSpec spec;
  spec.seed = seed;
  spec.d_v = 8;
  spec.visual_fraction = 0.5;
  for (Task t : {Task::MNER, Task::MRE, Task::MED, Task::MEAE}) {
    spec.counts[t] = {4, 0, 4};
  }
  return synth_corpus(spec);
}

Model tiny_model(const Vocab& v, uint64_t seed = 5) {
  ModelConfig cfg;
  cfg.d_t = 8;
  cfg.n_enc_layers = 1;
  cfg.n_dec_layers = 1;
  cfg.n_heads = 2;
  cfg.n_vis_heads = 2;
  cfg.ffn_width = 16;
  cfg.vocab_size = v.size();
  cfg.max_input_len = 128;
  cfg.max_output_len = 16;
  cfg.d_v = 8;
  return Model(cfg, v, seed);
}

}  // namespace

TEST_CASE("span scoring identities") {
  using M = std::vector<Mention>;
  SUBCASE("perfect prediction") {
    ScoreReport r = score_spans({{{"person", "Alice"}}}, {{{"person", "alice"}}}, Task::MNER);
    CHECK(r.f1 == 1.0);  // value match is case-insensitive
    CHECK(r.tp == 1);
    CHECK(r.support == 1);
  }
  SUBCASE("disjoint prediction") {
    ScoreReport r = score_spans({{{"person", "bob"}}}, {{{"person", "alice"}}}, Task::MNER);
    CHECK(r.f1 == 0.0);
    CHECK(r.fp == 1);
    CHECK(r.fn == 1);
  }
  SUBCASE("partial recall") {
    M pred = {{"person", "alice"}};
    M gold = {{"person", "alice"}, {"location", "paris"}};
    ScoreReport r = score_spans({pred}, {gold}, Task::MNER);
    CHECK(r.precision == 1.0);
    CHECK(r.recall == 0.5);
    CHECK(r.f1 == doctest::Approx(2.0 / 3.0));
  }
  SUBCASE("duplicates collapse") {
    M pred = {{"person", "alice"}, {"person", "alice"}};
    ScoreReport r = score_spans({pred}, {{{"person", "alice"}}}, Task::MNER);
    CHECK(r.tp == 1);
    CHECK(r.fp == 0);
  }
  SUBCASE("empty everything scores zero without dividing by zero") {
    ScoreReport r = score_spans({{}}, {{}}, Task::MNER);
    CHECK(r.f1 == 0.0);
    CHECK(r.precision == 0.0);
    CHECK(r.recall == 0.0);
  }
  SUBCASE("mismatched lengths are an error") {
    CHECK_THROWS_AS((void)score_spans({{}, {}}, {{}}, Task::MNER), std::runtime_error);
  }
}

TEST_CASE("triple scoring excludes none-gold from support") {
  std::vector<Triple> gold = {{"a", "peer", "b"},
                              {"c", "member of", "d"},
                              {"e", "none", "f"},
                              {"g", "part of", "h"}};
  std::vector<Triple> pred = {{"a", "peer", "b"},
                              {"c", "part of", "d"},      // wrong relation
                              {"e", "peer", "f"},          // spurious prediction
                              {"g", "part of", "h"}};
  ScoreReport r = score_triples(pred, gold);
  CHECK(r.support == 3);
  CHECK(r.tp == 2);
  CHECK(r.fp == 2);
  CHECK(r.fn == 1);
  CHECK(r.precision == doctest::Approx(0.5));
  CHECK(r.recall == doctest::Approx(2.0 / 3.0));

  // all-"none" predictions: zero recall, no false positives
  std::vector<Triple> silent(gold.size(), {"", "none", ""});
  ScoreReport r2 = score_triples(silent, gold);
  CHECK(r2.recall == 0.0);
  CHECK(r2.fp == 0);
  // empty relation counts as "none"
  ScoreReport r3 = score_triples({{"a", "", "b"}}, {{"a", "", "b"}});
  CHECK(r3.support == 0);
  CHECK(r3.tp == 0);
}

TEST_CASE("argument scoring matches on event, role, and value") {
  using A = std::vector<Argument>;
  A gold = {{"attack", "attacker", "coalition"}, {"attack", "target", "O_1"}};
  A pred = {{"attack", "attacker", "Coalition"}, {"attack", "place", "O_1"}};
  ScoreReport r = score_arguments({pred}, {gold});
  CHECK(r.tp == 1);
  CHECK(r.fp == 1);
  CHECK(r.fn == 1);
  CHECK(r.f1 == doctest::Approx(0.5));
}

TEST_CASE("run_eval over an empty list yields an all-zero report") {
  Dataset ds = tiny_corpus();
  Vocab v = build_vocab({&ds}, kSchemas, kRegistry);
  Model m = tiny_model(v);
  ScoreReport r = run_eval(m, {}, Task::MNER, kSchemas, kRegistry);
  CHECK(r.n_instances == 0);
  CHECK(r.f1 == 0.0);
}

TEST_CASE("run_eval rejects instances from another task") {
  Dataset ds = tiny_corpus();
  Vocab v = build_vocab({&ds}, kSchemas, kRegistry);
  Model m = tiny_model(v);
  std::vector<const Instance*> mre;
  for (const Instance& i : ds.instances) {
    if (i.task == Task::MRE) mre.push_back(&i);
  }
  CHECK_THROWS_AS((void)run_eval(m, mre, Task::MNER, kSchemas, kRegistry), std::runtime_error);
}

TEST_CASE("gate off and fixed zero produce identical reports") {
  Dataset ds = tiny_corpus();
  Vocab v = build_vocab({&ds}, kSchemas, kRegistry);
  Model m = tiny_model(v);
  auto test_set = ds.split("test");
  EvalOptions off;
  off.gate = GateMode::off();
  EvalOptions zero;
  zero.gate = GateMode::fixed(0.0);
  auto r_off = run_eval_all(m, test_set, kSchemas, kRegistry, off);
  auto r_zero = run_eval_all(m, test_set, kSchemas, kRegistry, zero);
  REQUIRE(r_off.size() == r_zero.size());
  for (const auto& [task, rep] : r_off) {
    CHECK(rep.to_json() == r_zero.at(task).to_json());
  }
}

TEST_CASE("gate sweep emits one row per grid value plus the dynamic row") {
  Dataset ds = tiny_corpus();
  Vocab v = build_vocab({&ds}, kSchemas, kRegistry);
  Model m = tiny_model(v);
  auto test_set = ds.split("test");
  SweepResult sweep = gate_sweep(m, test_set, {0.0, 1.0}, kSchemas, kRegistry);
  REQUIRE(sweep.rows.size() == 3);
  CHECK(sweep.rows[0].first == "fixed:0");
  CHECK(sweep.rows[1].first == "fixed:1");
  CHECK(sweep.rows[2].first == "dynamic");
  const std::string csv = sweep.to_csv();
  CHECK(csv.rfind("gate,task,precision,recall,f1\n", 0) == 0);
  CHECK(csv.find("dynamic,mner,") != std::string::npos);
}

TEST_CASE("instruction robustness evaluates each variant") {
  Dataset ds = tiny_corpus();
  Vocab v = build_vocab({&ds}, kSchemas, kRegistry);
  Model m = tiny_model(v);
  std::vector<const Instance*> mner;
  for (const Instance& i : ds.instances) {
    if (i.task == Task::MNER && i.split == "test") mner.push_back(&i);
  }
  auto reports =
      instruction_robustness(m, mner, Task::MNER, {"default", "default"}, kSchemas, kRegistry);
  CHECK(reports.size() == 1);  // duplicate variant names collapse

  auto multi = instruction_robustness(m, mner, Task::MNER, {"default", "I0"}, kSchemas, kRegistry);
  CHECK(multi.size() == 2);
  CHECK(multi.count("default") == 1);
  CHECK(multi.count("I0") == 1);

  CHECK_THROWS_AS((void)instruction_robustness(m, mner, Task::MNER, {"nonexistent"}, kSchemas,
                                               kRegistry),
                  std::runtime_error);
}

TEST_CASE("gate tracing requires the dynamic mode") {
  Dataset ds = tiny_corpus();
  Vocab v = build_vocab({&ds}, kSchemas, kRegistry);
  Model m = tiny_model(v);
  auto test_set = ds.split("test");
  auto traces = trace_gates(m, test_set, kSchemas, kRegistry, GateMode::dynamic());
  CHECK(traces.size() == test_set.size());
  for (const auto& t : traces) CHECK(std::isfinite(t.gate_value));
  CHECK_THROWS_AS((void)trace_gates(m, test_set, kSchemas, kRegistry, GateMode::off()),
                  std::runtime_error);
}

TEST_CASE("zero-shot runs reject unknown dataset names") {
  Dataset ds = tiny_corpus();
  ModelConfig mcfg;
  TrainConfig tcfg;
  CHECK_THROWS_AS(
      (void)zero_shot_run({&ds}, "not-a-dataset", mcfg, tcfg, kSchemas, kRegistry),
      std::runtime_error);
}
