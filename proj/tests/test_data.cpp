#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "umie/data.hpp"

using namespace umie;

namespace {

const SchemaSet kSchemas = SchemaSet::defaults();

CorpusSpec small_spec(uint64_t seed = 42) {
  CorpusSpec spec;
  spec.seed = seed;
  spec.d_v = 8;
  spec.visual_fraction = 0.5;
  for (Task t : {Task::MNER, Task::MRE, Task::MED, Task::MEAE}) {
    spec.counts[t] = {10, 3, 5};
  }
  return spec;
}

std::string dump_dataset(const Dataset& ds) {
  std::ostringstream ss;
  for (const Instance& i : ds.instances) ss << instance_to_json(i).dump() << "\n";
  return ss.str();
}

}  // namespace

TEST_CASE("instance JSON round trip for every task shape") {
  Dataset ds = synth_corpus(small_spec());
  for (const Instance& inst : ds.instances) {
    Instance back = instance_from_json(instance_to_json(inst), kSchemas);
    CHECK(back.id == inst.id);
    CHECK(back.task == inst.task);
    CHECK(back.text == inst.text);
    CHECK(back.split == inst.split);
    CHECK(back.domain == inst.domain);
    CHECK(back.gold == inst.gold);
    CHECK(back.head == inst.head);
    CHECK(back.tail == inst.tail);
    REQUIRE(back.visual.has_value() == inst.visual.has_value());
    if (inst.visual) {
      for (int s = 0; s < VisualFeatureSet::kSlots; ++s) {
        CHECK(back.visual->slots[s].present == inst.visual->slots[s].present);
        CHECK(back.visual->slots[s].feature == inst.visual->slots[s].feature);
      }
    }
  }
}

TEST_CASE("validation rejects broken instances") {
  Dataset ds = synth_corpus(small_spec());
  const Instance* mner = nullptr;
  const Instance* meae = nullptr;
  for (const Instance& i : ds.instances) {
    if (i.task == Task::MNER && !mner) mner = &i;
    if (i.task == Task::MEAE && !meae) meae = &i;
  }
  REQUIRE(mner != nullptr);
  REQUIRE(meae != nullptr);

  SUBCASE("unknown label") {
    auto j = instance_to_json(*mner);
    j["gold"][0]["type"] = "city";
    CHECK_THROWS_AS((void)instance_from_json(j, kSchemas), std::runtime_error);
  }
  SUBCASE("span absent from the text") {
    auto j = instance_to_json(*mner);
    j["gold"][0]["span"] = "unseen_word";
    CHECK_THROWS_AS((void)instance_from_json(j, kSchemas), std::runtime_error);
  }
  SUBCASE("bad split") {
    auto j = instance_to_json(*mner);
    j["split"] = "validation";
    CHECK_THROWS_AS((void)instance_from_json(j, kSchemas), std::runtime_error);
  }
  SUBCASE("mixed event types in one argument set") {
    auto j = instance_to_json(*meae);
    auto extra = j["gold"][0];
    extra["event_type"] = j["gold"][0]["event_type"] == "attack" ? "meet" : "attack";
    extra["value"] = j["gold"][0]["value"];
    j["gold"].push_back(extra);
    CHECK_THROWS_AS((void)instance_from_json(j, kSchemas), std::runtime_error);
  }
  SUBCASE("object token out of range") {
    auto j = instance_to_json(*meae);
    j["gold"][0]["value"] = "O_37";
    CHECK_THROWS_AS((void)instance_from_json(j, kSchemas), std::runtime_error);
  }
}

TEST_CASE("datasets load and save through LDJSON") {
  Dataset ds = synth_corpus(small_spec());
  const std::string path = "test_data_tmp.jsonl";
  save_dataset(ds, path);
  Dataset back = load_dataset(path, kSchemas);
  CHECK(back.instances.size() == ds.instances.size());
  CHECK(dump_dataset(back) == dump_dataset(ds));

  auto counts = back.counts();
  CHECK(counts["train"]["mner"] == 10);
  CHECK(counts["dev"]["mre"] == 3);
  CHECK(counts["test"]["meae"] == 5);
  CHECK(back.split("dev").size() == 12);

  // duplicate id names the offender
  {
    std::ofstream out(path, std::ios::app);
    out << instance_to_json(ds.instances.front()).dump() << "\n";
  }
  CHECK_THROWS_WITH_AS((void)load_dataset(path, kSchemas),
                       doctest::Contains(ds.instances.front().id.c_str()), std::runtime_error);

  // malformed JSON names the line
  {
    std::ofstream out(path);
    out << "{not json\n";
  }
  CHECK_THROWS_WITH_AS((void)load_dataset(path, kSchemas), doctest::Contains("line 1"),
                       std::runtime_error);
  std::remove(path.c_str());
}

TEST_CASE("dedupe removes train texts that appear in test") {
  Dataset train = synth_corpus(small_spec(1));
  Dataset test = synth_corpus(small_spec(1));  // identical corpus
  int removed = dedupe(train, test);
  CHECK(removed > 0);
  CHECK(dedupe(train, test) == 0);  // idempotent

  Dataset disjoint_a = synth_corpus(small_spec(2));
  CorpusSpec other = small_spec(3);
  other.template_variant = 1;
  Dataset disjoint_b = synth_corpus(other);
  CHECK(dedupe(disjoint_a, disjoint_b) == 0);
}

TEST_CASE("the generator is deterministic and validates its own output") {
  Dataset a = synth_corpus(small_spec(7));
  Dataset b = synth_corpus(small_spec(7));
  CHECK(dump_dataset(a) == dump_dataset(b));
  Dataset c = synth_corpus(small_spec(8));
  CHECK(dump_dataset(a) != dump_dataset(c));
}

TEST_CASE("fraction 0 puts every label in the text, fraction 1 hides it") {
  CorpusSpec text_only = small_spec(5);
  text_only.visual_fraction = 0.0;
  for (const Instance& i : synth_corpus(text_only).instances) {
    if (i.task == Task::MED) {
      CHECK(i.gold.mentions[0].span != "incident");  // real trigger word present
    }
    if (i.task == Task::MNER) {
      // keyword from the label-specific pool, never a neutral filler
      CHECK(i.text.find(i.gold.mentions[0].span) != std::string::npos);
    }
  }

  CorpusSpec vis_only = small_spec(5);
  vis_only.visual_fraction = 1.0;
  for (const Instance& i : synth_corpus(vis_only).instances) {
    CHECK(i.visual.has_value());
    if (i.task == Task::MED) CHECK(i.gold.mentions[0].span == "incident");
    if (i.task == Task::MRE) CHECK(i.text.find("encountered") != std::string::npos);
  }
}

TEST_CASE("detection and argument instances share their sentences") {
  Dataset ds = synth_corpus(small_spec(9));
  std::map<std::string, std::string> med_text, meae_text;  // split-index -> text
  for (const Instance& i : ds.instances) {
    const std::string key = i.split + "/" + i.id.substr(i.id.rfind('-') + 1);
    if (i.task == Task::MED) med_text[key] = i.text;
    if (i.task == Task::MEAE) meae_text[key] = i.text;
  }
  REQUIRE(!med_text.empty());
  CHECK(med_text == meae_text);
}

TEST_CASE("generator rejects bad specs") {
  CorpusSpec spec = small_spec();
  spec.d_v = 4;
  CHECK_THROWS_AS((void)synth_corpus(spec), std::runtime_error);
  spec = small_spec();
  spec.visual_fraction = 1.5;
  CHECK_THROWS_AS((void)synth_corpus(spec), std::runtime_error);
}

TEST_CASE("corpus spec JSON round trip") {
  CorpusSpec spec = small_spec(11);
  spec.domain = "news";
  spec.template_variant = 1;
  CorpusSpec back = CorpusSpec::from_json(spec.to_json());
  CHECK(back.seed == 11);
  CHECK(back.domain == "news");
  CHECK(back.template_variant == 1);
  CHECK(back.counts == spec.counts);
}

TEST_CASE("batch sampler honours domain ratios") {
  Dataset a = synth_corpus(small_spec(21));
  CorpusSpec bspec = small_spec(22);
  bspec.domain = "news";
  Dataset b = synth_corpus(bspec);
  std::vector<const Instance*> pool;
  for (const Instance& i : a.instances) pool.push_back(&i);
  for (const Instance& i : b.instances) pool.push_back(&i);

  SUBCASE("even split stays within 0.02 over 10k draws") {
    BatchSampler sampler(pool, {{"twitter", 0.5}, {"news", 0.5}}, 4, 99);
    int twitter = 0, total = 0;
    for (int d = 0; d < 10000; ++d) {
      for (const Instance* i : sampler.next_batch()) {
        if (i->domain == "twitter") ++twitter;
        ++total;
      }
    }
    const double frac = static_cast<double>(twitter) / total;
    CHECK(frac > 0.48);
    CHECK(frac < 0.52);
  }

  SUBCASE("degenerate ratio draws a single domain") {
    BatchSampler sampler(pool, {{"twitter", 1.0}, {"news", 0.0}}, 4, 99);
    for (int d = 0; d < 50; ++d) {
      for (const Instance* i : sampler.next_batch()) CHECK(i->domain == "twitter");
    }
  }

  SUBCASE("same seed gives the same stream") {
    BatchSampler s1(pool, {}, 4, 7);
    BatchSampler s2(pool, {}, 4, 7);
    for (int d = 0; d < 20; ++d) {
      auto b1 = s1.next_batch();
      auto b2 = s2.next_batch();
      REQUIRE(b1.size() == b2.size());
      for (std::size_t i = 0; i < b1.size(); ++i) CHECK(b1[i]->id == b2[i]->id);
    }
  }

  SUBCASE("validation errors") {
    CHECK_THROWS_AS(BatchSampler(pool, {{"twitter", 0.6}, {"news", 0.6}}, 4, 1),
                    std::runtime_error);
    CHECK_THROWS_AS(BatchSampler(pool, {{"twitter", 0.5}, {"mars", 0.5}}, 4, 1),
                    std::runtime_error);
    CHECK_THROWS_AS(BatchSampler(pool, {}, 0, 1), std::runtime_error);
  }
}
