#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "umie/codec.hpp"
#include "umie/tensor.hpp"

using namespace umie;

TEST_CASE("tokenizer: words, punctuation, special tokens, object ids") {
  CHECK(tokenize("Person, kids <spot> Organization, Salvation Army") ==
        std::vector<std::string>{"Person", ",", "kids", "<spot>", "Organization", ",",
                                 "Salvation", "Army"});
  CHECK(tokenize("Target, O_1") == std::vector<std::string>{"Target", ",", "O_1"});
  CHECK(tokenize("a<spot>b") == std::vector<std::string>{"a", "<spot>", "b"});
  CHECK(tokenize("don't stop!") == std::vector<std::string>{"don", "'", "t", "stop", "!"});
  CHECK(tokenize("  lots   of\tspace ") == std::vector<std::string>{"lots", "of", "space"});
  // '<' that is not a special token falls back to a single punctuation char
  CHECK(tokenize("<x>") == std::vector<std::string>{"<", "x", ">"});
}

TEST_CASE("detokenize inverts with punctuation attachment") {
  CHECK(detokenize({"Attack", ",", "airstrike"}) == "Attack, airstrike");
  CHECK(detokenize({"a", "<spot>", "b", "."}) == "a <spot> b.");
  CHECK(detokenize({}) == "");
}

TEST_CASE("vocab: fixed special slots, frequency order, unknowns") {
  Vocab v = Vocab::build({"b b b a a c", "a"}, 1);
  CHECK(v.token(kPadId) == "<pad>");
  CHECK(v.token(kBosId) == "<s>");
  CHECK(v.token(kEosId) == "</s>");
  CHECK(v.token(kUnkId) == "<unk>");
  CHECK(v.token(kSpotId) == "<spot>");
  CHECK(v.token(kFirstObjectId) == "O_1");
  CHECK(v.token(kFirstObjectId + 35) == "O_36");
  // counts: b=3, a=3, c=1 -> ties break alphabetically
  CHECK(v.token(kNumSpecials) == "a");
  CHECK(v.token(kNumSpecials + 1) == "b");
  CHECK(v.token(kNumSpecials + 2) == "c");
  CHECK(v.id("zzz") == kUnkId);

  Vocab v2 = Vocab::build({"b b b a a c"}, 2);  // min_count drops c
  CHECK(v2.size() == kNumSpecials + 2);

  CHECK(v.decode(v.encode("b a c")) == "b a c");
  CHECK_THROWS_AS((void)v.token(-1), std::runtime_error);
}

TEST_CASE("from_tokens rejects misplaced specials and duplicates") {
  std::vector<std::string> toks = {"<pad>", "<s>", "</s>", "<unk>", "<spot>"};
  for (int i = 1; i <= 36; ++i) toks.push_back("O_" + std::to_string(i));
  toks.push_back("word");
  CHECK(Vocab::from_tokens(toks).size() == kNumSpecials + 1);

  auto bad = toks;
  std::swap(bad[0], bad[1]);
  CHECK_THROWS_AS((void)Vocab::from_tokens(bad), std::runtime_error);
  auto dup = toks;
  dup.push_back("word");
  CHECK_THROWS_AS((void)Vocab::from_tokens(dup), std::runtime_error);
}

TEST_CASE("schema defaults hold the reference label sets") {
  SchemaSet s = SchemaSet::defaults();
  CHECK(s.mner.labels == std::vector<std::string>{"person", "location", "miscellaneous",
                                                  "organization"});
  CHECK(s.mre.labels.size() == 21);
  CHECK(s.mre.has_label("member of"));
  CHECK(s.mre.has_label("none"));
  CHECK(s.mre.has_label("lace of residence"));  // verbatim from the reference list
  CHECK(s.med.labels.size() == 8);
  CHECK(s.meae.roles.at("attack") ==
        std::vector<std::string>{"attacker", "target", "instrument", "place"});
  CHECK(s.meae.roles.at("phone write") == std::vector<std::string>{"participant"});
  // meae.labels is the ordered union of all roles
  CHECK(s.meae.has_label("victim"));
  CHECK(s.mner.has_label("PERSON"));  // label matching is case-insensitive
  CHECK_FALSE(s.mner.has_label("city"));
}

TEST_CASE("instruction rendering matches the reference templates") {
  SchemaSet s = SchemaSet::defaults();
  InstructionRegistry reg = InstructionRegistry::defaults();

  CHECK(reg.render(Task::MNER, "default", s.mner) ==
        "Please extract the following entity type: person, location, miscellaneous, "
        "organization.");

  InstructionContext mre_ctx;
  mre_ctx.head = "Star Fox";
  mre_ctx.tail = "Starlink";
  const std::string mre = reg.render(Task::MRE, "default", s.mre, mre_ctx);
  CHECK(mre.rfind("Please extract the following relation between Star Fox and Starlink: part of,",
                  0) == 0);
  CHECK_THROWS_AS((void)reg.render(Task::MRE, "default", s.mre, {}), std::runtime_error);

  CHECK(reg.render(Task::MED, "default", s.med) ==
        "Please extract the following event type: arrest jail, meet, attack, transport, "
        "demonstrate, phone write, die, transfer.");

  InstructionContext meae_ctx;
  meae_ctx.event_type = "arrest jail";
  CHECK(reg.render(Task::MEAE, "default", s.meae, meae_ctx) ==
        "Given an arrest jail event, please extract the corresponding argument type: person, "
        "place, agent.");
  InstructionContext bad_ctx;
  bad_ctx.event_type = "party";
  CHECK_THROWS_AS((void)reg.render(Task::MEAE, "default", s.meae, bad_ctx), std::runtime_error);

  CHECK(reg.render(Task::MNER, "I0", s.mner) ==
        "Given the entity types: person, location, miscellaneous, organization. Please extract "
        "the specified entity type.");
  CHECK(reg.render(Task::MNER, "I1", s.mner) ==
        "Identity the following entity type from the given sentence: person, location, "
        "miscellaneous, organization.");
  CHECK(reg.render(Task::MNER, "I2", s.mner) ==
        "Please extract entity type in the sentence. Option: person, location, miscellaneous, "
        "organization.");
  CHECK_THROWS_AS((void)reg.render(Task::MNER, "I9", s.mner), std::runtime_error);
  CHECK(reg.variants(Task::MNER).size() == 4);
}

TEST_CASE("output serialization follows the record grammar") {
  ExtractionResult r;
  r.task = Task::MNER;
  r.mentions = {{"person", "kids"}, {"organization", "Salvation Army"}};
  CHECK(serialize_output(r) == "Person, kids <spot> Organization, Salvation Army");

  ExtractionResult mre;
  mre.task = Task::MRE;
  mre.triple = {"Star Fox", "member of", "Starlink"};
  CHECK(serialize_output(mre) == "Star Fox, member of, Starlink");

  ExtractionResult med;
  med.task = Task::MED;
  med.mentions = {{"attack", "airstrike"}};
  CHECK(serialize_output(med) == "Attack, airstrike");

  ExtractionResult meae;
  meae.task = Task::MEAE;
  meae.arguments = {{"attack", "attacker", "coalition"}, {"attack", "target", "O_1"}};
  CHECK(serialize_output(meae) == "Attacker, coalition <spot> Target, O_1");

  ExtractionResult empty;
  empty.task = Task::MNER;
  CHECK(serialize_output(empty) == "none");
}

TEST_CASE("parse is total and inverts serialize") {
  SchemaSet s = SchemaSet::defaults();

  ParseOutcome p = parse_output("Person, kids <spot> Organization, Salvation Army", s.mner);
  CHECK(p.malformed == 0);
  CHECK(p.result.mentions ==
        std::vector<Mention>{{"person", "kids"}, {"organization", "Salvation Army"}});

  ParseOutcome t = parse_output("Star Fox, member of, Starlink", s.mre);
  CHECK(t.result.triple == Triple{"Star Fox", "member of", "Starlink"});

  // heads containing ", " still resolve via the first label-matching middle field
  ParseOutcome t2 = parse_output("Smith, John, peer, Acme Corp", s.mre);
  CHECK(t2.result.triple == Triple{"Smith, John", "peer", "Acme Corp"});

  ParseOutcome a = parse_output("Attacker, coalition <spot> Target, O_1", s.meae, "attack");
  CHECK(a.result.arguments == std::vector<Argument>{{"attack", "attacker", "coalition"},
                                                    {"attack", "target", "O_1"}});

  CHECK(parse_output("none", s.mner).result.empty());
  CHECK(parse_output("  NONE ", s.mre).result.empty());
  CHECK(parse_output("", s.med).result.empty());
}

TEST_CASE("malformed records are counted, never thrown") {
  SchemaSet s = SchemaSet::defaults();
  ParseOutcome p = parse_output("garbage <spot> Person, kids <spot> City, Rome", s.mner);
  CHECK(p.malformed == 2);  // missing separator; unknown label
  CHECK(p.result.mentions == std::vector<Mention>{{"person", "kids"}});

  ParseOutcome t = parse_output("a, not a relation, b", s.mre);
  CHECK(t.malformed == 1);
  CHECK(t.result.triple.relation.empty());

  // role outside the context event's schema is malformed for that context
  ParseOutcome a = parse_output("Giver, bob", s.meae, "attack");
  CHECK(a.malformed == 1);
  CHECK(a.result.arguments.empty());
}

TEST_CASE("parse(serialize(r)) == r over random valid results") {
  SchemaSet s = SchemaSet::defaults();
  Rng rng(202);
  auto word = [&] {
    static const std::vector<std::string> pool = {"alpha", "bravo", "Charlie", "delta_1", "echo"};
    return pool[rng.uniform_int(static_cast<int>(pool.size()))];
  };
  int checked = 0;
  for (int it = 0; it < 400; ++it) {
    ExtractionResult r;
    const int which = it % 4;
    if (which == 0) {
      r.task = Task::MNER;
      const int n = rng.uniform_int(3);
      for (int i = 0; i < n; ++i)
        r.mentions.push_back({s.mner.labels[rng.uniform_int(4)], word()});
    } else if (which == 1) {
      r.task = Task::MRE;
      r.triple = {word(), s.mre.labels[rng.uniform_int(21)], word()};
      if (r.triple.relation == "none") r.triple = {};
    } else if (which == 2) {
      r.task = Task::MED;
      const int n = rng.uniform_int(3);
      for (int i = 0; i < n; ++i)
        r.mentions.push_back({s.med.labels[rng.uniform_int(8)], word()});
    } else {
      r.task = Task::MEAE;
      const std::string ev = s.med.labels[rng.uniform_int(8)];
      const auto& roles = s.meae.roles.at(ev);
      const int n = 1 + rng.uniform_int(2);
      for (int i = 0; i < n; ++i)
        r.arguments.push_back({ev, roles[rng.uniform_int(static_cast<int>(roles.size()))],
                               rng.uniform() < 0.3 ? "O_" + std::to_string(1 + rng.uniform_int(36))
                                                   : word()});
    }
    const std::string ctx = r.task == Task::MEAE ? r.arguments.front().event_type : "";
    ParseOutcome back = parse_output(serialize_output(r), s.for_task(r.task), ctx);
    CHECK(back.malformed == 0);
    CHECK(back.result == r);
    ++checked;
  }
  CHECK(checked == 400);
}

TEST_CASE("assemble_input concatenates and truncates") {
  Vocab v = Vocab::build({"find the entity : hello world"}, 1);
  AssembledInput in = assemble_input("find the entity :", "hello world", v, 64);
  CHECK_FALSE(in.truncated);
  // detokenization reattaches punctuation to the preceding token
  CHECK(v.decode(in.ids) == "find the entity: hello world");
  AssembledInput cut = assemble_input("find the entity :", "hello world", v, 3);
  CHECK(cut.truncated);
  CHECK(cut.ids.size() == 3);
}

TEST_CASE("normalize_text lowercases and collapses whitespace") {
  CHECK(normalize_text("  Salvation \t Army\n") == "salvation army");
  CHECK(normalize_text("ABC") == "abc");
  CHECK(normalize_text("") == "");
}
