#include "umie/data.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <stdexcept>

namespace umie {

namespace {

bool contains_normalized(const std::string& text, const std::string& needle) {
  return normalize_text(text).find(normalize_text(needle)) != std::string::npos;
}

bool is_object_token(const std::string& v) {
  if (v.rfind("O_", 0) != 0) return false;
  try {
    std::size_t pos = 0;
    int k = std::stoi(v.substr(2), &pos);
    return pos == v.size() - 2 && k >= 1 && k <= kNumObjectSlots;
  } catch (...) {
    return false;
  }
}

[[noreturn]] void invalid(const std::string& id, const std::string& what) {
  throw std::runtime_error("instance '" + id + "': " + what);
}

void validate_instance(const Instance& inst, const SchemaSet& schemas) {
  if (inst.id.empty()) throw std::runtime_error("instance with empty id");
  if (inst.split != "train" && inst.split != "dev" && inst.split != "test")
    invalid(inst.id, "bad split '" + inst.split + "'");
  const TaskSchema& schema = schemas.for_task(inst.task);
  switch (inst.task) {
    case Task::MNER:
    case Task::MED:
      for (const Mention& m : inst.gold.mentions) {
        if (!schema.has_label(m.type)) invalid(inst.id, "label '" + m.type + "' not in schema");
        if (!contains_normalized(inst.text, m.span))
          invalid(inst.id, "span '" + m.span + "' not present in text");
      }
      break;
    case Task::MRE: {
      if (!inst.gold.triple.relation.empty() && !schema.has_label(inst.gold.triple.relation))
        invalid(inst.id, "relation '" + inst.gold.triple.relation + "' not in schema");
      if (inst.head.empty() || inst.tail.empty())
        invalid(inst.id, "MRE instance needs head and tail mentions");
      if (!contains_normalized(inst.text, inst.head) || !contains_normalized(inst.text, inst.tail))
        invalid(inst.id, "head/tail mentions not present in text");
      break;
    }
    case Task::MEAE: {
      std::string ev;
      for (const Argument& a : inst.gold.arguments) {
        auto rit = schemas.meae.roles.find(a.event_type);
        if (rit == schemas.meae.roles.end())
          invalid(inst.id, "event type '" + a.event_type + "' not in schema");
        if (std::find(rit->second.begin(), rit->second.end(), a.role) == rit->second.end())
          invalid(inst.id, "role '" + a.role + "' not defined for event '" + a.event_type + "'");
        if (ev.empty()) ev = a.event_type;
        else if (ev != a.event_type) invalid(inst.id, "mixed event types in one instance");
        if (!is_object_token(a.value) && !contains_normalized(inst.text, a.value))
          invalid(inst.id, "argument value '" + a.value + "' is neither an object id nor in text");
      }
      break;
    }
  }
}

}  // namespace

std::vector<const Instance*> Dataset::split(const std::string& which) const {
  std::vector<const Instance*> out;
  for (const Instance& inst : instances) {
    if (inst.split == which) out.push_back(&inst);
  }
  return out;
}

std::map<std::string, std::map<std::string, int>> Dataset::counts() const {
  std::map<std::string, std::map<std::string, int>> out;
  for (const Instance& inst : instances) out[inst.split][task_name(inst.task)]++;
  return out;
}

nlohmann::ordered_json instance_to_json(const Instance& inst) {
  nlohmann::ordered_json j;
  j["id"] = inst.id;
  j["task"] = task_name(inst.task);
  j["text"] = inst.text;
  if (inst.visual) {
    j["visual"] = feature_record_json(*inst.visual);
  } else if (!inst.image_id.empty()) {
    j["image_id"] = inst.image_id;
  }
  switch (inst.task) {
    case Task::MNER:
    case Task::MED: {
      auto arr = nlohmann::json::array();
      for (const Mention& m : inst.gold.mentions)
        arr.push_back({{"type", m.type}, {"span", m.span}});
      j["gold"] = arr;
      break;
    }
    case Task::MRE:
      j["gold"] = {{"head", inst.gold.triple.head},
                   {"tail", inst.gold.triple.tail},
                   {"relation", inst.gold.triple.relation}};
      break;
    case Task::MEAE: {
      auto arr = nlohmann::json::array();
      for (const Argument& a : inst.gold.arguments)
        arr.push_back({{"event_type", a.event_type}, {"role", a.role}, {"value", a.value}});
      j["gold"] = arr;
      break;
    }
  }
  j["split"] = inst.split;
  j["domain"] = inst.domain;
  return j;
}

Instance instance_from_json(const nlohmann::json& j, const SchemaSet& schemas) {
  Instance inst;
  inst.id = j.at("id").get<std::string>();
  inst.task = task_from_name(j.at("task").get<std::string>());
  inst.text = j.at("text").get<std::string>();
  inst.split = j.value("split", "train");
  inst.domain = j.value("domain", "twitter");
  if (j.contains("visual")) {
    inst.visual = load_feature_record(j.at("visual"));
  } else if (j.contains("image_id")) {
    inst.image_id = j.at("image_id").get<std::string>();
  }
  inst.gold.task = inst.task;
  const auto& gold = j.at("gold");
  switch (inst.task) {
    case Task::MNER:
    case Task::MED:
      for (const auto& m : gold)
        inst.gold.mentions.push_back({m.at("type").get<std::string>(), m.at("span").get<std::string>()});
      break;
    case Task::MRE:
      inst.gold.triple = {gold.at("head").get<std::string>(), gold.at("relation").get<std::string>(),
                          gold.at("tail").get<std::string>()};
      inst.head = inst.gold.triple.head;
      inst.tail = inst.gold.triple.tail;
      break;
    case Task::MEAE:
      for (const auto& a : gold)
        inst.gold.arguments.push_back({a.at("event_type").get<std::string>(),
                                       a.at("role").get<std::string>(),
                                       a.at("value").get<std::string>()});
      break;
  }
  validate_instance(inst, schemas);
  return inst;
}

Dataset load_dataset(const std::string& path, const SchemaSet& schemas) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset " + path);
  Dataset ds;
  ds.name = path;
  std::set<std::string> ids;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": bad JSON: " + e.what());
    }
    Instance inst = instance_from_json(j, schemas);
    if (!ids.insert(inst.id).second)
      throw std::runtime_error(path + ": duplicate instance id '" + inst.id + "'");
    ds.instances.push_back(std::move(inst));
  }
  return ds;
}

void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write dataset " + path);
  for (const Instance& inst : ds.instances) out << instance_to_json(inst).dump() << "\n";
}

int dedupe(Dataset& train, const Dataset& test) {
  std::set<std::pair<std::string, std::string>> keys;
  for (const Instance& t : test.instances) {
    keys.emplace(task_name(t.task), normalize_text(t.text));
  }
  const std::size_t before = train.instances.size();
  std::erase_if(train.instances, [&](const Instance& inst) {
    return keys.count({task_name(inst.task), normalize_text(inst.text)}) > 0;
  });
  return static_cast<int>(before - train.instances.size());
}

// ---------------------------------------------------------------------------
// synthetic corpus
// ---------------------------------------------------------------------------

namespace {

const std::vector<std::string> kPersonWords = {"alice", "bob", "carol", "david", "emma", "frank"};
const std::vector<std::string> kLocationWords = {"paris", "london", "tokyo", "berlin", "cairo"};
const std::vector<std::string> kOrgWords = {"acme", "globex", "initech", "umbrella"};
const std::vector<std::string> kMiscWords = {"zephyr", "quartz", "nebula", "prism"};
// usable under any entity type, so text alone carries no label signal
const std::vector<std::string> kNeutralWords = {"terra", "vega", "orion", "lyra", "nova", "atlas"};

const std::vector<std::string>& mner_pool(const std::string& label) {
  if (label == "person") return kPersonWords;
  if (label == "location") return kLocationWords;
  if (label == "organization") return kOrgWords;
  return kMiscWords;
}

const std::vector<std::vector<std::string>> kMnerTemplates = {
    {"{w} appeared in the report today", "witnesses saw {w} near the station",
     "the article mentions {w} twice"},
    {"sources say {w} was seen yesterday", "a new post about {w} is trending",
     "{w} came up during the broadcast"},
};

const std::vector<std::vector<std::string>> kMreTemplates = {
    {"{head} {kw} {tail} according to the report", "officials confirmed {head} {kw} {tail}"},
    {"analysts noted {head} {kw} {tail} this week", "it emerged that {head} {kw} {tail}"},
};

const std::vector<std::vector<std::string>> kEventTemplates = {
    {"reports describe the {trigger} where {value} served as {rolew}",
     "local media covered the {trigger} where {value} served as {rolew}"},
    {"a bulletin detailed the {trigger} where {value} served as {rolew}",
     "the wire reported the {trigger} where {value} served as {rolew}"},
};
// variant with the argument only visible in the image (value is O_1)
const std::vector<std::vector<std::string>> kEventObjTemplates = {
    {"reports describe the {trigger} involving the pictured {rolew}"},
    {"a bulletin detailed the {trigger} involving the pictured {rolew}"},
};

const std::map<std::string, std::string> kRelationKeyword = {
    {"part of", "belongs to"}, {"member of", "joined"}, {"peer", "rivals"}};
const std::map<std::string, std::string> kTriggerKeyword = {
    {"attack", "airstrike"}, {"meet", "summit"}, {"transport", "convoy"}, {"die", "casualties"}};

std::string fill(std::string tmpl, const std::string& key, const std::string& value) {
  std::size_t pos;
  while ((pos = tmpl.find(key)) != std::string::npos) tmpl.replace(pos, key.size(), value);
  return tmpl;
}

const std::string& pick(const std::vector<std::string>& pool, Rng& rng) {
  return pool[rng.uniform_int(static_cast<int>(pool.size()))];
}

std::string pick_template(const std::vector<std::vector<std::string>>& sets, int variant,
                          Rng& rng) {
  const auto& set = sets[static_cast<std::size_t>(variant) % sets.size()];
  return set[rng.uniform_int(static_cast<int>(set.size()))];
}

std::array<double, 4> random_bbox(Rng& rng) {
  double x1 = 0.5 * rng.uniform();
  double y1 = 0.5 * rng.uniform();
  double x2 = std::min(1.0, x1 + 0.1 + 0.4 * rng.uniform());
  double y2 = std::min(1.0, y1 + 0.1 + 0.4 * rng.uniform());
  return {x1, y1, x2, y2};
}

VisualFeatureSet::Slot noise_object(int d_v, Rng& rng) {
  VisualFeatureSet::Slot s;
  s.feature.resize(d_v);
  for (double& v : s.feature) v = rng.normal();
  s.bbox = random_bbox(rng);
  s.present = true;
  return s;
}

// signal_dim < 0 means no signal object (plain noise image)
VisualFeatureSet make_visual(const std::string& image_id, int d_v, int signal_dim, Rng& rng) {
  VisualFeatureSet fs;
  fs.image_id = image_id;
  fs.d_v = d_v;
  fs.slots[0].feature.resize(d_v);
  for (double& v : fs.slots[0].feature) v = rng.normal();
  fs.slots[0].bbox = {0.0, 0.0, 1.0, 1.0};
  fs.slots[0].present = true;
  int slot = 1;
  if (signal_dim >= 0) {
    VisualFeatureSet::Slot s = noise_object(d_v, rng);
    s.feature[signal_dim] += 4.0;  // cluster mean separation
    fs.slots[slot++] = s;
  }
  const int extra = rng.uniform_int(2);  // 0 or 1 noise objects
  for (int i = 0; i < extra && slot < VisualFeatureSet::kSlots; ++i) {
    fs.slots[slot++] = noise_object(d_v, rng);
  }
  for (int i = slot; i < VisualFeatureSet::kSlots; ++i) fs.slots[i].feature.assign(d_v, 0.0);
  return fs;
}

// One event sentence feeds a detection instance and an argument instance with
// the same text, so the model can only separate the two output shapes by
// reading the instruction -- which is what the argument cascade relies on.
struct EventSentence {
  int ei = 0;  // event index into the synth event list
  int ri = 0;  // role index into that event's role list
  bool object_valued = false;
  bool visual_event = false;  // event type only visible in the image
  bool visual_role = false;   // argument role only visible in the image
  std::string text, trigger, role, value;
  VisualFeatureSet visual;
};

EventSentence make_event_sentence(const CorpusSpec& spec, const SchemaSet& schemas, Rng& rng,
                                  const std::vector<std::string>& events) {
  EventSentence es;
  es.ei = rng.uniform_int(static_cast<int>(events.size()));
  const std::string& event = events[es.ei];
  const auto& roles = schemas.meae.roles.at(event);
  es.ri = rng.uniform_int(static_cast<int>(roles.size()));
  es.role = roles[es.ri];
  es.visual_event = rng.uniform() < spec.visual_fraction;
  es.visual_role = rng.uniform() < spec.visual_fraction;
  es.object_valued = rng.uniform() < 0.25;
  es.trigger = es.visual_event ? "incident" : kTriggerKeyword.at(event);
  const std::string rolew = es.visual_role ? "figure" : es.role;
  std::string t;
  if (es.object_valued) {
    t = pick_template(kEventObjTemplates, spec.template_variant, rng);
    es.value = "O_1";
  } else {
    t = pick_template(kEventTemplates, spec.template_variant, rng);
    es.value = pick(kPersonWords, rng);
    t = fill(t, "{value}", es.value);
  }
  t = fill(t, "{trigger}", es.trigger);
  t = fill(t, "{rolew}", rolew);
  es.text = t;
  // event clusters live in dims 0..3, role clusters in dims 4..7
  VisualFeatureSet fs = make_visual("", spec.d_v, -1, rng);
  if ((es.visual_event || es.visual_role || es.object_valued) && !fs.slots[1].present) {
    fs.slots[1] = noise_object(spec.d_v, rng);
  }
  if (es.visual_event) fs.slots[1].feature[es.ei] += 4.0;
  if (es.visual_role) fs.slots[1].feature[4 + es.ri] += 4.0;
  es.visual = std::move(fs);
  return es;
}

const std::vector<std::string> kSynthMner = {"person", "location", "miscellaneous", "organization"};
const std::vector<std::string> kSynthMre = {"part of", "member of", "peer"};
const std::vector<std::string> kSynthMed = {"attack", "meet", "transport", "die"};

}  // namespace

const std::vector<std::string>& synth_labels(Task task) {
  switch (task) {
    case Task::MNER: return kSynthMner;
    case Task::MRE: return kSynthMre;
    case Task::MED: return kSynthMed;
    case Task::MEAE: return kSynthMed;  // MEAE instances are keyed by event type
  }
  throw std::runtime_error("synth_labels: bad task");
}

CorpusSpec CorpusSpec::from_json(const nlohmann::json& j) {
  CorpusSpec s;
  s.seed = j.value("seed", s.seed);
  s.d_v = j.value("d_v", s.d_v);
  s.visual_fraction = j.value("visual_fraction", s.visual_fraction);
  s.domain = j.value("domain", s.domain);
  s.template_variant = j.value("template_variant", s.template_variant);
  if (j.contains("counts")) {
    for (const auto& [task_key, c] : j.at("counts").items()) {
      Task t = task_from_name(task_key);
      s.counts[t] = {c.value("train", 0), c.value("dev", 0), c.value("test", 0)};
    }
  }
  return s;
}

nlohmann::ordered_json CorpusSpec::to_json() const {
  nlohmann::ordered_json j;
  j["seed"] = seed;
  j["d_v"] = d_v;
  j["visual_fraction"] = visual_fraction;
  j["domain"] = domain;
  j["template_variant"] = template_variant;
  nlohmann::ordered_json c;
  for (const auto& [t, arr] : counts) {
    c[task_name(t)] = {{"train", arr[0]}, {"dev", arr[1]}, {"test", arr[2]}};
  }
  j["counts"] = c;
  return j;
}

Dataset synth_corpus(const CorpusSpec& spec) {
  if (spec.d_v < 8)
    throw std::runtime_error("synth_corpus: d_v must be >= 8 for the label clusters");
  if (spec.visual_fraction < 0.0 || spec.visual_fraction > 1.0)
    throw std::runtime_error("synth_corpus: visual_fraction must be in [0,1]");
  const SchemaSet schemas = SchemaSet::defaults();
  Rng rng(spec.seed);
  Dataset ds;
  ds.name = spec.domain;

  const std::vector<std::pair<Task, const char*>> order = {
      {Task::MNER, "mner"}, {Task::MRE, "mre"}, {Task::MED, "med"}, {Task::MEAE, "meae"}};
  const std::vector<std::string> splits = {"train", "dev", "test"};

  // detection and argument instances are drawn pairwise from shared sentences
  std::array<std::vector<EventSentence>, 3> event_sentences;
  for (int si = 0; si < 3; ++si) {
    int need = 0;
    for (Task t : {Task::MED, Task::MEAE}) {
      auto it = spec.counts.find(t);
      if (it != spec.counts.end()) need = std::max(need, it->second[si]);
    }
    for (int k = 0; k < need; ++k) {
      event_sentences[si].push_back(make_event_sentence(spec, schemas, rng, kSynthMed));
    }
  }

  for (const auto& [task, tname] : order) {
    auto cit = spec.counts.find(task);
    if (cit == spec.counts.end()) continue;
    for (int si = 0; si < 3; ++si) {
      for (int k = 0; k < cit->second[si]; ++k) {
        Instance inst;
        inst.task = task;
        inst.split = splits[si];
        inst.domain = spec.domain;
        inst.id = spec.domain + "-" + tname + "-" + splits[si] + "-" + std::to_string(k);
        inst.gold.task = task;
        const bool visual_det = rng.uniform() < spec.visual_fraction;

        switch (task) {
          case Task::MNER: {
            const int li = rng.uniform_int(static_cast<int>(kSynthMner.size()));
            const std::string& label = kSynthMner[li];
            const std::string w = visual_det ? pick(kNeutralWords, rng) : pick(mner_pool(label), rng);
            inst.text = fill(pick_template(kMnerTemplates, spec.template_variant, rng), "{w}", w);
            inst.gold.mentions.push_back({label, w});
            inst.visual = make_visual(inst.id, spec.d_v, visual_det ? li : -1, rng);
            break;
          }
          case Task::MRE: {
            const int li = rng.uniform_int(static_cast<int>(kSynthMre.size()));
            const std::string& rel = kSynthMre[li];
            const std::string head = pick(kPersonWords, rng);
            const std::string tail = pick(kOrgWords, rng);
            const std::string kw = visual_det ? "encountered" : kRelationKeyword.at(rel);
            std::string t = pick_template(kMreTemplates, spec.template_variant, rng);
            t = fill(t, "{head}", head);
            t = fill(t, "{kw}", kw);
            t = fill(t, "{tail}", tail);
            inst.text = t;
            inst.gold.triple = {head, rel, tail};
            inst.head = head;
            inst.tail = tail;
            inst.visual = make_visual(inst.id, spec.d_v, visual_det ? li : -1, rng);
            break;
          }
          case Task::MED: {
            const EventSentence& es = event_sentences[si][static_cast<std::size_t>(k)];
            inst.text = es.text;
            inst.gold.mentions.push_back({kSynthMed[es.ei], es.trigger});
            inst.visual = es.visual;
            inst.visual->image_id = inst.id;
            break;
          }
          case Task::MEAE: {
            const EventSentence& es = event_sentences[si][static_cast<std::size_t>(k)];
            inst.text = es.text;
            inst.gold.arguments.push_back({kSynthMed[es.ei], es.role, es.value});
            inst.visual = es.visual;
            inst.visual->image_id = inst.id;
            break;
          }
        }
        validate_instance(inst, schemas);
        ds.instances.push_back(std::move(inst));
      }
    }
  }
  return ds;
}

BatchSampler::BatchSampler(std::vector<const Instance*> instances,
                           const std::map<std::string, double>& ratios, int batch_size,
                           uint64_t seed)
    : batch_size_(batch_size), rng_(seed) {
  if (batch_size <= 0) throw std::runtime_error("BatchSampler: batch_size must be positive");
  std::map<std::string, double> eff = ratios;
  if (eff.empty()) {
    for (const Instance* i : instances) eff[i->domain] = 0;
    for (auto& [d, r] : eff) r = 1.0 / static_cast<double>(eff.size());
  }
  double sum = 0.0;
  for (const auto& [d, r] : eff) {
    if (r < 0.0) throw std::runtime_error("BatchSampler: negative ratio for domain '" + d + "'");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::runtime_error("BatchSampler: ratios sum to " + std::to_string(sum) + ", expected 1");
  std::map<std::string, std::vector<const Instance*>> by_domain;
  for (const Instance* i : instances) by_domain[i->domain].push_back(i);
  for (const auto& [domain, ratio] : eff) {
    if (ratio == 0.0) continue;
    auto it = by_domain.find(domain);
    if (it == by_domain.end() || it->second.empty())
      throw std::runtime_error("BatchSampler: ratio " + std::to_string(ratio) +
                               " for empty domain group '" + domain + "'");
    Group g;
    g.domain = domain;
    g.ratio = ratio;
    g.instances = it->second;
    rng_.shuffle(g.instances);
    groups_.push_back(std::move(g));
    total_ += it->second.size();
  }
  if (groups_.empty()) throw std::runtime_error("BatchSampler: no instances");
}

std::vector<const Instance*> BatchSampler::next_batch() {
  const double u = rng_.uniform();
  double acc = 0.0;
  Group* chosen = &groups_.back();
  for (Group& g : groups_) {
    acc += g.ratio;
    if (u < acc) {
      chosen = &g;
      break;
    }
  }
  std::vector<const Instance*> batch;
  for (int i = 0; i < batch_size_; ++i) {
    if (chosen->cursor >= chosen->instances.size()) {
      rng_.shuffle(chosen->instances);
      chosen->cursor = 0;
    }
    batch.push_back(chosen->instances[chosen->cursor++]);
  }
  return batch;
}

}  // namespace umie
