#include "umie/codec.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace umie {

namespace {

const std::vector<std::string>& special_tokens() {
  static const std::vector<std::string> s = [] {
    std::vector<std::string> v = {"<pad>", "<s>", "</s>", "<unk>", "<spot>"};
    for (int i = 1; i <= kNumObjectSlots; ++i) v.push_back("O_" + std::to_string(i));
    return v;
  }();
  return s;
}

bool is_word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::string title_case(const std::string& s) {
  std::string out = s;
  if (!out.empty()) out[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[0])));
  return out;
}

std::string join(const std::vector<std::string>& parts, const std::string& sep,
                 std::size_t from = 0, std::size_t to = std::string::npos) {
  std::string out;
  const std::size_t end = std::min(to, parts.size());
  for (std::size_t i = from; i < end; ++i) {
    if (i > from) out += sep;
    out += parts[i];
  }
  return out;
}

std::vector<std::string> split(const std::string& s, const std::string& sep) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    std::size_t next = s.find(sep, pos);
    if (next == std::string::npos) {
      out.push_back(s.substr(pos));
      break;
    }
    out.push_back(s.substr(pos, next - pos));
    pos = next + sep.size();
  }
  return out;
}

// finds the schema's canonical label matching a candidate, or empty
std::string match_label(const std::string& candidate, const std::vector<std::string>& labels) {
  const std::string norm = normalize_text(candidate);
  for (const std::string& l : labels) {
    if (normalize_text(l) == norm) return l;
  }
  return "";
}

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
  return s;
}

}  // namespace

std::string task_name(Task t) {
  switch (t) {
    case Task::MNER: return "mner";
    case Task::MRE: return "mre";
    case Task::MED: return "med";
    case Task::MEAE: return "meae";
  }
  throw std::runtime_error("task_name: bad task");
}

Task task_from_name(const std::string& s) {
  const std::string n = normalize_text(s);
  if (n == "mner") return Task::MNER;
  if (n == "mre") return Task::MRE;
  if (n == "med") return Task::MED;
  if (n == "meae") return Task::MEAE;
  throw std::runtime_error("unknown task '" + s + "'");
}

std::string normalize_text(const std::string& s) {
  std::string out;
  bool in_space = true;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!in_space) out += ' ';
      in_space = true;
    } else {
      out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      in_space = false;
    }
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    if (std::isspace(static_cast<unsigned char>(text[i]))) {
      ++i;
      continue;
    }
    bool matched = false;
    if (text[i] == '<') {
      for (const std::string& sp : special_tokens()) {
        if (sp[0] == '<' && text.compare(i, sp.size(), sp) == 0) {
          out.push_back(sp);
          i += sp.size();
          matched = true;
          break;
        }
      }
    }
    if (matched) continue;
    if (is_word_char(text[i])) {
      std::size_t j = i;
      while (j < n && is_word_char(text[j])) ++j;
      out.push_back(text.substr(i, j - i));
      i = j;
    } else {
      out.push_back(text.substr(i, 1));
      ++i;
    }
  }
  return out;
}

std::string detokenize(const std::vector<std::string>& tokens) {
  static const std::string no_space_before = ",.!?:;";
  std::string out;
  for (const std::string& t : tokens) {
    if (!out.empty() &&
        !(t.size() == 1 && no_space_before.find(t[0]) != std::string::npos)) {
      out += ' ';
    }
    out += t;
  }
  return out;
}

int Vocab::id(const std::string& token) const {
  auto it = token_to_id.find(token);
  return it == token_to_id.end() ? kUnkId : it->second;
}

const std::string& Vocab::token(int id_) const {
  if (id_ < 0 || id_ >= size())
    throw std::runtime_error("Vocab: id " + std::to_string(id_) + " out of range");
  return id_to_token[id_];
}

std::vector<int> Vocab::encode(const std::string& text) const {
  std::vector<int> ids;
  for (const std::string& t : tokenize(text)) ids.push_back(id(t));
  return ids;
}

std::string Vocab::decode(const std::vector<int>& ids) const {
  std::vector<std::string> toks;
  for (int i : ids) {
    if (i == kPadId || i == kBosId || i == kEosId) continue;
    toks.push_back(token(i));
  }
  return detokenize(toks);
}

Vocab Vocab::build(const std::vector<std::string>& corpus, int min_count) {
  if (corpus.empty()) throw std::runtime_error("Vocab::build: empty corpus");
  std::map<std::string, long> counts;
  for (const std::string& text : corpus) {
    for (const std::string& t : tokenize(text)) counts[t]++;
  }
  std::vector<std::string> tokens = special_tokens();
  std::vector<std::pair<long, std::string>> ranked;
  for (const auto& [tok, cnt] : counts) {
    if (cnt < min_count) continue;
    if (std::find(tokens.begin(), tokens.end(), tok) != tokens.end()) continue;
    ranked.emplace_back(-cnt, tok);  // count desc, token asc
  }
  std::sort(ranked.begin(), ranked.end());
  for (const auto& [negcnt, tok] : ranked) tokens.push_back(tok);
  return from_tokens(std::move(tokens));
}

Vocab Vocab::from_tokens(std::vector<std::string> id_to_token) {
  Vocab v;
  v.id_to_token = std::move(id_to_token);
  for (int i = 0; i < v.size(); ++i) {
    if (!v.token_to_id.emplace(v.id_to_token[i], i).second) {
      throw std::runtime_error("Vocab: duplicate token '" + v.id_to_token[i] + "'");
    }
  }
  const auto& sp = special_tokens();
  if (v.size() < static_cast<int>(sp.size())) throw std::runtime_error("Vocab: specials missing");
  for (std::size_t i = 0; i < sp.size(); ++i) {
    if (v.id_to_token[i] != sp[i])
      throw std::runtime_error("Vocab: special token slot " + std::to_string(i) +
                               " holds '" + v.id_to_token[i] + "', expected '" + sp[i] + "'");
  }
  return v;
}

bool TaskSchema::has_label(const std::string& label) const {
  return !match_label(label, labels).empty();
}

const TaskSchema& SchemaSet::for_task(Task t) const {
  switch (t) {
    case Task::MNER: return mner;
    case Task::MRE: return mre;
    case Task::MED: return med;
    case Task::MEAE: return meae;
  }
  throw std::runtime_error("SchemaSet::for_task: bad task");
}

SchemaSet SchemaSet::defaults() {
  SchemaSet s;
  s.mner.task = Task::MNER;
  s.mner.labels = {"person", "location", "miscellaneous", "organization"};

  s.mre.task = Task::MRE;
  s.mre.labels = {"part of",        "contain",   "present in",        "none",
                  "held on",        "member of", "peer",              "lace of residence",
                  "locate at",      "alternate names", "neighbor",    "subsidiary",
                  "awarded",        "couple",    "parent",            "nationality",
                  "place of birth", "charges",   "siblings",          "religion",
                  "race"};

  s.med.task = Task::MED;
  s.med.labels = {"arrest jail", "meet",        "attack", "transport",
                  "demonstrate", "phone write", "die",    "transfer"};

  s.meae.task = Task::MEAE;
  s.meae.roles = {
      {"arrest jail", {"person", "place", "agent"}},
      {"meet", {"participant", "place"}},
      {"attack", {"attacker", "target", "instrument", "place"}},
      {"transport", {"agent", "artifact", "origin", "destination"}},
      {"demonstrate", {"demonstrator", "place"}},
      {"phone write", {"participant"}},
      {"die", {"victim", "agent", "instrument", "place"}},
      {"transfer", {"giver", "recipient", "thing"}},
  };
  for (const std::string& t : s.med.labels) {
    for (const std::string& r : s.meae.roles.at(t)) {
      if (std::find(s.meae.labels.begin(), s.meae.labels.end(), r) == s.meae.labels.end()) {
        s.meae.labels.push_back(r);
      }
    }
  }
  return s;
}

bool ExtractionResult::empty() const {
  switch (task) {
    case Task::MNER:
    case Task::MED: return mentions.empty();
    case Task::MRE: return triple.relation.empty();
    case Task::MEAE: return arguments.empty();
  }
  return true;
}

InstructionRegistry InstructionRegistry::defaults() {
  InstructionRegistry r;
  r.register_template(Task::MNER, "default",
                      "Please extract the following entity type: {labels}.");
  r.register_template(Task::MRE, "default",
                      "Please extract the following relation between {head} and {tail}: {labels}.");
  r.register_template(Task::MED, "default",
                      "Please extract the following event type: {labels}.");
  r.register_template(Task::MEAE, "default",
                      "Given an {type} event, please extract the corresponding argument type: {roles}.");
  // MNER paraphrase variants for the robustness runs
  r.register_template(Task::MNER, "I0",
                      "Given the entity types: {labels}. Please extract the specified entity type.");
  r.register_template(Task::MNER, "I1",
                      "Identity the following entity type from the given sentence: {labels}.");
  r.register_template(Task::MNER, "I2",
                      "Please extract entity type in the sentence. Option: {labels}.");
  return r;
}

void InstructionRegistry::register_template(Task task, const std::string& variant,
                                            const std::string& tmpl) {
  templates_[{task, variant}] = tmpl;
}

void InstructionRegistry::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("instruction registry: cannot open " + path);
  nlohmann::json j;
  in >> j;
  for (auto& [task_key, variants] : j.items()) {
    Task t = task_from_name(task_key);
    for (auto& [variant, tmpl] : variants.items()) {
      register_template(t, variant, tmpl.get<std::string>());
    }
  }
}

bool InstructionRegistry::has(Task task, const std::string& variant) const {
  return templates_.count({task, variant}) > 0;
}

std::vector<std::string> InstructionRegistry::variants(Task task) const {
  std::vector<std::string> out;
  for (const auto& [key, tmpl] : templates_) {
    if (key.first == task) out.push_back(key.second);
  }
  return out;
}

std::string InstructionRegistry::render(Task task, const std::string& variant,
                                        const TaskSchema& schema,
                                        const InstructionContext& ctx) const {
  auto it = templates_.find({task, variant});
  if (it == templates_.end()) {
    throw std::runtime_error("instruction variant '" + variant + "' not registered for " +
                             task_name(task));
  }
  std::string out = it->second;
  out = replace_all(out, "{labels}", join(schema.labels, ", "));
  if (task == Task::MRE) {
    if (ctx.head.empty() || ctx.tail.empty())
      throw std::runtime_error("MRE instruction needs head and tail mentions");
    out = replace_all(out, "{head}", ctx.head);
    out = replace_all(out, "{tail}", ctx.tail);
  }
  if (task == Task::MEAE) {
    auto rit = schema.roles.find(ctx.event_type);
    if (rit == schema.roles.end())
      throw std::runtime_error("event type '" + ctx.event_type + "' not in MEAE schema");
    out = replace_all(out, "{type}", ctx.event_type);
    out = replace_all(out, "{roles}", join(rit->second, ", "));
  }
  return out;
}

std::string render_instruction(const TaskSchema& schema, const InstructionContext& ctx) {
  static const InstructionRegistry reg = InstructionRegistry::defaults();
  return reg.render(schema.task, "default", schema, ctx);
}

std::string serialize_output(const ExtractionResult& r) {
  if (r.empty()) return "none";
  std::vector<std::string> records;
  switch (r.task) {
    case Task::MNER:
    case Task::MED:
      for (const Mention& m : r.mentions) records.push_back(title_case(m.type) + ", " + m.span);
      break;
    case Task::MRE:
      return r.triple.head + ", " + r.triple.relation + ", " + r.triple.tail;
    case Task::MEAE:
      for (const Argument& a : r.arguments) records.push_back(title_case(a.role) + ", " + a.value);
      break;
  }
  return join(records, " <spot> ");
}

ParseOutcome parse_output(const std::string& s, const TaskSchema& schema,
                          const std::string& context_event_type) {
  ParseOutcome out;
  out.result.task = schema.task;
  const std::string body = trim(s);
  if (normalize_text(body) == "none" || body.empty()) return out;

  if (schema.task == Task::MRE) {
    std::vector<std::string> parts = split(body, ", ");
    for (std::size_t i = 1; i + 1 < parts.size(); ++i) {
      const std::string rel = match_label(parts[i], schema.labels);
      if (!rel.empty()) {
        out.result.triple = {trim(join(parts, ", ", 0, i)), rel,
                             trim(join(parts, ", ", i + 1))};
        return out;
      }
    }
    out.malformed = 1;
    return out;
  }

  const std::vector<std::string>* labels = &schema.labels;
  std::string canon_event = context_event_type;
  if (schema.task == Task::MEAE && !context_event_type.empty()) {
    canon_event = match_label(context_event_type, [&] {
      std::vector<std::string> types;
      for (const auto& [t, roles] : schema.roles) types.push_back(t);
      return types;
    }());
    if (!canon_event.empty()) labels = &schema.roles.at(canon_event);
  }

  for (const std::string& rec : split(body, " <spot> ")) {
    const std::string record = trim(rec);
    std::size_t comma = record.find(", ");
    if (comma == std::string::npos) {
      ++out.malformed;
      continue;
    }
    const std::string label = match_label(record.substr(0, comma), *labels);
    const std::string value = trim(record.substr(comma + 2));
    if (label.empty() || value.empty()) {
      ++out.malformed;
      continue;
    }
    if (schema.task == Task::MEAE) {
      out.result.arguments.push_back({canon_event, label, value});
    } else {
      out.result.mentions.push_back({label, value});
    }
  }
  return out;
}

AssembledInput assemble_input(const std::string& instruction, const std::string& text,
                              const Vocab& vocab, int max_len) {
  AssembledInput out;
  std::string joined = instruction;
  if (!text.empty()) joined += " " + text;
  out.ids = vocab.encode(joined);
  if (static_cast<int>(out.ids.size()) > max_len) {
    out.ids.resize(max_len);
    out.truncated = true;
  }
  return out;
}

}  // namespace umie
