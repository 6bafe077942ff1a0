#pragma once

#include <map>
#include <string>
#include <unordered_map>
#include <vector>

namespace umie {

enum class Task { MNER, MRE, MED, MEAE };

std::string task_name(Task t);
Task task_from_name(const std::string& s);

// Special token ids are fixed so checkpoints and datasets stay stable.
constexpr int kPadId = 0;
constexpr int kBosId = 1;
constexpr int kEosId = 2;
constexpr int kUnkId = 3;
constexpr int kSpotId = 4;
constexpr int kFirstObjectId = 5;  // O_1..O_36 -> 5..40
constexpr int kNumObjectSlots = 36;
constexpr int kNumSpecials = kFirstObjectId + kNumObjectSlots;

// Word-level tokenizer: special tokens, then runs of [A-Za-z0-9_], then
// single punctuation characters.
std::vector<std::string> tokenize(const std::string& text);
// Inverse for generated output: spaces between tokens except before
// sentence punctuation.
std::string detokenize(const std::vector<std::string>& tokens);

struct Vocab {
  std::vector<std::string> id_to_token;
  std::unordered_map<std::string, int> token_to_id;

  int size() const { return static_cast<int>(id_to_token.size()); }
  int id(const std::string& token) const;  // <unk> for unknown tokens
  const std::string& token(int id) const;

  std::vector<int> encode(const std::string& text) const;
  std::string decode(const std::vector<int>& ids) const;

  static Vocab build(const std::vector<std::string>& corpus, int min_count);
  static Vocab from_tokens(std::vector<std::string> id_to_token);
};

struct TaskSchema {
  Task task = Task::MNER;
  std::vector<std::string> labels;  // entity types / relations / event types / all roles
  // event type -> ordered argument roles (MEAE only)
  std::map<std::string, std::vector<std::string>> roles;

  bool has_label(const std::string& label) const;
};

struct SchemaSet {
  TaskSchema mner, mre, med, meae;
  const TaskSchema& for_task(Task t) const;
  // Label sets and event schema from the reference task definitions.
  static SchemaSet defaults();
};

struct Mention {
  std::string type;
  std::string span;
  bool operator==(const Mention&) const = default;
};

struct Triple {
  std::string head, relation, tail;
  bool operator==(const Triple&) const = default;
};

struct Argument {
  std::string event_type, role, value;
  bool operator==(const Argument&) const = default;
};

struct ExtractionResult {
  Task task = Task::MNER;
  std::vector<Mention> mentions;    // MNER / MED (type, span or trigger)
  Triple triple;                    // MRE
  std::vector<Argument> arguments;  // MEAE

  bool empty() const;
  bool operator==(const ExtractionResult&) const = default;
};

// Table-driven instruction templates. Placeholders: {labels}, {head},
// {tail}, {type}, {roles}.
struct InstructionContext {
  std::string head, tail;
  std::string event_type;  // MEAE
};

class InstructionRegistry {
 public:
  static InstructionRegistry defaults();

  void register_template(Task task, const std::string& variant, const std::string& tmpl);
  void load_file(const std::string& path);  // JSON {task: {variant: template}}
  bool has(Task task, const std::string& variant) const;
  std::vector<std::string> variants(Task task) const;

  std::string render(Task task, const std::string& variant, const TaskSchema& schema,
                     const InstructionContext& ctx = {}) const;

 private:
  std::map<std::pair<Task, std::string>, std::string> templates_;
};

std::string render_instruction(const TaskSchema& schema, const InstructionContext& ctx = {});

// Output grammar: records joined by " <spot> ", labels title-cased for
// mention-style tasks, triples as "head, relation, tail", empty -> "none".
std::string serialize_output(const ExtractionResult& r);

struct ParseOutcome {
  ExtractionResult result;
  int malformed = 0;
};

// Total parser: malformed records are dropped and counted, never thrown.
// context_event_type supplies the MEAE cascade's detected event type.
ParseOutcome parse_output(const std::string& s, const TaskSchema& schema,
                          const std::string& context_event_type = "");

struct AssembledInput {
  std::vector<int> ids;
  bool truncated = false;
};

AssembledInput assemble_input(const std::string& instruction, const std::string& text,
                              const Vocab& vocab, int max_len);

// lowercase + collapsed whitespace, used for matching and scoring
std::string normalize_text(const std::string& s);

}  // namespace umie
