#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "umie/codec.hpp"
#include "umie/tensor.hpp"
#include "umie/visual.hpp"

namespace umie {

struct Instance {
  std::string id;
  Task task = Task::MNER;
  std::string text;
  std::string image_id;  // set when features live in a separate feature file
  std::optional<VisualFeatureSet> visual;
  ExtractionResult gold;
  std::string split = "train";   // train | dev | test
  std::string domain = "twitter";

  // MRE instances carry the given head/tail pair
  std::string head, tail;
};

struct Dataset {
  std::string name;
  std::vector<Instance> instances;

  std::vector<const Instance*> split(const std::string& which) const;
  std::map<std::string, std::map<std::string, int>> counts() const;  // split -> task -> n
};

// Line-delimited JSON, one instance per line. Every instance is validated
// against the schema set; the first violation aborts with the instance id.
Dataset load_dataset(const std::string& path, const SchemaSet& schemas);
void save_dataset(const Dataset& ds, const std::string& path);

nlohmann::ordered_json instance_to_json(const Instance& inst);
Instance instance_from_json(const nlohmann::json& j, const SchemaSet& schemas);

// Removes train instances whose (normalized text, task) appears in test.
// Returns the removal count; idempotent.
int dedupe(Dataset& train, const Dataset& test);

struct CorpusSpec {
  uint64_t seed = 0;
  int d_v = 8;
  double visual_fraction = 0.5;  // instances whose label only the image determines
  std::string domain = "twitter";
  int template_variant = 0;  // alternative sentence templates per domain
  // task -> {train, dev, test} instance counts
  std::map<Task, std::array<int, 3>> counts;

  static CorpusSpec from_json(const nlohmann::json& j);
  nlohmann::ordered_json to_json() const;
};

// Deterministic synthetic corpus. Text-determined instances carry a
// label-specific keyword; visually-determined ones carry a neutral text and
// put the deciding signal in an object feature cluster (unit variance,
// mean separation 4).
Dataset synth_corpus(const CorpusSpec& spec);

// Label subsets the generator draws from (exposed for baseline/prior math).
const std::vector<std::string>& synth_labels(Task task);

// Domain-ratio batch stream. Each batch is drawn from one domain group
// chosen by ratio; instances cycle through per-group shuffles.
class BatchSampler {
 public:
  BatchSampler(std::vector<const Instance*> instances,
               const std::map<std::string, double>& ratios, int batch_size, uint64_t seed);

  std::vector<const Instance*> next_batch();
  int batch_size() const { return batch_size_; }
  std::size_t total() const { return total_; }

 private:
  struct Group {
    std::string domain;
    double ratio = 0.0;
    std::vector<const Instance*> instances;
    std::size_t cursor = 0;
  };
  std::vector<Group> groups_;
  int batch_size_;
  std::size_t total_ = 0;
  Rng rng_;
};

}  // namespace umie
