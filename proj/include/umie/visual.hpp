#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

namespace umie {

// Slot 0 is the whole image (bbox [0,0,1,1]); slots 1..36 hold RoI features.
// Absent slots are zero-filled and marked not present.
struct VisualFeatureSet {
  static constexpr int kSlots = 37;
  static constexpr int kMaxObjects = 36;

  struct Slot {
    std::vector<double> feature;
    std::array<double, 4> bbox{0, 0, 0, 0};
    bool present = false;
  };

  std::string image_id;
  int d_v = 0;
  std::array<Slot, kSlots> slots;

  std::vector<uint8_t> present_mask() const;
  int object_count() const;  // present slots excluding the global one
};

// Builds a validated 37-slot set from the feature-file record schema:
// {"image_id", "d_v", "global_feature", "objects": [{"bbox", "feature"}]}
VisualFeatureSet load_feature_record(const nlohmann::json& record);
nlohmann::json feature_record_json(const VisualFeatureSet& fs);

// Line-delimited JSON feature file, one record per image.
std::map<std::string, VisualFeatureSet> load_feature_file(const std::string& path);

}  // namespace umie
