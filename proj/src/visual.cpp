#include "umie/visual.hpp"

#include <fstream>
#include <stdexcept>

namespace umie {

std::vector<uint8_t> VisualFeatureSet::present_mask() const {
  std::vector<uint8_t> m(kSlots);
  for (int i = 0; i < kSlots; ++i) m[i] = slots[i].present ? 1 : 0;
  return m;
}

int VisualFeatureSet::object_count() const {
  int n = 0;
  for (int i = 1; i < kSlots; ++i) n += slots[i].present ? 1 : 0;
  return n;
}

VisualFeatureSet load_feature_record(const nlohmann::json& record) {
  VisualFeatureSet fs;
  fs.image_id = record.at("image_id").get<std::string>();
  fs.d_v = record.at("d_v").get<int>();
  if (fs.d_v <= 0) throw std::runtime_error("feature record '" + fs.image_id + "': d_v must be positive");

  auto check_feature = [&](const nlohmann::json& f, const char* what) {
    if (static_cast<int>(f.size()) != fs.d_v)
      throw std::runtime_error("feature record '" + fs.image_id + "': " + what + " has " +
                               std::to_string(f.size()) + " values, d_v=" + std::to_string(fs.d_v));
    return f.get<std::vector<double>>();
  };

  fs.slots[0].feature = check_feature(record.at("global_feature"), "global_feature");
  fs.slots[0].bbox = {0.0, 0.0, 1.0, 1.0};
  fs.slots[0].present = true;

  const auto& objects = record.at("objects");
  if (static_cast<int>(objects.size()) > VisualFeatureSet::kMaxObjects) {
    throw std::runtime_error("feature record '" + fs.image_id + "': " +
                             std::to_string(objects.size()) + " objects exceeds the limit of 36");
  }
  int i = 1;
  for (const auto& obj : objects) {
    VisualFeatureSet::Slot& slot = fs.slots[i++];
    slot.feature = check_feature(obj.at("feature"), "object feature");
    const auto& bb = obj.at("bbox");
    if (bb.size() != 4)
      throw std::runtime_error("feature record '" + fs.image_id + "': bbox needs 4 coordinates");
    for (int j = 0; j < 4; ++j) slot.bbox[j] = bb[j].get<double>();
    for (double c : slot.bbox) {
      if (c < 0.0 || c > 1.0)
        throw std::runtime_error("feature record '" + fs.image_id +
                                 "': bbox coordinates must be normalized to [0,1]");
    }
    if (slot.bbox[0] > slot.bbox[2] || slot.bbox[1] > slot.bbox[3])
      throw std::runtime_error("feature record '" + fs.image_id + "': bbox corners out of order");
    slot.present = true;
  }
  for (; i < VisualFeatureSet::kSlots; ++i) {
    fs.slots[i].feature.assign(fs.d_v, 0.0);  // padded with zeros
  }
  return fs;
}

nlohmann::json feature_record_json(const VisualFeatureSet& fs) {
  nlohmann::ordered_json rec;
  rec["image_id"] = fs.image_id;
  rec["d_v"] = fs.d_v;
  rec["global_feature"] = fs.slots[0].feature;
  rec["objects"] = nlohmann::json::array();
  for (int i = 1; i < VisualFeatureSet::kSlots; ++i) {
    if (!fs.slots[i].present) continue;
    nlohmann::ordered_json obj;
    obj["bbox"] = fs.slots[i].bbox;
    obj["feature"] = fs.slots[i].feature;
    rec["objects"].push_back(obj);
  }
  return rec;
}

std::map<std::string, VisualFeatureSet> load_feature_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open feature file " + path);
  std::map<std::string, VisualFeatureSet> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    VisualFeatureSet fs = load_feature_record(nlohmann::json::parse(line));
    if (!out.emplace(fs.image_id, std::move(fs)).second) {
      throw std::runtime_error("feature file " + path + ": duplicate image_id");
    }
  }
  return out;
}

}  // namespace umie
