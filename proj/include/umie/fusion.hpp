#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "umie/codec.hpp"
#include "umie/tensor.hpp"

namespace umie {

enum class GateVariant { Dynamic, Fixed, Off };

struct GateMode {
  GateVariant variant = GateVariant::Dynamic;
  double fixed_value = 0.0;

  static GateMode dynamic() { return {GateVariant::Dynamic, 0.0}; }
  static GateMode fixed(double v) { return {GateVariant::Fixed, v}; }
  static GateMode off() { return {GateVariant::Off, 0.0}; }
  // "dynamic" | "off" | "fixed:<v>"
  static GateMode parse(const std::string& s);
  std::string to_string() const;

  bool is_dynamic() const { return variant == GateVariant::Dynamic; }
  bool visual_path_active() const {
    return variant == GateVariant::Dynamic ||
           (variant == GateVariant::Fixed && fixed_value != 0.0);
  }
};

struct FusionTrace {
  std::string instance_id;
  Task task = Task::MNER;
  double gate_value = 0.0;
};

// M = softmax(h_e h_v^T / sqrt(d_t)) h_v with absent slots masked. The
// optional projections (w_q, w_k, w_v) replace the literal Q/K/V when set.
Tensor cross_attend(const Tensor& h_e, const Tensor& h_v,
                    const std::vector<uint8_t>& slot_present,
                    const Tensor* w_q = nullptr, const Tensor* w_k = nullptr,
                    const Tensor* w_v = nullptr);

// g = LeakyReLU(mean(K) . mean(Q)) as a {1,1} tensor; the K mean skips
// absent slots, the Q mean covers all text tokens.
Tensor gate_signal(const Tensor& h_e, const Tensor& h_v,
                   const std::vector<uint8_t>& slot_present, double slope);

// c = h_e + g_eff * M. A zero effective gate returns h_e itself so the
// gate-off path is bit-identical to a text-only pipeline.
Tensor fuse(const Tensor& h_e, const Tensor& m, const Tensor& g, GateMode mode);

std::string gate_trace_csv(const std::vector<FusionTrace>& traces);
std::string gate_histogram_csv(const std::vector<FusionTrace>& traces, double bin_width);

}  // namespace umie
