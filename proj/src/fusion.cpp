#include "umie/fusion.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>

#include "umie/ops.hpp"

namespace umie {

GateMode GateMode::parse(const std::string& s) {
  if (s == "dynamic") return dynamic();
  if (s == "off") return off();
  if (s.rfind("fixed:", 0) == 0) {
    std::size_t pos = 0;
    const std::string num = s.substr(6);
    double v = 0.0;
    try {
      v = std::stod(num, &pos);
    } catch (const std::exception&) {
      throw std::runtime_error("bad gate value in '" + s + "'");
    }
    if (pos != num.size()) throw std::runtime_error("bad gate value in '" + s + "'");
    return fixed(v);
  }
  throw std::runtime_error("bad gate mode '" + s + "' (expected dynamic|off|fixed:<v>)");
}

std::string GateMode::to_string() const {
  switch (variant) {
    case GateVariant::Dynamic: return "dynamic";
    case GateVariant::Off: return "off";
    case GateVariant::Fixed: {
      char buf[48];
      std::snprintf(buf, sizeof(buf), "fixed:%g", fixed_value);
      return buf;
    }
  }
  return "?";
}

Tensor cross_attend(const Tensor& h_e, const Tensor& h_v,
                    const std::vector<uint8_t>& slot_present,
                    const Tensor* w_q, const Tensor* w_k, const Tensor* w_v) {
  if (h_e.cols() != h_v.cols()) {
    throw std::runtime_error("cross_attend: d_t mismatch " + shape_str(h_e.shape) + " vs " +
                             shape_str(h_v.shape));
  }
  Tensor q = w_q ? matmul(h_e, *w_q) : h_e;
  Tensor k = w_k ? matmul(h_v, *w_k) : h_v;
  Tensor v = w_v ? matmul(h_v, *w_v) : h_v;
  const int n = h_e.rows(), m = h_v.rows();
  std::vector<uint8_t> keep(static_cast<std::size_t>(n) * m);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) keep[static_cast<std::size_t>(i) * m + j] = slot_present[j];
  return scaled_dot_attention(q, k, v, &keep);
}

Tensor gate_signal(const Tensor& h_e, const Tensor& h_v,
                   const std::vector<uint8_t>& slot_present, double slope) {
  Tensor k_mean = mean_rows(h_v, &slot_present);
  Tensor q_mean = mean_rows(h_e);
  Tensor pre = matmul(k_mean, transpose(q_mean));  // {1,1}
  return leaky_relu(pre, slope);
}

Tensor fuse(const Tensor& h_e, const Tensor& m, const Tensor& g, GateMode mode) {
  switch (mode.variant) {
    case GateVariant::Off:
      return h_e;
    case GateVariant::Fixed:
      if (mode.fixed_value == 0.0) return h_e;
      if (h_e.shape != m.shape)
        throw std::runtime_error("fuse: shape mismatch " + shape_str(h_e.shape) + " vs " +
                                 shape_str(m.shape));
      return add(h_e, scale(m, mode.fixed_value));
    case GateVariant::Dynamic:
      if (!g.defined()) throw std::runtime_error("fuse: dynamic mode needs a gate signal");
      if (h_e.shape != m.shape)
        throw std::runtime_error("fuse: shape mismatch " + shape_str(h_e.shape) + " vs " +
                                 shape_str(m.shape));
      return add(h_e, scale_by(m, g));
  }
  throw std::runtime_error("fuse: bad mode");
}

std::string gate_trace_csv(const std::vector<FusionTrace>& traces) {
  std::string out = "instance_id,task,gate\n";
  char buf[64];
  for (const FusionTrace& t : traces) {
    std::snprintf(buf, sizeof(buf), "%.17g", t.gate_value);
    out += t.instance_id + "," + task_name(t.task) + "," + buf + "\n";
  }
  return out;
}

std::string gate_histogram_csv(const std::vector<FusionTrace>& traces, double bin_width) {
  if (bin_width <= 0.0) throw std::runtime_error("gate_histogram_csv: bin width must be positive");
  std::map<long, long> bins;
  for (const FusionTrace& t : traces) {
    bins[static_cast<long>(std::floor(t.gate_value / bin_width))]++;
  }
  std::string out = "bin_lo,bin_hi,count\n";
  char buf[128];
  for (const auto& [bin, count] : bins) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%ld\n", bin * bin_width, (bin + 1) * bin_width,
                  count);
    out += buf;
  }
  return out;
}

}  // namespace umie
