#pragma once

#include <deque>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "umie/codec.hpp"
#include "umie/fusion.hpp"
#include "umie/optim.hpp"
#include "umie/tensor.hpp"
#include "umie/visual.hpp"

namespace umie {

struct ModelConfig {
  int d_t = 64;
  int n_enc_layers = 2;
  int n_dec_layers = 2;
  int n_heads = 4;
  int ffn_width = 256;
  int vocab_size = 0;
  int max_input_len = 256;
  int max_output_len = 128;
  int d_v = 2048;
  double leaky_slope = 0.01;
  bool fusion_projections = false;
  int n_vis_heads = 4;  // the visual transformer is always 2 layers deep

  static constexpr int kVisLayers = 2;
  static constexpr double kLnEps = 1e-5;

  void validate() const;
  nlohmann::ordered_json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

struct AttnParams {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
};

struct LayerNormParams {
  Tensor gain, bias;
};

struct FfnParams {
  Tensor w1, b1, w2, b2;
};

struct EncoderLayerParams {
  AttnParams attn;
  LayerNormParams ln1;
  FfnParams ffn;
  LayerNormParams ln2;
};

struct DecoderLayerParams {
  AttnParams self_attn;
  LayerNormParams ln1;
  AttnParams cross_attn;
  LayerNormParams ln2;
  FfnParams ffn;
  LayerNormParams ln3;
};

// Post-norm multi-head block, shared by the text and visual encoders.
Tensor encoder_layer_forward(const Tensor& x, const EncoderLayerParams& p, int n_heads,
                             const std::vector<uint8_t>* keep);
Tensor multihead_attention(const Tensor& x_q, const Tensor& x_kv, const AttnParams& p,
                           int n_heads, const std::vector<uint8_t>* keep);

class Model {
 public:
  Model(ModelConfig cfg, Vocab vocab, uint64_t seed);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  const ModelConfig& config() const { return cfg_; }
  const Vocab& vocab() const { return vocab_; }

  std::vector<Parameter*> parameters();
  Parameter* find_parameter(const std::string& name);

  // --- text encoder ---
  // Over-length input is truncated to max_input_len with a warning.
  Tensor encode_text(const std::vector<int>& token_ids) const;

  // --- visual encoder ---
  Tensor embed_visual(const VisualFeatureSet& fs) const;  // [37, d_t]
  Tensor encode_visual(const Tensor& e_v, const std::vector<uint8_t>& present) const;
  Tensor visual_features(const VisualFeatureSet& fs) const;

  // --- gated fusion ---
  struct Fused {
    Tensor c;
    double gate = 0.0;
    bool gated = false;  // whether a visual contribution was applied
  };
  Fused fuse_modalities(const Tensor& h_e, const VisualFeatureSet* vis, GateMode mode) const;

  // --- decoder ---
  // Teacher-forced full pass: causal self-attention over dec_input,
  // cross-attention over c; returns [len(dec_input), vocab] logits.
  Tensor decode_logits(const Tensor& c, const std::vector<int>& dec_input) const;

  struct DecoderState {
    int len = 0;
    std::vector<std::vector<double>> self_k, self_v;  // per layer, len*d_t
    std::vector<Tensor> cross_k, cross_v;             // per layer, [n_ctx, d_t]
  };
  DecoderState init_state(const Tensor& c) const;
  // One cached step; throws on overflow past max_output_len.
  Tensor decode_step(DecoderState& state, int last_token) const;

  struct GenResult {
    std::vector<int> ids;
    bool overflow = false;
  };
  // Greedy decoding from <s>; argmax ties break toward the lowest id.
  GenResult generate(const Tensor& c) const;

  // --- checkpoints ---
  // Manifest (config + vocab + named shapes/offsets) followed by a
  // little-endian float64 blob. save/load/save is byte-identical.
  void save_checkpoint(const std::string& path) const;
  static Model load_checkpoint(const std::string& path);

  // layer parameters are public so test oracles can unroll them
  Tensor tok_embed, enc_pos, dec_pos;
  std::vector<EncoderLayerParams> enc_layers;
  Tensor vis_fc1_w, vis_fc1_b, vis_fc2_w, vis_fc2_b;
  std::vector<EncoderLayerParams> vis_layers;
  Tensor fus_wq, fus_wk, fus_wv;  // only when fusion_projections
  std::vector<DecoderLayerParams> dec_layers;
  Tensor out_w, out_b;

 private:
  enum class Init { Normal, Zeros, Ones };
  Tensor reg(const std::string& name, std::vector<int> shape, Init init, Rng& rng);
  void build(uint64_t seed);
  AttnParams reg_attn(const std::string& prefix, Rng& rng);
  LayerNormParams reg_ln(const std::string& prefix, Rng& rng);
  FfnParams reg_ffn(const std::string& prefix, int width, Rng& rng);

  ModelConfig cfg_;
  Vocab vocab_;
  std::deque<Parameter> params_;
  std::unordered_map<std::string, Parameter*> by_name_;
};

}  // namespace umie
