#include "umie/model.hpp"

#include <cstring>
#include <fstream>
#include <iostream>
#include <stdexcept>

#include "umie/ops.hpp"

namespace umie {

namespace {

constexpr char kMagic[8] = {'U', 'M', 'I', 'E', 'C', 'K', 'P', '1'};

void write_u64(std::ostream& out, uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(buf, 8);
}

uint64_t read_u64(std::istream& in) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
  return v;
}

void write_doubles(std::ostream& out, const std::vector<double>& v) {
  for (double d : v) {
    uint64_t bits;
    std::memcpy(&bits, &d, 8);
    write_u64(out, bits);
  }
}

void read_doubles(std::istream& in, std::vector<double>& v) {
  for (double& d : v) {
    uint64_t bits = read_u64(in);
    std::memcpy(&d, &bits, 8);
  }
}

}  // namespace

void ModelConfig::validate() const {
  if (d_t <= 0 || n_heads <= 0 || d_t % n_heads != 0)
    throw std::runtime_error("ModelConfig: d_t must be a positive multiple of n_heads");
  if (n_vis_heads <= 0 || d_t % n_vis_heads != 0)
    throw std::runtime_error("ModelConfig: d_t must be a positive multiple of n_vis_heads");
  if (n_enc_layers <= 0 || n_dec_layers <= 0)
    throw std::runtime_error("ModelConfig: layer counts must be positive");
  if (ffn_width <= 0) throw std::runtime_error("ModelConfig: ffn_width must be positive");
  if (max_input_len <= 0 || max_output_len <= 0)
    throw std::runtime_error("ModelConfig: max lengths must be positive");
  if (vocab_size < kNumSpecials)
    throw std::runtime_error("ModelConfig: vocab_size below special-token count");
  if (d_v <= 0) throw std::runtime_error("ModelConfig: d_v must be positive");
  if (leaky_slope <= 0.0 || leaky_slope >= 1.0)
    throw std::runtime_error("ModelConfig: leaky_slope must be in (0,1)");
}

nlohmann::ordered_json ModelConfig::to_json() const {
  nlohmann::ordered_json j;
  j["d_t"] = d_t;
  j["n_enc_layers"] = n_enc_layers;
  j["n_dec_layers"] = n_dec_layers;
  j["n_heads"] = n_heads;
  j["ffn_width"] = ffn_width;
  j["vocab_size"] = vocab_size;
  j["max_input_len"] = max_input_len;
  j["max_output_len"] = max_output_len;
  j["d_v"] = d_v;
  j["leaky_slope"] = leaky_slope;
  j["fusion_projections"] = fusion_projections;
  j["n_vis_heads"] = n_vis_heads;
  return j;
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.d_t = j.value("d_t", c.d_t);
  c.n_enc_layers = j.value("n_enc_layers", c.n_enc_layers);
  c.n_dec_layers = j.value("n_dec_layers", c.n_dec_layers);
  c.n_heads = j.value("n_heads", c.n_heads);
  c.ffn_width = j.value("ffn_width", c.ffn_width);
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.max_input_len = j.value("max_input_len", c.max_input_len);
  c.max_output_len = j.value("max_output_len", c.max_output_len);
  c.d_v = j.value("d_v", c.d_v);
  c.leaky_slope = j.value("leaky_slope", c.leaky_slope);
  c.fusion_projections = j.value("fusion_projections", c.fusion_projections);
  c.n_vis_heads = j.value("n_vis_heads", c.n_vis_heads);
  return c;
}

Tensor multihead_attention(const Tensor& x_q, const Tensor& x_kv, const AttnParams& p,
                           int n_heads, const std::vector<uint8_t>* keep) {
  Tensor q = linear(x_q, p.wq, p.bq);
  Tensor k = linear(x_kv, p.wk, p.bk);
  Tensor v = linear(x_kv, p.wv, p.bv);
  const int d = q.cols();
  const int dh = d / n_heads;
  std::vector<Tensor> heads;
  heads.reserve(n_heads);
  for (int h = 0; h < n_heads; ++h) {
    heads.push_back(scaled_dot_attention(slice_cols(q, h * dh, dh), slice_cols(k, h * dh, dh),
                                         slice_cols(v, h * dh, dh), keep));
  }
  return linear(concat_cols(heads), p.wo, p.bo);
}

Tensor encoder_layer_forward(const Tensor& x, const EncoderLayerParams& p, int n_heads,
                             const std::vector<uint8_t>* keep) {
  Tensor a = multihead_attention(x, x, p.attn, n_heads, keep);
  Tensor h = layer_norm(add(x, a), p.ln1.gain, p.ln1.bias, ModelConfig::kLnEps);
  Tensor f = linear(relu(linear(h, p.ffn.w1, p.ffn.b1)), p.ffn.w2, p.ffn.b2);
  return layer_norm(add(h, f), p.ln2.gain, p.ln2.bias, ModelConfig::kLnEps);
}

Model::Model(ModelConfig cfg, Vocab vocab, uint64_t seed)
    : cfg_(cfg), vocab_(std::move(vocab)) {
  if (cfg_.vocab_size == 0) cfg_.vocab_size = vocab_.size();
  if (cfg_.vocab_size != vocab_.size())
    throw std::runtime_error("Model: config vocab_size " + std::to_string(cfg_.vocab_size) +
                             " != vocabulary size " + std::to_string(vocab_.size()));
  cfg_.validate();
  build(seed);
}

Tensor Model::reg(const std::string& name, std::vector<int> shape, Init init, Rng& rng) {
  Tensor t = Tensor::zeros(shape);
  switch (init) {
    case Init::Normal:
      for (double& v : *t.data) v = rng.normal(0.0, 0.02);
      break;
    case Init::Ones:
      for (double& v : *t.data) v = 1.0;
      break;
    case Init::Zeros:
      break;
  }
  params_.emplace_back(name, t);
  Parameter& p = params_.back();
  by_name_[name] = &p;
  return p.value;
}

AttnParams Model::reg_attn(const std::string& prefix, Rng& rng) {
  const int d = cfg_.d_t;
  AttnParams p;
  p.wq = reg(prefix + ".wq", {d, d}, Init::Normal, rng);
  p.bq = reg(prefix + ".bq", {1, d}, Init::Zeros, rng);
  p.wk = reg(prefix + ".wk", {d, d}, Init::Normal, rng);
  p.bk = reg(prefix + ".bk", {1, d}, Init::Zeros, rng);
  p.wv = reg(prefix + ".wv", {d, d}, Init::Normal, rng);
  p.bv = reg(prefix + ".bv", {1, d}, Init::Zeros, rng);
  p.wo = reg(prefix + ".wo", {d, d}, Init::Normal, rng);
  p.bo = reg(prefix + ".bo", {1, d}, Init::Zeros, rng);
  return p;
}

LayerNormParams Model::reg_ln(const std::string& prefix, Rng& rng) {
  LayerNormParams p;
  p.gain = reg(prefix + ".gain", {1, cfg_.d_t}, Init::Ones, rng);
  p.bias = reg(prefix + ".bias", {1, cfg_.d_t}, Init::Zeros, rng);
  return p;
}

FfnParams Model::reg_ffn(const std::string& prefix, int width, Rng& rng) {
  const int d = cfg_.d_t;
  FfnParams p;
  p.w1 = reg(prefix + ".w1", {d, width}, Init::Normal, rng);
  p.b1 = reg(prefix + ".b1", {1, width}, Init::Zeros, rng);
  p.w2 = reg(prefix + ".w2", {width, d}, Init::Normal, rng);
  p.b2 = reg(prefix + ".b2", {1, d}, Init::Zeros, rng);
  return p;
}

void Model::build(uint64_t seed) {
  Rng rng(seed);
  const int d = cfg_.d_t;
  tok_embed = reg("embed.tok", {cfg_.vocab_size, d}, Init::Normal, rng);
  enc_pos = reg("enc.pos", {cfg_.max_input_len, d}, Init::Normal, rng);
  dec_pos = reg("dec.pos", {cfg_.max_output_len, d}, Init::Normal, rng);

  for (int i = 0; i < cfg_.n_enc_layers; ++i) {
    const std::string p = "enc.l" + std::to_string(i);
    EncoderLayerParams lp;
    lp.attn = reg_attn(p + ".attn", rng);
    lp.ln1 = reg_ln(p + ".ln1", rng);
    lp.ffn = reg_ffn(p + ".ffn", cfg_.ffn_width, rng);
    lp.ln2 = reg_ln(p + ".ln2", rng);
    enc_layers.push_back(lp);
  }

  vis_fc1_w = reg("visual.fc1.weight", {cfg_.d_v, d}, Init::Normal, rng);
  vis_fc1_b = reg("visual.fc1.bias", {1, d}, Init::Zeros, rng);
  vis_fc2_w = reg("visual.fc2.weight", {4, d}, Init::Normal, rng);
  vis_fc2_b = reg("visual.fc2.bias", {1, d}, Init::Zeros, rng);
  for (int i = 0; i < ModelConfig::kVisLayers; ++i) {
    const std::string p = "visual.l" + std::to_string(i);
    EncoderLayerParams lp;
    lp.attn = reg_attn(p + ".attn", rng);
    lp.ln1 = reg_ln(p + ".ln1", rng);
    lp.ffn = reg_ffn(p + ".ffn", 4 * d, rng);
    lp.ln2 = reg_ln(p + ".ln2", rng);
    vis_layers.push_back(lp);
  }

  if (cfg_.fusion_projections) {
    fus_wq = reg("fusion.wq", {d, d}, Init::Normal, rng);
    fus_wk = reg("fusion.wk", {d, d}, Init::Normal, rng);
    fus_wv = reg("fusion.wv", {d, d}, Init::Normal, rng);
  }

  for (int i = 0; i < cfg_.n_dec_layers; ++i) {
    const std::string p = "dec.l" + std::to_string(i);
    DecoderLayerParams lp;
    lp.self_attn = reg_attn(p + ".self", rng);
    lp.ln1 = reg_ln(p + ".ln1", rng);
    lp.cross_attn = reg_attn(p + ".cross", rng);
    lp.ln2 = reg_ln(p + ".ln2", rng);
    lp.ffn = reg_ffn(p + ".ffn", cfg_.ffn_width, rng);
    lp.ln3 = reg_ln(p + ".ln3", rng);
    dec_layers.push_back(lp);
  }

  out_w = reg("out.weight", {d, cfg_.vocab_size}, Init::Normal, rng);
  out_b = reg("out.bias", {1, cfg_.vocab_size}, Init::Zeros, rng);
}

std::vector<Parameter*> Model::parameters() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (Parameter& p : params_) out.push_back(&p);
  return out;
}

Parameter* Model::find_parameter(const std::string& name) {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? nullptr : it->second;
}

Tensor Model::encode_text(const std::vector<int>& token_ids) const {
  std::vector<int> ids = token_ids;
  if (static_cast<int>(ids.size()) > cfg_.max_input_len) {
    std::cerr << "[umie] warning: input of " << ids.size() << " tokens truncated to "
              << cfg_.max_input_len << "\n";
    ids.resize(cfg_.max_input_len);
  }
  if (ids.empty()) throw std::runtime_error("encode_text: empty input");
  const int n = static_cast<int>(ids.size());
  std::vector<int> positions(n);
  for (int i = 0; i < n; ++i) positions[i] = i;
  Tensor x = add(embed_rows(tok_embed, ids), embed_rows(enc_pos, positions));

  std::vector<uint8_t> keep(static_cast<std::size_t>(n) * n, 1);
  bool has_pad = false;
  for (int j = 0; j < n; ++j) has_pad = has_pad || ids[j] == kPadId;
  if (has_pad) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        keep[static_cast<std::size_t>(i) * n + j] = ids[j] != kPadId;
  }
  for (const EncoderLayerParams& lp : enc_layers) {
    x = encoder_layer_forward(x, lp, cfg_.n_heads, &keep);
  }
  return x;
}

Tensor Model::embed_visual(const VisualFeatureSet& fs) const {
  if (fs.d_v != cfg_.d_v)
    throw std::runtime_error("embed_visual: feature d_v " + std::to_string(fs.d_v) +
                             " != model d_v " + std::to_string(cfg_.d_v));
  const int s = VisualFeatureSet::kSlots;
  Tensor f = Tensor::zeros({s, cfg_.d_v});
  Tensor bbox = Tensor::zeros({s, 4});
  for (int i = 0; i < s; ++i) {
    for (int j = 0; j < cfg_.d_v; ++j) f.at(i, j) = fs.slots[i].feature[j];
    for (int j = 0; j < 4; ++j) bbox.at(i, j) = fs.slots[i].bbox[j];
  }
  return add(linear(f, vis_fc1_w, vis_fc1_b), linear(bbox, vis_fc2_w, vis_fc2_b));
}

Tensor Model::encode_visual(const Tensor& e_v, const std::vector<uint8_t>& present) const {
  if (e_v.rows() != VisualFeatureSet::kSlots || e_v.cols() != cfg_.d_t)
    throw std::runtime_error("encode_visual: expected [37," + std::to_string(cfg_.d_t) +
                             "], got " + shape_str(e_v.shape));
  const int s = VisualFeatureSet::kSlots;
  std::vector<uint8_t> keep(static_cast<std::size_t>(s) * s);
  for (int i = 0; i < s; ++i)
    for (int j = 0; j < s; ++j) keep[static_cast<std::size_t>(i) * s + j] = present[j];
  Tensor x = e_v;
  for (const EncoderLayerParams& lp : vis_layers) {
    x = encoder_layer_forward(x, lp, cfg_.n_vis_heads, &keep);
  }
  return x;
}

Tensor Model::visual_features(const VisualFeatureSet& fs) const {
  return encode_visual(embed_visual(fs), fs.present_mask());
}

Model::Fused Model::fuse_modalities(const Tensor& h_e, const VisualFeatureSet* vis,
                                    GateMode mode) const {
  Fused out;
  if (mode.variant == GateVariant::Off || vis == nullptr) {
    out.c = h_e;
    return out;
  }
  Tensor h_v = visual_features(*vis);
  std::vector<uint8_t> present = vis->present_mask();
  const Tensor* wq = cfg_.fusion_projections ? &fus_wq : nullptr;
  const Tensor* wk = cfg_.fusion_projections ? &fus_wk : nullptr;
  const Tensor* wv = cfg_.fusion_projections ? &fus_wv : nullptr;
  Tensor m = cross_attend(h_e, h_v, present, wq, wk, wv);
  if (mode.is_dynamic()) {
    Tensor g = gate_signal(h_e, h_v, present, cfg_.leaky_slope);
    out.c = fuse(h_e, m, g, mode);
    out.gate = g.item();
    out.gated = true;
  } else {
    out.c = fuse(h_e, m, Tensor(), mode);
    out.gate = mode.fixed_value;
    out.gated = mode.fixed_value != 0.0;
  }
  return out;
}

Tensor Model::decode_logits(const Tensor& c, const std::vector<int>& dec_input) const {
  const int n = static_cast<int>(dec_input.size());
  if (n == 0) throw std::runtime_error("decode_logits: empty decoder input");
  if (n > cfg_.max_output_len)
    throw std::runtime_error("decode_logits: decoder input of " + std::to_string(n) +
                             " exceeds max_output_len " + std::to_string(cfg_.max_output_len));
  std::vector<int> positions(n);
  for (int i = 0; i < n; ++i) positions[i] = i;
  Tensor x = add(embed_rows(tok_embed, dec_input), embed_rows(dec_pos, positions));

  std::vector<uint8_t> causal(static_cast<std::size_t>(n) * n, 0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j) causal[static_cast<std::size_t>(i) * n + j] = 1;

  for (const DecoderLayerParams& lp : dec_layers) {
    Tensor a = multihead_attention(x, x, lp.self_attn, cfg_.n_heads, &causal);
    x = layer_norm(add(x, a), lp.ln1.gain, lp.ln1.bias, ModelConfig::kLnEps);
    Tensor cr = multihead_attention(x, c, lp.cross_attn, cfg_.n_heads, nullptr);
    x = layer_norm(add(x, cr), lp.ln2.gain, lp.ln2.bias, ModelConfig::kLnEps);
    Tensor f = linear(relu(linear(x, lp.ffn.w1, lp.ffn.b1)), lp.ffn.w2, lp.ffn.b2);
    x = layer_norm(add(x, f), lp.ln3.gain, lp.ln3.bias, ModelConfig::kLnEps);
  }
  return linear(x, out_w, out_b);
}

Model::DecoderState Model::init_state(const Tensor& c) const {
  NoGradGuard ng;
  DecoderState st;
  st.self_k.resize(dec_layers.size());
  st.self_v.resize(dec_layers.size());
  for (const DecoderLayerParams& lp : dec_layers) {
    st.cross_k.push_back(linear(c, lp.cross_attn.wk, lp.cross_attn.bk));
    st.cross_v.push_back(linear(c, lp.cross_attn.wv, lp.cross_attn.bv));
  }
  return st;
}

Tensor Model::decode_step(DecoderState& state, int last_token) const {
  NoGradGuard ng;
  if (state.len >= cfg_.max_output_len)
    throw std::runtime_error("decode_step: generation overflow at length " +
                             std::to_string(state.len));
  const int d = cfg_.d_t;
  const int dh = d / cfg_.n_heads;
  Tensor x = add(embed_rows(tok_embed, {last_token}),
                 embed_rows(dec_pos, {state.len}));
  for (std::size_t l = 0; l < dec_layers.size(); ++l) {
    const DecoderLayerParams& lp = dec_layers[l];
    // self-attention over the cached prefix plus this token
    Tensor q = linear(x, lp.self_attn.wq, lp.self_attn.bq);
    Tensor k_new = linear(x, lp.self_attn.wk, lp.self_attn.bk);
    Tensor v_new = linear(x, lp.self_attn.wv, lp.self_attn.bv);
    std::vector<double>& kc = state.self_k[l];
    std::vector<double>& vc = state.self_v[l];
    kc.insert(kc.end(), k_new.data->begin(), k_new.data->end());
    vc.insert(vc.end(), v_new.data->begin(), v_new.data->end());
    const int len = state.len + 1;
    Tensor k_all = Tensor::from({len, d}, kc);
    Tensor v_all = Tensor::from({len, d}, vc);
    std::vector<Tensor> heads;
    for (int h = 0; h < cfg_.n_heads; ++h) {
      heads.push_back(scaled_dot_attention(slice_cols(q, h * dh, dh),
                                           slice_cols(k_all, h * dh, dh),
                                           slice_cols(v_all, h * dh, dh)));
    }
    Tensor a = linear(concat_cols(heads), lp.self_attn.wo, lp.self_attn.bo);
    x = layer_norm(add(x, a), lp.ln1.gain, lp.ln1.bias, ModelConfig::kLnEps);
    // cross-attention over the precomputed fused context
    Tensor cq = linear(x, lp.cross_attn.wq, lp.cross_attn.bq);
    std::vector<Tensor> cheads;
    for (int h = 0; h < cfg_.n_heads; ++h) {
      cheads.push_back(scaled_dot_attention(slice_cols(cq, h * dh, dh),
                                            slice_cols(state.cross_k[l], h * dh, dh),
                                            slice_cols(state.cross_v[l], h * dh, dh)));
    }
    Tensor cr = linear(concat_cols(cheads), lp.cross_attn.wo, lp.cross_attn.bo);
    x = layer_norm(add(x, cr), lp.ln2.gain, lp.ln2.bias, ModelConfig::kLnEps);
    Tensor f = linear(relu(linear(x, lp.ffn.w1, lp.ffn.b1)), lp.ffn.w2, lp.ffn.b2);
    x = layer_norm(add(x, f), lp.ln3.gain, lp.ln3.bias, ModelConfig::kLnEps);
  }
  state.len += 1;
  return linear(x, out_w, out_b);  // {1, vocab}
}

Model::GenResult Model::generate(const Tensor& c) const {
  NoGradGuard ng;
  GenResult out;
  DecoderState st = init_state(c);
  int last = kBosId;
  for (int step = 0; step < cfg_.max_output_len; ++step) {
    Tensor logits = decode_step(st, last);
    int best = 0;
    double best_v = logits.at(0, 0);
    for (int j = 1; j < cfg_.vocab_size; ++j) {
      if (logits.at(0, j) > best_v) {  // strict: ties keep the lowest id
        best_v = logits.at(0, j);
        best = j;
      }
    }
    if (best == kEosId) return out;
    out.ids.push_back(best);
    last = best;
  }
  out.overflow = true;
  return out;
}

void Model::save_checkpoint(const std::string& path) const {
  nlohmann::ordered_json manifest;
  manifest["format"] = "umie-ckpt-v1";
  manifest["config"] = cfg_.to_json();
  manifest["vocab"] = vocab_.id_to_token;
  manifest["params"] = nlohmann::json::array();
  uint64_t offset = 0;
  for (const Parameter& p : params_) {
    nlohmann::ordered_json entry;
    entry["name"] = p.name;
    entry["shape"] = p.value.shape;
    entry["offset"] = offset;
    manifest["params"].push_back(entry);
    offset += p.value.numel();
  }
  const std::string mtext = manifest.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  out.write(kMagic, 8);
  write_u64(out, mtext.size());
  out.write(mtext.data(), static_cast<std::streamsize>(mtext.size()));
  for (const Parameter& p : params_) write_doubles(out, *p.value.data);
  if (!out) throw std::runtime_error("failed writing checkpoint " + path);
}

Model Model::load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("checkpoint " + path + ": bad magic");
  const uint64_t mlen = read_u64(in);
  std::string mtext(mlen, '\0');
  in.read(mtext.data(), static_cast<std::streamsize>(mlen));
  if (!in) throw std::runtime_error("checkpoint " + path + ": truncated manifest");
  nlohmann::json manifest = nlohmann::json::parse(mtext);

  ModelConfig cfg = ModelConfig::from_json(manifest.at("config"));
  Vocab vocab = Vocab::from_tokens(manifest.at("vocab").get<std::vector<std::string>>());
  Model model(cfg, std::move(vocab), /*seed=*/0);

  std::size_t loaded = 0;
  for (const auto& entry : manifest.at("params")) {
    const std::string name = entry.at("name").get<std::string>();
    Parameter* p = model.find_parameter(name);
    if (!p) throw std::runtime_error("checkpoint " + path + ": unknown parameter '" + name + "'");
    const std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
    if (shape != p->value.shape)
      throw std::runtime_error("checkpoint " + path + ": parameter '" + name + "' has shape " +
                               shape_str(shape) + ", model expects " + shape_str(p->value.shape));
    read_doubles(in, *p->value.data);
    ++loaded;
  }
  if (!in) throw std::runtime_error("checkpoint " + path + ": truncated blob");
  if (loaded != model.params_.size())
    throw std::runtime_error("checkpoint " + path + ": has " + std::to_string(loaded) +
                             " parameters, model expects " + std::to_string(model.params_.size()));
  return model;
}

}  // namespace umie
