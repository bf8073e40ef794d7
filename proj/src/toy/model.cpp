#include "eatt/toy/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "eatt/binarize.hpp"
#include "eatt/error.hpp"
#include "eatt/ops.hpp"
#include "eatt/random.hpp"

namespace eatt::toy {

std::string_view to_string(Role role) {
  switch (role) {
    case Role::EncoderSelf: return "encoder-self";
    case Role::DecoderSelf: return "decoder-self";
    case Role::DecoderCross: return "decoder-cross";
  }
  return "?";
}

AttentionKind& RoleKinds::operator[](Role role) {
  switch (role) {
    case Role::EncoderSelf: return encoder_self;
    case Role::DecoderSelf: return decoder_self;
    case Role::DecoderCross: break;
  }
  return decoder_cross;
}

AttentionKind RoleKinds::operator[](Role role) const { return const_cast<RoleKinds&>(*this)[role]; }

RoleKinds parse_role_kinds(std::string_view spec, RoleKinds base) {
  RoleKinds out = base;
  std::size_t start = 0;
  while (start <= spec.size()) {
    std::size_t end = spec.find(',', start);
    if (end == std::string_view::npos) end = spec.size();
    const std::string_view item = spec.substr(start, end - start);
    start = end + 1;
    if (item.empty()) throw FormatError("attention roles: empty entry in '" + std::string(spec) + "'");

    const std::size_t eq = item.find('=');
    const std::string_view role = eq == std::string_view::npos ? "all" : item.substr(0, eq);
    const AttentionKind kind = parse_attention_kind(eq == std::string_view::npos ? item : item.substr(eq + 1));
    if (role == "all") {
      out.encoder_self = out.decoder_self = out.decoder_cross = kind;
    } else if (role == "self") {
      out.encoder_self = out.decoder_self = kind;
    } else if (role == "cross" || role == "decoder-cross" || role == "dec-cross") {
      out.decoder_cross = kind;
    } else if (role == "encoder-self" || role == "enc-self") {
      out.encoder_self = kind;
    } else if (role == "decoder-self" || role == "dec-self") {
      out.decoder_self = kind;
    } else {
      throw FormatError("attention roles: unknown role '" + std::string(role) + "'");
    }
    if (end == spec.size()) break;
  }
  return out;
}

std::string format_role_kinds(const RoleKinds& k) {
  return "encoder-self=" + std::string(to_string(k.encoder_self)) +
         ",decoder-self=" + std::string(to_string(k.decoder_self)) +
         ",decoder-cross=" + std::string(to_string(k.decoder_cross));
}

bool ModelConfig::uses_eatt() const {
  return attention.encoder_self == AttentionKind::EAtt || attention.decoder_self == AttentionKind::EAtt ||
         attention.decoder_cross == AttentionKind::EAtt;
}

void ModelConfig::validate() const {
  if (d == 0 || layers == 0) throw DomainError("model: d and layers must be positive");
  if (heads == 0 || d % heads != 0)
    throw DimensionError("model: d = " + std::to_string(d) + " is not divisible by " + std::to_string(heads) +
                         " heads");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw DomainError("model: dropout must lie in [0, 1)");
  if (!std::isfinite(tau) || !std::isfinite(shift_init)) throw DomainError("model: tau and shift_init must be finite");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"d", c.d},
       {"layers", c.layers},
       {"heads", c.heads},
       {"ffn_dim", c.ffn_dim},
       {"dropout", c.dropout},
       {"attention",
        {{"encoder-self", to_string(c.attention.encoder_self)},
         {"decoder-self", to_string(c.attention.decoder_self)},
         {"decoder-cross", to_string(c.attention.decoder_cross)}}},
       {"tau", c.tau},
       {"shift_init", c.shift_init}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  for (const auto& [key, value] : j.items()) {
    if (key == "d")
      c.d = value.get<std::size_t>();
    else if (key == "layers")
      c.layers = value.get<std::size_t>();
    else if (key == "heads")
      c.heads = value.get<std::size_t>();
    else if (key == "ffn_dim")
      c.ffn_dim = value.get<std::size_t>();
    else if (key == "dropout")
      c.dropout = value.get<double>();
    else if (key == "tau")
      c.tau = value.get<double>();
    else if (key == "shift_init")
      c.shift_init = value.get<double>();
    else if (key == "attention") {
      if (value.is_string()) {
        c.attention = parse_role_kinds(value.get<std::string>(), c.attention);
      } else {
        for (const auto& [role, kind] : value.items())
          c.attention = parse_role_kinds(role + "=" + kind.get<std::string>(), c.attention);
      }
    } else {
      throw FormatError("model config: unknown key '" + key + "'");
    }
  }
}

Batch make_batch(std::span<const Example> examples, std::span<const std::size_t> indices) {
  if (indices.empty()) throw DegenerateError("make_batch: empty batch");
  Batch b;
  b.size = indices.size();
  for (std::size_t i : indices) {
    const Example& ex = examples[i];
    b.src_len = std::max(b.src_len, ex.source.size());
    b.tgt_len = std::max(b.tgt_len, ex.target.size() + 1);
  }
  b.source.assign(b.size * b.src_len, kPad);
  b.decoder_in.assign(b.size * b.tgt_len, kPad);
  b.decoder_out.assign(b.size * b.tgt_len, kPad);
  for (std::size_t r = 0; r < b.size; ++r) {
    const Example& ex = examples[indices[r]];
    std::copy(ex.source.begin(), ex.source.end(), b.source.begin() + static_cast<std::ptrdiff_t>(r * b.src_len));
    int* in = b.decoder_in.data() + r * b.tgt_len;
    int* out = b.decoder_out.data() + r * b.tgt_len;
    in[0] = kBos;
    for (std::size_t t = 0; t < ex.target.size(); ++t) {
      in[t + 1] = ex.target[t];
      out[t] = ex.target[t];
    }
    out[ex.target.size()] = kEos;
    b.source_lengths.push_back(ex.source.size());
    b.target_lengths.push_back(ex.target.size() + 1);
  }
  return b;
}

Batch make_batch(std::span<const Example> examples) {
  std::vector<std::size_t> idx(examples.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return make_batch(examples, idx);
}

namespace {

using Bound = std::map<std::string, Var<float>>;
constexpr float kNegInf = -std::numeric_limits<float>::infinity();

const Var<float>& param(const Bound& p, const std::string& name) {
  auto it = p.find(name);
  if (it == p.end()) throw ContractError("toy model: parameter " + name + " not bound");
  return it->second;
}

std::vector<const char*> attention_param_names(AttentionKind kind) {
  switch (kind) {
    case AttentionKind::Vanilla:
    case AttentionKind::EAtt: return {"w_q", "w_k", "w_v"};
    case AttentionKind::Dense: return {"w1", "w2", "w_v"};
    case AttentionKind::RandInit: return {"r", "w_v"};
  }
  return {};
}

std::string layer_prefix(const char* stack, std::size_t i) { return std::string(stack) + "." + std::to_string(i); }

Tensor<float> positions(std::size_t batch, std::size_t len, std::size_t d) {
  Tensor<float> pe(Shape{batch * len, d});
  for (std::size_t t = 0; t < len; ++t)
    for (std::size_t c = 0; c < d; ++c) {
      const double freq = std::pow(10000.0, -static_cast<double>(c - c % 2) / static_cast<double>(d));
      const double v = c % 2 == 0 ? std::sin(static_cast<double>(t) * freq) : std::cos(static_cast<double>(t) * freq);
      for (std::size_t b = 0; b < batch; ++b) pe.at(b * len + t, c) = static_cast<float>(v);
    }
  return pe;
}

// [B, l1, l2] with -inf at key positions beyond each example's length.
Tensor<float> key_padding_mask(std::span<const std::size_t> lengths, std::size_t l1, std::size_t l2) {
  Tensor<float> m(Shape{lengths.size(), l1, l2});
  for (std::size_t b = 0; b < lengths.size(); ++b)
    for (std::size_t i = 0; i < l1; ++i)
      for (std::size_t j = lengths[b]; j < l2; ++j) m[(b * l1 + i) * l2 + j] = kNegInf;
  return m;
}

}  // namespace

struct ToyModel::Encoded {
  std::size_t batch = 0;
  std::size_t len = 0;
  std::vector<std::size_t> lengths;
  Var<float> out;       // [B, Ls, d], final-normalised
  Var<float> out_bits;  // shared E-ATT key side; valid only when cross is E-ATT
};

ToyModel::ToyModel(const ModelConfig& config, int vocab_size, std::size_t max_len, std::mt19937_64& rng)
    : config_(config), vocab_(vocab_size), max_len_(max_len) {
  config_.validate();
  if (vocab_ <= kFirstSymbol) throw DomainError("toy model: vocab_size too small");
  const std::size_t d = config_.d;
  const ParamMap shapes = expected_shapes();

  auto uniform_fill = [&](const std::string& name, double bound) {
    Tensor<float> t = shapes.at(name);
    for (auto& x : t.data()) x = static_cast<float>(uniform(rng, -bound, bound));
    params_[name] = std::move(t);
  };
  auto const_fill = [&](const std::string& name, float value) {
    Tensor<float> t = shapes.at(name);
    for (auto& x : t.data()) x = value;
    params_[name] = std::move(t);
  };
  auto attention = [&](const std::string& prefix, AttentionKind kind) {
    AttentionConfig ac{kind, d, config_.heads, max_len_, config_.tau};
    auto variant = AttentionVariant<float>::init(ac, rng);
    for (auto& [name, t] : variant.params) params_[prefix + "." + name] = std::move(t);
    uniform_fill(prefix + ".w_o", 1.0 / std::sqrt(static_cast<double>(d)));
  };
  auto norm = [&](const std::string& prefix) {
    const_fill(prefix + ".g", 1.0f);
    const_fill(prefix + ".b", 0.0f);
  };
  auto ffn = [&](const std::string& prefix) {
    uniform_fill(prefix + ".w1", 1.0 / std::sqrt(static_cast<double>(d)));
    const_fill(prefix + ".b1", 0.0f);
    uniform_fill(prefix + ".w2", 1.0 / std::sqrt(static_cast<double>(config_.effective_ffn_dim())));
    const_fill(prefix + ".b2", 0.0f);
  };
  const float shift = static_cast<float>(config_.shift_init);
  const RoleKinds& k = config_.attention;

  const double embed_bound = std::sqrt(3.0 / static_cast<double>(d));
  uniform_fill("src_embed", embed_bound);
  uniform_fill("tgt_embed", embed_bound);
  for (std::size_t i = 0; i < config_.layers; ++i) {
    const std::string p = layer_prefix("enc", i);
    norm(p + ".ln1");
    attention(p + ".self", k.encoder_self);
    if (k.encoder_self == AttentionKind::EAtt) const_fill(p + ".self.shift", shift);
    norm(p + ".ln2");
    ffn(p + ".ffn");
  }
  norm("enc.ln");
  if (k.decoder_cross == AttentionKind::EAtt) const_fill("dec.cross_key_shift", shift);
  for (std::size_t i = 0; i < config_.layers; ++i) {
    const std::string p = layer_prefix("dec", i);
    norm(p + ".ln1");
    attention(p + ".self", k.decoder_self);
    if (k.decoder_self == AttentionKind::EAtt) const_fill(p + ".self.shift", shift);
    norm(p + ".ln2");
    attention(p + ".cross", k.decoder_cross);
    if (k.decoder_cross == AttentionKind::EAtt) const_fill(p + ".cross.shift_q", shift);
    norm(p + ".ln3");
    ffn(p + ".ffn");
  }
  norm("dec.ln");
  uniform_fill("out.w", 1.0 / std::sqrt(static_cast<double>(d)));
  const_fill("out.b", 0.0f);
}

ToyModel::ToyModel(const ModelConfig& config, int vocab_size, std::size_t max_len, ParamMap params)
    : config_(config), vocab_(vocab_size), max_len_(max_len), params_(std::move(params)) {
  config_.validate();
  const ParamMap shapes = expected_shapes();
  if (shapes.size() != params_.size())
    throw DimensionError("toy model: expected " + std::to_string(shapes.size()) + " parameters, got " +
                         std::to_string(params_.size()));
  for (const auto& [name, t] : shapes) {
    auto it = params_.find(name);
    if (it == params_.end()) throw DimensionError("toy model: missing parameter " + name);
    if (it->second.shape() != t.shape())
      throw DimensionError("toy model: parameter " + name + " has shape " + shape_str(it->second.shape()) +
                           ", expected " + shape_str(t.shape()));
  }
}

ParamMap ToyModel::expected_shapes() const {
  const std::size_t d = config_.d;
  const std::size_t f = config_.effective_ffn_dim();
  const std::size_t v = static_cast<std::size_t>(vocab_);
  ParamMap s;
  auto put = [&](const std::string& name, Shape shape) { s[name] = Tensor<float>(std::move(shape)); };
  auto attention = [&](const std::string& prefix, AttentionKind kind) {
    for (const char* n : attention_param_names(kind)) {
      const std::string name = n;
      if (name == "w2")
        put(prefix + ".w2", {d, max_len_});
      else if (name == "r")
        put(prefix + ".r", {max_len_, max_len_});
      else
        put(prefix + "." + name, {d, d});
    }
    put(prefix + ".w_o", {d, d});
  };
  auto norm = [&](const std::string& prefix) {
    put(prefix + ".g", {d});
    put(prefix + ".b", {d});
  };
  auto ffn = [&](const std::string& prefix) {
    put(prefix + ".w1", {d, f});
    put(prefix + ".b1", {f});
    put(prefix + ".w2", {f, d});
    put(prefix + ".b2", {d});
  };
  const RoleKinds& k = config_.attention;
  put("src_embed", {v, d});
  put("tgt_embed", {v, d});
  for (std::size_t i = 0; i < config_.layers; ++i) {
    const std::string p = layer_prefix("enc", i);
    norm(p + ".ln1");
    attention(p + ".self", k.encoder_self);
    if (k.encoder_self == AttentionKind::EAtt) put(p + ".self.shift", {d});
    norm(p + ".ln2");
    ffn(p + ".ffn");
  }
  norm("enc.ln");
  if (k.decoder_cross == AttentionKind::EAtt) put("dec.cross_key_shift", {d});
  for (std::size_t i = 0; i < config_.layers; ++i) {
    const std::string p = layer_prefix("dec", i);
    norm(p + ".ln1");
    attention(p + ".self", k.decoder_self);
    if (k.decoder_self == AttentionKind::EAtt) put(p + ".self.shift", {d});
    norm(p + ".ln2");
    attention(p + ".cross", k.decoder_cross);
    if (k.decoder_cross == AttentionKind::EAtt) put(p + ".cross.shift_q", {d});
    norm(p + ".ln3");
    ffn(p + ".ffn");
  }
  norm("dec.ln");
  put("out.w", {d, v});
  put("out.b", {v});
  return s;
}

std::map<std::string, Var<float>> ToyModel::bind(Tape<float>& tape, bool trainable) const {
  Bound b;
  for (const auto& [name, t] : params_) b.emplace(name, trainable ? tape.variable(t) : tape.constant(t));
  return b;
}

namespace {

struct Sublayers {
  const ModelConfig& cfg;
  std::size_t max_len;
  const Bound& p;
  const ForwardOptions& opts;

  Var<float> norm(const Var<float>& x, const std::string& prefix) const {
    return layer_norm(x, param(p, prefix + ".g"), param(p, prefix + ".b"));
  }

  Var<float> drop(const Var<float>& x) const {
    if (!opts.training || cfg.dropout == 0.0) return x;
    if (!opts.rng) throw ContractError("toy model: dropout needs an rng");
    return dropout(x, cfg.dropout, *opts.rng);
  }

  BoundAttention<float> attention(const std::string& prefix, AttentionKind kind) const {
    BoundAttention<float> a;
    a.config = AttentionConfig{kind, cfg.d, cfg.heads, max_len, cfg.tau};
    for (const char* n : attention_param_names(kind)) a.params.emplace(n, param(p, prefix + "." + n));
    return a;
  }

  Var<float> bits(const Var<float>& normed, const std::string& shift) const {
    return binarize(add_row(normed, param(p, shift)), BinarizeSpec{cfg.tau});
  }

  void tap(const char* label, std::size_t layer, bool encoder_side, const Var<float>& b) const {
    if (opts.taps) opts.taps->push_back({label, static_cast<int>(layer + 1), encoder_side, b});
  }

  Var<float> residual(const Var<float>& x, const Var<float>& attended, const std::string& prefix) const {
    return add(x, drop(matmul(attended, param(p, prefix + ".w_o"))));
  }

  Var<float> ffn(const Var<float>& x, const std::string& prefix) const {
    const Var<float> h = relu(add_row(matmul(x, param(p, prefix + ".w1")), param(p, prefix + ".b1")));
    return add_row(matmul(h, param(p, prefix + ".w2")), param(p, prefix + ".b2"));
  }
};

}  // namespace

ToyModel::Encoded ToyModel::encode(Tape<float>& tape, const Bound& p, const Batch& batch,
                                   const ForwardOptions& opts) const {
  const std::size_t d = config_.d;
  const std::size_t B = batch.size;
  const std::size_t L = batch.src_len;
  Sublayers s{config_, max_len_, p, opts};

  Var<float> x = embedding(param(p, "src_embed"), std::span<const int>(batch.source));
  x = add(scale(x, std::sqrt(static_cast<float>(d))), tape.constant(positions(B, L, d)));
  x = s.drop(reshape(x, Shape{B, L, d}));

  const Tensor<float> mask = key_padding_mask(batch.source_lengths, L, L);
  const AttentionKind kind = config_.attention.encoder_self;
  for (std::size_t i = 0; i < config_.layers; ++i) {
    const std::string pre = layer_prefix("enc", i);
    const Var<float> h = s.norm(x, pre + ".ln1");
    AttentionInputs<float> in{h, h, {}, {}, &mask};
    if (kind == AttentionKind::EAtt) {
      in.query_bin = in.memory_bin = s.bits(h, pre + ".self.shift");
      s.tap("encoder-self", i, true, in.query_bin);
    }
    x = s.residual(x, attend(s.attention(pre + ".self", kind), in).output, pre + ".self");
    x = add(x, s.drop(s.ffn(s.norm(x, pre + ".ln2"), pre + ".ffn")));
  }

  Encoded enc;
  enc.batch = B;
  enc.len = L;
  enc.lengths = batch.source_lengths;
  enc.out = s.norm(x, "enc.ln");
  if (config_.attention.decoder_cross == AttentionKind::EAtt) enc.out_bits = s.bits(enc.out, "dec.cross_key_shift");
  return enc;
}

Var<float> ToyModel::decode(Tape<float>& tape, const Bound& p, const Encoded& enc, std::span<const int> decoder_in,
                            std::size_t T, const ForwardOptions& opts) const {
  const std::size_t d = config_.d;
  const std::size_t B = enc.batch;
  Sublayers s{config_, max_len_, p, opts};

  Var<float> x = embedding(param(p, "tgt_embed"), decoder_in);
  x = add(scale(x, std::sqrt(static_cast<float>(d))), tape.constant(positions(B, T, d)));
  x = s.drop(reshape(x, Shape{B, T, d}));

  const Tensor<float> self_mask = causal_mask<float>(T, T);
  const Tensor<float> cross_mask = key_padding_mask(enc.lengths, T, enc.len);
  const RoleKinds& k = config_.attention;
  for (std::size_t i = 0; i < config_.layers; ++i) {
    const std::string pre = layer_prefix("dec", i);

    const Var<float> h = s.norm(x, pre + ".ln1");
    AttentionInputs<float> self_in{h, h, {}, {}, &self_mask};
    if (k.decoder_self == AttentionKind::EAtt) {
      self_in.query_bin = self_in.memory_bin = s.bits(h, pre + ".self.shift");
      s.tap("decoder-self", i, false, self_in.query_bin);
    }
    x = s.residual(x, attend(s.attention(pre + ".self", k.decoder_self), self_in).output, pre + ".self");

    const Var<float> hq = s.norm(x, pre + ".ln2");
    AttentionInputs<float> cross_in{hq, enc.out, {}, {}, &cross_mask};
    if (k.decoder_cross == AttentionKind::EAtt) {
      cross_in.query_bin = s.bits(hq, pre + ".cross.shift_q");
      cross_in.memory_bin = enc.out_bits;
      s.tap("decoder-cross-query", i, false, cross_in.query_bin);
      s.tap("decoder-cross-key", i, true, enc.out_bits);
    }
    x = s.residual(x, attend(s.attention(pre + ".cross", k.decoder_cross), cross_in).output, pre + ".cross");

    x = add(x, s.drop(s.ffn(s.norm(x, pre + ".ln3"), pre + ".ffn")));
  }
  const Var<float> y = reshape(s.norm(x, "dec.ln"), Shape{B * T, d});
  return add_row(matmul(y, param(p, "out.w")), param(p, "out.b"));
}

Var<float> ToyModel::forward(Tape<float>& tape, const Bound& bound, const Batch& batch,
                             const ForwardOptions& opts) const {
  const Encoded enc = encode(tape, bound, batch, opts);
  return decode(tape, bound, enc, batch.decoder_in, batch.tgt_len, opts);
}

std::vector<int> ToyModel::greedy_decode(const Batch& batch, std::size_t max_steps) const {
  Tape<float> tape;
  const Bound bound = bind(tape, false);
  const ForwardOptions opts;
  const Encoded enc = encode(tape, bound, batch, opts);
  const std::size_t B = batch.size;
  const std::size_t V = static_cast<std::size_t>(vocab_);

  std::vector<int> out(B * max_steps, kPad);
  std::vector<int> prefix;
  for (std::size_t t = 0; t < max_steps; ++t) {
    // Decoder input of length t + 1: bos followed by the tokens emitted so far.
    prefix.assign(B * (t + 1), kBos);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t u = 0; u < t; ++u) prefix[b * (t + 1) + u + 1] = out[b * max_steps + u];
    const Var<float> logits = decode(tape, bound, enc, prefix, t + 1, opts);
    const Tensor<float>& lv = logits.value();
    for (std::size_t b = 0; b < B; ++b) {
      const float* row = lv.data().data() + (b * (t + 1) + t) * V;
      out[b * max_steps + t] = static_cast<int>(std::max_element(row, row + V) - row);
    }
  }
  return out;
}

}  // namespace eatt::toy
