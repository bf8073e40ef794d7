#pragma once

#include <cstddef>
#include <map>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "eatt/attention.hpp"
#include "eatt/tape.hpp"
#include "eatt/tensor.hpp"
#include "eatt/toy/task.hpp"

namespace eatt::toy {

enum class Role { EncoderSelf, DecoderSelf, DecoderCross };

std::string_view to_string(Role role);  // encoder-self, decoder-self, decoder-cross

struct RoleKinds {
  AttentionKind encoder_self = AttentionKind::Vanilla;
  AttentionKind decoder_self = AttentionKind::Vanilla;
  AttentionKind decoder_cross = AttentionKind::Vanilla;

  AttentionKind& operator[](Role role);
  AttentionKind operator[](Role role) const;
  bool operator==(const RoleKinds&) const = default;
};

// Comma-separated role=kind assignments applied left to right on top of
// `base`. Roles: all, self, cross, encoder-self, decoder-self,
// decoder-cross (enc-self, dec-self, dec-cross also accepted). A bare kind
// means all=kind. Throws FormatError on anything else.
RoleKinds parse_role_kinds(std::string_view spec, RoleKinds base = {});
std::string format_role_kinds(const RoleKinds& kinds);

struct ModelConfig {
  std::size_t d = 32;
  std::size_t layers = 2;
  std::size_t heads = 2;
  std::size_t ffn_dim = 0;  // 0 means 4 * d
  double dropout = 0.0;
  RoleKinds attention;
  double tau = 1.0;
  // Initial value of the per-channel shift added to the layer-normalised
  // input before binarization.
  double shift_init = 0.5;

  std::size_t effective_ffn_dim() const { return ffn_dim == 0 ? 4 * d : ffn_dim; }
  bool uses_eatt() const;
  void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

// Right-padded token matrices for one batch. The decoder reads
// [bos, target...] and predicts [target..., eos]; padding is kPad.
struct Batch {
  std::size_t size = 0;
  std::size_t src_len = 0;  // padded source length
  std::size_t tgt_len = 0;  // padded decoder length (longest target + 1)
  std::vector<int> source;  // [size * src_len]
  std::vector<int> decoder_in;
  std::vector<int> decoder_out;
  std::vector<std::size_t> source_lengths;
  std::vector<std::size_t> target_lengths;  // including eos
};

Batch make_batch(std::span<const Example> examples, std::span<const std::size_t> indices);
Batch make_batch(std::span<const Example> examples);

// One binarized representation seen during a forward pass.
struct BinaryTap {
  std::string label;  // encoder-self, decoder-self, decoder-cross-query, decoder-cross-key
  int layer = 1;
  bool encoder_side = false;  // rows indexed by source positions
  Var<float> bits;            // [B, L, d]
};

struct ForwardOptions {
  bool training = false;
  std::mt19937_64* rng = nullptr;       // dropout; required when training with dropout > 0
  std::vector<BinaryTap>* taps = nullptr;
};

using ParamMap = std::map<std::string, Tensor<float>>;

// Pre-norm encoder-decoder Transformer with a pluggable attention variant per
// role. Each sublayer is x + W_O attend(LN(x)); E-ATT modules binarize
// LN(x) + shift with a learned per-channel shift. The encoder output is
// binarized once per pass and shared as the key side of every decoder
// cross-attention module.
class ToyModel {
 public:
  ToyModel() = default;
  ToyModel(const ModelConfig& config, int vocab_size, std::size_t max_len, std::mt19937_64& rng);
  // Adopts existing parameters; throws DimensionError when the set or a
  // shape does not match the configuration.
  ToyModel(const ModelConfig& config, int vocab_size, std::size_t max_len, ParamMap params);

  const ModelConfig& config() const { return config_; }
  int vocab_size() const { return vocab_; }
  std::size_t max_len() const { return max_len_; }
  const ParamMap& params() const { return params_; }
  ParamMap& params() { return params_; }

  // Places every parameter on `tape`, as variables when trainable.
  std::map<std::string, Var<float>> bind(Tape<float>& tape, bool trainable) const;

  // Teacher-forced logits [B * tgt_len, vocab].
  Var<float> forward(Tape<float>& tape, const std::map<std::string, Var<float>>& bound, const Batch& batch,
                     const ForwardOptions& opts) const;

  // Greedy decoding of up to max_steps tokens per example (generation past
  // eos continues but is ignored by callers). Returns [B * max_steps] ids.
  std::vector<int> greedy_decode(const Batch& batch, std::size_t max_steps) const;

 private:
  struct Encoded;

  Encoded encode(Tape<float>& tape, const std::map<std::string, Var<float>>& p, const Batch& batch,
                 const ForwardOptions& opts) const;
  Var<float> decode(Tape<float>& tape, const std::map<std::string, Var<float>>& p, const Encoded& enc,
                    std::span<const int> decoder_in, std::size_t tgt_len, const ForwardOptions& opts) const;
  ParamMap expected_shapes() const;

  ModelConfig config_;
  int vocab_ = 0;
  std::size_t max_len_ = 0;
  ParamMap params_;
};

}  // namespace eatt::toy
