#pragma once

#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "emodyn/context.hpp"
#include "emodyn/tensor.hpp"

namespace emodyn {

enum class Activation { Relu, Gelu };

struct EncoderConfig {
    std::size_t vocab_size = 0;
    std::size_t d_model = 64;
    std::size_t n_heads = 4;
    std::size_t n_layers = 2;
    std::size_t d_hidden = 256;
    std::size_t max_len = 128;
    std::size_t n_segments = 2;
    Activation activation = Activation::Relu;

    std::size_t d_head() const { return d_model / n_heads; }
    void validate() const;  // d_model divisible by n_heads, nonzero dims

    std::string to_json_string() const;
    static EncoderConfig from_json_string(const std::string& json);
};

struct AttentionParams {
    std::vector<Tensor> w_query, w_key, w_value;  // per head, [d_model x d_head]
    Tensor w_out;                                 // [d_model x d_model]
    Tensor ln_gamma, ln_beta;
};

struct LayerParams {
    AttentionParams attention;
    Tensor w_ff1, b_ff1;  // [d_model x d_hidden], [d_hidden]
    Tensor w_ff2, b_ff2;  // [d_hidden x d_model], [d_model]
    Tensor ffn_ln_gamma, ffn_ln_beta;
};

/// Parameters of one encoder stack. The token/segment tables and embedding
/// LayerNorm exist only for token-input encoders; the H-BERT backbone runs
/// on pre-computed features and keeps just position embeddings.
struct EncoderParams {
    EncoderConfig config;
    bool token_inputs = true;
    Tensor token_embeddings;     // [vocab x d_model]
    Tensor position_embeddings;  // [max_len x d_model]
    Tensor segment_embeddings;   // [n_segments x d_model]
    Tensor emb_ln_gamma, emb_ln_beta;
    std::vector<LayerParams> layers;

    static EncoderParams init(const EncoderConfig& config, std::mt19937_64& rng,
                              bool token_inputs = true);
    /// Enumerates every parameter as (name, tensor, weight-decay eligible).
    void visit(const std::string& prefix,
               const std::function<void(const std::string&, Tensor&, bool)>& fn);
};

/// Sum of token, position, and segment embeddings, then LayerNorm.
/// `pad_to` > length appends [PAD] positions (masked by the caller).
Tensor embed(const PackedSequence& seq, const EncoderParams& params, std::size_t pad_to = 0);

/// Eq.-style multi-head self-attention: per head softmax(QWq (KWk)^T / sqrt(d_k)) VWv,
/// heads concatenated and projected. `valid` marks non-pad positions; masked
/// columns get -1e9 before the softmax. Bidirectional, no causal mask.
Tensor multi_head_attention(const Tensor& x, const LayerParams& layer,
                            const std::vector<bool>& valid, std::size_t n_heads);

/// Post-LN block: y = LN(x + MHA(x)); out = LN(y + FFN(y)).
Tensor transformer_block(const Tensor& x, const LayerParams& layer,
                         const std::vector<bool>& valid, const EncoderConfig& config);

/// All blocks over embed(seq); row 0 (the [CLS] position) of the last layer.
Tensor encode_cls(const PackedSequence& seq, const EncoderParams& params,
                  std::size_t pad_to = 0);

/// H-BERT backbone: features form a pre-embedded sequence with the target
/// last; returns the last valid position of the final layer. Entries past
/// `n_valid` (0 = all valid) are pad slots.
Tensor backbone_encode(const std::vector<Tensor>& features, const EncoderParams& params,
                       std::size_t n_valid = 0);

}  // namespace emodyn
