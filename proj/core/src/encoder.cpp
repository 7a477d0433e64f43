#include "emodyn/encoder.hpp"

#include <cmath>

#include <json.hpp>

#include "emodyn/errors.hpp"

namespace emodyn {

namespace {

constexpr double kInitStd = 0.02;
constexpr double kMaskScore = -1e9;

Tensor mask_tensor(const std::vector<bool>& valid) {
    const std::size_t len = valid.size();
    Tensor mask({len, len});
    bool any_valid = false;
    for (std::size_t j = 0; j < len; ++j) {
        any_valid = any_valid || valid[j];
        if (!valid[j]) {
            for (std::size_t i = 0; i < len; ++i) mask(i, j) = kMaskScore;
        }
    }
    if (!any_valid) throw ContractError("attention: all positions are padding");
    return mask;
}

Tensor feed_forward(const Tensor& x, const LayerParams& layer, Activation activation) {
    Tensor h = add_bias_row(matmul(x, layer.w_ff1), layer.b_ff1);
    h = activation == Activation::Gelu ? gelu(h) : relu(h);
    return add_bias_row(matmul(h, layer.w_ff2), layer.b_ff2);
}

Tensor run_blocks(Tensor x, const EncoderParams& params, const std::vector<bool>& valid) {
    for (const LayerParams& layer : params.layers) {
        x = transformer_block(x, layer, valid, params.config);
    }
    return x;
}

}  // namespace

void EncoderConfig::validate() const {
    if (vocab_size == 0 || d_model == 0 || n_heads == 0 || n_layers == 0 ||
        d_hidden == 0 || max_len == 0) {
        throw ContractError("encoder config: all dimensions must be nonzero");
    }
    if (d_model % n_heads != 0) {
        throw ContractError("encoder config: d_model (" + std::to_string(d_model) +
                            ") must be divisible by n_heads (" + std::to_string(n_heads) +
                            ")");
    }
}

std::string EncoderConfig::to_json_string() const {
    nlohmann::ordered_json j;
    j["vocab_size"] = vocab_size;
    j["d_model"] = d_model;
    j["n_heads"] = n_heads;
    j["n_layers"] = n_layers;
    j["d_hidden"] = d_hidden;
    j["max_len"] = max_len;
    j["n_segments"] = n_segments;
    j["activation"] = activation == Activation::Gelu ? "gelu" : "relu";
    return j.dump();
}

EncoderConfig EncoderConfig::from_json_string(const std::string& json) {
    nlohmann::json j = nlohmann::json::parse(json, nullptr, false);
    if (j.is_discarded()) throw LoadError("encoder config: invalid JSON");
    EncoderConfig cfg;
    cfg.vocab_size = j.value("vocab_size", cfg.vocab_size);
    cfg.d_model = j.value("d_model", cfg.d_model);
    cfg.n_heads = j.value("n_heads", cfg.n_heads);
    cfg.n_layers = j.value("n_layers", cfg.n_layers);
    cfg.d_hidden = j.value("d_hidden", cfg.d_hidden);
    cfg.max_len = j.value("max_len", cfg.max_len);
    cfg.n_segments = j.value("n_segments", cfg.n_segments);
    const std::string act = j.value("activation", "relu");
    if (act == "gelu") {
        cfg.activation = Activation::Gelu;
    } else if (act == "relu") {
        cfg.activation = Activation::Relu;
    } else {
        throw LoadError("encoder config: unknown activation '" + act + "'");
    }
    cfg.validate();
    return cfg;
}

EncoderParams EncoderParams::init(const EncoderConfig& config, std::mt19937_64& rng,
                                  bool token_inputs) {
    config.validate();
    EncoderParams p;
    p.config = config;
    p.token_inputs = token_inputs;
    if (token_inputs) {
        if (config.vocab_size == 0) {
            throw ContractError("encoder init: vocab_size required for token inputs");
        }
        p.token_embeddings = Tensor::randn({config.vocab_size, config.d_model}, kInitStd, rng);
        p.segment_embeddings =
            Tensor::randn({config.n_segments, config.d_model}, kInitStd, rng);
        p.emb_ln_gamma = Tensor({config.d_model}, 1.0, true);
        p.emb_ln_beta = Tensor({config.d_model}, 0.0, true);
    }
    p.position_embeddings = Tensor::randn({config.max_len, config.d_model}, kInitStd, rng);
    const std::size_t d_head = config.d_head();
    for (std::size_t l = 0; l < config.n_layers; ++l) {
        LayerParams layer;
        for (std::size_t h = 0; h < config.n_heads; ++h) {
            layer.attention.w_query.push_back(
                Tensor::randn({config.d_model, d_head}, kInitStd, rng));
            layer.attention.w_key.push_back(
                Tensor::randn({config.d_model, d_head}, kInitStd, rng));
            layer.attention.w_value.push_back(
                Tensor::randn({config.d_model, d_head}, kInitStd, rng));
        }
        layer.attention.w_out = Tensor::randn({config.d_model, config.d_model}, kInitStd, rng);
        layer.attention.ln_gamma = Tensor({config.d_model}, 1.0, true);
        layer.attention.ln_beta = Tensor({config.d_model}, 0.0, true);
        layer.w_ff1 = Tensor::randn({config.d_model, config.d_hidden}, kInitStd, rng);
        layer.b_ff1 = Tensor({config.d_hidden}, 0.0, true);
        layer.w_ff2 = Tensor::randn({config.d_hidden, config.d_model}, kInitStd, rng);
        layer.b_ff2 = Tensor({config.d_model}, 0.0, true);
        layer.ffn_ln_gamma = Tensor({config.d_model}, 1.0, true);
        layer.ffn_ln_beta = Tensor({config.d_model}, 0.0, true);
        p.layers.push_back(std::move(layer));
    }
    return p;
}

void EncoderParams::visit(const std::string& prefix,
                          const std::function<void(const std::string&, Tensor&, bool)>& fn) {
    if (token_inputs) {
        fn(prefix + ".tok_emb", token_embeddings, true);
        fn(prefix + ".seg_emb", segment_embeddings, true);
        fn(prefix + ".emb_ln.gamma", emb_ln_gamma, false);
        fn(prefix + ".emb_ln.beta", emb_ln_beta, false);
    }
    fn(prefix + ".pos_emb", position_embeddings, true);
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const std::string lp = prefix + ".layer" + std::to_string(l);
        LayerParams& layer = layers[l];
        for (std::size_t h = 0; h < layer.attention.w_query.size(); ++h) {
            const std::string hp = lp + ".attn.h" + std::to_string(h);
            fn(hp + ".wq", layer.attention.w_query[h], true);
            fn(hp + ".wk", layer.attention.w_key[h], true);
            fn(hp + ".wv", layer.attention.w_value[h], true);
        }
        fn(lp + ".attn.wo", layer.attention.w_out, true);
        fn(lp + ".attn.ln.gamma", layer.attention.ln_gamma, false);
        fn(lp + ".attn.ln.beta", layer.attention.ln_beta, false);
        fn(lp + ".ffn.w1", layer.w_ff1, true);
        fn(lp + ".ffn.b1", layer.b_ff1, false);
        fn(lp + ".ffn.w2", layer.w_ff2, true);
        fn(lp + ".ffn.b2", layer.b_ff2, false);
        fn(lp + ".ffn.ln.gamma", layer.ffn_ln_gamma, false);
        fn(lp + ".ffn.ln.beta", layer.ffn_ln_beta, false);
    }
}

Tensor embed(const PackedSequence& seq, const EncoderParams& params, std::size_t pad_to) {
    if (!params.token_inputs) {
        throw ContractError("embed: this encoder takes pre-embedded features");
    }
    std::vector<std::size_t> tokens = seq.token_ids;
    std::vector<std::size_t> segments = seq.segment_ids;
    while (tokens.size() < pad_to) {
        tokens.push_back(Vocab::kPad);
        segments.push_back(0);
    }
    const std::size_t len = tokens.size();
    if (len > params.config.max_len) {
        throw ContractError("embed: sequence of length " + std::to_string(len) +
                            " exceeds max_len " + std::to_string(params.config.max_len));
    }
    std::vector<std::size_t> positions(len);
    for (std::size_t i = 0; i < len; ++i) positions[i] = i;
    Tensor x = add(embedding_lookup(params.token_embeddings, tokens),
                   embedding_lookup(params.position_embeddings, positions));
    x = add(x, embedding_lookup(params.segment_embeddings, segments));
    return layer_norm(x, params.emb_ln_gamma, params.emb_ln_beta);
}

Tensor multi_head_attention(const Tensor& x, const LayerParams& layer,
                            const std::vector<bool>& valid, std::size_t n_heads) {
    if (x.rows() < 1) throw ContractError("attention: empty sequence");
    const Tensor mask = mask_tensor(valid);
    const double inv_sqrt_dk = 1.0 / std::sqrt((double)layer.attention.w_query[0].cols());
    Tensor heads;
    for (std::size_t h = 0; h < n_heads; ++h) {
        Tensor q = matmul(x, layer.attention.w_query[h]);
        Tensor k = matmul(x, layer.attention.w_key[h]);
        Tensor v = matmul(x, layer.attention.w_value[h]);
        Tensor scores = add(scale(matmul_nt(q, k), inv_sqrt_dk), mask);
        Tensor head = matmul(softmax(scores), v);
        heads = h == 0 ? head : concat_last_axis(heads, head);
    }
    return matmul(heads, layer.attention.w_out);
}

Tensor transformer_block(const Tensor& x, const LayerParams& layer,
                         const std::vector<bool>& valid, const EncoderConfig& config) {
    Tensor y = layer_norm(add(x, multi_head_attention(x, layer, valid, config.n_heads)),
                          layer.attention.ln_gamma, layer.attention.ln_beta);
    return layer_norm(add(y, feed_forward(y, layer, config.activation)),
                      layer.ffn_ln_gamma, layer.ffn_ln_beta);
}

Tensor encode_cls(const PackedSequence& seq, const EncoderParams& params,
                  std::size_t pad_to) {
    if (seq.token_ids.empty() || seq.token_ids.front() != Vocab::kCls) {
        throw ContractError("encode_cls: sequence must start with [CLS]");
    }
    Tensor x = embed(seq, params, pad_to);
    std::vector<bool> valid(x.rows(), false);
    for (std::size_t i = 0; i < seq.attention_len; ++i) valid[i] = true;
    return take_row(run_blocks(std::move(x), params, valid), 0);
}

Tensor backbone_encode(const std::vector<Tensor>& features, const EncoderParams& params,
                       std::size_t n_valid) {
    if (features.empty()) throw ContractError("backbone_encode: empty feature window");
    if (n_valid == 0) n_valid = features.size();
    if (n_valid > features.size()) {
        throw ContractError("backbone_encode: n_valid exceeds window size");
    }
    if (features.size() > params.config.max_len) {
        throw ContractError("backbone_encode: window exceeds backbone max_len");
    }
    std::vector<std::size_t> positions(features.size());
    for (std::size_t i = 0; i < features.size(); ++i) positions[i] = i;
    Tensor x = add(stack_rows(features),
                   embedding_lookup(params.position_embeddings, positions));
    std::vector<bool> valid(features.size(), false);
    for (std::size_t i = 0; i < n_valid; ++i) valid[i] = true;
    return take_row(run_blocks(std::move(x), params, valid), n_valid - 1);
}

}  // namespace emodyn
