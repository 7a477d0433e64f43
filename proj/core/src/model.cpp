#include "emodyn/model.hpp"

#include <cmath>

#include <json.hpp>

#include "emodyn/context.hpp"
#include "emodyn/errors.hpp"

namespace emodyn {

namespace {

constexpr double kInitStd = 0.02;

Tensor h_projection(const Tensor& f, const Tensor& w, const Tensor& b) {
    return tanh(add(matmul(f, w), b));
}

}  // namespace

std::string to_string(Topology t) {
    switch (t) {
        case Topology::FBert: return "f_bert";
        case Topology::HBert: return "h_bert";
        case Topology::StBert: return "st_bert";
    }
    return "?";
}

std::string to_string(FusionKind f) {
    switch (f) {
        case FusionKind::Concat: return "concat";
        case FusionKind::Gate: return "gate";
        case FusionKind::Attention: return "attention";
    }
    return "?";
}

std::string to_string(Ablation a) {
    switch (a) {
        case Ablation::None: return "none";
        case Ablation::IntraOnly: return "intra_only";
        case Ablation::InterOnly: return "inter_only";
    }
    return "?";
}

std::size_t ModelConfig::d_repr() const {
    return topology == Topology::StBert ? d_fusion() : encoder.d_model;
}

void ModelConfig::validate() const {
    encoder.validate();
    if (topology == Topology::HBert) {
        backbone.validate();
        if (backbone.d_model != encoder.d_model) {
            throw ContractError(
                "model config: backbone d_model must equal encoder d_model");
        }
        if (backbone.max_len < context_window + 1) {
            throw ContractError("model config: backbone max_len must cover K+1 slots");
        }
    }
    if (ablation != Ablation::None && topology != Topology::StBert) {
        throw ContractError("model config: ablation applies to st_bert only");
    }
}

std::string ModelConfig::to_json_string() const {
    nlohmann::ordered_json j;
    j["topology"] = to_string(topology);
    if (topology == Topology::StBert) {
        j["fusion"] = to_string(fusion);
        j["share_st_encoders"] = share_st_encoders;
        j["ablation"] = to_string(ablation);
    }
    j["context_window"] = context_window;
    j["lowercase"] = lowercase;
    j["context_separators"] = context_separators;
    j["discriminator_bias"] = discriminator_bias;
    j["detach_context_branches"] = detach_context_branches;
    j["encoder"] = nlohmann::ordered_json::parse(encoder.to_json_string());
    if (topology == Topology::HBert) {
        j["backbone"] = nlohmann::ordered_json::parse(backbone.to_json_string());
    }
    return j.dump();
}

ModelConfig ModelConfig::from_json_string(const std::string& json) {
    nlohmann::json j = nlohmann::json::parse(json, nullptr, false);
    if (j.is_discarded()) throw LoadError("model config: invalid JSON");
    ModelConfig cfg;
    const std::string topo = j.value("topology", "f_bert");
    if (topo == "f_bert") cfg.topology = Topology::FBert;
    else if (topo == "h_bert") cfg.topology = Topology::HBert;
    else if (topo == "st_bert") cfg.topology = Topology::StBert;
    else throw LoadError("model config: unknown topology '" + topo + "'");

    const std::string fus = j.value("fusion", "gate");
    if (fus == "concat") cfg.fusion = FusionKind::Concat;
    else if (fus == "gate") cfg.fusion = FusionKind::Gate;
    else if (fus == "attention") cfg.fusion = FusionKind::Attention;
    else throw LoadError("model config: unknown fusion '" + fus + "'");

    const std::string abl = j.value("ablation", "none");
    if (abl == "none") cfg.ablation = Ablation::None;
    else if (abl == "intra_only") cfg.ablation = Ablation::IntraOnly;
    else if (abl == "inter_only") cfg.ablation = Ablation::InterOnly;
    else throw LoadError("model config: unknown ablation '" + abl + "'");

    cfg.context_window = j.value("context_window", cfg.context_window);
    cfg.share_st_encoders = j.value("share_st_encoders", cfg.share_st_encoders);
    cfg.lowercase = j.value("lowercase", cfg.lowercase);
    cfg.context_separators = j.value("context_separators", cfg.context_separators);
    cfg.discriminator_bias = j.value("discriminator_bias", cfg.discriminator_bias);
    cfg.detach_context_branches =
        j.value("detach_context_branches", cfg.detach_context_branches);
    if (j.contains("encoder")) {
        cfg.encoder = EncoderConfig::from_json_string(j["encoder"].dump());
    }
    if (j.contains("backbone")) {
        cfg.backbone = EncoderConfig::from_json_string(j["backbone"].dump());
    }
    cfg.validate();
    return cfg;
}

// ---- fusion ----------------------------------------------------------------

Tensor fuse_concat(const Tensor& f_intra, const Tensor& f_inter, const FusionParams& p) {
    return add(matmul(concat_last_axis(f_intra, f_inter), p.w_concat), p.b_concat);
}

Tensor fuse_gate(const Tensor& f_intra, const Tensor& f_inter, const FusionParams& p) {
    Tensor h_intra = h_projection(f_intra, p.w_intra, p.b_intra);
    Tensor h_inter = h_projection(f_inter, p.w_inter, p.b_inter);
    Tensor z = sigmoid(add(matmul(concat_last_axis(f_intra, f_inter), p.w_gate), p.b_gate));
    return add(hadamard(z, h_intra), hadamard(one_minus(z), h_inter));
}

Tensor fuse_attention(const Tensor& f_intra, const Tensor& f_inter, const FusionParams& p) {
    Tensor h_intra = h_projection(f_intra, p.w_intra, p.b_intra);
    Tensor h_inter = h_projection(f_inter, p.w_inter, p.b_inter);
    // A single scalar weight: sigmoid of the scaled dot product.
    Tensor alpha = sigmoid(scale(dot(f_intra, f_inter), 1.0 / std::sqrt((double)f_intra.size())));
    return add(mul_scalar(h_intra, alpha), mul_scalar(h_inter, one_minus(alpha)));
}

Discrimination discriminate(const Tensor& repr, const DiscriminatorParams& p,
                            bool with_bias) {
    if (repr.rank() != 1 || repr.size() != p.w_hidden.rows()) {
        throw DimensionError("discriminate: representation width " +
                             std::to_string(repr.size()) + " does not match W_O");
    }
    Tensor o = matmul(repr, p.w_hidden);
    if (with_bias) o = add(o, p.b_hidden);
    o = tanh(o);
    Tensor logits = matmul(o, p.w_class);
    if (with_bias) logits = add(logits, p.b_class);

    Discrimination out;
    out.probs = softmax(detach(logits)).values();
    out.predicted = 0;
    for (std::size_t k = 1; k < out.probs.size(); ++k) {
        if (out.probs[k] > out.probs[out.predicted]) out.predicted = k;
    }
    out.logits = std::move(logits);
    return out;
}

// ---- Model ------------------------------------------------------------------

Model::Model(ModelConfig config, std::size_t n_classes)
    : config_(std::move(config)), n_classes_(n_classes) {
    if (n_classes_ < 2) throw ContractError("model: need at least two classes");
    config_.validate();
    std::mt19937_64 rng(0);
    init_random(rng);
}

Model::Model(ModelConfig config, std::size_t n_classes, std::mt19937_64& rng)
    : Model(std::move(config), n_classes) {
    init_random(rng);
}

void Model::init_random(std::mt19937_64& rng) {
    encoder_ = EncoderParams::init(config_.encoder, rng, true);
    inter_encoder_.reset();
    backbone_.reset();
    fusion_ = FusionParams{};

    if (config_.topology == Topology::HBert) {
        backbone_ = EncoderParams::init(config_.backbone, rng, false);
    }
    if (config_.topology == Topology::StBert) {
        if (!config_.share_st_encoders && config_.ablation == Ablation::None) {
            inter_encoder_ = EncoderParams::init(config_.encoder, rng, true);
        }
        const std::size_t dm = config_.encoder.d_model;
        const std::size_t df = config_.d_fusion();
        switch (config_.ablation) {
            case Ablation::IntraOnly:
                fusion_.w_intra = Tensor::randn({dm, df}, kInitStd, rng);
                fusion_.b_intra = Tensor({df}, 0.0, true);
                break;
            case Ablation::InterOnly:
                fusion_.w_inter = Tensor::randn({dm, df}, kInitStd, rng);
                fusion_.b_inter = Tensor({df}, 0.0, true);
                break;
            case Ablation::None:
                if (config_.fusion == FusionKind::Concat) {
                    fusion_.w_concat = Tensor::randn({2 * dm, df}, kInitStd, rng);
                    fusion_.b_concat = Tensor({df}, 0.0, true);
                } else {
                    fusion_.w_intra = Tensor::randn({dm, df}, kInitStd, rng);
                    fusion_.b_intra = Tensor({df}, 0.0, true);
                    fusion_.w_inter = Tensor::randn({dm, df}, kInitStd, rng);
                    fusion_.b_inter = Tensor({df}, 0.0, true);
                    if (config_.fusion == FusionKind::Gate) {
                        fusion_.w_gate = Tensor::randn({2 * dm, df}, kInitStd, rng);
                        fusion_.b_gate = Tensor({df}, 0.0, true);
                    }
                }
                break;
        }
    }

    const std::size_t d_in = config_.d_repr();
    discriminator_.w_hidden = Tensor::randn({d_in, d_in}, kInitStd, rng);
    discriminator_.b_hidden = Tensor({d_in}, 0.0, config_.discriminator_bias);
    discriminator_.w_class = Tensor::randn({d_in, n_classes_}, kInitStd, rng);
    discriminator_.b_class = Tensor({n_classes_}, 0.0, config_.discriminator_bias);
}

Tensor Model::branch_cls(const Conversation& conv, std::size_t index, ContextKind kind,
                         const EncoderParams& encoder, const Vocab& vocab) const {
    std::vector<Utterance> context;
    switch (kind) {
        case ContextKind::Intra:
            context = intra_context(conv, index, config_.context_window);
            break;
        case ContextKind::Inter:
            context = inter_context(conv, index, config_.context_window);
            break;
        case ContextKind::Conv:
            context = conv_context(conv, index, config_.context_window);
            break;
        case ContextKind::Target:
            break;
    }
    PackOptions options;
    options.max_len = encoder.config.max_len;
    options.lowercase = config_.lowercase;
    options.context_separators = config_.context_separators;
    options.kind = kind;
    return encode_cls(pack(conv.utterances.at(index - 1), context, vocab, options, conv.id),
                      encoder);
}

Tensor Model::f_bert_repr(const Conversation& conv, std::size_t index,
                          const Vocab& vocab) const {
    return branch_cls(conv, index, ContextKind::Conv, encoder_, vocab);
}

Tensor Model::h_bert_repr(const Conversation& conv, std::size_t index,
                          const Vocab& vocab) const {
    const std::size_t k = config_.context_window;
    const std::size_t first = index > k ? index - k : 1;
    std::vector<Tensor> features;
    for (std::size_t tau = first; tau <= index; ++tau) {
        Tensor branch = branch_cls(conv, tau, ContextKind::Intra, encoder_, vocab);
        if (config_.detach_context_branches && tau < index) branch = detach(branch);
        features.push_back(std::move(branch));
    }
    return backbone_encode(features, *backbone_);
}

Tensor Model::st_bert_repr(const Conversation& conv, std::size_t index,
                           const Vocab& vocab) const {
    if (config_.ablation == Ablation::IntraOnly) {
        Tensor f = branch_cls(conv, index, ContextKind::Intra, encoder_, vocab);
        return h_projection(f, fusion_.w_intra, fusion_.b_intra);
    }
    if (config_.ablation == Ablation::InterOnly) {
        Tensor f = branch_cls(conv, index, ContextKind::Inter, encoder_, vocab);
        return h_projection(f, fusion_.w_inter, fusion_.b_inter);
    }
    Tensor f_intra = branch_cls(conv, index, ContextKind::Intra, encoder_, vocab);
    const EncoderParams& inter_enc =
        config_.share_st_encoders ? encoder_ : *inter_encoder_;
    Tensor f_inter = branch_cls(conv, index, ContextKind::Inter, inter_enc, vocab);
    switch (config_.fusion) {
        case FusionKind::Concat: return fuse_concat(f_intra, f_inter, fusion_);
        case FusionKind::Gate: return fuse_gate(f_intra, f_inter, fusion_);
        case FusionKind::Attention: return fuse_attention(f_intra, f_inter, fusion_);
    }
    throw ContractError("st_bert: unreachable fusion kind");
}

Tensor Model::represent(const Conversation& conv, std::size_t index,
                        const Vocab& vocab) const {
    switch (config_.topology) {
        case Topology::FBert: return f_bert_repr(conv, index, vocab);
        case Topology::HBert: return h_bert_repr(conv, index, vocab);
        case Topology::StBert: return st_bert_repr(conv, index, vocab);
    }
    throw ContractError("model: unreachable topology");
}

Tensor Model::logits(const Conversation& conv, std::size_t index, const Vocab& vocab) const {
    return discriminate(represent(conv, index, vocab), discriminator_,
                        config_.discriminator_bias)
        .logits;
}

Discrimination Model::predict(const Conversation& conv, std::size_t index,
                              const Vocab& vocab) const {
    return discriminate(represent(conv, index, vocab), discriminator_,
                        config_.discriminator_bias);
}

void Model::visit_params(const std::function<void(const std::string&, Tensor&, bool)>& fn) {
    encoder_.visit("encoder", fn);
    if (inter_encoder_) inter_encoder_->visit("inter_encoder", fn);
    if (backbone_) backbone_->visit("backbone", fn);
    auto maybe = [&fn](const std::string& name, Tensor& t, bool decay) {
        if (t.defined()) fn(name, t, decay);
    };
    maybe("fusion.w_concat", fusion_.w_concat, true);
    maybe("fusion.b_concat", fusion_.b_concat, false);
    maybe("fusion.w_intra", fusion_.w_intra, true);
    maybe("fusion.b_intra", fusion_.b_intra, false);
    maybe("fusion.w_inter", fusion_.w_inter, true);
    maybe("fusion.b_inter", fusion_.b_inter, false);
    maybe("fusion.w_gate", fusion_.w_gate, true);
    maybe("fusion.b_gate", fusion_.b_gate, false);
    fn("disc.w_hidden", discriminator_.w_hidden, true);
    fn("disc.w_class", discriminator_.w_class, true);
    if (config_.discriminator_bias) {
        fn("disc.b_hidden", discriminator_.b_hidden, false);
        fn("disc.b_class", discriminator_.b_class, false);
    }
}

Model Model::clone() const {
    Model copy = *this;
    copy.visit_params([](const std::string&, Tensor& t, bool) {
        t = Tensor::from_values(t.shape(), t.values(), true);
    });
    return copy;
}

}  // namespace emodyn
