#pragma once

#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "emodyn/corpus.hpp"
#include "emodyn/encoder.hpp"
#include "emodyn/tensor.hpp"
#include "emodyn/vocab.hpp"

namespace emodyn {

enum class Topology { FBert, HBert, StBert };
enum class FusionKind { Concat, Gate, Attention };
// ST-BERT context ablation: run a single branch and bypass fusion.
enum class Ablation { None, IntraOnly, InterOnly };

std::string to_string(Topology t);
std::string to_string(FusionKind f);
std::string to_string(Ablation a);

struct ModelConfig {
    Topology topology = Topology::FBert;
    FusionKind fusion = FusionKind::Gate;  // st_bert only
    std::size_t context_window = 5;        // K, counted in utterances
    bool share_st_encoders = true;
    Ablation ablation = Ablation::None;
    bool lowercase = true;
    bool context_separators = false;
    bool discriminator_bias = true;  // strict mode zeroes and freezes biases
    bool detach_context_branches = false;  // h_bert: stop gradients into history
    EncoderConfig encoder;
    EncoderConfig backbone;  // h_bert only

    /// Fused-representation width (gate/attention projections, concat output).
    std::size_t d_fusion() const { return encoder.d_hidden; }
    /// Discriminator input width for this topology.
    std::size_t d_repr() const;
    void validate() const;

    std::string to_json_string() const;
    static ModelConfig from_json_string(const std::string& json);
};

/// Spatial fusion weights; only the tensors of the configured strategy are
/// allocated. Gate and attention share the two h-projections.
struct FusionParams {
    Tensor w_concat, b_concat;  // [2 d_model x d_fusion], [d_fusion]
    Tensor w_intra, b_intra;    // [d_model x d_fusion], [d_fusion]
    Tensor w_inter, b_inter;
    Tensor w_gate, b_gate;      // [2 d_model x d_fusion], [d_fusion]
};

struct DiscriminatorParams {
    Tensor w_hidden, b_hidden;  // [d_in x d_out], [d_out]
    Tensor w_class, b_class;    // [d_out x n_class], [n_class]
};

Tensor fuse_concat(const Tensor& f_intra, const Tensor& f_inter, const FusionParams& p);
Tensor fuse_gate(const Tensor& f_intra, const Tensor& f_inter, const FusionParams& p);
Tensor fuse_attention(const Tensor& f_intra, const Tensor& f_inter, const FusionParams& p);

struct Discrimination {
    Tensor logits;
    std::vector<double> probs;
    std::size_t predicted = 0;  // argmax, lowest index wins ties
};
Discrimination discriminate(const Tensor& repr, const DiscriminatorParams& p,
                            bool with_bias);

/// One of the three topologies plus the discriminator head; maps a target
/// utterance in its conversation to emotion logits.
class Model {
public:
    /// Shape-only construction (used by checkpoint loading); call
    /// init_random to train from scratch.
    Model(ModelConfig config, std::size_t n_classes);
    Model(ModelConfig config, std::size_t n_classes, std::mt19937_64& rng);

    void init_random(std::mt19937_64& rng);

    const ModelConfig& config() const { return config_; }
    std::size_t n_classes() const { return n_classes_; }

    /// Representation of utterance `index` (1-based) per the configured
    /// topology. Depends only on utterances at positions <= index.
    Tensor represent(const Conversation& conv, std::size_t index, const Vocab& vocab) const;
    Tensor logits(const Conversation& conv, std::size_t index, const Vocab& vocab) const;
    Discrimination predict(const Conversation& conv, std::size_t index,
                           const Vocab& vocab) const;

    /// Enumerates every trainable parameter as (name, tensor, decay flag).
    void visit_params(const std::function<void(const std::string&, Tensor&, bool)>& fn);

    Model clone() const;  // deep copy of all parameter values

private:
    Tensor f_bert_repr(const Conversation& conv, std::size_t index, const Vocab& vocab) const;
    Tensor h_bert_repr(const Conversation& conv, std::size_t index, const Vocab& vocab) const;
    Tensor st_bert_repr(const Conversation& conv, std::size_t index, const Vocab& vocab) const;
    Tensor branch_cls(const Conversation& conv, std::size_t index, ContextKind kind,
                      const EncoderParams& encoder, const Vocab& vocab) const;

    ModelConfig config_;
    std::size_t n_classes_ = 0;
    EncoderParams encoder_;
    std::optional<EncoderParams> inter_encoder_;  // st_bert, share_st_encoders=false
    std::optional<EncoderParams> backbone_;       // h_bert
    FusionParams fusion_;
    DiscriminatorParams discriminator_;
};

}  // namespace emodyn
