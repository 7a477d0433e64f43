#pragma once

#include <string>
#include <vector>

#include "emodyn/corpus.hpp"
#include "emodyn/vocab.hpp"

namespace emodyn {

/// Preceding-window context extractors. `index` is 1-based; the window
/// covers positions [max(index-k, 1), index), never the target itself and
/// never anything after it.
std::vector<Utterance> intra_context(const Conversation& conv, std::size_t index,
                                     std::size_t k);
std::vector<Utterance> inter_context(const Conversation& conv, std::size_t index,
                                     std::size_t k);
std::vector<Utterance> conv_context(const Conversation& conv, std::size_t index,
                                    std::size_t k);

enum class ContextKind { Target, Intra, Inter, Conv };
const char* to_string(ContextKind kind);

struct TargetMeta {
    std::string conversation_id;
    std::size_t utterance_index = 0;
    ContextKind kind = ContextKind::Target;
};

/// Token ids plus segment ids for one utterance-context pair.
/// Layout: [CLS] target [SEP] (segment 0), then context [SEP] (segment 1);
/// with empty context the second span is dropped entirely.
struct PackedSequence {
    std::vector<std::size_t> token_ids;
    std::vector<std::size_t> segment_ids;
    std::size_t attention_len = 0;  // real (non-pad) tokens
    TargetMeta target_meta;

    std::size_t length() const { return token_ids.size(); }
};

struct PackOptions {
    std::size_t max_len = 128;
    bool lowercase = true;
    // Insert [SEP] between context utterances instead of a space join.
    bool context_separators = false;
    ContextKind kind = ContextKind::Target;
};

/// Deterministic packing. Context utterances are joined in conversation
/// order. On overflow the oldest context tokens are dropped first; the
/// target is tail-truncated only if it alone exceeds max_len - 2.
PackedSequence pack(const Utterance& target, const std::vector<Utterance>& context,
                    const Vocab& vocab, const PackOptions& options,
                    const std::string& conversation_id = "");

}  // namespace emodyn
