#include "emodyn/context.hpp"

#include <algorithm>
#include <functional>

#include "emodyn/errors.hpp"

namespace emodyn {

namespace {

void check_index(const Conversation& conv, std::size_t index) {
    if (index < 1 || index > conv.utterances.size()) {
        throw ContractError("context: utterance index " + std::to_string(index) +
                            " out of range for conversation of length " +
                            std::to_string(conv.utterances.size()));
    }
}

std::vector<Utterance> window(const Conversation& conv, std::size_t index, std::size_t k,
                              const std::function<bool(const Utterance&)>& keep) {
    check_index(conv, index);
    std::vector<Utterance> out;
    const std::size_t first = index > k ? index - k : 1;
    for (std::size_t tau = first; tau < index; ++tau) {
        const Utterance& u = conv.utterances[tau - 1];
        if (keep(u)) out.push_back(u);
    }
    return out;
}

}  // namespace

std::vector<Utterance> intra_context(const Conversation& conv, std::size_t index,
                                     std::size_t k) {
    check_index(conv, index);
    const std::size_t speaker = conv.utterances[index - 1].speaker;
    return window(conv, index, k,
                  [speaker](const Utterance& u) { return u.speaker == speaker; });
}

std::vector<Utterance> inter_context(const Conversation& conv, std::size_t index,
                                     std::size_t k) {
    check_index(conv, index);
    const std::size_t speaker = conv.utterances[index - 1].speaker;
    return window(conv, index, k,
                  [speaker](const Utterance& u) { return u.speaker != speaker; });
}

std::vector<Utterance> conv_context(const Conversation& conv, std::size_t index,
                                    std::size_t k) {
    return window(conv, index, k, [](const Utterance&) { return true; });
}

const char* to_string(ContextKind kind) {
    switch (kind) {
        case ContextKind::Target: return "target";
        case ContextKind::Intra: return "intra";
        case ContextKind::Inter: return "inter";
        case ContextKind::Conv: return "conv";
    }
    return "?";
}

PackedSequence pack(const Utterance& target, const std::vector<Utterance>& context,
                    const Vocab& vocab, const PackOptions& options,
                    const std::string& conversation_id) {
    if (options.max_len < 8) throw ContractError("pack: max_len must be at least 8");

    std::vector<std::size_t> target_tokens =
        vocab.tokenize(normalize_text(target.text, options.lowercase));
    if (target_tokens.size() > options.max_len - 2) {
        target_tokens.resize(options.max_len - 2);
    }

    std::vector<std::size_t> context_tokens;
    for (std::size_t i = 0; i < context.size(); ++i) {
        if (options.context_separators && i > 0) context_tokens.push_back(Vocab::kSep);
        for (std::size_t id : vocab.tokenize(normalize_text(context[i].text, options.lowercase))) {
            context_tokens.push_back(id);
        }
    }

    const std::size_t used = 2 + target_tokens.size();  // [CLS] target [SEP]
    std::size_t budget =
        used + 1 < options.max_len ? options.max_len - used - 1 : 0;  // + trailing [SEP]
    if (context_tokens.size() > budget) {
        // Oldest context first: keep the most recent tokens.
        context_tokens.erase(context_tokens.begin(),
                             context_tokens.end() - (std::ptrdiff_t)budget);
    }

    PackedSequence seq;
    seq.token_ids.push_back(Vocab::kCls);
    seq.segment_ids.push_back(0);
    for (std::size_t id : target_tokens) {
        seq.token_ids.push_back(id);
        seq.segment_ids.push_back(0);
    }
    seq.token_ids.push_back(Vocab::kSep);
    seq.segment_ids.push_back(0);
    if (!context_tokens.empty()) {
        for (std::size_t id : context_tokens) {
            seq.token_ids.push_back(id);
            seq.segment_ids.push_back(1);
        }
        seq.token_ids.push_back(Vocab::kSep);
        seq.segment_ids.push_back(1);
    }
    seq.attention_len = seq.token_ids.size();
    seq.target_meta = {conversation_id, target.index, options.kind};
    return seq;
}

}  // namespace emodyn
