#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace emodyn {

/// One conversation turn. `index` is the 1-based position within the
/// conversation; `speaker` is a 1-based interlocutor id.
struct Utterance {
    std::size_t index = 0;
    std::size_t speaker = 0;
    std::string text;
    std::optional<std::string> label;
};

struct Conversation {
    std::string id;
    std::size_t n_speakers = 0;
    std::vector<Utterance> utterances;
};

using Corpus = std::vector<Conversation>;

/// Reads a line-delimited corpus: one UTF-8 JSON object per line,
/// {"id": str, "n_speakers": int, "turns": [{"speaker": int>=1, "text": str,
/// "label": str}]}. The label field may be omitted (prediction inputs).
/// Throws ParseError with the offending line number.
Corpus parse_corpus(std::istream& in);
Corpus load_corpus(const std::string& path);

/// Serializes in the exact on-disk format; parse -> write round-trips
/// byte-identically.
void write_corpus(std::ostream& out, const Corpus& corpus);

/// Dense class indices in first-seen training-corpus order.
class LabelMap {
public:
    LabelMap() = default;
    explicit LabelMap(std::vector<std::string> names);
    static LabelMap from_corpus(const Corpus& corpus);

    std::size_t size() const { return names_.size(); }
    const std::vector<std::string>& names() const { return names_; }
    const std::string& name(std::size_t id) const;
    std::size_t id(const std::string& name) const;  // throws LabelError
    bool contains(const std::string& name) const;

private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, std::size_t> ids_;
};

struct CorpusStats {
    std::size_t n_conversations = 0;
    std::size_t n_utterances = 0;
    std::size_t n_classes = 0;
    double avg_conversation_length = 0.0;
    std::vector<std::pair<std::string, std::size_t>> class_counts;  // first-seen order
};

CorpusStats corpus_stats(const Corpus& corpus);

}  // namespace emodyn
