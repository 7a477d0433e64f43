#include "emodyn/corpus.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "emodyn/errors.hpp"

namespace emodyn {

namespace {

using ordered_json = nlohmann::ordered_json;

Conversation parse_conversation(const ordered_json& j, std::size_t line) {
    if (!j.is_object()) throw ParseError(line, "expected a JSON object");
    Conversation conv;
    try {
        conv.id = j.at("id").get<std::string>();
        conv.n_speakers = j.at("n_speakers").get<std::size_t>();
        const auto& turns = j.at("turns");
        if (!turns.is_array() || turns.empty()) {
            throw ParseError(line, "conversation must have a nonempty turns array");
        }
        std::size_t index = 0;
        for (const auto& t : turns) {
            Utterance u;
            u.index = ++index;
            u.speaker = t.at("speaker").get<std::size_t>();
            u.text = t.at("text").get<std::string>();
            if (t.contains("label")) u.label = t.at("label").get<std::string>();
            if (u.speaker < 1 || u.speaker > conv.n_speakers) {
                throw ParseError(line, "turn " + std::to_string(index) + ": speaker id " +
                                           std::to_string(u.speaker) + " outside [1, " +
                                           std::to_string(conv.n_speakers) + "]");
            }
            conv.utterances.push_back(std::move(u));
        }
    } catch (const ordered_json::exception& e) {
        throw ParseError(line, e.what());
    }
    return conv;
}

}  // namespace

Corpus parse_corpus(std::istream& in) {
    Corpus corpus;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        ordered_json j = ordered_json::parse(line, nullptr, false);
        if (j.is_discarded()) throw ParseError(line_no, "invalid JSON");
        corpus.push_back(parse_conversation(j, line_no));
    }
    return corpus;
}

Corpus load_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(0, "cannot open corpus file: " + path);
    return parse_corpus(in);
}

void write_corpus(std::ostream& out, const Corpus& corpus) {
    for (const Conversation& conv : corpus) {
        ordered_json turns = ordered_json::array();
        for (const Utterance& u : conv.utterances) {
            ordered_json t;
            t["speaker"] = u.speaker;
            t["text"] = u.text;
            if (u.label) t["label"] = *u.label;
            turns.push_back(std::move(t));
        }
        ordered_json j;
        j["id"] = conv.id;
        j["n_speakers"] = conv.n_speakers;
        j["turns"] = std::move(turns);
        out << j.dump() << "\n";
    }
}

LabelMap::LabelMap(std::vector<std::string> names) : names_(std::move(names)) {
    for (std::size_t i = 0; i < names_.size(); ++i) ids_[names_[i]] = i;
}

LabelMap LabelMap::from_corpus(const Corpus& corpus) {
    LabelMap map;
    for (const Conversation& conv : corpus) {
        for (const Utterance& u : conv.utterances) {
            if (u.label && !map.ids_.count(*u.label)) {
                map.ids_[*u.label] = map.names_.size();
                map.names_.push_back(*u.label);
            }
        }
    }
    return map;
}

const std::string& LabelMap::name(std::size_t id) const {
    if (id >= names_.size()) {
        throw LabelError("class index " + std::to_string(id) + " out of range");
    }
    return names_[id];
}

std::size_t LabelMap::id(const std::string& name) const {
    auto it = ids_.find(name);
    if (it == ids_.end()) throw LabelError("unknown label: " + name);
    return it->second;
}

bool LabelMap::contains(const std::string& name) const { return ids_.count(name) > 0; }

CorpusStats corpus_stats(const Corpus& corpus) {
    CorpusStats stats;
    stats.n_conversations = corpus.size();
    std::unordered_map<std::string, std::size_t> counts;
    for (const Conversation& conv : corpus) {
        stats.n_utterances += conv.utterances.size();
        for (const Utterance& u : conv.utterances) {
            if (!u.label) continue;
            if (!counts.count(*u.label)) {
                stats.class_counts.emplace_back(*u.label, 0);
            }
            ++counts[*u.label];
        }
    }
    for (auto& [name, count] : stats.class_counts) count = counts[name];
    stats.n_classes = stats.class_counts.size();
    if (!corpus.empty()) {
        stats.avg_conversation_length =
            (double)stats.n_utterances / (double)stats.n_conversations;
    }
    return stats;
}

}  // namespace emodyn
