#include "emodyn/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "emodyn/errors.hpp"

namespace emodyn {

namespace {

std::vector<std::string> split_words(std::string_view text) {
    std::vector<std::string> words;
    std::string current;
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!current.empty()) words.push_back(std::move(current)), current.clear();
        } else {
            current.push_back(c);
        }
    }
    if (!current.empty()) words.push_back(std::move(current));
    return words;
}

// Splits a word into UTF-8 codepoint substrings; invalid lead bytes are
// treated as single-byte characters.
std::vector<std::string> split_codepoints(std::string_view word) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < word.size()) {
        unsigned char lead = static_cast<unsigned char>(word[i]);
        std::size_t len = 1;
        if ((lead & 0xE0) == 0xC0) len = 2;
        else if ((lead & 0xF0) == 0xE0) len = 3;
        else if ((lead & 0xF8) == 0xF0) len = 4;
        len = std::min(len, word.size() - i);
        out.emplace_back(word.substr(i, len));
        i += len;
    }
    return out;
}

}  // namespace

std::string normalize_text(std::string_view text, bool lowercase) {
    std::string out(text);
    if (lowercase) {
        for (char& c : out) c = (char)std::tolower(static_cast<unsigned char>(c));
    }
    return out;
}

Vocab::Vocab() {
    intern("[PAD]");
    intern("[UNK]");
    intern("[CLS]");
    intern("[SEP]");
}

std::size_t Vocab::intern(const std::string& token) {
    auto it = ids_.find(token);
    if (it != ids_.end()) return it->second;
    ids_[token] = tokens_.size();
    tokens_.push_back(token);
    return tokens_.size() - 1;
}

Vocab Vocab::build(const Corpus& corpus, std::size_t max_size, bool lowercase) {
    // word type -> (count, first-seen rank)
    std::unordered_map<std::string, std::pair<std::size_t, std::size_t>> counts;
    std::vector<std::string> order;
    std::map<std::string, bool> alphabet;  // sorted for deterministic ids
    for (const Conversation& conv : corpus) {
        for (const Utterance& u : conv.utterances) {
            for (std::string& w : split_words(normalize_text(u.text, lowercase))) {
                for (const std::string& c : split_codepoints(w)) alphabet[c] = true;
                auto it = counts.find(w);
                if (it == counts.end()) {
                    counts[w] = {1, order.size()};
                    order.push_back(w);
                } else {
                    ++it->second.first;
                }
            }
        }
    }
    if (max_size < 4 + alphabet.size()) {
        throw ContractError("build_vocab: max_size " + std::to_string(max_size) +
                            " cannot hold the specials plus the corpus alphabet");
    }

    Vocab vocab;
    for (const auto& [c, _] : alphabet) vocab.intern(c);
    for (const auto& [c, _] : alphabet) vocab.intern("##" + c);

    std::sort(order.begin(), order.end(), [&](const std::string& a, const std::string& b) {
        const auto& ca = counts[a];
        const auto& cb = counts[b];
        if (ca.first != cb.first) return ca.first > cb.first;
        return ca.second < cb.second;
    });
    for (const std::string& w : order) {
        if (vocab.size() >= max_size) break;
        vocab.intern(w);
    }
    return vocab;
}

const std::string& Vocab::token(std::size_t id) const {
    if (id >= tokens_.size()) {
        throw ContractError("vocab: token id " + std::to_string(id) + " out of range");
    }
    return tokens_[id];
}

std::optional<std::size_t> Vocab::id_of(std::string_view token) const {
    auto it = ids_.find(std::string(token));
    if (it == ids_.end()) return std::nullopt;
    return it->second;
}

std::vector<std::size_t> Vocab::tokenize(std::string_view text) const {
    std::vector<std::size_t> ids;
    for (const std::string& word : split_words(text)) {
        std::vector<std::string> chars = split_codepoints(word);
        std::size_t i = 0;
        while (i < chars.size()) {
            std::size_t best_len = 0, best_id = kUnk;
            std::string candidate = i > 0 ? "##" : "";
            for (std::size_t j = i; j < chars.size(); ++j) {
                candidate += chars[j];
                auto it = ids_.find(candidate);
                if (it != ids_.end()) {
                    best_len = j - i + 1;
                    best_id = it->second;
                }
            }
            ids.push_back(best_id);
            i += std::max<std::size_t>(best_len, 1);
        }
    }
    return ids;
}

void Vocab::save(std::ostream& out) const {
    for (std::size_t id = 4; id < tokens_.size(); ++id) out << tokens_[id] << "\n";
}

Vocab Vocab::load(std::istream& in) {
    Vocab vocab;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        vocab.intern(line);
    }
    return vocab;
}

}  // namespace emodyn
