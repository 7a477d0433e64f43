#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "emodyn/corpus.hpp"

namespace emodyn {

/// ASCII lowercasing; non-ASCII bytes pass through untouched.
std::string normalize_text(std::string_view text, bool lowercase);

/// WordPiece-style vocabulary with fixed special ids. Ids 0-3 are reserved;
/// the on-disk format stores one token per line, line number = id - 4.
class Vocab {
public:
    static constexpr std::size_t kPad = 0;
    static constexpr std::size_t kUnk = 1;
    static constexpr std::size_t kCls = 2;
    static constexpr std::size_t kSep = 3;

    /// Frequency-ranked whitespace word types fill the budget. Every
    /// character of the corpus alphabet is always included, both bare and
    /// with the ## continuation prefix, so in-corpus words never tokenize
    /// to [UNK].
    static Vocab build(const Corpus& corpus, std::size_t max_size, bool lowercase);

    std::size_t size() const { return tokens_.size(); }
    const std::string& token(std::size_t id) const;
    std::optional<std::size_t> id_of(std::string_view token) const;

    /// Greedy longest-match-first WordPiece tokenization per whitespace
    /// word. Continuation pieces carry the ## prefix; characters outside
    /// the vocab alphabet become [UNK].
    std::vector<std::size_t> tokenize(std::string_view text) const;

    void save(std::ostream& out) const;
    static Vocab load(std::istream& in);

private:
    Vocab();
    std::size_t intern(const std::string& token);
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, std::size_t> ids_;
};

}  // namespace emodyn
