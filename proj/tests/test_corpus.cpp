#include <fstream>
#include <sstream>

#include <doctest.h>

#include "emodyn/corpus.hpp"
#include "emodyn/errors.hpp"

using namespace emodyn;

#ifndef TEST_DATA_DIR
#define TEST_DATA_DIR "tests/data"
#endif

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace

TEST_CASE("parse well-formed corpus") {
    std::istringstream in(
        R"({"id":"a","n_speakers":2,"turns":[{"speaker":1,"text":"hi","label":"joy"}]})"
        "\n"
        R"({"id":"b","n_speakers":1,"turns":[{"speaker":1,"text":"bye"}]})"
        "\n");
    Corpus corpus = parse_corpus(in);
    REQUIRE(corpus.size() == 2);
    CHECK(corpus[0].id == "a");
    CHECK(corpus[0].utterances[0].index == 1);
    CHECK(corpus[0].utterances[0].label == "joy");
    CHECK_FALSE(corpus[1].utterances[0].label.has_value());
}

TEST_CASE("parse errors carry line numbers") {
    SUBCASE("invalid JSON") {
        std::istringstream bad("not json\n");
        CHECK_THROWS_AS(parse_corpus(bad), ParseError);
    }
    SUBCASE("speaker id zero") {
        std::istringstream in(
            "\n"
            R"({"id":"a","n_speakers":2,"turns":[{"speaker":0,"text":"x"}]})"
            "\n");
        try {
            parse_corpus(in);
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(e.line == 2);
            CHECK(std::string(e.what()).find("speaker id 0") != std::string::npos);
        }
    }
    SUBCASE("speaker above declared count") {
        std::istringstream in(
            R"({"id":"a","n_speakers":2,"turns":[{"speaker":3,"text":"x"}]})");
        CHECK_THROWS_AS(parse_corpus(in), ParseError);
    }
    SUBCASE("empty turns") {
        std::istringstream in(R"({"id":"a","n_speakers":2,"turns":[]})");
        CHECK_THROWS_AS(parse_corpus(in), ParseError);
    }
}

TEST_CASE("dialogue example round-trips byte-identically") {
    const std::string original = slurp(std::string(TEST_DATA_DIR) + "/dialogue.jsonl");
    std::istringstream in(original);
    Corpus corpus = parse_corpus(in);
    REQUIRE(corpus.size() == 2);
    CHECK(corpus[0].utterances.size() == 6);
    CHECK(corpus[0].utterances[5].label == "Fear");

    std::ostringstream out;
    write_corpus(out, corpus);
    CHECK(out.str() == original);
}

TEST_CASE("label map is first-seen ordered") {
    std::istringstream in(slurp(std::string(TEST_DATA_DIR) + "/dialogue.jsonl"));
    Corpus corpus = parse_corpus(in);
    LabelMap labels = LabelMap::from_corpus(corpus);
    REQUIRE(labels.size() == 3);
    CHECK(labels.id("Neutral") == 0);
    CHECK(labels.id("Surprise") == 1);
    CHECK(labels.id("Fear") == 2);
    CHECK(labels.name(2) == "Fear");
    CHECK_THROWS_AS(labels.id("Joy"), LabelError);
    CHECK_THROWS_AS(labels.name(3), LabelError);
    CHECK(labels.contains("Fear"));
    CHECK_FALSE(labels.contains("fear"));
}

TEST_CASE("corpus statistics") {
    std::istringstream in(slurp(std::string(TEST_DATA_DIR) + "/dialogue.jsonl"));
    CorpusStats stats = corpus_stats(parse_corpus(in));
    CHECK(stats.n_conversations == 2);
    CHECK(stats.n_utterances == 8);
    CHECK(stats.n_classes == 3);
    CHECK(stats.avg_conversation_length == doctest::Approx(4.0));
    REQUIRE(stats.class_counts.size() == 3);
    CHECK(stats.class_counts[0] == std::pair<std::string, std::size_t>{"Neutral", 4});
}
