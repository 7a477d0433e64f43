#include "emodyn/synth.hpp"

#include <iomanip>
#include <random>
#include <sstream>

#include <json.hpp>

#include "emodyn/errors.hpp"

namespace emodyn {

std::string to_string(CueMode mode) {
    return mode == CueMode::Label ? "label" : "independent";
}

namespace {

CueMode cue_mode_from_string(const std::string& s) {
    if (s == "label") return CueMode::Label;
    if (s == "independent") return CueMode::Independent;
    throw LoadError("synth spec: unknown cue_mode \"" + s + "\"");
}

}  // namespace

void SynthSpec::validate() const {
    if (n_conversations == 0) throw ContractError("synth spec: n_conversations must be >= 1");
    if (min_turns == 0 || max_turns < min_turns) {
        throw ContractError("synth spec: need 1 <= min_turns <= max_turns");
    }
    if (labels.size() < 2) throw ContractError("synth spec: need at least 2 labels");
    if (inertia < 0.0 || inertia > 1.0 || influence < 0.0 || influence > 1.0) {
        throw ContractError("synth spec: inertia and influence must be in [0,1]");
    }
    if (target_signal < 0.0 || target_signal > 1.0 || context_signal < 0.0 ||
        context_signal > 1.0) {
        throw ContractError("synth spec: signal strengths must be in [0,1]");
    }
    if (background_vocab == 0) throw ContractError("synth spec: background_vocab must be >= 1");
}

std::string SynthSpec::to_json_string() const {
    nlohmann::ordered_json j;
    j["n_conversations"] = n_conversations;
    j["min_turns"] = min_turns;
    j["max_turns"] = max_turns;
    j["labels"] = labels;
    j["inertia"] = inertia;
    j["influence"] = influence;
    j["target_signal"] = target_signal;
    j["context_signal"] = context_signal;
    j["cue_mode"] = to_string(cue_mode);
    j["background_vocab"] = background_vocab;
    j["background_tokens"] = background_tokens;
    j["id_prefix"] = id_prefix;
    return j.dump();
}

SynthSpec SynthSpec::from_json_string(const std::string& json) {
    nlohmann::json j = nlohmann::json::parse(json, nullptr, false);
    if (j.is_discarded()) throw LoadError("synth spec: invalid JSON");
    SynthSpec spec;
    spec.n_conversations = j.value("n_conversations", spec.n_conversations);
    spec.min_turns = j.value("min_turns", spec.min_turns);
    spec.max_turns = j.value("max_turns", spec.max_turns);
    if (j.contains("labels")) spec.labels = j.at("labels").get<std::vector<std::string>>();
    spec.inertia = j.value("inertia", spec.inertia);
    spec.influence = j.value("influence", spec.influence);
    spec.target_signal = j.value("target_signal", spec.target_signal);
    spec.context_signal = j.value("context_signal", spec.context_signal);
    if (j.contains("cue_mode")) {
        spec.cue_mode = cue_mode_from_string(j.at("cue_mode").get<std::string>());
    }
    spec.background_vocab = j.value("background_vocab", spec.background_vocab);
    spec.background_tokens = j.value("background_tokens", spec.background_tokens);
    spec.id_prefix = j.value("id_prefix", spec.id_prefix);
    spec.validate();
    return spec;
}

Corpus generate_corpus(const SynthSpec& spec, std::uint64_t seed) {
    spec.validate();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> turn_count(spec.min_turns, spec.max_turns);
    std::uniform_int_distribution<std::size_t> any_label(0, spec.labels.size() - 1);
    std::uniform_int_distribution<std::size_t> any_word(0, spec.background_vocab - 1);

    Corpus corpus;
    corpus.reserve(spec.n_conversations);
    for (std::size_t c = 0; c < spec.n_conversations; ++c) {
        Conversation conv;
        {
            std::ostringstream id;
            id << spec.id_prefix << "-" << std::setw(4) << std::setfill('0') << c + 1;
            conv.id = id.str();
        }
        conv.n_speakers = 2;
        const std::size_t n_turns = turn_count(rng);

        // Last expressed cue per speaker; dynamics copy cues, not labels, so
        // the copied value is exactly what the hint tokens make observable.
        std::ptrdiff_t last_cue[2] = {-1, -1};
        for (std::size_t t = 1; t <= n_turns; ++t) {
            const std::size_t speaker = 1 + (t + 1) % 2;  // 1,2,1,2,...
            const std::size_t self = speaker - 1, other = 2 - speaker;

            // Independent coins: keep with probability inertia, otherwise
            // adopt the other speaker's cue with probability influence.
            std::size_t label;
            if (last_cue[self] >= 0 && coin(rng) < spec.inertia) {
                label = (std::size_t)last_cue[self];
            } else if (last_cue[other] >= 0 && coin(rng) < spec.influence) {
                label = (std::size_t)last_cue[other];
            } else {
                label = any_label(rng);
            }
            const std::size_t cue =
                spec.cue_mode == CueMode::Label ? label : any_label(rng);

            std::ostringstream text;
            for (std::size_t w = 0; w < spec.background_tokens; ++w) {
                if (w) text << " ";
                text << "w" << any_word(rng);
            }
            if (coin(rng) < spec.target_signal) {
                if (text.tellp() > 0) text << " ";
                text << "mood" << spec.labels[label];
            }
            if (coin(rng) < spec.context_signal) {
                if (text.tellp() > 0) text << " ";
                text << "hint" << spec.labels[cue];
            }

            Utterance utt;
            utt.index = t;
            utt.speaker = speaker;
            utt.text = text.str();
            utt.label = spec.labels[label];
            conv.utterances.push_back(std::move(utt));
            last_cue[self] = (std::ptrdiff_t)cue;
        }
        corpus.push_back(std::move(conv));
    }
    return corpus;
}

}  // namespace emodyn
