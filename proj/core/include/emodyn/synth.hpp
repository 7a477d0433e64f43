#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "emodyn/corpus.hpp"

namespace emodyn {

/// How the expressed cue of an utterance relates to its felt label.
///   Label:       cue == label; context and the utterance itself both carry
///                the emotion signal.
///   Independent: cue drawn independently of the label, so the target text
///                says nothing about its own label and only context (the
///                cues the label was copied from) disambiguates.
enum class CueMode { Label, Independent };

std::string to_string(CueMode mode);

/// Two-speaker conversations with plantable emotion dynamics. Each turn
/// gets an expressed cue; the felt label copies the speaker's own previous
/// cue with probability `inertia`, else the other speaker's last cue with
/// probability `influence`, else is drawn uniformly. Text is background
/// noise plus a mood token for the label (probability target_signal) and a
/// hint token for the cue (probability context_signal), appended last so
/// truncation keeps them.
struct SynthSpec {
    std::size_t n_conversations = 50;
    std::size_t min_turns = 6;
    std::size_t max_turns = 12;
    std::vector<std::string> labels = {"joy",  "sadness",  "anger",
                                       "fear", "surprise", "neutral"};
    double inertia = 0.6;
    double influence = 0.3;
    double target_signal = 1.0;   // P(mood token present)
    double context_signal = 1.0;  // P(hint token present)
    CueMode cue_mode = CueMode::Label;
    std::size_t background_vocab = 24;
    std::size_t background_tokens = 4;
    std::string id_prefix = "synth";

    void validate() const;
    std::string to_json_string() const;
    static SynthSpec from_json_string(const std::string& json);
};

Corpus generate_corpus(const SynthSpec& spec, std::uint64_t seed);

}  // namespace emodyn
