#pragma once

#include <map>
#include <string>

#include "anonypipe/attributes.hpp"
#include "anonypipe/error.hpp"

namespace anonypipe {

inline constexpr const char* kDefaultPromptTemplate =
    "{age}-year-old {ethnicity} {gender} with the emotion of {emotion_noun}.";

using EmotionNounMap = std::map<Emotion, std::string>;

/// Noun used for each emotion in prompt text ("sad" reads as "sadness").
inline EmotionNounMap default_emotion_nouns() {
    return {
        {Emotion::angry, "anger"},      {Emotion::disgust, "disgust"},
        {Emotion::fear, "fear"},        {Emotion::happy, "happiness"},
        {Emotion::sad, "sadness"},      {Emotion::surprise, "surprise"},
        {Emotion::neutral, "neutrality"},
    };
}

/**
 * Validated prompt template. The text must contain each of {age},
 * {ethnicity}, {gender}, {emotion_noun} exactly once and no other brace
 * characters, so rendered prompts can never leak an unfilled placeholder.
 */
struct PromptTemplate {
    std::string text;

    static PromptTemplate parse(const std::string& text) {
        static const char* kPlaceholders[] = {"age", "ethnicity", "gender", "emotion_noun"};
        std::map<std::string, int> seen;
        for (std::size_t i = 0; i < text.size(); ++i) {
            if (text[i] == '}')
                throw ValidationError("prompt template: '}' without a matching '{'");
            if (text[i] != '{') continue;
            const auto close = text.find('}', i + 1);
            if (close == std::string::npos)
                throw ValidationError("prompt template: '{' without a matching '}'");
            const std::string name = text.substr(i + 1, close - i - 1);
            bool known = false;
            for (const char* p : kPlaceholders) known = known || name == p;
            if (!known)
                throw ValidationError(
                    "prompt template: unknown placeholder {" + name +
                    "}; valid placeholders are {age}, {ethnicity}, {gender}, {emotion_noun}");
            ++seen[name];
            i = close;
        }
        for (const char* p : kPlaceholders) {
            if (seen[p] != 1)
                throw ValidationError("prompt template: placeholder {" + std::string(p) +
                                      "} must appear exactly once (found " +
                                      std::to_string(seen[p]) + ")");
        }
        return PromptTemplate{text};
    }
};

/// "latino hispanic" -> "Latino Hispanic"
inline std::string title_case_label(const std::string& label) {
    std::string out = label;
    bool word_start = true;
    for (char& c : out) {
        if (c == ' ') {
            word_start = true;
        } else if (word_start) {
            c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
            word_start = false;
        }
    }
    return out;
}

/**
 * Renders the attributes into the text prompt that conditions the inpainting
 * backend. Deterministic and total over valid attributes; an emotion missing
 * from the noun map signals corrupt configuration and throws.
 */
inline std::string build_prompt(const FaceAttributes& attrs, const PromptTemplate& tmpl,
                                const EmotionNounMap& nouns) {
    if (attrs.age < 1)
        throw ValidationError("build_prompt: age must be >= 1");
    const auto noun_it = nouns.find(attrs.emotion);
    if (noun_it == nouns.end() || noun_it->second.empty())
        throw ValidationError(std::string("build_prompt: no noun mapped for emotion '") +
                              emotion_label(attrs.emotion) + "'");
    std::string out;
    out.reserve(tmpl.text.size() + 32);
    for (std::size_t i = 0; i < tmpl.text.size(); ++i) {
        if (tmpl.text[i] != '{') {
            out.push_back(tmpl.text[i]);
            continue;
        }
        const auto close = tmpl.text.find('}', i + 1);
        const std::string name = tmpl.text.substr(i + 1, close - i - 1);
        if (name == "age")
            out += std::to_string(attrs.age);
        else if (name == "ethnicity")
            out += title_case_label(ethnicity_label(attrs.ethnicity));
        else if (name == "gender")
            out += gender_label(attrs.gender);
        else  // emotion_noun; template validation rules out anything else
            out += noun_it->second;
        i = close;
    }
    return out;
}

}  // namespace anonypipe
