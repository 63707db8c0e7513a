// verifier.hpp - layer 3: behavioral consistency checks + linear feature classifier
#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ragshield/common.hpp"
#include "ragshield/embedding.hpp"
#include "ragshield/filter.hpp"

namespace ragshield {

inline constexpr const char* kRefusalMessage =
    "The response was withheld because it failed security verification.";

enum class Polarity { Positive, Neutral, Negative, Any };

inline const char* to_string(Polarity p) {
    switch (p) {
        case Polarity::Positive: return "positive";
        case Polarity::Neutral: return "neutral";
        case Polarity::Negative: return "negative";
        case Polarity::Any: return "any";
    }
    return "?";
}

inline Polarity polarity_from_string(const std::string& s) {
    if (s == "positive") return Polarity::Positive;
    if (s == "neutral") return Polarity::Neutral;
    if (s == "negative") return Polarity::Negative;
    if (s == "any") return Polarity::Any;
    throw Error(ErrorKind::Data, "unknown polarity label: " + s);
}

struct ResponseProfile {
    double mean_length = 18.0;  // whitespace tokens
    double std_length = 8.0;
    Polarity expected_polarity = Polarity::Any;
    std::vector<std::string> forbidden_disclosures;
};

struct FeatureVector {
    double instruction_density = 0.0;  // signature hits per 100 tokens
    double disclosure = 0.0;           // forbidden-disclosure hit count
    double length_deviation = 0.0;     // |z| of token count vs profile
    double coherence = 0.0;            // cosine distance response vs query
};

enum class VerifierAction { Sanitize, Reject };

inline const char* to_string(VerifierAction a) {
    return a == VerifierAction::Sanitize ? "sanitize" : "reject";
}

struct VerifierConfig {
    double w_instruction = 0.5;
    double w_disclosure = 2.0;
    double w_length = 0.3;
    double w_coherence = 0.5;
    double bias = -1.0;
    double z_flag = 3.0;
    VerifierAction action = VerifierAction::Sanitize;
};

enum class FinalDecision { Pass, Sanitized, Rejected };

inline const char* to_string(FinalDecision d) {
    switch (d) {
        case FinalDecision::Pass: return "pass";
        case FinalDecision::Sanitized: return "sanitized";
        case FinalDecision::Rejected: return "rejected";
    }
    return "?";
}

struct VerificationVerdict {
    FeatureVector features;
    double score = 0.0;
    bool consistency_flag = false;
    bool classifier_flag = false;
    FinalDecision final = FinalDecision::Pass;
    std::string output_text;
};

namespace detail {

inline std::size_t disclosure_hits(const std::string& text,
                                   const std::vector<std::string>& disclosures) {
    std::size_t n = 0;
    for (const auto& d : disclosures)
        if (!d.empty()) n += count_occurrences(text, d);
    return n;
}

inline bool contains_disclosure(const std::string& text,
                                const std::vector<std::string>& disclosures) {
    for (const auto& d : disclosures)
        if (!d.empty() && text.find(d) != std::string::npos) return true;
    return false;
}

// Tiny polarity lexicon; majority sign of matched words.
inline int lexicon_polarity(const std::string& text) {
    static const std::vector<std::string> positive = {
        "good", "great", "excellent", "helpful", "success", "successful",
        "happy", "glad",  "easy",      "clear",   "yes",     "thanks",
    };
    static const std::vector<std::string> negative = {
        "bad",   "terrible", "awful", "failure", "failed", "unhappy",
        "wrong", "hard",     "no",    "never",   "refuse", "problem",
    };
    int score = 0;
    const std::string norm = to_lower(squeeze_whitespace(text));
    for (const auto& tok : split_tokens(norm)) {
        std::string word;
        for (char c : tok)
            if (std::isalnum(static_cast<unsigned char>(c))) word.push_back(c);
        for (const auto& w : positive)
            if (word == w) ++score;
        for (const auto& w : negative)
            if (word == w) --score;
    }
    return score > 0 ? 1 : score < 0 ? -1 : 0;
}

inline std::vector<std::string> split_sentences(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (std::size_t i = 0; i < text.size(); ++i) {
        cur.push_back(text[i]);
        const char c = text[i];
        if ((c == '.' || c == '!' || c == '?') &&
            (i + 1 == text.size() || is_space(text[i + 1]))) {
            const std::string trimmed = squeeze_whitespace(cur);
            if (!trimmed.empty()) out.push_back(trimmed);
            cur.clear();
        }
    }
    const std::string trimmed = squeeze_whitespace(cur);
    if (!trimmed.empty()) out.push_back(trimmed);
    return out;
}

}  // namespace detail

inline FeatureVector extract_features(const std::string& response, const std::string& query,
                                      const ResponseProfile& profile, const ReferenceStore&,
                                      const EmbeddingProvider& provider,
                                      const std::vector<SignaturePattern>& signatures =
                                          default_signatures()) {
    if (response.empty()) throw Error(ErrorKind::Data, "cannot verify an empty response");
    FeatureVector f;
    const double tokens = static_cast<double>(count_whitespace_tokens(response));
    f.instruction_density =
        tokens > 0 ? static_cast<double>(count_signature_hits(response, signatures)) / tokens * 100.0
                   : 0.0;
    f.disclosure = static_cast<double>(
        detail::disclosure_hits(response, profile.forbidden_disclosures));
    f.length_deviation = std::fabs(tokens - profile.mean_length) / profile.std_length;
    f.coherence = cosine_distance(provider.embed(response), provider.embed(query));
    return f;
}

inline bool check_consistency(const std::string& response, const ResponseProfile& profile,
                              const VerifierConfig& config) {
    const double tokens = static_cast<double>(count_whitespace_tokens(response));
    const double z = std::fabs(tokens - profile.mean_length) / profile.std_length;
    if (z > config.z_flag) return true;
    if (detail::contains_disclosure(response, profile.forbidden_disclosures)) return true;
    if (profile.expected_polarity != Polarity::Any) {
        const int sign = detail::lexicon_polarity(response);
        if (profile.expected_polarity == Polarity::Positive && sign < 0) return true;
        if (profile.expected_polarity == Polarity::Negative && sign > 0) return true;
        if (profile.expected_polarity == Polarity::Neutral && sign != 0) return true;
    }
    return false;
}

inline std::pair<double, bool> classify(const FeatureVector& f, const VerifierConfig& config) {
    const double score = config.w_instruction * f.instruction_density +
                         config.w_disclosure * f.disclosure +
                         config.w_length * f.length_deviation +
                         config.w_coherence * f.coherence + config.bias;
    return {score, score > 0.0};
}

inline std::string sanitize_response(const std::string& response, const ResponseProfile& profile,
                                     const std::vector<SignaturePattern>& signatures =
                                         default_signatures()) {
    std::string out;
    for (const auto& sentence : detail::split_sentences(response)) {
        if (detail::contains_disclosure(sentence, profile.forbidden_disclosures)) continue;
        if (!scan_signatures(sentence, signatures).empty()) continue;
        if (!out.empty()) out += ' ';
        out += sentence;
    }
    return out.empty() ? std::string(kRefusalMessage) : out;
}

inline VerificationVerdict verify(const std::string& response, const std::string& query,
                                  const ResponseProfile& profile, const ReferenceStore& store,
                                  const EmbeddingProvider& provider, const VerifierConfig& config,
                                  const std::vector<SignaturePattern>& signatures =
                                      default_signatures()) {
    if (response.empty()) throw Error(ErrorKind::Data, "cannot verify an empty response");
    VerificationVerdict v;
    v.consistency_flag = check_consistency(response, profile, config);
    try {
        v.features = extract_features(response, query, profile, store, provider, signatures);
        std::tie(v.score, v.classifier_flag) = classify(v.features, config);
    } catch (const Error&) {
        // fail closed: a response we cannot verify is rejected
        v.final = FinalDecision::Rejected;
        v.output_text = kRefusalMessage;
        return v;
    }

    if (!v.consistency_flag && !v.classifier_flag) {
        v.final = FinalDecision::Pass;
        v.output_text = response;
        return v;
    }
    if (config.action == VerifierAction::Reject) {
        v.final = FinalDecision::Rejected;
        v.output_text = kRefusalMessage;
        return v;
    }
    const std::string sanitized = sanitize_response(response, profile, signatures);
    if (sanitized == kRefusalMessage ||
        detail::contains_disclosure(sanitized, profile.forbidden_disclosures)) {
        v.final = FinalDecision::Rejected;
        v.output_text = kRefusalMessage;
        return v;
    }
    v.final = FinalDecision::Sanitized;
    v.output_text = sanitized;
    return v;
}

inline nlohmann::ordered_json verdict_to_json(const VerificationVerdict& v) {
    nlohmann::ordered_json j;
    j["features"] = {{"instruction_density", v.features.instruction_density},
                     {"disclosure", v.features.disclosure},
                     {"length_deviation", v.features.length_deviation},
                     {"coherence", v.features.coherence}};
    j["score"] = v.score;
    j["consistency_flag"] = v.consistency_flag;
    j["classifier_flag"] = v.classifier_flag;
    j["final"] = to_string(v.final);
    j["output_text"] = v.output_text;
    return j;
}

}  // namespace ragshield
