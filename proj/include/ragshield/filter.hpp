// filter.hpp - layer 1: signature pattern matching + anomaly-score flagging
#pragma once

#include <cctype>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ragshield/common.hpp"
#include "ragshield/corpus.hpp"
#include "ragshield/embedding.hpp"

namespace ragshield {

struct SignaturePattern {
    std::string id;
    std::string pattern;
    double weight = 1.0;
    std::string description;
};

inline std::vector<SignaturePattern> default_signatures() {
    std::vector<SignaturePattern> sigs = {
        {"sig.ignore_previous", "ignore previous instructions", 1.0, "explicit instruction reset"},
        {"sig.ignore_all_prior", "ignore all prior", 1.0, "explicit instruction reset"},
        {"sig.override", "override", 0.6, "instruction override keyword"},
        {"sig.system_prompt", "system prompt", 0.8, "system prompt probing"},
        {"sig.disregard_above", "disregard the above", 0.9, "explicit instruction reset"},
        {"sig.you_are_now", "you are now", 0.7, "role reassignment"},
        {"sig.new_instructions", "new instructions", 0.8, "instruction replacement"},
    };
    int i = 0;
    for (const auto& token : delimiter_mimicry_tokens())
        sigs.push_back({"sig.delimiter_" + std::to_string(i++), token, 1.0,
                        "fake document-boundary token"});
    return sigs;
}

enum class FilterReason { AnomalyThreshold, SignatureMatch, Both, Clean };

inline const char* to_string(FilterReason r) {
    switch (r) {
        case FilterReason::AnomalyThreshold: return "anomaly_threshold";
        case FilterReason::SignatureMatch: return "signature_match";
        case FilterReason::Both: return "both";
        case FilterReason::Clean: return "clean";
    }
    return "?";
}

struct FilterVerdict {
    int passage_index = 0;
    double anomaly = 0.0;
    std::vector<std::string> matched_signatures;
    bool flagged = false;
    FilterReason reason = FilterReason::Clean;
    double signature_weight = 0.0;        // sum of matched weights, domain-adjusted
    std::optional<std::string> error;     // embedding failure recorded, batch keeps going
};

enum class FilterMode { Drop, Annotate };

inline const char* to_string(FilterMode m) { return m == FilterMode::Drop ? "drop" : "annotate"; }

struct FilterConfig {
    double threshold = 0.25;
    std::vector<SignaturePattern> signature_set = default_signatures();
    FilterMode mode = FilterMode::Drop;
    // When set, signature matches in passages tagged with a different domain
    // count double weight (query-domain inconsistency heuristic).
    std::optional<std::string> expected_domain;
};

namespace detail {

inline bool is_word_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) != 0;
}

// Occurrences of `pattern` in `text`, case-insensitive, whitespace-normalized,
// bounded by non-word characters on both sides.
inline std::size_t signature_occurrences(const std::string& norm_text,
                                         const std::string& norm_pattern) {
    if (norm_pattern.empty()) return 0;
    std::size_t count = 0;
    std::size_t pos = 0;
    while ((pos = norm_text.find(norm_pattern, pos)) != std::string::npos) {
        const bool left_ok = pos == 0 || !is_word_char(norm_text[pos - 1]);
        const std::size_t end = pos + norm_pattern.size();
        const bool right_ok = end >= norm_text.size() || !is_word_char(norm_text[end]);
        if (left_ok && right_ok) ++count;
        ++pos;
    }
    return count;
}

}  // namespace detail

inline std::vector<std::string> scan_signatures(const std::string& passage,
                                                const std::vector<SignaturePattern>& signatures) {
    const std::string norm = to_lower(squeeze_whitespace(passage));
    std::vector<std::string> matched;
    for (const auto& sig : signatures) {
        const std::string pat = to_lower(squeeze_whitespace(sig.pattern));
        if (detail::signature_occurrences(norm, pat) > 0) matched.push_back(sig.id);
    }
    return matched;
}

// Total occurrence count across all signatures; feeds the verifier's
// instruction-density feature.
inline std::size_t count_signature_hits(const std::string& text,
                                        const std::vector<SignaturePattern>& signatures) {
    const std::string norm = to_lower(squeeze_whitespace(text));
    std::size_t n = 0;
    for (const auto& sig : signatures)
        n += detail::signature_occurrences(norm, to_lower(squeeze_whitespace(sig.pattern)));
    return n;
}

inline FilterVerdict filter_passage(const std::string& passage, const ReferenceStore& store,
                                    const EmbeddingProvider& provider, const FilterConfig& config,
                                    int passage_index = 0,
                                    const std::optional<std::string>& passage_domain = std::nullopt) {
    FilterVerdict v;
    v.passage_index = passage_index;
    v.matched_signatures = scan_signatures(passage, config.signature_set);

    double weight = 0.0;
    for (const auto& id : v.matched_signatures)
        for (const auto& sig : config.signature_set)
            if (sig.id == id) weight += sig.weight;
    if (config.expected_domain && passage_domain && *passage_domain != *config.expected_domain)
        weight *= 2.0;
    v.signature_weight = weight;

    bool anomaly_flag = false;
    try {
        v.anomaly = anomaly_score(store, provider.embed(passage));
        anomaly_flag = v.anomaly > config.threshold;
    } catch (const Error& e) {
        if (v.matched_signatures.empty()) throw;
        v.error = e.what();
        v.anomaly = 0.0;
    }

    const bool sig_flag = !v.matched_signatures.empty();
    v.flagged = anomaly_flag || sig_flag;
    v.reason = anomaly_flag && sig_flag ? FilterReason::Both
               : anomaly_flag           ? FilterReason::AnomalyThreshold
               : sig_flag               ? FilterReason::SignatureMatch
                                        : FilterReason::Clean;
    return v;
}

inline std::vector<FilterVerdict> filter_batch(
    const std::vector<std::string>& passages, const ReferenceStore& store,
    const EmbeddingProvider& provider, const FilterConfig& config,
    const std::optional<std::string>& passage_domain = std::nullopt) {
    std::vector<FilterVerdict> out;
    out.reserve(passages.size());
    for (std::size_t i = 0; i < passages.size(); ++i) {
        try {
            out.push_back(filter_passage(passages[i], store, provider, config,
                                         static_cast<int>(i), passage_domain));
        } catch (const Error& e) {
            FilterVerdict v;
            v.passage_index = static_cast<int>(i);
            v.error = e.what();
            v.flagged = false;
            v.reason = FilterReason::Clean;
            out.push_back(std::move(v));
        }
    }
    return out;
}

inline nlohmann::ordered_json verdict_to_json(const FilterVerdict& v) {
    nlohmann::ordered_json j;
    j["passage_index"] = v.passage_index;
    j["anomaly"] = v.anomaly;
    j["matched_signatures"] = v.matched_signatures;
    j["flagged"] = v.flagged;
    j["reason"] = to_string(v.reason);
    j["signature_weight"] = v.signature_weight;
    if (v.error) j["error"] = *v.error;
    return j;
}

inline std::vector<SignaturePattern> signatures_from_json(const nlohmann::json& j) {
    std::vector<SignaturePattern> out;
    for (const auto& row : j) {
        SignaturePattern s;
        s.id = row.at("id").get<std::string>();
        s.pattern = row.at("pattern").get<std::string>();
        s.weight = row.value("weight", 1.0);
        s.description = row.value("description", "");
        if (s.pattern.empty() || s.weight <= 0.0 || s.weight > 1.0)
            throw Error(ErrorKind::Data, "invalid signature pattern entry: " + s.id);
        out.push_back(std::move(s));
    }
    return out;
}

inline std::vector<SignaturePattern> load_signatures(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorKind::Data, "cannot open signature file: " + path);
    try {
        return signatures_from_json(nlohmann::json::parse(f));
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw Error(ErrorKind::Data, std::string("signature file parse error: ") + e.what());
    }
}

}  // namespace ragshield
