// pipeline.hpp - ablation-ladder orchestration over a model adapter
#pragma once

#include <chrono>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ragshield/common.hpp"
#include "ragshield/corpus.hpp"
#include "ragshield/filter.hpp"
#include "ragshield/guardrail.hpp"
#include "ragshield/verifier.hpp"

namespace ragshield {

enum class DefenseLevel { Baseline, Filtering, FilteringGuardrails, Full };

inline constexpr std::array<DefenseLevel, 4> kAllLevels = {
    DefenseLevel::Baseline, DefenseLevel::Filtering, DefenseLevel::FilteringGuardrails,
    DefenseLevel::Full};

inline const char* to_string(DefenseLevel l) {
    switch (l) {
        case DefenseLevel::Baseline: return "baseline";
        case DefenseLevel::Filtering: return "filtering";
        case DefenseLevel::FilteringGuardrails: return "guardrails";
        case DefenseLevel::Full: return "full";
    }
    return "?";
}

inline DefenseLevel level_from_label(const std::string& s) {
    if (s == "baseline") return DefenseLevel::Baseline;
    if (s == "filtering") return DefenseLevel::Filtering;
    if (s == "guardrails" || s == "filtering_guardrails") return DefenseLevel::FilteringGuardrails;
    if (s == "full") return DefenseLevel::Full;
    throw Error(ErrorKind::Data, "unknown defense level label: " + s);
}

struct DefenseConfig {
    DefenseLevel level = DefenseLevel::Full;
    FilterConfig filter;
    GuardrailConfig guardrail;
    VerifierConfig verifier;
    ResponseProfile profile;
};

struct Span {
    std::size_t begin = 0;
    std::size_t end = 0;
};

class ModelAdapter {
public:
    virtual ~ModelAdapter() = default;
    // spans are the document regions of the prompt; nullptr when the prompt has
    // no delimited structure (baseline / filtering levels).
    virtual std::string generate(const std::string& prompt,
                                 const std::vector<Span>* spans) const = 0;
};

struct PayloadEntry {
    std::string marker;
    AttackCategory category = AttackCategory::DirectInjection;
};

inline std::vector<PayloadEntry> build_payload_vocabulary(const std::vector<TestCase>& cases) {
    std::vector<PayloadEntry> out;
    for (const auto& tc : cases)
        if (tc.kind == CaseKind::Adversarial && tc.payload_marker && tc.category)
            out.push_back({*tc.payload_marker, *tc.category});
    return out;
}

// Deterministic rule-driven stand-in for a vulnerable LLM. Whether an injected
// payload is followed depends on where it sits (inside vs outside a document
// span), whether the guard directive is present, and how many distinct mutation
// fingerprints dress the attack up.
class MockVulnerableModel : public ModelAdapter {
public:
    int resistance_without_guard = 0;
    int resistance_with_guard = 2;
    std::string canary = "CANARY-7f3a9";
    std::string benign_answer_template =
        "Based on the retrieved documents, here is a concise answer to \"{query}\".";
    std::string guard_fingerprint = "SECURITY NOTICE:";
    std::string query_prefix = "User question: ";
    std::vector<PayloadEntry> vocabulary;

    MockVulnerableModel() = default;
    explicit MockVulnerableModel(std::vector<PayloadEntry> vocab) : vocabulary(std::move(vocab)) {}

    std::string generate(const std::string& prompt,
                         const std::vector<Span>* spans) const override {
        const bool guarded = prompt.find(guard_fingerprint) != std::string::npos;
        const int resistance = guarded ? resistance_with_guard : resistance_without_guard;

        std::optional<PayloadEntry> followed;
        auto consider = [&](const std::string& marker, AttackCategory cat) {
            if (followed) return;
            const std::size_t pos = prompt.find(marker);
            if (pos == std::string::npos) return;
            if (spans == nullptr) {
                followed = PayloadEntry{marker, cat};  // unstructured prompt, no provenance
                return;
            }
            // In a structured prompt only document bodies are untrusted; hits in
            // the frame (delimiters, instructions, query) are not attacks.
            const Span* span = containing_span(spans, pos);
            if (span == nullptr) return;
            const std::string body = prompt.substr(span->begin, span->end - span->begin);
            if (effective_sophistication(body) > resistance)
                followed = PayloadEntry{marker, cat};
        };
        for (const auto& entry : vocabulary) consider(entry.marker, entry.category);
        if (!followed) {
            // fall back to bare signature phrases; category unknown, treat as direct
            const std::string lower = to_lower(prompt);
            for (const auto& sig : default_signatures()) {
                if (followed) break;
                consider_signature(prompt, lower, to_lower(sig.pattern), spans, resistance,
                                   followed);
            }
        }

        if (followed) {
            if (followed->category == AttackCategory::DataExfiltration)
                return "As requested, the stored secret is " + canary + ".";
            return "COMPLIED: " + followed->marker;
        }
        return replace_all(benign_answer_template, "{query}", extract_query(prompt));
    }

    // Distinct mutation fingerprints in a document body, mapped to level 1..3.
    static int effective_sophistication(const std::string& body) {
        static const std::vector<std::string> fingerprints = {
            "a forum user once wrote",
            "imagine a scenario where",
            "keep these two fragments together",
            "now combine with the previous fragment",
            "[system]",
            "[/system]",
        };
        const std::string norm = to_lower(squeeze_whitespace(body));
        int distinct = 0;
        for (const auto& f : fingerprints)
            if (norm.find(f) != std::string::npos) ++distinct;
        return std::min(3, 1 + distinct);
    }

private:
    static const Span* containing_span(const std::vector<Span>* spans, std::size_t pos) {
        if (spans == nullptr) return nullptr;
        for (const auto& s : *spans)
            if (pos >= s.begin && pos < s.end) return &s;
        return nullptr;
    }

    void consider_signature(const std::string& prompt, const std::string& lower,
                            const std::string& pattern, const std::vector<Span>* spans,
                            int resistance, std::optional<PayloadEntry>& followed) const {
        auto word_char = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; };
        std::size_t pos = 0;
        while ((pos = lower.find(pattern, pos)) != std::string::npos) {
            const bool left_ok = pos == 0 || !word_char(lower[pos - 1]);
            const std::size_t end = pos + pattern.size();
            const bool right_ok = end >= lower.size() || !word_char(lower[end]);
            if (!(left_ok && right_ok)) {
                ++pos;
                continue;
            }
            if (spans == nullptr) {
                followed = PayloadEntry{prompt.substr(pos, pattern.size()),
                                        AttackCategory::DirectInjection};
                return;
            }
            const Span* span = containing_span(spans, pos);
            if (span != nullptr) {
                const std::string body = prompt.substr(span->begin, span->end - span->begin);
                if (effective_sophistication(body) > resistance) {
                    followed = PayloadEntry{prompt.substr(pos, pattern.size()),
                                            AttackCategory::DirectInjection};
                    return;
                }
            }
            ++pos;
        }
    }

    std::string extract_query(const std::string& prompt) const {
        const std::size_t pos = prompt.rfind(query_prefix);
        if (pos == std::string::npos) return "";
        std::string q = prompt.substr(pos + query_prefix.size());
        while (!q.empty() && is_space(q.back())) q.pop_back();
        return q;
    }
};

struct DecisionTrace {
    std::string request_id;
    DefenseLevel config_level = DefenseLevel::Baseline;
    std::vector<FilterVerdict> filter_verdicts;
    std::vector<int> dropped_passage_indices;
    PromptSections prompt;
    std::string raw_response;
    std::optional<VerificationVerdict> verification;
    std::string final_output;
    std::map<std::string, std::int64_t> timings_us;
};

namespace detail {

inline std::string naive_prompt(const std::string& query, const std::vector<std::string>& passages,
                                const GuardrailConfig& g,
                                const std::vector<bool>& annotate_flags = {}) {
    std::string prompt = "You are a helpful assistant. Answer using the provided documents.\n";
    for (std::size_t i = 0; i < passages.size(); ++i) {
        if (i < annotate_flags.size() && annotate_flags[i])
            prompt += std::string(kFilterWarningLine) + "\n";
        prompt += passages[i] + "\n";
    }
    prompt += g.query_prefix + query;
    return prompt;
}

class StageTimer {
public:
    explicit StageTimer(std::map<std::string, std::int64_t>& out) : out_(out) {}
    template <typename F>
    auto time(const std::string& stage, F&& f) -> decltype(f()) {
        const auto t0 = std::chrono::steady_clock::now();
        if constexpr (std::is_void_v<decltype(f())>) {
            f();
            record(stage, t0);
        } else {
            auto r = f();
            record(stage, t0);
            return r;
        }
    }

private:
    void record(const std::string& stage, std::chrono::steady_clock::time_point t0) {
        out_[stage] = std::chrono::duration_cast<std::chrono::microseconds>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
    }
    std::map<std::string, std::int64_t>& out_;
};

}  // namespace detail

inline DecisionTrace process_request(const std::string& query,
                                     const std::vector<std::string>& passages,
                                     const DefenseConfig& config, const ModelAdapter& model,
                                     const ReferenceStore& store,
                                     const EmbeddingProvider& provider,
                                     const std::string& request_id = "req",
                                     const std::optional<std::string>& passage_domain =
                                         std::nullopt) {
    if (query.empty()) throw Error(ErrorKind::Data, "process_request: query must be non-empty");
    const auto total0 = std::chrono::steady_clock::now();

    DecisionTrace trace;
    trace.request_id = request_id;
    trace.config_level = config.level;
    detail::StageTimer timer(trace.timings_us);

    // layer 1
    std::vector<std::string> kept = passages;
    std::vector<bool> annotate_flags;
    if (config.level != DefenseLevel::Baseline) {
        trace.filter_verdicts = timer.time("filter", [&] {
            return filter_batch(passages, store, provider, config.filter, passage_domain);
        });
        if (config.filter.mode == FilterMode::Drop) {
            kept.clear();
            for (const auto& v : trace.filter_verdicts) {
                if (v.flagged)
                    trace.dropped_passage_indices.push_back(v.passage_index);
                else
                    kept.push_back(passages[static_cast<std::size_t>(v.passage_index)]);
            }
        } else {
            annotate_flags.assign(passages.size(), false);
            for (const auto& v : trace.filter_verdicts)
                if (v.flagged) annotate_flags[static_cast<std::size_t>(v.passage_index)] = true;
        }
    }

    // layer 2 (or naive concatenation below it)
    std::vector<Span> spans;
    const bool structured = config.level == DefenseLevel::FilteringGuardrails ||
                            config.level == DefenseLevel::Full;
    timer.time("prompt", [&] {
        if (structured) {
            trace.prompt = build_prompt(query, kept, config.guardrail, annotate_flags);
            for (const auto& [b, e] : locate_document_spans(trace.prompt.assembled,
                                                            config.guardrail))
                spans.push_back({b, e});
        } else {
            trace.prompt.assembled =
                detail::naive_prompt(query, kept, config.guardrail, annotate_flags);
            trace.prompt.query = config.guardrail.query_prefix + query;
        }
    });

    // model call
    bool transport_failed = false;
    std::string transport_error;
    try {
        trace.raw_response = timer.time("generate", [&] {
            return model.generate(trace.prompt.assembled, structured ? &spans : nullptr);
        });
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::Transport || config.level != DefenseLevel::Full) throw;
        transport_failed = true;
        transport_error = e.what();
    }

    // layer 3
    if (config.level == DefenseLevel::Full) {
        if (transport_failed) {
            VerificationVerdict v;
            v.final = FinalDecision::Rejected;
            v.output_text = kRefusalMessage;
            trace.verification = v;
            trace.raw_response = "";
            trace.final_output = kRefusalMessage;
        } else {
            trace.verification = timer.time("verify", [&] {
                return verify(trace.raw_response, query, config.profile, store, provider,
                              config.verifier, config.filter.signature_set);
            });
            trace.final_output = trace.verification->output_text;
        }
    } else {
        trace.final_output = trace.raw_response;
    }

    trace.timings_us["total"] = std::chrono::duration_cast<std::chrono::microseconds>(
                                    std::chrono::steady_clock::now() - total0)
                                    .count();
    return trace;
}

inline nlohmann::ordered_json trace_to_json(const DecisionTrace& t) {
    nlohmann::ordered_json j;
    j["request_id"] = t.request_id;
    j["config_level"] = to_string(t.config_level);
    nlohmann::ordered_json verdicts = nlohmann::ordered_json::array();
    for (const auto& v : t.filter_verdicts) verdicts.push_back(verdict_to_json(v));
    j["filter_verdicts"] = std::move(verdicts);
    j["dropped_passage_indices"] = t.dropped_passage_indices;
    j["prompt"] = t.prompt.assembled;
    j["raw_response"] = t.raw_response;
    if (t.verification) j["verification"] = verdict_to_json(*t.verification);
    j["final_output"] = t.final_output;
    j["timings_us"] = t.timings_us;
    return j;
}

}  // namespace ragshield
