// config.hpp - pipeline JSON config file loading
#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "ragshield/common.hpp"
#include "ragshield/pipeline.hpp"

namespace ragshield {

struct ModelSpec {
    std::string kind = "mock";  // "mock" | "remote"
    // mock knobs
    int resistance_without_guard = 0;
    int resistance_with_guard = 2;
    std::string canary = "CANARY-7f3a9";
    // remote knobs
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string path = "/v1/chat/completions";
    int timeout_ms = 5000;
    int retries = 2;
};

struct PipelineConfig {
    DefenseConfig defense;
    ModelSpec model;
    std::size_t embedding_dim = 64;
    double store_alpha = 1.0;
    double store_beta = 0.5;
};

namespace detail {

inline void load_filter(FilterConfig& f, const nlohmann::json& j) {
    f.threshold = j.value("threshold", f.threshold);
    if (j.contains("mode")) {
        const std::string m = j["mode"].get<std::string>();
        if (m == "drop")
            f.mode = FilterMode::Drop;
        else if (m == "annotate")
            f.mode = FilterMode::Annotate;
        else
            throw Error(ErrorKind::Data, "unknown filter mode: " + m);
    }
    if (j.contains("expected_domain")) f.expected_domain = j["expected_domain"].get<std::string>();
    if (j.contains("signatures")) f.signature_set = signatures_from_json(j["signatures"]);
    if (j.contains("signature_file")) f.signature_set = load_signatures(j["signature_file"]);
}

inline void load_guardrail(GuardrailConfig& g, const nlohmann::json& j) {
    g.doc_start = j.value("doc_start", g.doc_start);
    g.doc_end = j.value("doc_end", g.doc_end);
    g.context_header = j.value("context_header", g.context_header);
    g.query_prefix = j.value("query_prefix", g.query_prefix);
    g.core_instructions = j.value("core_instructions", g.core_instructions);
    g.guard_directives = j.value("guard_directives", g.guard_directives);
    g.precedence_marker = j.value("precedence_marker", g.precedence_marker);
    g.section_separator = j.value("section_separator", g.section_separator);
    g.validate();
}

inline void load_verifier(VerifierConfig& v, const nlohmann::json& j) {
    if (j.contains("weights")) {
        const auto& w = j["weights"];
        if (!w.is_array() || w.size() != 4)
            throw Error(ErrorKind::Data, "verifier weights must be an array of four numbers");
        v.w_instruction = w[0].get<double>();
        v.w_disclosure = w[1].get<double>();
        v.w_length = w[2].get<double>();
        v.w_coherence = w[3].get<double>();
    }
    v.bias = j.value("bias", v.bias);
    v.z_flag = j.value("z_flag", v.z_flag);
    if (j.contains("action")) {
        const std::string a = j["action"].get<std::string>();
        if (a == "sanitize")
            v.action = VerifierAction::Sanitize;
        else if (a == "reject")
            v.action = VerifierAction::Reject;
        else
            throw Error(ErrorKind::Data, "unknown verifier action: " + a);
    }
}

inline void load_profile(ResponseProfile& p, const nlohmann::json& j) {
    p.mean_length = j.value("mean_length", p.mean_length);
    p.std_length = j.value("std_length", p.std_length);
    if (p.std_length <= 0) throw Error(ErrorKind::Data, "profile std_length must be positive");
    if (j.contains("expected_polarity"))
        p.expected_polarity = polarity_from_string(j["expected_polarity"].get<std::string>());
    if (j.contains("forbidden_disclosures"))
        p.forbidden_disclosures = j["forbidden_disclosures"].get<std::vector<std::string>>();
}

inline void load_model(ModelSpec& m, const nlohmann::json& j) {
    m.kind = j.value("kind", m.kind);
    if (m.kind != "mock" && m.kind != "remote")
        throw Error(ErrorKind::Data, "unknown model kind: " + m.kind);
    m.resistance_without_guard = j.value("resistance_without_guard", m.resistance_without_guard);
    m.resistance_with_guard = j.value("resistance_with_guard", m.resistance_with_guard);
    m.canary = j.value("canary", m.canary);
    m.host = j.value("host", m.host);
    m.port = j.value("port", m.port);
    m.path = j.value("path", m.path);
    m.timeout_ms = j.value("timeout_ms", m.timeout_ms);
    m.retries = j.value("retries", m.retries);
}

}  // namespace detail

inline PipelineConfig pipeline_config_from_json(const nlohmann::json& j) {
    PipelineConfig cfg;
    if (j.contains("level")) cfg.defense.level = level_from_label(j["level"].get<std::string>());
    if (j.contains("filter")) detail::load_filter(cfg.defense.filter, j["filter"]);
    if (j.contains("guardrail")) detail::load_guardrail(cfg.defense.guardrail, j["guardrail"]);
    if (j.contains("verifier")) detail::load_verifier(cfg.defense.verifier, j["verifier"]);
    if (j.contains("profile")) detail::load_profile(cfg.defense.profile, j["profile"]);
    if (j.contains("model")) detail::load_model(cfg.model, j["model"]);
    cfg.embedding_dim = j.value("embedding_dim", cfg.embedding_dim);
    if (cfg.embedding_dim == 0) throw Error(ErrorKind::Data, "embedding_dim must be positive");
    if (j.contains("store")) {
        cfg.store_alpha = j["store"].value("alpha", cfg.store_alpha);
        cfg.store_beta = j["store"].value("beta", cfg.store_beta);
    }
    return cfg;
}

inline PipelineConfig load_pipeline_config(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorKind::Data, "cannot open config file: " + path);
    try {
        return pipeline_config_from_json(nlohmann::json::parse(f));
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw Error(ErrorKind::Data, std::string("config parse error: ") + e.what());
    }
}

}  // namespace ragshield
