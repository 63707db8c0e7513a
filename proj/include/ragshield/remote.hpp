// remote.hpp - HTTP-backed embedding provider and chat model adapter
#pragma once

#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "ragshield/common.hpp"
#include "ragshield/embedding.hpp"
#include "ragshield/guardrail.hpp"
#include "ragshield/pipeline.hpp"

namespace ragshield {

struct RemoteEndpoint {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string path = "/";
    int timeout_ms = 5000;
    int retries = 2;
};

namespace detail {

inline nlohmann::json post_json(const RemoteEndpoint& ep, const nlohmann::json& body) {
    std::string last_error = "no attempt made";
    for (int attempt = 0; attempt <= ep.retries; ++attempt) {
        httplib::Client client(ep.host, ep.port);
        client.set_connection_timeout(0, ep.timeout_ms * 1000);
        client.set_read_timeout(ep.timeout_ms / 1000, (ep.timeout_ms % 1000) * 1000);
        auto res = client.Post(ep.path, body.dump(), "application/json");
        if (!res) {
            last_error = "connection failed: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status != 200) {
            last_error = "unexpected HTTP status " + std::to_string(res->status);
            continue;
        }
        try {
            return nlohmann::json::parse(res->body);
        } catch (const std::exception& e) {
            throw Error(ErrorKind::Transport,
                        std::string("malformed response body: ") + e.what());
        }
    }
    throw Error(ErrorKind::Transport, "request to " + ep.host + ":" + std::to_string(ep.port) +
                                          ep.path + " failed: " + last_error);
}

}  // namespace detail

// POST {"texts": [...]} -> {"embeddings": [[...], ...]}, row per input.
class RemoteEmbedder : public EmbeddingProvider {
public:
    RemoteEmbedder(RemoteEndpoint endpoint, std::size_t dim)
        : endpoint_(std::move(endpoint)), dim_(dim) {}

    std::size_t dimension() const override { return dim_; }

    EmbeddingVector embed(const std::string& text) const override {
        if (text.empty()) throw Error(ErrorKind::Data, "cannot embed empty text");
        return embed_batch({text}).front();
    }

    std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts) const {
        const nlohmann::json reply =
            detail::post_json(endpoint_, nlohmann::json{{"texts", texts}});
        if (!reply.contains("embeddings") || !reply["embeddings"].is_array() ||
            reply["embeddings"].size() != texts.size())
            throw Error(ErrorKind::Transport,
                        "embedding response row count does not match input count");
        std::vector<EmbeddingVector> out;
        for (const auto& row : reply["embeddings"]) {
            EmbeddingVector v{row.get<std::vector<double>>()};
            if (v.dimension() != dim_)
                throw Error(ErrorKind::Transport, "embedding response dimension mismatch");
            out.push_back(std::move(v));
        }
        return out;
    }

private:
    RemoteEndpoint endpoint_;
    std::size_t dim_;
};

// Chat-completion adapter: core+guard go into the system message, context+query
// into the user message.
class RemoteChatModel : public ModelAdapter {
public:
    RemoteChatModel(RemoteEndpoint endpoint, GuardrailConfig guardrail)
        : endpoint_(std::move(endpoint)), guardrail_(std::move(guardrail)) {}

    std::string generate(const std::string& prompt, const std::vector<Span>*) const override {
        return generate_sections(split_sections(prompt));
    }

    std::string generate_sections(const PromptSections& sections) const {
        const nlohmann::json body = {
            {"messages",
             {{{"role", "system"},
               {"content", sections.core + guardrail_.section_separator + sections.guard}},
              {{"role", "user"},
               {"content", sections.context + guardrail_.section_separator + sections.query}}}}};
        const nlohmann::json reply = detail::post_json(endpoint_, body);
        try {
            return reply.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const std::exception& e) {
            throw Error(ErrorKind::Transport,
                        std::string("malformed completion body: ") + e.what());
        }
    }

private:
    // Best-effort split of an assembled prompt back into system/user halves:
    // everything before the context header is privileged.
    PromptSections split_sections(const std::string& prompt) const {
        PromptSections s;
        const std::size_t ctx = prompt.find(guardrail_.context_header);
        if (ctx == std::string::npos) {
            s.context = prompt;
            return s;
        }
        s.core = prompt.substr(0, ctx);
        s.context = prompt.substr(ctx);
        return s;
    }

    RemoteEndpoint endpoint_;
    GuardrailConfig guardrail_;
};

}  // namespace ragshield
