#include <catch2/catch_amalgamated.hpp>

#include <atomic>
#include <thread>

#include "ragshield/config.hpp"
#include "ragshield/remote.hpp"

using namespace ragshield;

namespace {

// In-process stub server shared by the remote tests.
class StubServer {
public:
    StubServer() {
        server_.Post("/embed", [](const httplib::Request& req, httplib::Response& res) {
            const auto body = nlohmann::json::parse(req.body);
            nlohmann::json rows = nlohmann::json::array();
            for (const auto& text : body.at("texts")) {
                // toy 3-dim embedding derived from the text length
                const double n = static_cast<double>(text.get<std::string>().size());
                rows.push_back({n, n + 1.0, n + 2.0});
            }
            res.set_content(nlohmann::json{{"embeddings", rows}}.dump(), "application/json");
        });
        server_.Post("/embed-short", [](const httplib::Request&, httplib::Response& res) {
            res.set_content(nlohmann::json{{"embeddings", nlohmann::json::array()}}.dump(),
                            "application/json");
        });
        server_.Post("/embed-narrow", [](const httplib::Request& req, httplib::Response& res) {
            const auto body = nlohmann::json::parse(req.body);
            nlohmann::json rows = nlohmann::json::array();
            for (std::size_t i = 0; i < body.at("texts").size(); ++i) rows.push_back({1.0});
            res.set_content(nlohmann::json{{"embeddings", rows}}.dump(), "application/json");
        });
        server_.Post("/chat", [this](const httplib::Request& req, httplib::Response& res) {
            last_chat_body = nlohmann::json::parse(req.body);
            nlohmann::json message;
            message["role"] = "assistant";
            message["content"] = "stub answer";
            nlohmann::json choice;
            choice["message"] = message;
            nlohmann::json reply;
            reply["choices"] = nlohmann::json::array({choice});
            res.set_content(reply.dump(), "application/json");
        });
        server_.Post("/error", [](const httplib::Request&, httplib::Response& res) {
            res.status = 500;
            res.set_content("boom", "text/plain");
        });
        server_.Post("/garbage", [](const httplib::Request&, httplib::Response& res) {
            res.set_content("this is not json", "application/json");
        });
        server_.Post("/flaky", [this](const httplib::Request&, httplib::Response& res) {
            if (flaky_calls++ == 0) {
                res.status = 503;
                res.set_content("busy", "text/plain");
            } else {
                res.set_content(
                    nlohmann::json{{"embeddings", {{1.0, 0.0}}}}.dump(), "application/json");
            }
        });

        port = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }

    ~StubServer() {
        server_.stop();
        thread_.join();
    }

    RemoteEndpoint endpoint(const std::string& path, int retries = 0) const {
        RemoteEndpoint ep;
        ep.host = "127.0.0.1";
        ep.port = port;
        ep.path = path;
        ep.timeout_ms = 2000;
        ep.retries = retries;
        return ep;
    }

    int port = 0;
    nlohmann::json last_chat_body;
    std::atomic<int> flaky_calls{0};

private:
    httplib::Server server_;
    std::thread thread_;
};

StubServer& stub() {
    static StubServer s;
    return s;
}

}  // namespace

TEST_CASE("remote embedder round-trips a batch") {
    RemoteEmbedder embedder(stub().endpoint("/embed"), 3);
    const auto rows = embedder.embed_batch({"ab", "abcd"});
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].values == std::vector<double>{2.0, 3.0, 4.0});
    CHECK(rows[1].values == std::vector<double>{4.0, 5.0, 6.0});
    CHECK(embedder.embed("xyz").values == std::vector<double>{3.0, 4.0, 5.0});
}

TEST_CASE("remote embedder rejects empty text locally") {
    RemoteEmbedder embedder(stub().endpoint("/embed"), 3);
    CHECK_THROWS_AS(embedder.embed(""), Error);
}

TEST_CASE("row-count mismatch is a transport error") {
    RemoteEmbedder embedder(stub().endpoint("/embed-short"), 3);
    try {
        embedder.embed_batch({"a", "b"});
        FAIL("expected transport error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Transport);
    }
}

TEST_CASE("dimension mismatch is a transport error") {
    RemoteEmbedder embedder(stub().endpoint("/embed-narrow"), 3);
    CHECK_THROWS_AS(embedder.embed("hello"), Error);
}

TEST_CASE("non-200 responses surface as transport errors with the status") {
    RemoteEmbedder embedder(stub().endpoint("/error"), 3);
    try {
        embedder.embed("hello");
        FAIL("expected transport error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Transport);
        CHECK(std::string(e.what()).find("500") != std::string::npos);
    }
}

TEST_CASE("malformed JSON body is a transport error") {
    RemoteEmbedder embedder(stub().endpoint("/garbage"), 3);
    CHECK_THROWS_AS(embedder.embed("hello"), Error);
}

TEST_CASE("a retry recovers from a transient failure") {
    stub().flaky_calls = 0;
    RemoteEmbedder embedder(stub().endpoint("/flaky", 2), 2);
    const auto v = embedder.embed("hello");
    CHECK(v.values == std::vector<double>{1.0, 0.0});
    CHECK(stub().flaky_calls >= 2);
}

TEST_CASE("unreachable host is a transport error after retries") {
    RemoteEndpoint ep;
    ep.host = "127.0.0.1";
    ep.port = 1;  // nothing listens here
    ep.timeout_ms = 200;
    ep.retries = 1;
    RemoteEmbedder embedder(ep, 3);
    try {
        embedder.embed("hello");
        FAIL("expected transport error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Transport);
    }
}

TEST_CASE("remote chat model splits the prompt into system and user messages") {
    GuardrailConfig g;
    RemoteChatModel model(stub().endpoint("/chat"), g);
    const auto sections = build_prompt("What is the policy?", {"The policy is simple."}, g);
    const auto out = model.generate(sections.assembled, nullptr);
    CHECK(out == "stub answer");

    const auto& body = stub().last_chat_body;
    REQUIRE(body.contains("messages"));
    REQUIRE(body["messages"].size() == 2);
    const std::string system = body["messages"][0]["content"].get<std::string>();
    const std::string user = body["messages"][1]["content"].get<std::string>();
    CHECK(body["messages"][0]["role"] == "system");
    CHECK(system.find(g.precedence_marker) != std::string::npos);
    CHECK(system.find("SECURITY NOTICE:") != std::string::npos);
    CHECK(system.find(g.context_header) == std::string::npos);
    CHECK(user.find(g.context_header) != std::string::npos);
    CHECK(user.find("The policy is simple.") != std::string::npos);
    CHECK(user.find("User question: What is the policy?") != std::string::npos);
}

TEST_CASE("remote chat model reports malformed completion bodies") {
    GuardrailConfig g;
    RemoteChatModel model(stub().endpoint("/garbage"), g);
    CHECK_THROWS_AS(model.generate("prompt text", nullptr), Error);
}

TEST_CASE("pipeline config round trip covers every section") {
    const nlohmann::json j = {
        {"level", "guardrails"},
        {"filter", {{"threshold", 0.4}, {"mode", "annotate"}}},
        {"guardrail", {{"doc_start", "<<DOC>>"}, {"doc_end", "<<END>>"}}},
        {"verifier", {{"weights", {1.0, 2.0, 3.0, 4.0}}, {"bias", -0.5}, {"action", "reject"}}},
        {"profile", {{"mean_length", 20.0}, {"std_length", 5.0}}},
        {"model", {{"kind", "remote"}, {"host", "10.0.0.1"}, {"port", 9000}}},
        {"embedding_dim", 16},
        {"store", {{"alpha", 2.0}, {"beta", 0.1}}},
    };
    const auto cfg = pipeline_config_from_json(j);
    CHECK(cfg.defense.level == DefenseLevel::FilteringGuardrails);
    CHECK(cfg.defense.filter.threshold == 0.4);
    CHECK(cfg.defense.filter.mode == FilterMode::Annotate);
    CHECK(cfg.defense.guardrail.doc_start == "<<DOC>>");
    CHECK(cfg.defense.verifier.w_coherence == 4.0);
    CHECK(cfg.defense.verifier.action == VerifierAction::Reject);
    CHECK(cfg.defense.profile.std_length == 5.0);
    CHECK(cfg.model.kind == "remote");
    CHECK(cfg.model.port == 9000);
    CHECK(cfg.embedding_dim == 16);
    CHECK(cfg.store_alpha == 2.0);
    CHECK(cfg.store_beta == 0.1);
}

TEST_CASE("invalid config values are rejected") {
    CHECK_THROWS_AS(pipeline_config_from_json({{"level", "ultra"}}), Error);
    CHECK_THROWS_AS(pipeline_config_from_json({{"embedding_dim", 0}}), Error);
    CHECK_THROWS_AS(
        pipeline_config_from_json({{"verifier", {{"weights", {1.0, 2.0}}}}}), Error);
    CHECK_THROWS_AS(
        pipeline_config_from_json({{"profile", {{"std_length", 0.0}}}}), Error);
    CHECK_THROWS_AS(pipeline_config_from_json({{"model", {{"kind", "oracle"}}}}), Error);
    CHECK_THROWS_AS(pipeline_config_from_json({{"filter", {{"mode", "quarantine"}}}}), Error);
}
