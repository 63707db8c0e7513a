// ragshield CLI: corpus generation, passage scoring, prompt building,
// response verification, full evaluation, and report rendering.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include <CLI11.hpp>

#include "ragshield/config.hpp"
#include "ragshield/corpus.hpp"
#include "ragshield/eval.hpp"
#include "ragshield/remote.hpp"

namespace {

using namespace ragshield;

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorKind::Data, "cannot open file: " + path);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

std::vector<std::string> read_lines(std::istream& in) {
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) out.push_back(line);
    return out;
}

PipelineConfig load_config_or_default(const std::string& flag_path) {
    std::string path = flag_path;
    if (path.empty()) {
        if (const char* env = std::getenv("RAGSHIELD_CONFIG")) path = env;
    }
    if (path.empty()) return PipelineConfig{};
    return load_pipeline_config(path);
}

CorpusManifest load_manifest(const std::string& path, std::uint64_t seed) {
    if (path.empty() || path == "default") {
        return CorpusManifest::defaults(seed);
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw Error(ErrorKind::Data, std::string("manifest parse error: ") + e.what());
    }
    CorpusManifest m;
    m.seed = j.value("seed", seed);
    m.benign_count = j.value("benign_count", 0);
    if (j.contains("categories"))
        for (const auto& [label, counts] : j["categories"].items()) {
            auto& cc = m.at(category_from_string(label));
            cc.base = counts.value("base", 0);
            cc.variations = counts.value("variations", 0);
        }
    return m;
}

std::unique_ptr<EmbeddingProvider> make_provider(const PipelineConfig& cfg) {
    return std::make_unique<DeterministicHashEmbedder>(cfg.embedding_dim);
}

std::unique_ptr<ModelAdapter> make_model(const PipelineConfig& cfg,
                                         const std::vector<TestCase>& corpus) {
    if (cfg.model.kind == "remote") {
        RemoteEndpoint ep{cfg.model.host, cfg.model.port, cfg.model.path, cfg.model.timeout_ms,
                          cfg.model.retries};
        return std::make_unique<RemoteChatModel>(ep, cfg.defense.guardrail);
    }
    auto mock = std::make_unique<MockVulnerableModel>(build_payload_vocabulary(corpus));
    mock->resistance_without_guard = cfg.model.resistance_without_guard;
    mock->resistance_with_guard = cfg.model.resistance_with_guard;
    mock->canary = cfg.model.canary;
    mock->query_prefix = cfg.defense.guardrail.query_prefix;
    return mock;
}

ReferenceStore evaluation_store(const PipelineConfig& cfg, const EmbeddingProvider& provider,
                                const std::vector<TestCase>& corpus) {
    std::vector<std::string> benign_texts;
    for (const auto& tc : corpus)
        if (tc.kind == CaseKind::Benign)
            for (const auto& p : tc.passages) benign_texts.push_back(p);
    if (benign_texts.empty())
        throw Error(ErrorKind::Data, "corpus has no benign passages to build the reference set");
    return build_stores(provider, benign_texts, all_payload_templates(), cfg.store_alpha,
                        cfg.store_beta);
}

int cmd_generate(const std::string& manifest_path, std::uint64_t seed, const std::string& out) {
    const CorpusManifest manifest = load_manifest(manifest_path, seed);
    const auto cases = generate_corpus(manifest);
    const std::size_t n = save_corpus(cases, out);
    std::cerr << "wrote " << n << " cases to " << out << "\n";
    return 0;
}

int cmd_score(const std::string& store_path, const std::string& config_path,
              const std::string& passages_path) {
    const PipelineConfig cfg = load_config_or_default(config_path);
    const ReferenceStore store = load_store(store_path);
    DeterministicHashEmbedder provider(store.dimension);
    std::vector<std::string> passages;
    if (passages_path.empty() || passages_path == "-") {
        passages = read_lines(std::cin);
    } else {
        std::ifstream f(passages_path, std::ios::binary);
        if (!f) throw Error(ErrorKind::Data, "cannot open passage file: " + passages_path);
        passages = read_lines(f);
    }
    for (const auto& v : filter_batch(passages, store, provider, cfg.defense.filter))
        std::cout << verdict_to_json(v).dump() << "\n";
    return 0;
}

int cmd_build_prompt(const std::string& config_path, const std::string& query,
                     const std::string& passages_path) {
    const PipelineConfig cfg = load_config_or_default(config_path);
    std::vector<std::string> passages;
    if (!passages_path.empty()) {
        std::ifstream f(passages_path, std::ios::binary);
        if (!f) throw Error(ErrorKind::Data, "cannot open passage file: " + passages_path);
        passages = read_lines(f);
    }
    std::cout << build_prompt(query, passages, cfg.defense.guardrail).assembled << "\n";
    return 0;
}

int cmd_verify(const std::string& config_path, const std::string& query,
               const std::string& response_path) {
    const PipelineConfig cfg = load_config_or_default(config_path);
    auto provider = make_provider(cfg);
    ReferenceStore store;
    store.dimension = provider->dimension();
    store.benign.push_back(provider->embed(query));
    const std::string response = read_file(response_path);
    const auto verdict = verify(response, query, cfg.defense.profile, store, *provider,
                                cfg.defense.verifier, cfg.defense.filter.signature_set);
    std::cout << verdict_to_json(verdict).dump(2) << "\n";
    return 0;
}

int cmd_evaluate(const std::string& corpus_path, const std::string& config_path,
                 const std::string& levels_csv, const std::string& out_dir, std::uint64_t seed) {
    const PipelineConfig cfg = load_config_or_default(config_path);
    const auto corpus = load_corpus(corpus_path);
    std::vector<DefenseLevel> levels;
    std::stringstream ss(levels_csv);
    std::string label;
    while (std::getline(ss, label, ','))
        if (!label.empty()) levels.push_back(level_from_label(label));
    if (levels.empty()) throw Error(ErrorKind::Usage, "no defense levels requested");

    auto provider = make_provider(cfg);
    const ReferenceStore store = evaluation_store(cfg, *provider, corpus);
    auto model = make_model(cfg, corpus);
    const auto run = run_evaluation(corpus, levels, cfg.defense, *model, store, *provider,
                                    out_dir, seed, cfg.model.canary);
    std::cout << render_markdown(run.reports);
    return 0;
}

int cmd_report(const std::string& in_dir, const std::string& format) {
    std::vector<EvaluationReport> reports;
    for (DefenseLevel level : kAllLevels) {
        const std::string path =
            in_dir + "/report_" + std::string(to_string(level)) + ".json";
        std::ifstream f(path, std::ios::binary);
        if (!f) continue;
        try {
            reports.push_back(report_from_json(nlohmann::json::parse(f)));
        } catch (const std::exception& e) {
            throw Error(ErrorKind::Data, "report parse error in " + path + ": " + e.what());
        }
    }
    if (reports.empty())
        throw Error(ErrorKind::Data, "no report_<level>.json files found in " + in_dir);
    if (format == "md")
        std::cout << render_markdown(reports);
    else if (format == "csv")
        std::cout << render_csv(reports);
    else
        throw Error(ErrorKind::Usage, "unknown report format: " + format);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"RAG prompt-injection defense pipeline"};
    app.require_subcommand(1);

    std::string manifest_path = "default", out_path = "corpus.jsonl";
    std::uint64_t seed = 42;
    auto* generate = app.add_subcommand("generate", "generate the benchmark corpus");
    generate->add_option("--manifest", manifest_path, "manifest JSON file or 'default'");
    generate->add_option("--seed", seed, "generation seed");
    generate->add_option("--out", out_path, "output corpus path");

    std::string store_path, config_path, passages_path;
    auto* score = app.add_subcommand("score", "score passages against a reference store");
    score->add_option("--store", store_path, "reference store JSON")->required();
    score->add_option("--config", config_path, "pipeline config JSON");
    score->add_option("passages", passages_path, "passage file (one per line), '-' for stdin");

    std::string query;
    auto* build = app.add_subcommand("build-prompt", "assemble a guarded prompt");
    build->add_option("--config", config_path, "pipeline config JSON");
    build->add_option("--query", query, "user query")->required();
    build->add_option("--passages", passages_path, "passage file (one per line)");

    std::string response_path;
    auto* verify_cmd = app.add_subcommand("verify", "verify a model response");
    verify_cmd->add_option("--config", config_path, "pipeline config JSON");
    verify_cmd->add_option("--query", query, "user query")->required();
    verify_cmd->add_option("--response", response_path, "response text file")->required();

    std::string corpus_path, levels_csv = "baseline,filtering,guardrails,full",
                reports_dir = "reports";
    auto* evaluate = app.add_subcommand("evaluate", "run the corpus through defense configs");
    evaluate->add_option("--corpus", corpus_path, "corpus JSONL")->required();
    evaluate->add_option("--config", config_path, "pipeline config JSON");
    evaluate->add_option("--levels", levels_csv, "comma-separated defense levels");
    evaluate->add_option("--out", reports_dir, "output directory for traces and reports");
    evaluate->add_option("--seed", seed, "seed recorded in the report");

    std::string format = "md";
    auto* report = app.add_subcommand("report", "render stored reports");
    report->add_option("--in", reports_dir, "directory with report_<level>.json files")
        ->required();
    report->add_option("--format", format, "md or csv");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (generate->parsed()) return cmd_generate(manifest_path, seed, out_path);
        if (score->parsed()) return cmd_score(store_path, config_path, passages_path);
        if (build->parsed()) return cmd_build_prompt(config_path, query, passages_path);
        if (verify_cmd->parsed()) return cmd_verify(config_path, query, response_path);
        if (evaluate->parsed())
            return cmd_evaluate(corpus_path, config_path, levels_csv, reports_dir, seed);
        if (report->parsed()) return cmd_report(reports_dir, format);
    } catch (const ragshield::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
