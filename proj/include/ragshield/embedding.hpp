// embedding.hpp - embedding vectors, reference sets R/A, cosine distances, anomaly score
#pragma once

#include <cmath>
#include <fstream>
#include <limits>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "ragshield/common.hpp"

namespace ragshield {

struct EmbeddingVector {
    std::vector<double> values;

    std::size_t dimension() const { return values.size(); }
    bool operator==(const EmbeddingVector&) const = default;
};

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual EmbeddingVector embed(const std::string& text) const = 0;
    virtual std::size_t dimension() const = 0;
};

// Test-grade provider: character trigrams hashed into dimension buckets, counts
// accumulated, then L2-normalized. Fully offline and reproducible.
class DeterministicHashEmbedder : public EmbeddingProvider {
public:
    explicit DeterministicHashEmbedder(std::size_t dim = 64) : dim_(dim) {
        if (dim_ == 0) throw Error(ErrorKind::Data, "embedding dimension must be positive");
    }

    std::size_t dimension() const override { return dim_; }

    EmbeddingVector embed(const std::string& text) const override {
        if (text.empty()) throw Error(ErrorKind::Data, "cannot embed empty text");
        EmbeddingVector v;
        v.values.assign(dim_, 0.0);
        const std::string norm = to_lower(squeeze_whitespace(text));
        if (norm.size() >= 3) {
            for (std::size_t i = 0; i + 3 <= norm.size(); ++i)
                v.values[fnv1a64(std::string_view(norm).substr(i, 3)) % dim_] += 1.0;
        } else if (!norm.empty()) {
            v.values[fnv1a64(norm) % dim_] += 1.0;
        }
        double norm2 = 0.0;
        for (double x : v.values) norm2 += x * x;
        if (norm2 <= 0.0) throw Error(ErrorKind::Data, "degenerate embedding");
        const double inv = 1.0 / std::sqrt(norm2);
        for (double& x : v.values) x *= inv;
        return v;
    }

private:
    std::size_t dim_;
};

// 1 - cosine similarity, range [0,2] for unit vectors.
inline double cosine_distance(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.dimension() != b.dimension())
        throw Error(ErrorKind::Data, "cosine_distance: dimension mismatch");
    double dot = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) dot += a.values[i] * b.values[i];
    return 1.0 - dot;
}

inline double min_distance(const EmbeddingVector& v, const std::vector<EmbeddingVector>& set) {
    if (set.empty()) throw Error(ErrorKind::Data, "min_distance over empty set");
    double best = std::numeric_limits<double>::infinity();
    for (const auto& m : set) best = std::min(best, cosine_distance(v, m));
    return best;
}

struct ReferenceStore {
    std::size_t dimension = 64;
    std::vector<EmbeddingVector> benign;  // reference set R
    std::vector<EmbeddingVector> attack;  // known-attack set A
    double alpha = 1.0;
    double beta = 0.5;
};

// score(p) = alpha * d_min(e_p, R) - beta * d_min(e_p, A); empty A contributes 0.
inline double anomaly_score(const ReferenceStore& store, const EmbeddingVector& v) {
    if (store.benign.empty())
        throw Error(ErrorKind::Data, "anomaly_score: benign reference set is empty");
    double score = store.alpha * min_distance(v, store.benign);
    if (!store.attack.empty()) score -= store.beta * min_distance(v, store.attack);
    return score;
}

namespace detail {

inline void add_deduplicated(std::vector<EmbeddingVector>& set, EmbeddingVector v,
                             std::set<std::uint64_t>& seen) {
    const auto* bytes = reinterpret_cast<const char*>(v.values.data());
    const std::uint64_t h =
        fnv1a64(std::string_view(bytes, v.values.size() * sizeof(double)));
    if (seen.insert(h).second) set.push_back(std::move(v));
}

}  // namespace detail

inline ReferenceStore build_stores(const EmbeddingProvider& provider,
                                   const std::vector<std::string>& benign_texts,
                                   const std::vector<std::string>& attack_texts,
                                   double alpha = 1.0, double beta = 0.5) {
    if (benign_texts.empty())
        throw Error(ErrorKind::Data, "build_stores: benign_texts must be non-empty");
    ReferenceStore store;
    store.dimension = provider.dimension();
    store.alpha = alpha;
    store.beta = beta;
    std::set<std::uint64_t> seen_benign, seen_attack;
    for (const auto& t : benign_texts)
        detail::add_deduplicated(store.benign, provider.embed(t), seen_benign);
    for (const auto& t : attack_texts)
        detail::add_deduplicated(store.attack, provider.embed(t), seen_attack);
    return store;
}

// --- store persistence (portable JSON) --------------------------------------

inline nlohmann::ordered_json store_to_json(const ReferenceStore& store) {
    nlohmann::ordered_json j;
    j["dimension"] = store.dimension;
    j["alpha"] = store.alpha;
    j["beta"] = store.beta;
    auto rows = [](const std::vector<EmbeddingVector>& set) {
        nlohmann::ordered_json arr = nlohmann::ordered_json::array();
        for (const auto& v : set) arr.push_back(v.values);
        return arr;
    };
    j["benign"] = rows(store.benign);
    j["attack"] = rows(store.attack);
    return j;
}

inline ReferenceStore store_from_json(const nlohmann::json& j) {
    ReferenceStore store;
    store.dimension = j.at("dimension").get<std::size_t>();
    store.alpha = j.at("alpha").get<double>();
    store.beta = j.at("beta").get<double>();
    auto rows = [&](const char* key) {
        std::vector<EmbeddingVector> set;
        for (const auto& row : j.at(key)) {
            EmbeddingVector v{row.get<std::vector<double>>()};
            if (v.dimension() != store.dimension)
                throw Error(ErrorKind::Data, "store vector dimension mismatch");
            set.push_back(std::move(v));
        }
        return set;
    };
    store.benign = rows("benign");
    store.attack = rows("attack");
    return store;
}

inline void save_store(const ReferenceStore& store, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorKind::Data, "cannot open store file for writing: " + path);
    f << store_to_json(store).dump(2) << '\n';
}

inline ReferenceStore load_store(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorKind::Data, "cannot open store file: " + path);
    try {
        return store_from_json(nlohmann::json::parse(f));
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw Error(ErrorKind::Data, std::string("store parse error: ") + e.what());
    }
}

}  // namespace ragshield
