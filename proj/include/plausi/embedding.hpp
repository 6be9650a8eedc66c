#pragma once

// Stand-in encoders: prefix ("video") vectors by mean pooling, Gaussian
// feature jitter as the positive augmentation, the cross-modal pair embedding
// tanh(W.[v; mean(t)] + b), cosine similarity, and hand-derived backward
// passes for all of it.

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "plausi/corpus.hpp"
#include "plausi/rng.hpp"

namespace plausi {

using Vec = std::vector<double>;

inline double vec_dot(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw std::invalid_argument("vec_dot: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double vec_norm(const Vec& a) { return std::sqrt(vec_dot(a, a)); }

// Action embeddings cover the full verb x noun cross-product (row index
// verb_id * n_nouns + noun_id) so counterfactual pairs never observed in the
// corpus still embed. pair_weight maps the 2*dim concatenation [v; mean(t)]
// to dim outputs, row-major (dim rows of 2*dim).
struct EmbedderParams {
    int n_verbs = 0;
    int n_nouns = 0;
    int dim = 0;
    Vec action_table;  // (n_verbs*n_nouns) x dim
    Vec pair_weight;   // dim x (2*dim)
    Vec pair_bias;     // dim

    std::size_t action_row(int verb_id, int noun_id) const {
        if (verb_id < 0 || verb_id >= n_verbs || noun_id < 0 || noun_id >= n_nouns)
            throw std::out_of_range("action embedding index out of range");
        return (static_cast<std::size_t>(verb_id) * static_cast<std::size_t>(n_nouns) +
                static_cast<std::size_t>(noun_id)) *
               static_cast<std::size_t>(dim);
    }
};

inline EmbedderParams make_embedder(int n_verbs, int n_nouns, int dim, Rng& rng, double scale = 0.1) {
    if (dim < 2) throw std::invalid_argument("make_embedder: dim must be >= 2");
    EmbedderParams p;
    p.n_verbs = n_verbs;
    p.n_nouns = n_nouns;
    p.dim = dim;
    p.action_table.resize(static_cast<std::size_t>(n_verbs) * n_nouns * dim);
    p.pair_weight.resize(static_cast<std::size_t>(dim) * 2 * dim);
    p.pair_bias.assign(static_cast<std::size_t>(dim), 0.0);
    for (double& x : p.action_table) x = scale * rng.normal();
    for (double& x : p.pair_weight) x = scale * rng.normal();
    return p;
}

struct EmbedderGrad {
    Vec action_table;
    Vec pair_weight;
    Vec pair_bias;
};

inline EmbedderGrad zero_grad_like(const EmbedderParams& p) {
    return {Vec(p.action_table.size(), 0.0), Vec(p.pair_weight.size(), 0.0), Vec(p.pair_bias.size(), 0.0)};
}

inline Vec mean_action_embedding(const ActionSequence& t, const EmbedderParams& p) {
    if (t.actions.empty()) throw std::invalid_argument("mean_action_embedding: empty sequence");
    Vec m(static_cast<std::size_t>(p.dim), 0.0);
    for (const Action& a : t.actions) {
        const double* row = &p.action_table[p.action_row(a.verb_id, a.noun_id)];
        for (int k = 0; k < p.dim; ++k) m[static_cast<std::size_t>(k)] += row[k];
    }
    const double inv = 1.0 / static_cast<double>(t.actions.size());
    for (double& x : m) x *= inv;
    return m;
}

// Scatter d_mean back into the pooled action rows.
inline void mean_action_embedding_backward(const ActionSequence& t, const EmbedderParams& p, const Vec& d_mean,
                                           Vec& d_action_table) {
    const double inv = 1.0 / static_cast<double>(t.actions.size());
    for (const Action& a : t.actions) {
        double* grow = &d_action_table[p.action_row(a.verb_id, a.noun_id)];
        for (int k = 0; k < p.dim; ++k) grow[k] += d_mean[static_cast<std::size_t>(k)] * inv;
    }
}

// The "video" vector of a prefix: mean of its action embeddings.
inline Vec encode_prefix(const ActionSequence& prefix, const EmbedderParams& p) {
    return mean_action_embedding(prefix, p);
}

// Positive view of v: additive Gaussian noise (stand-in for image jitter).
inline Vec augment(const Vec& v, Rng& rng, double sigma) {
    if (!(sigma >= 0.0)) throw std::invalid_argument("augment: sigma must be non-negative");
    Vec out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] + sigma * rng.normal();
    return out;
}

struct PairEmbedCache {
    Vec input;  // [v; mean(t)], length 2*dim
    Vec out;    // tanh output, length dim
};

// Cross-modal pair representation: tanh(W.[v; mean(t)] + b).
inline Vec pair_embed(const Vec& v, const ActionSequence& t, const EmbedderParams& p,
                      PairEmbedCache* cache = nullptr) {
    if (static_cast<int>(v.size()) != p.dim) throw std::invalid_argument("pair_embed: v has wrong width");
    const Vec m = mean_action_embedding(t, p);
    Vec u(static_cast<std::size_t>(2 * p.dim));
    for (int k = 0; k < p.dim; ++k) {
        u[static_cast<std::size_t>(k)] = v[static_cast<std::size_t>(k)];
        u[static_cast<std::size_t>(p.dim + k)] = m[static_cast<std::size_t>(k)];
    }
    Vec out(static_cast<std::size_t>(p.dim));
    for (int o = 0; o < p.dim; ++o) {
        const double* wrow = &p.pair_weight[static_cast<std::size_t>(o) * 2 * p.dim];
        double pre = p.pair_bias[static_cast<std::size_t>(o)];
        for (int i = 0; i < 2 * p.dim; ++i) pre += wrow[i] * u[static_cast<std::size_t>(i)];
        out[static_cast<std::size_t>(o)] = std::tanh(pre);
    }
    if (cache) {
        cache->input = std::move(u);
        cache->out = out;
    }
    return out;
}

// Backward through pair_embed: accumulates into grad (weight, bias, and the
// pooled action rows of t) and into d_v (gradient w.r.t. the v input).
inline void pair_embed_backward(const ActionSequence& t, const EmbedderParams& p, const PairEmbedCache& cache,
                                const Vec& d_out, EmbedderGrad& grad, Vec& d_v) {
    const int d = p.dim;
    Vec d_u(static_cast<std::size_t>(2 * d), 0.0);
    for (int o = 0; o < d; ++o) {
        const double y = cache.out[static_cast<std::size_t>(o)];
        const double dpre = d_out[static_cast<std::size_t>(o)] * (1.0 - y * y);
        grad.pair_bias[static_cast<std::size_t>(o)] += dpre;
        const double* wrow = &p.pair_weight[static_cast<std::size_t>(o) * 2 * d];
        double* gwrow = &grad.pair_weight[static_cast<std::size_t>(o) * 2 * d];
        for (int i = 0; i < 2 * d; ++i) {
            gwrow[i] += dpre * cache.input[static_cast<std::size_t>(i)];
            d_u[static_cast<std::size_t>(i)] += dpre * wrow[i];
        }
    }
    for (int k = 0; k < d; ++k) d_v[static_cast<std::size_t>(k)] += d_u[static_cast<std::size_t>(k)];
    Vec d_mean(d_u.begin() + d, d_u.end());
    mean_action_embedding_backward(t, p, d_mean, grad.action_table);
}

inline constexpr double kDegenerateNorm = 1e-12;

// Cosine similarity; vectors with norm < 1e-12 yield 0 and set the optional
// degenerate flag instead of producing NaN.
inline double cosine_sim(const Vec& a, const Vec& b, bool* degenerate = nullptr) {
    if (a.size() != b.size()) throw std::invalid_argument("cosine_sim: size mismatch");
    const double na = vec_norm(a), nb = vec_norm(b);
    if (na < kDegenerateNorm || nb < kDegenerateNorm) {
        if (degenerate) *degenerate = true;
        return 0.0;
    }
    if (degenerate) *degenerate = false;
    return vec_dot(a, b) / (na * nb);
}

// d(sim)/d(a), d(sim)/d(b) scaled by d_s, accumulated. The degenerate branch
// is a flat region (sim pinned at 0), so it contributes no gradient.
inline void cosine_backward(const Vec& a, const Vec& b, double d_s, Vec& d_a, Vec& d_b) {
    const double na = vec_norm(a), nb = vec_norm(b);
    if (na < kDegenerateNorm || nb < kDegenerateNorm) return;
    const double inv = 1.0 / (na * nb);
    const double s = vec_dot(a, b) * inv;
    for (std::size_t k = 0; k < a.size(); ++k) {
        d_a[k] += d_s * (b[k] * inv - s * a[k] / (na * na));
        d_b[k] += d_s * (a[k] * inv - s * b[k] / (nb * nb));
    }
}

// --- JSON tensor dump (shared checkpoint format)

inline nlohmann::ordered_json tensor_json(const std::vector<int>& shape, const Vec& data) {
    nlohmann::ordered_json t;
    t["shape"] = shape;
    t["data"] = data;
    return t;
}

inline Vec tensor_from_json(const nlohmann::json& t, const std::vector<int>& expect_shape) {
    const auto shape = t.at("shape").get<std::vector<int>>();
    if (shape != expect_shape) throw std::runtime_error("tensor shape mismatch in checkpoint");
    std::size_t total = 1;
    for (int s : shape) total *= static_cast<std::size_t>(s);
    Vec data = t.at("data").get<Vec>();
    if (data.size() != total) throw std::runtime_error("tensor data length mismatch in checkpoint");
    return data;
}

}  // namespace plausi
