// ============================================================================
// losses.hpp - instance discrimination, context contrasting, content
// alignment, the combined objective, and the SimCLR/SupCon references
//
// Losses consume explicit projection sets rather than images so that
// enumeration oracles and finite-difference gradient checks can run without
// any model. Log-sum-exp terms are computed with max subtraction so golden
// values reproduce across implementations.
// ============================================================================

#pragma once
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <vector>

#include "con2/linalg.hpp"
#include "con2/util.hpp"

namespace con2 {

// M vectors of dimension d with per-item context labels (for the context
// loss) and base-sample ids (for the content loss).
struct ProjectionSet {
    std::vector<std::vector<double>> vectors;
    std::vector<int> labels;
    std::vector<int> ids;
    double tau = 0.5;

    std::size_t size() const { return vectors.size(); }
    std::size_t dim() const { return vectors.empty() ? 0 : vectors[0].size(); }

    void validate() const {
        if (size() < 2) throw ConfigError("projection set needs at least 2 vectors");
        if (dim() < 2) throw ConfigError("projection dimension must be >= 2");
        if (!(tau > 0.0)) throw ConfigError("temperature must be positive");
        if (labels.size() != size() || ids.size() != size())
            throw ConfigError("projection set labels/ids size mismatch");
        for (const auto& v : vectors) {
            if (v.size() != dim()) throw ConfigError("ragged projection set");
            if (norm2(v.data(), v.size()) == 0.0)
                throw NumericError("projection set contains a zero vector");
        }
    }
};

struct LossValue {
    double total = 0.0;
    double context_term = 0.0;
    double content_term = 0.0;
    double alpha = 0.0;
};

namespace detail {

// Cosine similarities plus the per-anchor log-sum-exp over all non-anchor
// candidates; shared by every loss in this module.
struct SimilarityCache {
    std::size_t m = 0;
    double tau = 0.5;
    Matrix sim;                   // cosine similarities
    std::vector<double> lse;      // log sum_{k != a} exp(sim(a,k)/tau)
    std::vector<double> norm;     // vector norms
    std::vector<std::vector<double>> unit;

    explicit SimilarityCache(const ProjectionSet& set) {
        set.validate();
        m = set.size();
        tau = set.tau;
        std::size_t d = set.dim();
        norm.resize(m);
        unit.assign(m, std::vector<double>(d));
        for (std::size_t i = 0; i < m; ++i) {
            norm[i] = norm2(set.vectors[i].data(), d);
            for (std::size_t j = 0; j < d; ++j) unit[i][j] = set.vectors[i][j] / norm[i];
        }
        sim = Matrix(m, m);
        for (std::size_t i = 0; i < m; ++i) {
            sim.at(i, i) = 1.0;
            for (std::size_t j = i + 1; j < m; ++j) {
                double s = dot(unit[i].data(), unit[j].data(), d);
                sim.at(i, j) = s;
                sim.at(j, i) = s;
            }
        }
        lse.resize(m);
        for (std::size_t a = 0; a < m; ++a) {
            double mx = -1e300;
            for (std::size_t k = 0; k < m; ++k)
                if (k != a) mx = std::max(mx, sim.at(a, k) / tau);
            double s = 0.0;
            for (std::size_t k = 0; k < m; ++k)
                if (k != a) s += std::exp(sim.at(a, k) / tau - mx);
            lse[a] = mx + std::log(s);
        }
    }

    // Eq.-style instance discrimination for anchor a, positive p.
    double pair_loss(std::size_t a, std::size_t p) const {
        return -sim.at(a, p) / tau + lse[a];
    }
};

struct PairTerm {
    std::size_t anchor, positive;
};

inline double mean_pair_loss(const SimilarityCache& cache, const std::vector<PairTerm>& pairs,
                             double normalizer) {
    double s = 0.0;
    for (const auto& pr : pairs) s += cache.pair_loss(pr.anchor, pr.positive);
    return s / normalizer;
}

// Gradient of sum_t w * pair_loss(a_t, p_t) with respect to every input
// vector. For an anchor a, d loss / d sim(a,k) = w * (softmax_k - [k = p]) / tau
// where softmax is over all candidates k != a; the cosine terms then chain
// into both endpoints of each similarity.
inline void accumulate_pair_gradients(const SimilarityCache& cache,
                                      const std::vector<PairTerm>& pairs, double weight,
                                      std::vector<std::vector<double>>& grad) {
    std::size_t m = cache.m, d = cache.unit[0].size();
    double tau = cache.tau;

    // group pair terms by anchor so each anchor's softmax is formed once
    std::vector<std::vector<std::size_t>> positives_of(m);
    for (const auto& pr : pairs) positives_of[pr.anchor].push_back(pr.positive);

    Matrix dsim(m, m);  // d loss / d sim(a,k), rows = anchors
    for (std::size_t a = 0; a < m; ++a) {
        if (positives_of[a].empty()) continue;
        double terms = static_cast<double>(positives_of[a].size());
        for (std::size_t k = 0; k < m; ++k) {
            if (k == a) continue;
            double q = std::exp(cache.sim.at(a, k) / tau - cache.lse[a]);
            dsim.at(a, k) += weight * terms * q / tau;
        }
        for (std::size_t p : positives_of[a]) dsim.at(a, p) -= weight / tau;
    }

    for (std::size_t a = 0; a < m; ++a) {
        for (std::size_t k = 0; k < m; ++k) {
            double c = dsim.at(a, k);
            if (c == 0.0 || k == a) continue;
            double s = cache.sim.at(a, k);
            for (std::size_t j = 0; j < d; ++j) {
                grad[a][j] += c * (cache.unit[k][j] - s * cache.unit[a][j]) / cache.norm[a];
                grad[k][j] += c * (cache.unit[a][j] - s * cache.unit[k][j]) / cache.norm[k];
            }
        }
    }
}

// 4N items, 2N per context in {0,1}; returns N.
inline std::size_t context_batch_n(const ProjectionSet& set) {
    std::size_t m = set.size();
    if (m == 0 || m % 4 != 0) throw ConfigError("context loss expects 4N items");
    std::size_t count1 = 0;
    for (int y : set.labels) {
        if (y != 0 && y != 1) throw ConfigError("context labels must be 0 or 1");
        count1 += y == 1;
    }
    if (count1 * 2 != m) throw ConfigError("context loss expects balanced contexts");
    return m / 4;
}

inline std::vector<PairTerm> same_label_pairs(const std::vector<int>& labels) {
    std::vector<PairTerm> pairs;
    std::size_t m = labels.size();
    for (std::size_t a = 0; a < m; ++a)
        for (std::size_t p = 0; p < m; ++p)
            if (a != p && labels[a] == labels[p]) pairs.push_back({a, p});
    return pairs;
}

inline std::vector<PairTerm> same_id_pairs(const ProjectionSet& set) {
    std::map<int, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < set.size(); ++i) groups[set.ids[i]].push_back(i);
    std::vector<PairTerm> pairs;
    for (const auto& [id, members] : groups) {
        if (members.size() != 4)
            throw ConfigError("content loss expects each base id exactly 4 times");
        for (std::size_t a : members)
            for (std::size_t p : members)
                if (a != p) pairs.push_back({a, p});
    }
    return pairs;
}

}  // namespace detail

// Temperature-scaled softmax cross-entropy over cosine similarities for one
// (anchor, positive) pair against all non-anchor candidates.
inline double instance_discrimination(const ProjectionSet& set, std::size_t anchor,
                                      std::size_t positive) {
    if (anchor == positive) throw ConfigError("anchor and positive must differ");
    if (anchor >= set.size() || positive >= set.size())
        throw ConfigError("instance discrimination index out of range");
    detail::SimilarityCache cache(set);
    return cache.pair_loss(anchor, positive);
}

// Mean instance discrimination over all ordered same-context pairs,
// normalized by K = 4N(2N-1).
inline double context_contrast_loss(const ProjectionSet& set) {
    std::size_t n = detail::context_batch_n(set);
    detail::SimilarityCache cache(set);
    auto pairs = detail::same_label_pairs(set.labels);
    double k = static_cast<double>(4 * n * (2 * n - 1));
    return detail::mean_pair_loss(cache, pairs, k);
}

// Mean instance discrimination over the 12N ordered pairs inside each base
// sample's group of 4 views, against the full set.
inline double content_alignment_loss(const ProjectionSet& set) {
    set.validate();
    if (set.size() % 4 != 0) throw ConfigError("content loss expects 4N items");
    std::size_t n = set.size() / 4;
    detail::SimilarityCache cache(set);
    auto pairs = detail::same_id_pairs(set);
    return detail::mean_pair_loss(cache, pairs, static_cast<double>(12 * n));
}

// Combined objective: context term plus alpha times the content term, each on
// its own projection head's outputs.
inline LossValue con2_loss(const ProjectionSet& context_set, const ProjectionSet& content_set,
                           double alpha) {
    if (alpha < 0.0) throw ConfigError("alpha must be >= 0");
    if (context_set.size() != content_set.size())
        throw ConfigError("context/content sets must come from the same batch");
    LossValue v;
    v.alpha = alpha;
    v.context_term = context_contrast_loss(context_set);
    v.content_term = content_alignment_loss(content_set);
    v.total = v.context_term + alpha * v.content_term;
    return v;
}

struct Con2Gradients {
    LossValue value;
    std::vector<std::vector<double>> context_grad;  // d total / d context vector
    std::vector<std::vector<double>> content_grad;  // d total / d content vector
};

// Analytic gradient of the combined objective with respect to every
// projection vector (verified against central finite differences in tests).
inline Con2Gradients con2_loss_grad(const ProjectionSet& context_set,
                                    const ProjectionSet& content_set, double alpha) {
    if (alpha < 0.0) throw ConfigError("alpha must be >= 0");
    if (context_set.size() != content_set.size())
        throw ConfigError("context/content sets must come from the same batch");

    Con2Gradients out;
    std::size_t m = context_set.size();
    out.context_grad.assign(m, std::vector<double>(context_set.dim(), 0.0));
    out.content_grad.assign(m, std::vector<double>(content_set.dim(), 0.0));

    std::size_t n = detail::context_batch_n(context_set);
    detail::SimilarityCache ctx_cache(context_set);
    auto ctx_pairs = detail::same_label_pairs(context_set.labels);
    double k = static_cast<double>(4 * n * (2 * n - 1));
    out.value.context_term = detail::mean_pair_loss(ctx_cache, ctx_pairs, k);
    detail::accumulate_pair_gradients(ctx_cache, ctx_pairs, 1.0 / k, out.context_grad);

    if (content_set.size() % 4 != 0) throw ConfigError("content loss expects 4N items");
    detail::SimilarityCache cnt_cache(content_set);
    auto cnt_pairs = detail::same_id_pairs(content_set);
    double norm = static_cast<double>(12 * (content_set.size() / 4));
    out.value.content_term = detail::mean_pair_loss(cnt_cache, cnt_pairs, norm);
    if (alpha > 0.0)
        detail::accumulate_pair_gradients(cnt_cache, cnt_pairs, alpha / norm, out.content_grad);

    out.value.alpha = alpha;
    out.value.total = out.value.context_term + alpha * out.value.content_term;
    return out;
}

// SupCon: sum over anchors of the mean instance discrimination against the
// anchor's same-label positives. Every label class must have >= 2 members.
inline double supcon_loss(const ProjectionSet& set) {
    set.validate();
    std::map<int, std::size_t> class_size;
    for (int y : set.labels) class_size[y]++;
    for (const auto& [y, c] : class_size)
        if (c < 2) throw ConfigError("supcon: label class with a single member");
    detail::SimilarityCache cache(set);
    double total = 0.0;
    for (std::size_t a = 0; a < set.size(); ++a) {
        double inner = 0.0;
        for (std::size_t p = 0; p < set.size(); ++p)
            if (a != p && set.labels[a] == set.labels[p]) inner += cache.pair_loss(a, p);
        total += inner / static_cast<double>(class_size[set.labels[a]] - 1);
    }
    return total;
}

// SimCLR: symmetric mean over the N view pairs (ids pair the two views).
inline double simclr_loss(const ProjectionSet& set) {
    set.validate();
    std::size_t m = set.size();
    if (m % 2 != 0) throw ConfigError("simclr: expects 2N items");
    std::map<int, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < m; ++i) groups[set.ids[i]].push_back(i);
    detail::SimilarityCache cache(set);
    double total = 0.0;
    for (const auto& [id, members] : groups) {
        if (members.size() != 2) throw ConfigError("simclr: unpaired view id");
        total += cache.pair_loss(members[0], members[1]);
        total += cache.pair_loss(members[1], members[0]);
    }
    return total / static_cast<double>(m);
}

// Context contrasting extended to C >= 2 balanced context groups of 2N each;
// normalizer 2NC(2N-1). Reduces to context_contrast_loss at C = 2.
inline double multi_context_contrast_loss(const ProjectionSet& set) {
    set.validate();
    std::map<int, std::size_t> group_size;
    for (int y : set.labels) group_size[y]++;
    std::size_t c = group_size.size();
    if (c < 2) throw ConfigError("multi-context: need at least 2 context groups");
    std::size_t per_group = group_size.begin()->second;
    for (const auto& [y, cnt] : group_size)
        if (cnt != per_group) throw ConfigError("multi-context: unbalanced context groups");
    if (per_group % 2 != 0 || per_group == 0)
        throw ConfigError("multi-context: each group must hold 2N items");
    std::size_t n = per_group / 2;
    detail::SimilarityCache cache(set);
    auto pairs = detail::same_label_pairs(set.labels);
    double norm = static_cast<double>(2 * n * c * (2 * n - 1));
    return detail::mean_pair_loss(cache, pairs, norm);
}

}  // namespace con2
