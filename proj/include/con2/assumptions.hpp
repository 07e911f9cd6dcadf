// ============================================================================
// assumptions.hpp - heuristic validators for context augmentations
//
// Distinctiveness and alignment are stated over data densities, which are not
// observable; these are cheap, model-free surrogates over pixel space. Their
// output is advisory: a violated assumption does not necessarily mean bad
// downstream performance.
// ============================================================================

#pragma once
#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "con2/image.hpp"
#include "con2/linalg.hpp"

namespace con2 {

struct AssumptionReport {
    std::optional<double> distinctiveness;  // [0,1], lower = more distinct contexts
    std::optional<double> alignment;        // [-1,1], higher = better aligned
    int sample_count = 0;
    std::string augmentation;
    std::string distance;
    int k = 0;
};

// Pearson correlation on midranks (Spearman with tie handling). Identical
// midrank vectors count as perfectly correlated even when degenerate.
inline double spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
    std::size_t n = xs.size();
    if (n < 2 || ys.size() != n) throw ConfigError("spearman: need two equal-length series, n >= 2");
    auto midranks = [](const std::vector<double>& v) {
        std::size_t n = v.size();
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
        std::vector<double> rank(n);
        std::size_t i = 0;
        while (i < n) {
            std::size_t j = i;
            while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
            double mid = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
            for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
            i = j + 1;
        }
        return rank;
    };
    std::vector<double> rx = midranks(xs), ry = midranks(ys);
    if (rx == ry) return 1.0;
    double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
    double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

namespace detail {

inline std::vector<double> flat_pixels(const Image& img) {
    return std::vector<double>(img.data.begin(), img.data.end());
}

}  // namespace detail

// Cross-context confusability: pool {x} with {t_C(x)} and count points whose
// k nearest neighbors (cosine distance on pooled-mean-centered pixel vectors)
// contain any point from the other context. 0 = perfectly distinct, 1 =
// contexts indistinguishable. Centering matters: raw rasters are all-positive
// vectors, so without it every cosine is close to 1 and brightness polarity
// (the signal invert produces) is invisible.
inline AssumptionReport check_distinctiveness(const std::vector<Image>& samples, ContextAug aug,
                                              int k = 5) {
    if (k < 1) throw ConfigError("check_distinctiveness: k must be >= 1");
    std::size_t n = samples.size();
    if (n < static_cast<std::size_t>(k) + 1)
        throw ConfigError("check_distinctiveness: need at least k+1 samples");

    std::vector<std::vector<double>> pooled;
    pooled.reserve(2 * n);
    for (const auto& img : samples) pooled.push_back(detail::flat_pixels(img));
    for (const auto& img : samples) pooled.push_back(detail::flat_pixels(apply_context(img, aug)));

    std::size_t m = pooled.size();
    std::size_t dim = pooled[0].size();
    std::vector<double> center(dim, 0.0);
    for (const auto& v : pooled)
        for (std::size_t j = 0; j < dim; ++j) center[j] += v[j];
    for (auto& c : center) c /= static_cast<double>(m);
    for (auto& v : pooled)
        for (std::size_t j = 0; j < dim; ++j) v[j] -= center[j];

    auto centered_cosine_dist = [dim](const std::vector<double>& a, const std::vector<double>& b) {
        double na = norm2(a.data(), dim), nb = norm2(b.data(), dim);
        if (na == 0.0 || nb == 0.0) return 1.0;  // a point sitting at the pooled mean
        return 1.0 - dot(a.data(), b.data(), dim) / (na * nb);
    };

    int confused = 0;
    std::vector<std::pair<double, std::size_t>> dist(m - 1);
    for (std::size_t i = 0; i < m; ++i) {
        std::size_t w = 0;
        for (std::size_t j = 0; j < m; ++j) {
            if (j == i) continue;
            dist[w++] = {centered_cosine_dist(pooled[i], pooled[j]), j};
        }
        std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
        bool i_is_context = i >= n;
        for (int t = 0; t < k; ++t) {
            bool j_is_context = dist[t].second >= n;
            if (j_is_context != i_is_context) {
                confused++;
                break;
            }
        }
    }

    AssumptionReport report;
    report.distinctiveness = static_cast<double>(confused) / static_cast<double>(m);
    report.sample_count = static_cast<int>(n);
    report.augmentation = context_aug_name(aug);
    report.distance = "pixel-centered-cosine";
    report.k = k;
    return report;
}

// Spearman rank correlation between pairwise pixel-space Euclidean distances
// before and after t_C over all sample pairs. Any pixel permutation or
// pixel-wise affine isometry (invert, vflip) scores exactly 1.
inline AssumptionReport check_alignment(const std::vector<Image>& samples, ContextAug aug) {
    std::size_t n = samples.size();
    if (n < 3) throw ConfigError("check_alignment: need at least 3 samples");

    std::vector<std::vector<double>> orig, ctx;
    orig.reserve(n);
    ctx.reserve(n);
    for (const auto& img : samples) {
        orig.push_back(detail::flat_pixels(img));
        ctx.push_back(detail::flat_pixels(apply_context(img, aug)));
    }
    std::size_t dim = orig[0].size();
    auto euclid = [dim](const std::vector<double>& a, const std::vector<double>& b) {
        double s = 0.0;
        for (std::size_t i = 0; i < dim; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
        return std::sqrt(s);
    };
    std::vector<double> before, after;
    before.reserve(n * (n - 1) / 2);
    after.reserve(n * (n - 1) / 2);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            before.push_back(euclid(orig[i], orig[j]));
            after.push_back(euclid(ctx[i], ctx[j]));
        }

    AssumptionReport report;
    report.alignment = spearman(before, after);
    report.sample_count = static_cast<int>(n);
    report.augmentation = context_aug_name(aug);
    report.distance = "pixel-euclidean";
    return report;
}

}  // namespace con2
