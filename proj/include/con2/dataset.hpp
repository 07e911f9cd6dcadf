// ============================================================================
// dataset.hpp - context-labeled datasets and 4N-view training batches
// ============================================================================

#pragma once
#include <cstdint>
#include <utility>
#include <vector>

#include "con2/content_aug.hpp"
#include "con2/image.hpp"
#include "con2/rng.hpp"

namespace con2 {

// Every base sample appears once per context; the label-1 item is t_C applied
// to the label-0 item.
struct ContextDataset {
    struct Item {
        Image img;
        int context = 0;
        int base_id = 0;
    };
    std::vector<Item> items;
    ContextAug aug = ContextAug::invert;
};

inline ContextDataset build_context_dataset(const std::vector<Image>& train, ContextAug aug) {
    if (train.empty()) throw ConfigError("build_context_dataset: empty training set");
    ContextDataset out;
    out.aug = aug;
    out.items.reserve(2 * train.size());
    for (std::size_t i = 0; i < train.size(); ++i) {
        out.items.push_back({train[i], 0, static_cast<int>(i)});
        out.items.push_back({apply_context(train[i], aug), 1, static_cast<int>(i)});
    }
    return out;
}

// 4N model-ready views. Views are stored after the (x - 0.5) / 0.5
// normalization, so values live in [-1, 1] rather than the Image range.
struct ContextViewBatch {
    int n_base = 0;
    int view_size = 0;  // spatial side; views are 3 x view_size x view_size
    std::vector<std::vector<float>> views;
    std::vector<int> labels;
    std::vector<int> base_ids;
    std::vector<ContentTransform> descriptors;
};

constexpr float kNormMean = 0.5f;
constexpr float kNormStd = 0.5f;

inline std::vector<float> normalize_view(const Image& img) {
    std::vector<float> v(img.data.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = (img.data[i] - kNormMean) / kNormStd;
    return v;
}

// For each base image x: two content views of x (label 0) and two of t_C(x)
// (label 1). The context augmentation is applied to the clean image before
// content augmentation; all four content transforms are independent draws.
inline ContextViewBatch make_view_batch(const std::vector<std::pair<Image, int>>& base,
                                        ContextAug aug, const ContentPolicy& policy, Rng& rng) {
    if (base.empty()) throw ConfigError("make_view_batch: empty base set");
    ContextViewBatch batch;
    batch.n_base = static_cast<int>(base.size());
    batch.view_size = policy.out_size;
    batch.views.reserve(4 * base.size());
    for (const auto& [img, id] : base) {
        Image original = to_three_channels(img);
        Image context = to_three_channels(apply_context(img, aug));
        for (int v = 0; v < 4; ++v) {
            const Image& src = v < 2 ? original : context;
            ContentTransform t = sample_content_transform(policy, rng);
            batch.views.push_back(normalize_view(apply_content_transform(src, t)));
            batch.labels.push_back(v < 2 ? 0 : 1);
            batch.base_ids.push_back(id);
            batch.descriptors.push_back(t);
        }
    }
    return batch;
}

// Normal-only training images plus a labeled test split.
struct DatasetSplit {
    std::vector<Image> train;
    std::vector<Image> test;
    std::vector<int> test_labels;  // 1 = anomaly
    float norm_mean = kNormMean;
    float norm_std = kNormStd;
};

struct SyntheticConfig {
    int image_size = 16;
    int n_train = 100;
    int n_test_normal = 50;
    int n_test_anomaly = 50;
    double noise = 0.05;
    std::uint64_t seed = 7;

    void validate() const {
        if (image_size < 8) throw ConfigError("synthetic: image_size must be >= 8");
        if (n_train < 1 || n_test_normal < 1 || n_test_anomaly < 1)
            throw ConfigError("synthetic: counts must be positive");
        if (noise < 0.0) throw ConfigError("synthetic: noise must be >= 0");
    }
};

namespace detail {

// Bright square on a dark background; normals put it in the top-left
// quadrant, anomalies in the bottom-right, so the classes differ on a fixed
// pixel set and are separable in input space.
inline Image synthetic_image(const SyntheticConfig& cfg, bool anomaly, Rng& rng) {
    const int s = cfg.image_size;
    const int q = s / 2;
    const int side = q - 2;
    const int off = anomaly ? q + 1 : 1;
    Image img(s, s, 1, 0.15f);
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x) img.at(0, off + y, off + x) = 0.85f;
    if (cfg.noise > 0.0)
        for (auto& v : img.data)
            v = static_cast<float>(std::clamp(v + rng.normal(0.0, cfg.noise), 0.0, 1.0));
    return img;
}

}  // namespace detail

inline DatasetSplit make_synthetic_split(const SyntheticConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    DatasetSplit split;
    split.train.reserve(cfg.n_train);
    for (int i = 0; i < cfg.n_train; ++i)
        split.train.push_back(detail::synthetic_image(cfg, false, rng));
    for (int i = 0; i < cfg.n_test_normal; ++i) {
        split.test.push_back(detail::synthetic_image(cfg, false, rng));
        split.test_labels.push_back(0);
    }
    for (int i = 0; i < cfg.n_test_anomaly; ++i) {
        split.test.push_back(detail::synthetic_image(cfg, true, rng));
        split.test_labels.push_back(1);
    }
    return split;
}

}  // namespace con2
