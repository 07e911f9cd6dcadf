// ============================================================================
// scoring.hpp - anomaly scores on learned representations
//
// s_NND: negative max cosine similarity to stored training representations.
// s_LH: negative Gaussian log-density of the normalized representation under
// per-transform moments. Both are averaged over a frozen test-time policy of
// A content transforms, half applied to the query and half to its context-
// augmented counterpart; the fitted keys/moments for a slot see the training
// set through the same effective transform as the query.
// ============================================================================

#pragma once
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "con2/content_aug.hpp"
#include "con2/linalg.hpp"
#include "con2/trainer.hpp"

namespace con2 {

enum class ScoreVariant { nnd, lh };

inline std::string score_variant_name(ScoreVariant v) {
    return v == ScoreVariant::nnd ? "nnd" : "lh";
}

inline ScoreVariant score_variant_from_name(const std::string& name) {
    if (name == "nnd") return ScoreVariant::nnd;
    if (name == "lh") return ScoreVariant::lh;
    throw ConfigError("unknown score variant: " + name);
}

// A frozen, replayable test-time augmentation set: A content transforms drawn
// once from the content policy with a dedicated seed, plus the context
// augmentation. Slots 0..A/2-1 score the query, slots A/2..A-1 its context-
// augmented counterpart.
struct TestTimePolicy {
    int A = 40;
    ContextAug context_aug = ContextAug::invert;
    std::uint64_t seed = 0;
    std::vector<ContentTransform> transforms;

    void validate() const {
        if (A < 2 || A % 2 != 0)
            throw ConfigError("test-time policy: A must be even and >= 2 (the score halves "
                              "split between the query and its context view)");
        if (static_cast<int>(transforms.size()) != A)
            throw ConfigError("test-time policy: descriptor count does not match A");
    }

    bool operator==(const TestTimePolicy&) const = default;
};

inline TestTimePolicy make_test_time_policy(const ContentPolicy& policy, int A, ContextAug aug,
                                            std::uint64_t seed) {
    if (A < 2 || A % 2 != 0) throw ConfigError("test-time policy: A must be even and >= 2");
    TestTimePolicy out;
    out.A = A;
    out.context_aug = aug;
    out.seed = seed;
    Rng rng(seed);
    out.transforms.reserve(A);
    for (int i = 0; i < A; ++i) out.transforms.push_back(sample_content_transform(policy, rng));
    out.validate();
    return out;
}

// ----------------------------------------------------------------------------
// Representation-level primitives (used directly by the runtime benchmark and
// the invariance tests; image-level scoring wraps them).

inline std::vector<double> normalize_rep(const std::vector<double>& rep) {
    double n = norm2(rep.data(), rep.size());
    if (n == 0.0) throw NumericError("cannot normalize a zero representation");
    std::vector<double> unit(rep.size());
    for (std::size_t i = 0; i < rep.size(); ++i) unit[i] = rep[i] / n;
    return unit;
}

// -max cosine over stored unit rows. Cosine of unit vectors is evaluated as
// 1 - |u - k|^2 / 2, which is exact (gives 1) for a bitwise self-match.
inline double nnd_score_from_rep(const std::vector<std::vector<double>>& unit_keys,
                                 const std::vector<double>& rep) {
    if (unit_keys.empty()) throw ConfigError("nnd score: empty key matrix");
    std::vector<double> u = normalize_rep(rep);
    double best = -2.0;
    for (const auto& k : unit_keys) {
        double sq = 0.0;
        for (std::size_t i = 0; i < u.size(); ++i) {
            double d = u[i] - k[i];
            sq += d * d;
        }
        double cos = 1.0 - 0.5 * sq;
        if (cos > best) best = cos;
    }
    return -best;
}

struct GaussianParams {
    std::vector<double> mu;  // mean of the unit-normalized representations
    Matrix cov;              // unregularized empirical covariance
    Matrix chol;             // lower factor of cov + eps I
    double logdet = 0.0;
    double eps = 0.0;
};

// eps < 0 selects the default regularization 1e-6 * trace(cov) / d.
inline GaussianParams fit_gaussian_params(const std::vector<std::vector<double>>& unit_reps,
                                          double eps = -1.0) {
    if (unit_reps.size() < 2)
        throw ConfigError("gaussian score: need at least 2 training representations");
    GaussianParams p;
    p.mu = row_mean(unit_reps);
    p.cov = covariance(unit_reps, p.mu);
    std::size_t d = p.mu.size();
    if (eps < 0.0) {
        double trace = 0.0;
        for (std::size_t i = 0; i < d; ++i) trace += p.cov.at(i, i);
        eps = 1e-6 * trace / static_cast<double>(d);
    }
    p.eps = eps;
    Matrix reg = p.cov;
    for (std::size_t i = 0; i < d; ++i) reg.at(i, i) += eps;
    if (!cholesky(reg, p.chol))
        throw NumericError("gaussian score: covariance not positive definite (eps = " +
                           format_double(eps) + "); increase the regularization");
    p.logdet = cholesky_logdet(p.chol);
    return p;
}

// -log N(z | mu, cov + eps I) for an already-normalized z.
inline double lh_score_from_normalized(const GaussianParams& p, const std::vector<double>& z) {
    std::size_t d = p.mu.size();
    if (z.size() != d) throw ConfigError("gaussian score: dimension mismatch");
    std::vector<double> diff(d);
    for (std::size_t i = 0; i < d; ++i) diff[i] = z[i] - p.mu[i];
    std::vector<double> solved = cholesky_solve(p.chol, diff);
    double quad = dot(diff.data(), solved.data(), d);
    constexpr double kLog2Pi = 1.8378770664093453;
    return 0.5 * (static_cast<double>(d) * kLog2Pi + p.logdet + quad);
}

inline double lh_score_from_rep(const GaussianParams& p, const std::vector<double>& rep) {
    return lh_score_from_normalized(p, normalize_rep(rep));
}

// ----------------------------------------------------------------------------
// Fitted score models

namespace detail {

// Training images pushed through the slot's effective transform: the content
// transform alone for the first half, content-after-context for the second.
inline std::vector<Image> slot_train_views(const std::vector<Image>& train,
                                           const TestTimePolicy& policy, int slot) {
    bool context_half = slot >= policy.A / 2;
    std::vector<Image> views;
    views.reserve(train.size());
    for (const auto& img : train) {
        Image base = context_half ? apply_context(img, policy.context_aug) : img;
        views.push_back(apply_content_transform(to_three_channels(base),
                                                policy.transforms[slot]));
    }
    return views;
}

inline int find_slot(const TestTimePolicy& policy, const ContentTransform& t) {
    for (int i = 0; i < policy.A; ++i)
        if (policy.transforms[i] == t) return i;
    throw ConfigError("score: transform was not fitted into this model");
}

}  // namespace detail

// Per-slot matrices of unit-normalized training representations. Memory is
// O(A n d); every query costs one pass over the n rows of its slot.
struct NNDScoreModel {
    TestTimePolicy policy;
    int d = 0;
    std::string checkpoint_hash;
    std::vector<std::vector<std::vector<double>>> keys;  // [slot][row][dim]
};

inline NNDScoreModel fit_nnd(Checkpoint& ckpt, const std::vector<Image>& train,
                             const TestTimePolicy& policy) {
    policy.validate();
    if (train.empty()) throw ConfigError("fit_nnd: empty training set");
    NNDScoreModel model;
    model.policy = policy;
    model.d = ckpt.model_cfg.repr_dim();
    model.checkpoint_hash = ckpt.config_hash;
    model.keys.resize(policy.A);
    for (int slot = 0; slot < policy.A; ++slot) {
        auto reps = encode_batch(ckpt, detail::slot_train_views(train, policy, slot));
        model.keys[slot].reserve(reps.size());
        for (auto& rep : reps) model.keys[slot].push_back(normalize_rep(rep));
    }
    return model;
}

inline double s_nnd_slot(const NNDScoreModel& model, Checkpoint& ckpt, const Image& x, int slot) {
    if (slot < 0 || slot >= model.policy.A) throw ConfigError("s_nnd: slot out of range");
    Image view = apply_content_transform(to_three_channels(x), model.policy.transforms[slot]);
    return nnd_score_from_rep(model.keys[slot], encode(ckpt, view));
}

inline double s_nnd(const NNDScoreModel& model, Checkpoint& ckpt, const Image& x,
                    const ContentTransform& t) {
    return s_nnd_slot(model, ckpt, x, detail::find_slot(model.policy, t));
}

// Per-slot Gaussian moments of the unit-normalized training representations.
// Memory is O(A d^2); query cost is independent of the training set size.
struct GaussianScoreModel {
    TestTimePolicy policy;
    int d = 0;
    std::string checkpoint_hash;
    double eps_config = -1.0;  // <0 = auto
    std::vector<GaussianParams> slots;
};

inline GaussianScoreModel fit_gaussian(Checkpoint& ckpt, const std::vector<Image>& train,
                                       const TestTimePolicy& policy, double eps = -1.0) {
    policy.validate();
    if (train.size() < 2) throw ConfigError("fit_gaussian: need at least 2 training images");
    GaussianScoreModel model;
    model.policy = policy;
    model.d = ckpt.model_cfg.repr_dim();
    model.checkpoint_hash = ckpt.config_hash;
    model.eps_config = eps;
    model.slots.reserve(policy.A);
    for (int slot = 0; slot < policy.A; ++slot) {
        auto reps = encode_batch(ckpt, detail::slot_train_views(train, policy, slot));
        std::vector<std::vector<double>> unit;
        unit.reserve(reps.size());
        for (auto& rep : reps) unit.push_back(normalize_rep(rep));
        model.slots.push_back(fit_gaussian_params(unit, eps));
    }
    return model;
}

inline double s_lh_slot(const GaussianScoreModel& model, Checkpoint& ckpt, const Image& x,
                        int slot) {
    if (slot < 0 || slot >= model.policy.A) throw ConfigError("s_lh: slot out of range");
    Image view = apply_content_transform(to_three_channels(x), model.policy.transforms[slot]);
    return lh_score_from_rep(model.slots[slot], encode(ckpt, view));
}

inline double s_lh(const GaussianScoreModel& model, Checkpoint& ckpt, const Image& x,
                   const ContentTransform& t) {
    return s_lh_slot(model, ckpt, x, detail::find_slot(model.policy, t));
}

// ----------------------------------------------------------------------------
// Final test-time-augmented scores: disjoint halves, transforms 1..A/2 on the
// query and A/2+1..A on its context-augmented counterpart, averaged.

namespace detail {

template <class Model, class SlotScore>
double final_score_impl(const Model& model, Checkpoint& ckpt, const Image& x,
                        const TestTimePolicy& policy, SlotScore&& slot_score) {
    policy.validate();
    if (!(policy == model.policy))
        throw ConfigError("final_score: policy does not match the fitted model");
    Image xc = apply_context(x, policy.context_aug);
    double sum = 0.0;
    for (int i = 0; i < policy.A / 2; ++i) sum += slot_score(x, i);
    for (int i = policy.A / 2; i < policy.A; ++i) sum += slot_score(xc, i);
    return sum / static_cast<double>(policy.A);
}

}  // namespace detail

inline double final_score(const NNDScoreModel& model, Checkpoint& ckpt, const Image& x,
                          const TestTimePolicy& policy) {
    return detail::final_score_impl(model, ckpt, x, policy, [&](const Image& img, int slot) {
        return s_nnd_slot(model, ckpt, img, slot);
    });
}

inline double final_score(const GaussianScoreModel& model, Checkpoint& ckpt, const Image& x,
                          const TestTimePolicy& policy) {
    return detail::final_score_impl(model, ckpt, x, policy, [&](const Image& img, int slot) {
        return s_lh_slot(model, ckpt, img, slot);
    });
}

// Label 1 (anomaly) iff score > threshold, strictly.
inline std::vector<int> threshold_predict(const std::vector<double>& scores, double threshold) {
    std::vector<int> labels(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) labels[i] = scores[i] > threshold ? 1 : 0;
    return labels;
}

// ----------------------------------------------------------------------------
// Score-model files: versioned magic, JSON manifest (counts, d, eps,
// transform descriptors, checkpoint hash), then row-major little-endian f32
// payload.

namespace detail {

constexpr std::uint64_t kScoreModelMagic = 0x314d4353324e4f43ull;  // "CON2SCM1"
constexpr std::uint32_t kScoreModelVersion = 1;

inline nlohmann::json policy_manifest(const TestTimePolicy& p) {
    nlohmann::json transforms = nlohmann::json::array();
    for (const auto& t : p.transforms) transforms.push_back(t);
    return {{"A", p.A},
            {"context_aug", context_aug_name(p.context_aug)},
            {"seed", p.seed},
            {"transforms", transforms}};
}

inline TestTimePolicy policy_from_manifest(const nlohmann::json& j) {
    TestTimePolicy p;
    p.A = j.at("A").get<int>();
    p.context_aug = context_aug_from_name(j.at("context_aug").get<std::string>());
    p.seed = j.at("seed").get<std::uint64_t>();
    p.transforms = j.at("transforms").get<std::vector<ContentTransform>>();
    p.validate();
    return p;
}

}  // namespace detail

inline void save_score_model(const std::filesystem::path& path, const NNDScoreModel& model) {
    nlohmann::json manifest = {{"format", "con2-score-model"},
                               {"version", detail::kScoreModelVersion},
                               {"variant", "nnd"},
                               {"d", model.d},
                               {"rows_per_slot", model.keys.empty() ? 0 : model.keys[0].size()},
                               {"policy", detail::policy_manifest(model.policy)},
                               {"checkpoint_hash", model.checkpoint_hash}};
    ByteWriter w;
    w.u64(detail::kScoreModelMagic);
    w.u32(detail::kScoreModelVersion);
    w.str(manifest.dump(2));
    for (const auto& slot : model.keys)
        for (const auto& row : slot)
            for (double v : row) w.f32(static_cast<float>(v));
    atomic_write_file(path, w.bytes());
}

inline void save_score_model(const std::filesystem::path& path, const GaussianScoreModel& model) {
    nlohmann::json manifest = {{"format", "con2-score-model"},
                               {"version", detail::kScoreModelVersion},
                               {"variant", "lh"},
                               {"d", model.d},
                               {"eps_config", model.eps_config},
                               {"eps_used", model.slots.empty() ? 0.0 : model.slots[0].eps},
                               {"policy", detail::policy_manifest(model.policy)},
                               {"checkpoint_hash", model.checkpoint_hash}};
    ByteWriter w;
    w.u64(detail::kScoreModelMagic);
    w.u32(detail::kScoreModelVersion);
    w.str(manifest.dump(2));
    for (const auto& slot : model.slots) {
        for (double v : slot.mu) w.f32(static_cast<float>(v));
        for (double v : slot.cov.a) w.f32(static_cast<float>(v));
        w.f64(slot.eps);
    }
    atomic_write_file(path, w.bytes());
}

inline ScoreVariant peek_score_model_variant(const std::filesystem::path& path) {
    std::string bytes = read_file_bytes(path);
    ByteReader r(bytes);
    if (r.u64() != detail::kScoreModelMagic)
        throw ArtifactError("not a score-model file: " + path.string());
    r.u32();
    nlohmann::json manifest = nlohmann::json::parse(r.str());
    return score_variant_from_name(manifest.at("variant").get<std::string>());
}

inline NNDScoreModel load_nnd_score_model(const std::filesystem::path& path) {
    std::string bytes = read_file_bytes(path);
    ByteReader r(bytes);
    if (r.u64() != detail::kScoreModelMagic)
        throw ArtifactError("not a score-model file: " + path.string());
    if (r.u32() != detail::kScoreModelVersion)
        throw ArtifactError("score-model version mismatch: " + path.string());
    nlohmann::json manifest = nlohmann::json::parse(r.str());
    if (manifest.at("variant") != "nnd")
        throw ConfigError("score model at " + path.string() + " is not an NND model");
    NNDScoreModel model;
    model.policy = detail::policy_from_manifest(manifest.at("policy"));
    model.d = manifest.at("d").get<int>();
    model.checkpoint_hash = manifest.at("checkpoint_hash").get<std::string>();
    std::size_t rows = manifest.at("rows_per_slot").get<std::size_t>();
    model.keys.assign(model.policy.A, {});
    for (auto& slot : model.keys) {
        slot.assign(rows, std::vector<double>(model.d));
        for (auto& row : slot) {
            for (auto& v : row) v = r.f32();
            row = normalize_rep(row);  // restore unit norm after f32 rounding
        }
    }
    return model;
}

inline GaussianScoreModel load_gaussian_score_model(const std::filesystem::path& path) {
    std::string bytes = read_file_bytes(path);
    ByteReader r(bytes);
    if (r.u64() != detail::kScoreModelMagic)
        throw ArtifactError("not a score-model file: " + path.string());
    if (r.u32() != detail::kScoreModelVersion)
        throw ArtifactError("score-model version mismatch: " + path.string());
    nlohmann::json manifest = nlohmann::json::parse(r.str());
    if (manifest.at("variant") != "lh")
        throw ConfigError("score model at " + path.string() + " is not a Gaussian model");
    GaussianScoreModel model;
    model.policy = detail::policy_from_manifest(manifest.at("policy"));
    model.d = manifest.at("d").get<int>();
    model.checkpoint_hash = manifest.at("checkpoint_hash").get<std::string>();
    model.eps_config = manifest.at("eps_config").get<double>();
    std::size_t d = static_cast<std::size_t>(model.d);
    for (int slot = 0; slot < model.policy.A; ++slot) {
        GaussianParams p;
        p.mu.resize(d);
        for (auto& v : p.mu) v = r.f32();
        p.cov = Matrix(d, d);
        for (auto& v : p.cov.a) v = r.f32();
        double eps = r.f64();
        p.eps = eps;
        Matrix reg = p.cov;
        for (std::size_t i = 0; i < d; ++i) reg.at(i, i) += eps;
        if (!cholesky(reg, p.chol))
            throw NumericError("score model reload: covariance not positive definite");
        p.logdet = cholesky_logdet(p.chol);
        model.slots.push_back(std::move(p));
    }
    return model;
}

}  // namespace con2
