// ============================================================================
// trainer.hpp - optimization loop, alpha/lr schedules, checkpoints
// ============================================================================

#pragma once
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "con2/dataset.hpp"
#include "con2/losses.hpp"
#include "con2/model.hpp"
#include "con2/nn.hpp"

namespace con2 {

struct TrainConfig {
    int epochs = 2048;
    int batch_n = 8;  // base samples per step; a step sees 4N views
    double beta1 = 0.9;
    double beta2 = 0.999;
    double weight_decay = 0.001;
    double base_lr = 1e-3;
    double tau = 0.5;
    ContextAug context_aug = ContextAug::invert;
    ContentPolicy policy;
    std::uint64_t seed = 0;
    int max_steps = 0;  // 0 = epochs * steps_per_epoch; otherwise a hard cap

    void validate() const {
        if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
        if (batch_n < 1) throw ConfigError("train: batch must be >= 1");
        // 0 is allowed: degenerate optimizer runs are part of the contract
        if (!(base_lr >= 0.0)) throw ConfigError("train: base learning rate must be >= 0");
        if (!(tau > 0.0)) throw ConfigError("train: temperature must be positive");
        if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0))
            throw ConfigError("train: betas must lie in (0, 1)");
        if (weight_decay < 0.0) throw ConfigError("train: weight decay must be >= 0");
        if (max_steps < 0) throw ConfigError("train: max_steps must be >= 0");
        policy.validate();
    }
};

// Linear annealing weight: step / total_steps.
inline double anneal_alpha(long step, long total_steps) {
    if (total_steps < 1) throw ConfigError("anneal_alpha: total_steps must be >= 1");
    if (step < 0 || step > total_steps) throw ConfigError("anneal_alpha: step out of range");
    return static_cast<double>(step) / static_cast<double>(total_steps);
}

// Cosine annealing from base_lr at step 0 to 0 at total_steps.
inline double cosine_lr(long step, long total_steps, double base_lr) {
    if (total_steps < 1) throw ConfigError("cosine_lr: total_steps must be >= 1");
    if (step < 0 || step > total_steps) throw ConfigError("cosine_lr: step out of range");
    return 0.5 * base_lr *
           (1.0 + std::cos(3.141592653589793 * static_cast<double>(step) / total_steps));
}

struct HistoryRow {
    long step = 0;
    double lr = 0.0;
    double alpha = 0.0;
    double context_term = 0.0;
    double content_term = 0.0;
    double total = 0.0;
};

struct Checkpoint {
    ModelConfig model_cfg;
    TrainConfig train_cfg;
    long step = 0;
    std::string rng_state;
    std::vector<HistoryRow> history;
    std::string config_hash;
    std::shared_ptr<Con2Model> model;
};

namespace detail {

inline Batch views_to_batch(const ContextViewBatch& vb) {
    int side = vb.view_size;
    Batch x(static_cast<int>(vb.views.size()), 3, side, side);
    for (std::size_t i = 0; i < vb.views.size(); ++i)
        std::copy(vb.views[i].begin(), vb.views[i].end(), x.v.begin() + i * x.per_sample());
    return x;
}

inline ProjectionSet batch_to_set(const Batch& z, const ContextViewBatch& vb, double tau) {
    ProjectionSet set;
    set.tau = tau;
    set.labels = vb.labels;
    set.ids = vb.base_ids;
    set.vectors.resize(z.n);
    for (int i = 0; i < z.n; ++i) {
        set.vectors[i].resize(z.c);
        for (int j = 0; j < z.c; ++j) set.vectors[i][j] = z.at(i, j, 0, 0);
    }
    return set;
}

inline Batch grads_to_batch(const std::vector<std::vector<double>>& grads) {
    Batch g(static_cast<int>(grads.size()), static_cast<int>(grads[0].size()), 1, 1);
    for (std::size_t i = 0; i < grads.size(); ++i)
        for (std::size_t j = 0; j < grads[i].size(); ++j)
            g.at(static_cast<int>(i), static_cast<int>(j), 0, 0) =
                static_cast<float>(grads[i][j]);
    return g;
}

}  // namespace detail

// Runs the full optimization: per step, sample N base images, build the 4N
// context-view batch, forward encoder and both heads, take the combined loss
// with alpha annealed linearly over the run, and apply one AdamW update under
// the cosine schedule. Fully reproducible from (seed, configs).
inline Checkpoint train(const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                        const DatasetSplit& data) {
    model_cfg.validate();
    train_cfg.validate();
    if (data.train.empty()) throw ConfigError("train: empty training split");
    if (train_cfg.policy.out_size != model_cfg.input_size)
        throw ConfigError("train: content policy output size must match model input size");

    const long n_train = static_cast<long>(data.train.size());
    const long batch_n = std::min<long>(train_cfg.batch_n, n_train);
    const long steps_per_epoch = std::max<long>(1, n_train / batch_n);
    long total_steps = steps_per_epoch * train_cfg.epochs;
    if (train_cfg.max_steps > 0) total_steps = std::min<long>(total_steps, train_cfg.max_steps);

    Rng rng(train_cfg.seed);
    auto model = std::make_shared<Con2Model>(model_cfg);
    model->init(rng);

    AdamW optimizer;
    optimizer.beta1 = train_cfg.beta1;
    optimizer.beta2 = train_cfg.beta2;
    optimizer.weight_decay = train_cfg.weight_decay;

    Checkpoint ckpt;
    ckpt.model_cfg = model_cfg;
    ckpt.train_cfg = train_cfg;
    ckpt.model = model;
    ckpt.history.reserve(total_steps);

    const long alpha_horizon = std::max<long>(1, total_steps - 1);
    std::vector<long> order(n_train);
    for (long i = 0; i < n_train; ++i) order[i] = i;

    long step = 0;
    while (step < total_steps) {
        rng.shuffle(order);
        for (long chunk = 0; chunk + batch_n <= n_train && step < total_steps;
             chunk += batch_n, ++step) {
            std::vector<std::pair<Image, int>> base;
            base.reserve(batch_n);
            for (long j = 0; j < batch_n; ++j) {
                long idx = order[chunk + j];
                base.push_back({data.train[idx], static_cast<int>(idx)});
            }
            ContextViewBatch vb =
                make_view_batch(base, train_cfg.context_aug, train_cfg.policy, rng);

            Batch x = detail::views_to_batch(vb);
            Batch reps = model->encoder->forward(x, /*train=*/true);
            Batch z_ctx = model->head_context.forward(reps);
            Batch z_cnt = model->head_content.forward(reps);

            double alpha = anneal_alpha(step, alpha_horizon);
            ProjectionSet ctx_set = detail::batch_to_set(z_ctx, vb, train_cfg.tau);
            ProjectionSet cnt_set = detail::batch_to_set(z_cnt, vb, train_cfg.tau);
            Con2Gradients grads = con2_loss_grad(ctx_set, cnt_set, alpha);

            if (!std::isfinite(grads.value.total))
                throw NumericError("non-finite loss at step " + std::to_string(step) +
                                   " (context=" + std::to_string(grads.value.context_term) +
                                   ", content=" + std::to_string(grads.value.content_term) +
                                   ", alpha=" + std::to_string(alpha) + ")");

            model->zero_grad();
            Batch grad_reps = model->head_context.backward(detail::grads_to_batch(grads.context_grad));
            if (alpha > 0.0) {
                Batch g_cnt = model->head_content.backward(detail::grads_to_batch(grads.content_grad));
                for (std::size_t i = 0; i < grad_reps.v.size(); ++i) grad_reps.v[i] += g_cnt.v[i];
            }
            model->encoder->backward(grad_reps);

            double lr = cosine_lr(step, total_steps, train_cfg.base_lr);
            optimizer.step(model->params(), lr);

            ckpt.history.push_back({step, lr, alpha, grads.value.context_term,
                                    grads.value.content_term, grads.value.total});
        }
    }

    ckpt.step = total_steps;
    ckpt.rng_state = rng.state();
    return ckpt;
}

// --------------------------------------------------------------------------
// Evaluation-mode forward passes

inline Batch images_to_model_batch(const std::vector<Image>& images, int input_size) {
    Batch x(static_cast<int>(images.size()), 3, input_size, input_size);
    for (std::size_t i = 0; i < images.size(); ++i) {
        const Image& img = images[i];
        if (img.h != input_size || img.w != input_size)
            throw ConfigError("encode: image does not match the configured input size");
        Image three = to_three_channels(img);
        auto view = normalize_view(three);
        std::copy(view.begin(), view.end(), x.v.begin() + i * x.per_sample());
    }
    return x;
}

inline std::vector<std::vector<double>> encode_batch(Checkpoint& ckpt,
                                                     const std::vector<Image>& images) {
    Batch x = images_to_model_batch(images, ckpt.model_cfg.input_size);
    Batch reps = ckpt.model->encoder->forward(x, /*train=*/false);
    std::vector<std::vector<double>> out(reps.n, std::vector<double>(reps.c));
    for (int i = 0; i < reps.n; ++i)
        for (int j = 0; j < reps.c; ++j) out[i][j] = reps.at(i, j, 0, 0);
    return out;
}

inline std::vector<double> encode(Checkpoint& ckpt, const Image& img) {
    return encode_batch(ckpt, {img})[0];
}

inline std::vector<double> project_context(Checkpoint& ckpt,
                                           const std::vector<double>& representation) {
    Batch r(1, static_cast<int>(representation.size()), 1, 1);
    for (std::size_t j = 0; j < representation.size(); ++j)
        r.v[j] = static_cast<float>(representation[j]);
    Batch z = ckpt.model->head_context.forward(r);
    return std::vector<double>(z.v.begin(), z.v.end());
}

inline std::vector<double> project_content(Checkpoint& ckpt,
                                           const std::vector<double>& representation) {
    Batch r(1, static_cast<int>(representation.size()), 1, 1);
    for (std::size_t j = 0; j < representation.size(); ++j)
        r.v[j] = static_cast<float>(representation[j]);
    Batch z = ckpt.model->head_content.forward(r);
    return std::vector<double>(z.v.begin(), z.v.end());
}

// --------------------------------------------------------------------------
// Checkpoint files: versioned magic, human-readable JSON manifest, then the
// raw little-endian parameter blob.

namespace detail {

constexpr std::uint64_t kCheckpointMagic = 0x31504b43324e4f43ull;  // "CON2CKP1"
constexpr std::uint32_t kCheckpointVersion = 1;

inline nlohmann::json model_cfg_json(const ModelConfig& m) {
    return {{"encoder", m.encoder},
            {"input_size", m.input_size},
            {"context_head", {{"hidden", m.context_head.hidden}, {"out", m.context_head.out}}},
            {"content_head", {{"hidden", m.content_head.hidden}, {"out", m.content_head.out}}}};
}

inline ModelConfig model_cfg_from_json(const nlohmann::json& j) {
    ModelConfig m;
    m.encoder = j.at("encoder").get<std::string>();
    m.input_size = j.at("input_size").get<int>();
    m.context_head = {j.at("context_head").at("hidden").get<int>(),
                      j.at("context_head").at("out").get<int>()};
    m.content_head = {j.at("content_head").at("hidden").get<int>(),
                      j.at("content_head").at("out").get<int>()};
    return m;
}

inline nlohmann::json policy_json(const ContentPolicy& p) {
    return {{"crop_scale_min", p.crop_scale_min}, {"crop_scale_max", p.crop_scale_max},
            {"hflip_prob", p.hflip_prob},         {"jitter_prob", p.jitter_prob},
            {"brightness", p.brightness},         {"contrast", p.contrast},
            {"saturation", p.saturation},         {"hue", p.hue},
            {"grayscale_prob", p.grayscale_prob}, {"out_size", p.out_size},
            {"seed", p.seed}};
}

inline ContentPolicy policy_from_json(const nlohmann::json& j) {
    ContentPolicy p;
    j.at("crop_scale_min").get_to(p.crop_scale_min);
    j.at("crop_scale_max").get_to(p.crop_scale_max);
    j.at("hflip_prob").get_to(p.hflip_prob);
    j.at("jitter_prob").get_to(p.jitter_prob);
    j.at("brightness").get_to(p.brightness);
    j.at("contrast").get_to(p.contrast);
    j.at("saturation").get_to(p.saturation);
    j.at("hue").get_to(p.hue);
    j.at("grayscale_prob").get_to(p.grayscale_prob);
    j.at("out_size").get_to(p.out_size);
    j.at("seed").get_to(p.seed);
    return p;
}

inline nlohmann::json train_cfg_json(const TrainConfig& t) {
    return {{"epochs", t.epochs},
            {"batch_n", t.batch_n},
            {"beta1", t.beta1},
            {"beta2", t.beta2},
            {"weight_decay", t.weight_decay},
            {"base_lr", t.base_lr},
            {"tau", t.tau},
            {"context_aug", context_aug_name(t.context_aug)},
            {"policy", policy_json(t.policy)},
            {"seed", t.seed},
            {"max_steps", t.max_steps}};
}

inline TrainConfig train_cfg_from_json(const nlohmann::json& j) {
    TrainConfig t;
    j.at("epochs").get_to(t.epochs);
    j.at("batch_n").get_to(t.batch_n);
    j.at("beta1").get_to(t.beta1);
    j.at("beta2").get_to(t.beta2);
    j.at("weight_decay").get_to(t.weight_decay);
    j.at("base_lr").get_to(t.base_lr);
    j.at("tau").get_to(t.tau);
    t.context_aug = context_aug_from_name(j.at("context_aug").get<std::string>());
    t.policy = policy_from_json(j.at("policy"));
    j.at("seed").get_to(t.seed);
    j.at("max_steps").get_to(t.max_steps);
    return t;
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path, Checkpoint& ckpt) {
    nlohmann::json manifest = {
        {"format", "con2-checkpoint"},
        {"version", detail::kCheckpointVersion},
        {"model", detail::model_cfg_json(ckpt.model_cfg)},
        {"train", detail::train_cfg_json(ckpt.train_cfg)},
        {"step", ckpt.step},
        {"rng_state", ckpt.rng_state},
        {"config_hash", ckpt.config_hash},
        {"history_rows", ckpt.history.size()},
    };
    ByteWriter w;
    w.u64(detail::kCheckpointMagic);
    w.u32(detail::kCheckpointVersion);
    w.str(manifest.dump(2));
    ckpt.model->save_state(w);
    ByteWriter h;
    for (const auto& row : ckpt.history) {
        h.u64(static_cast<std::uint64_t>(row.step));
        h.f64(row.lr);
        h.f64(row.alpha);
        h.f64(row.context_term);
        h.f64(row.content_term);
        h.f64(row.total);
    }
    w.raw(h.bytes().data(), h.bytes().size());
    atomic_write_file(path, w.bytes());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::string bytes = read_file_bytes(path);
    ByteReader r(bytes);
    if (r.u64() != detail::kCheckpointMagic)
        throw ArtifactError("not a checkpoint file: " + path.string());
    std::uint32_t version = r.u32();
    if (version != detail::kCheckpointVersion)
        throw ArtifactError("checkpoint format version mismatch: found " +
                            std::to_string(version) + ", expected " +
                            std::to_string(detail::kCheckpointVersion));
    nlohmann::json manifest = nlohmann::json::parse(r.str());

    Checkpoint ckpt;
    ckpt.model_cfg = detail::model_cfg_from_json(manifest.at("model"));
    ckpt.train_cfg = detail::train_cfg_from_json(manifest.at("train"));
    ckpt.step = manifest.at("step").get<long>();
    ckpt.rng_state = manifest.at("rng_state").get<std::string>();
    ckpt.config_hash = manifest.at("config_hash").get<std::string>();
    ckpt.model = std::make_shared<Con2Model>(ckpt.model_cfg);
    ckpt.model->load_state(r);
    std::size_t rows = manifest.at("history_rows").get<std::size_t>();
    ckpt.history.resize(rows);
    for (auto& row : ckpt.history) {
        row.step = static_cast<long>(r.u64());
        row.lr = r.f64();
        row.alpha = r.f64();
        row.context_term = r.f64();
        row.content_term = r.f64();
        row.total = r.f64();
    }
    return ckpt;
}

}  // namespace con2
