// ============================================================================
// config.hpp - the run configuration file
//
// One human-readable JSON key tree per run: dataset, model, train, scoring,
// eval sections. Parsing is strict: unknown keys are rejected with the
// offending key named, all values are range-checked before any work starts,
// and the FNV hash of the canonical dump is embedded in every artifact the
// run produces.
// ============================================================================

#pragma once
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "con2/dataset.hpp"
#include "con2/image_folder.hpp"
#include "con2/scoring.hpp"
#include "con2/trainer.hpp"

namespace con2 {

struct ScoringConfig {
    ScoreVariant variant = ScoreVariant::nnd;
    int A = 40;
    double eps = -1.0;  // <0 = automatic trace-scaled regularization
    std::uint64_t tta_seed = 1;

    void validate() const {
        if (A < 2 || A % 2 != 0)
            throw ConfigError("scoring.A must be even and >= 2 (the final score averages "
                              "half the transforms on the query and half on its context view)");
    }
};

struct EvalConfig {
    int train_subsample = 32;  // train points included in the embedding export

    void validate() const {
        if (train_subsample < 0) throw ConfigError("eval.train_subsample must be >= 0");
    }
};

struct RunConfig {
    std::string dataset_source = "synthetic";  // "synthetic" | "folder"
    SyntheticConfig synthetic;
    std::string folder_path;
    FolderLayout folder_layout;
    ModelConfig model;
    TrainConfig train;
    ScoringConfig scoring;
    EvalConfig eval;

    void validate() const {
        if (dataset_source != "synthetic" && dataset_source != "folder")
            throw ConfigError("dataset.source must be 'synthetic' or 'folder'");
        if (dataset_source == "synthetic") {
            synthetic.validate();
            if (synthetic.image_size != model.input_size)
                throw ConfigError("dataset.synthetic.image_size must equal model.input_size");
        } else {
            if (folder_path.empty()) throw ConfigError("dataset.folder.path is required");
            folder_layout.validate();
            if (folder_layout.crop_size != model.input_size)
                throw ConfigError("dataset.folder.crop_size must equal model.input_size");
        }
        model.validate();
        train.validate();
        if (train.policy.out_size != model.input_size)
            throw ConfigError("train.policy.out_size must equal model.input_size");
        scoring.validate();
        eval.validate();
    }
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                                const std::string& where) {
    if (!j.is_object()) throw ConfigError("config: expected an object at " + where);
    for (const auto& [key, value] : j.items())
        if (!allowed.count(key))
            throw ConfigError("config: unknown key '" + where + key + "'");
}

template <class T>
void take(const nlohmann::json& j, const char* key, T& into) {
    if (j.contains(key)) j.at(key).get_to(into);
}

inline ContentPolicy parse_policy(const nlohmann::json& j, const std::string& where) {
    reject_unknown_keys(j,
                        {"crop_scale_min", "crop_scale_max", "hflip_prob", "jitter_prob",
                         "brightness", "contrast", "saturation", "hue", "grayscale_prob",
                         "out_size", "seed"},
                        where);
    ContentPolicy p;
    take(j, "crop_scale_min", p.crop_scale_min);
    take(j, "crop_scale_max", p.crop_scale_max);
    take(j, "hflip_prob", p.hflip_prob);
    take(j, "jitter_prob", p.jitter_prob);
    take(j, "brightness", p.brightness);
    take(j, "contrast", p.contrast);
    take(j, "saturation", p.saturation);
    take(j, "hue", p.hue);
    take(j, "grayscale_prob", p.grayscale_prob);
    take(j, "out_size", p.out_size);
    take(j, "seed", p.seed);
    return p;
}

}  // namespace detail

inline RunConfig parse_run_config(const nlohmann::json& j) {
    detail::reject_unknown_keys(j, {"dataset", "model", "train", "scoring", "eval"}, "");
    RunConfig cfg;

    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        detail::reject_unknown_keys(d, {"source", "synthetic", "folder"}, "dataset.");
        detail::take(d, "source", cfg.dataset_source);
        if (d.contains("synthetic")) {
            const auto& s = d.at("synthetic");
            detail::reject_unknown_keys(
                s, {"image_size", "n_train", "n_test_normal", "n_test_anomaly", "noise", "seed"},
                "dataset.synthetic.");
            detail::take(s, "image_size", cfg.synthetic.image_size);
            detail::take(s, "n_train", cfg.synthetic.n_train);
            detail::take(s, "n_test_normal", cfg.synthetic.n_test_normal);
            detail::take(s, "n_test_anomaly", cfg.synthetic.n_test_anomaly);
            detail::take(s, "noise", cfg.synthetic.noise);
            detail::take(s, "seed", cfg.synthetic.seed);
        }
        if (d.contains("folder")) {
            const auto& f = d.at("folder");
            detail::reject_unknown_keys(f, {"path", "resize_shorter", "crop_size", "entries"},
                                        "dataset.folder.");
            detail::take(f, "path", cfg.folder_path);
            detail::take(f, "resize_shorter", cfg.folder_layout.resize_shorter);
            detail::take(f, "crop_size", cfg.folder_layout.crop_size);
            if (f.contains("entries")) {
                for (const auto& e : f.at("entries")) {
                    detail::reject_unknown_keys(e, {"subdir", "split", "label"},
                                                "dataset.folder.entries.");
                    FolderLayout::Entry entry;
                    detail::take(e, "subdir", entry.subdir);
                    detail::take(e, "split", entry.split);
                    detail::take(e, "label", entry.label);
                    cfg.folder_layout.entries.push_back(entry);
                }
            }
        }
    }

    if (j.contains("model")) {
        const auto& m = j.at("model");
        detail::reject_unknown_keys(m, {"encoder", "input_size", "context_head", "content_head"},
                                    "model.");
        detail::take(m, "encoder", cfg.model.encoder);
        detail::take(m, "input_size", cfg.model.input_size);
        for (auto [key, head] : {std::pair{"context_head", &cfg.model.context_head},
                                 std::pair{"content_head", &cfg.model.content_head}}) {
            if (m.contains(key)) {
                detail::reject_unknown_keys(m.at(key), {"hidden", "out"},
                                            std::string("model.") + key + ".");
                detail::take(m.at(key), "hidden", head->hidden);
                detail::take(m.at(key), "out", head->out);
            }
        }
    }

    if (j.contains("train")) {
        const auto& t = j.at("train");
        detail::reject_unknown_keys(t,
                                    {"epochs", "batch_n", "beta1", "beta2", "weight_decay",
                                     "base_lr", "tau", "context_aug", "policy", "seed",
                                     "max_steps"},
                                    "train.");
        detail::take(t, "epochs", cfg.train.epochs);
        detail::take(t, "batch_n", cfg.train.batch_n);
        detail::take(t, "beta1", cfg.train.beta1);
        detail::take(t, "beta2", cfg.train.beta2);
        detail::take(t, "weight_decay", cfg.train.weight_decay);
        detail::take(t, "base_lr", cfg.train.base_lr);
        detail::take(t, "tau", cfg.train.tau);
        if (t.contains("context_aug"))
            cfg.train.context_aug = context_aug_from_name(t.at("context_aug").get<std::string>());
        if (t.contains("policy")) cfg.train.policy = detail::parse_policy(t.at("policy"), "train.policy.");
        detail::take(t, "seed", cfg.train.seed);
        detail::take(t, "max_steps", cfg.train.max_steps);
    }

    if (j.contains("scoring")) {
        const auto& s = j.at("scoring");
        detail::reject_unknown_keys(s, {"variant", "A", "eps", "tta_seed"}, "scoring.");
        if (s.contains("variant"))
            cfg.scoring.variant = score_variant_from_name(s.at("variant").get<std::string>());
        detail::take(s, "A", cfg.scoring.A);
        detail::take(s, "eps", cfg.scoring.eps);
        detail::take(s, "tta_seed", cfg.scoring.tta_seed);
    }

    if (j.contains("eval")) {
        const auto& e = j.at("eval");
        detail::reject_unknown_keys(e, {"train_subsample"}, "eval.");
        detail::take(e, "train_subsample", cfg.eval.train_subsample);
    }

    cfg.validate();
    return cfg;
}

inline nlohmann::json run_config_json(const RunConfig& cfg) {
    nlohmann::json dataset = {{"source", cfg.dataset_source}};
    if (cfg.dataset_source == "synthetic") {
        dataset["synthetic"] = {{"image_size", cfg.synthetic.image_size},
                                {"n_train", cfg.synthetic.n_train},
                                {"n_test_normal", cfg.synthetic.n_test_normal},
                                {"n_test_anomaly", cfg.synthetic.n_test_anomaly},
                                {"noise", cfg.synthetic.noise},
                                {"seed", cfg.synthetic.seed}};
    } else {
        nlohmann::json entries = nlohmann::json::array();
        for (const auto& e : cfg.folder_layout.entries)
            entries.push_back({{"subdir", e.subdir}, {"split", e.split}, {"label", e.label}});
        dataset["folder"] = {{"path", cfg.folder_path},
                             {"resize_shorter", cfg.folder_layout.resize_shorter},
                             {"crop_size", cfg.folder_layout.crop_size},
                             {"entries", entries}};
    }
    return {{"dataset", dataset},
            {"model", detail::model_cfg_json(cfg.model)},
            {"train", detail::train_cfg_json(cfg.train)},
            {"scoring",
             {{"variant", score_variant_name(cfg.scoring.variant)},
              {"A", cfg.scoring.A},
              {"eps", cfg.scoring.eps},
              {"tta_seed", cfg.scoring.tta_seed}}},
            {"eval", {{"train_subsample", cfg.eval.train_subsample}}}};
}

// Canonical hash embedded in every artifact: nlohmann objects serialize with
// sorted keys, so the dump is a canonical form.
inline std::string run_config_hash(const RunConfig& cfg) {
    return hex64(fnv1a64(run_config_json(cfg).dump()));
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    namespace fs = std::filesystem;
    if (!fs::exists(path)) throw ConfigError("config file missing: " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file_bytes(path));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config file " + path.string() + ": " + e.what());
    }
    try {
        return parse_run_config(j);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config file " + path.string() + ": " + e.what());
    }
}

inline DatasetSplit load_dataset(const RunConfig& cfg) {
    if (cfg.dataset_source == "synthetic") return make_synthetic_split(cfg.synthetic);
    return load_image_folder(cfg.folder_path, cfg.folder_layout);
}

}  // namespace con2
