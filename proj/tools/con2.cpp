// con2 - context-contrasting anomaly detection pipeline
//
// Subcommands: train, score, eval, validate-context, bench-scores,
// export-embeddings. Every artifact embeds the config hash; reruns from the
// same config and seeds reproduce all metric files byte for byte.
//
// Exit codes: 0 success, 2 config/validation error, 3 numerical failure,
// 4 missing artifact.

#include <cstdlib>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "con2/con2.hpp"

namespace fs = std::filesystem;
using namespace con2;

namespace {

fs::path artifact_root() {
    if (const char* env = std::getenv("CON2_ARTIFACT_ROOT")) return fs::path(env);
    return fs::path("artifacts");
}

std::string loss_history_csv(const Checkpoint& ckpt) {
    std::ostringstream os;
    os << "# config_hash=" << ckpt.config_hash << "\n";
    os << "step,lr,alpha,context,content,total\n";
    for (const auto& r : ckpt.history)
        os << r.step << "," << format_double(r.lr) << "," << format_double(r.alpha) << ","
           << format_double(r.context_term) << "," << format_double(r.content_term) << ","
           << format_double(r.total) << "\n";
    return os.str();
}

int cmd_train(const std::string& config_path, const std::string& out_dir_arg) {
    RunConfig cfg = load_run_config(config_path);
    std::string hash = run_config_hash(cfg);
    fs::path out_dir = out_dir_arg.empty() ? artifact_root() / ("run-" + hash) : fs::path(out_dir_arg);

    DatasetSplit data = load_dataset(cfg);
    std::cout << "train: " << data.train.size() << " normal images, config " << hash << "\n";
    Checkpoint ckpt = train(cfg.model, cfg.train, data);
    ckpt.config_hash = hash;

    save_checkpoint(out_dir / "checkpoint.ckpt", ckpt);
    atomic_write_file(out_dir / "loss_history.csv", loss_history_csv(ckpt));
    std::cout << "checkpoint = " << (out_dir / "checkpoint.ckpt").string() << "\n";
    std::cout << "steps = " << ckpt.step << "\n";
    std::cout << "final_loss = " << format_double(ckpt.history.back().total) << "\n";
    return 0;
}

int cmd_score(const std::string& ckpt_path, const std::string& config_path,
              const std::string& variant_arg, int a_override, double eps_override,
              const std::string& out_arg) {
    if (!fs::exists(ckpt_path)) throw ArtifactError("missing checkpoint: " + ckpt_path);
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    RunConfig cfg = load_run_config(config_path);

    ScoringConfig scoring = cfg.scoring;
    if (!variant_arg.empty()) scoring.variant = score_variant_from_name(variant_arg);
    if (a_override > 0) scoring.A = a_override;
    if (eps_override >= 0.0) scoring.eps = eps_override;
    scoring.validate();

    DatasetSplit data = load_dataset(cfg);
    TestTimePolicy policy = make_test_time_policy(cfg.train.policy, scoring.A,
                                                  cfg.train.context_aug, scoring.tta_seed);

    fs::path out = out_arg.empty()
                       ? artifact_root() / ("scores-" + score_variant_name(scoring.variant) + ".csv")
                       : fs::path(out_arg);
    fs::path model_out = out;
    model_out.replace_extension(".scoremodel");

    std::vector<ScoreRow> rows(data.test.size());
    if (scoring.variant == ScoreVariant::nnd) {
        NNDScoreModel model = fit_nnd(ckpt, data.train, policy);
        for (std::size_t i = 0; i < data.test.size(); ++i)
            rows[i] = {static_cast<int>(i), final_score(model, ckpt, data.test[i], policy),
                       data.test_labels[i]};
        save_score_model(model_out, model);
    } else {
        GaussianScoreModel model = fit_gaussian(ckpt, data.train, policy, scoring.eps);
        for (std::size_t i = 0; i < data.test.size(); ++i)
            rows[i] = {static_cast<int>(i), final_score(model, ckpt, data.test[i], policy),
                       data.test_labels[i]};
        save_score_model(model_out, model);
    }

    atomic_write_file(out, score_csv(rows, {{"config_hash", ckpt.config_hash},
                                            {"variant", score_variant_name(scoring.variant)},
                                            {"A", std::to_string(scoring.A)},
                                            {"tta_seed", std::to_string(scoring.tta_seed)}}));
    std::cout << "scores = " << out.string() << "\n";
    std::cout << "score_model = " << model_out.string() << "\n";
    std::cout << "n_test = " << rows.size() << "\n";
    return 0;
}

int cmd_eval(const std::vector<std::string>& score_files, const std::string& out_dir_arg) {
    fs::path out_dir = out_dir_arg.empty() ? artifact_root() : fs::path(out_dir_arg);
    std::vector<EvalReportRow> report;
    nlohmann::json manifest = nlohmann::json::array();
    for (const auto& file : score_files) {
        if (!fs::exists(file)) throw ArtifactError("missing score file: " + file);
        ScoreFile parsed = parse_score_csv(read_file_bytes(file));
        std::vector<double> scores;
        std::vector<int> labels;
        for (const auto& r : parsed.rows) {
            if (r.label < 0) continue;
            scores.push_back(r.score);
            labels.push_back(r.label);
        }
        if (scores.empty()) throw ConfigError("score file has no labeled rows: " + file);
        double value = auroc(scores, labels);  // single-class input throws ConfigError

        EvalReportRow row;
        row.source = fs::path(file).filename().string();
        row.variant = parsed.meta.count("variant") ? parsed.meta["variant"] : "?";
        row.seed = parsed.meta.count("tta_seed") ? std::stoull(parsed.meta["tta_seed"]) : 0;
        row.auroc_value = value;
        row.config_hash = parsed.meta.count("config_hash") ? parsed.meta["config_hash"] : "";
        report.push_back(row);
        manifest.push_back({{"source", row.source},
                            {"variant", row.variant},
                            {"tta_seed", row.seed},
                            {"auroc", value},
                            {"config_hash", row.config_hash},
                            {"n_scores", scores.size()}});
        std::cout << "auroc(" << row.source << ") = " << format_double(value) << "\n";
    }
    atomic_write_file(out_dir / "eval_report.csv", eval_report_csv(report));
    atomic_write_file(out_dir / "eval_report.json", manifest.dump(2) + "\n");
    return 0;
}

int cmd_validate_context(const std::string& config_path, const std::string& aug_name, int k,
                         int max_samples) {
    RunConfig cfg = load_run_config(config_path);
    ContextAug aug = aug_name.empty() ? cfg.train.context_aug : context_aug_from_name(aug_name);
    DatasetSplit data = load_dataset(cfg);
    std::vector<Image> samples = data.train;
    if (max_samples > 0 && static_cast<int>(samples.size()) > max_samples)
        samples.resize(max_samples);

    auto distinct = check_distinctiveness(samples, aug, k);
    auto align = check_alignment(samples, aug);
    std::cout << "augmentation = " << context_aug_name(aug) << "\n";
    std::cout << "distinctiveness = " << format_double(*distinct.distinctiveness)
              << " (lower is more distinct, k=" << k << ", " << distinct.distance << ")\n";
    std::cout << "alignment = " << format_double(*align.alignment) << " (" << align.distance
              << ")\n";
    std::cout << "samples = " << distinct.sample_count << "\n";
    std::cout << "note: advisory only; violated assumptions do not always imply bad "
                 "detection performance\n";
    return 0;
}

int cmd_bench_scores(int d, const std::string& n_list, int queries, std::uint64_t seed,
                     const std::string& out_arg) {
    std::vector<std::size_t> n_values;
    std::stringstream ss(n_list);
    std::string item;
    while (std::getline(ss, item, ',')) n_values.push_back(std::stoull(item));
    auto table = bench_scores(n_values, d, queries, seed);
    fs::path out = out_arg.empty() ? artifact_root() / "bench_scores.csv" : fs::path(out_arg);
    atomic_write_file(out, bench_csv(table));
    for (const auto& row : table)
        std::cout << "n=" << row.n << " nnd_query_us=" << format_double(row.nnd_query_us)
                  << " lh_query_us=" << format_double(row.lh_query_us) << "\n";
    std::cout << "table = " << out.string() << "\n";
    return 0;
}

int cmd_export_embeddings(const std::string& ckpt_path, const std::string& config_path,
                          const std::string& out_dir_arg) {
    if (!fs::exists(ckpt_path)) throw ArtifactError("missing checkpoint: " + ckpt_path);
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    RunConfig cfg = load_run_config(config_path);
    DatasetSplit data = load_dataset(cfg);

    std::vector<PcaSample> samples;
    int train_count = std::min<int>(cfg.eval.train_subsample, data.train.size());
    for (int i = 0; i < train_count; ++i) samples.push_back({data.train[i], i, "train", 0});
    for (std::size_t i = 0; i < data.test.size(); ++i)
        samples.push_back({data.test[i], static_cast<int>(10000 + i), "test",
                           data.test_labels[i]});

    auto exp = pca_alignment_export(ckpt, samples, cfg.train.context_aug);
    fs::path out_dir = out_dir_arg.empty() ? artifact_root() : fs::path(out_dir_arg);
    std::ostringstream csv;
    csv << "# config_hash=" << ckpt.config_hash << "\n" << embedding_csv(exp);
    atomic_write_file(out_dir / "embeddings.csv", csv.str());
    atomic_write_file(out_dir / "alignment.svg", alignment_svg(exp));
    std::cout << "rows = " << exp.rows.size() << "\n";
    std::cout << "explained_variance = " << format_double(exp.explained_ratio) << "\n";
    std::cout << "embeddings = " << (out_dir / "embeddings.csv").string() << "\n";
    std::cout << "figure = " << (out_dir / "alignment.svg").string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Con2 context-contrasting anomaly detection"};
    app.require_subcommand(1);

    std::string config_path, out_arg, ckpt_path, variant_arg, aug_name, n_list = "100,1000";
    std::vector<std::string> score_files;
    int a_override = 0, k = 5, max_samples = 64, d = 64, queries = 32;
    double eps_override = -1.0;
    std::uint64_t seed = 1;

    auto* train_cmd = app.add_subcommand("train", "train a model from a run config");
    train_cmd->add_option("--config", config_path, "run config JSON")->required();
    train_cmd->add_option("--out", out_arg, "output directory");

    auto* score_cmd = app.add_subcommand("score", "fit a score model and score the test split");
    score_cmd->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
    score_cmd->add_option("--config", config_path, "run config JSON")->required();
    score_cmd->add_option("--variant", variant_arg, "nnd | lh");
    score_cmd->add_option("--A", a_override, "number of test-time augmentations (even)");
    score_cmd->add_option("--eps", eps_override, "covariance regularization (lh)");
    score_cmd->add_option("--out", out_arg, "score CSV path");

    auto* eval_cmd = app.add_subcommand("eval", "AUROC report from score files");
    eval_cmd->add_option("--scores", score_files, "score CSV files")->required()->expected(-1);
    eval_cmd->add_option("--out-dir", out_arg, "report directory");

    auto* validate_cmd =
        app.add_subcommand("validate-context", "distinctiveness/alignment heuristics");
    validate_cmd->add_option("--config", config_path, "run config JSON")->required();
    validate_cmd->add_option("--augmentation", aug_name, "invert | vflip | equalize");
    validate_cmd->add_option("--k", k, "neighbors for the confusability score");
    validate_cmd->add_option("--samples", max_samples, "training samples to use");

    auto* bench_cmd = app.add_subcommand("bench-scores", "score runtime benchmark");
    bench_cmd->add_option("--d", d, "representation dimension");
    bench_cmd->add_option("--n", n_list, "comma-separated training sizes, ascending");
    bench_cmd->add_option("--queries", queries, "queries per measurement");
    bench_cmd->add_option("--seed", seed, "rng seed");
    bench_cmd->add_option("--out", out_arg, "output CSV");

    auto* export_cmd = app.add_subcommand("export-embeddings", "2-component PCA alignment export");
    export_cmd->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
    export_cmd->add_option("--config", config_path, "run config JSON")->required();
    export_cmd->add_option("--out-dir", out_arg, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (train_cmd->parsed()) return cmd_train(config_path, out_arg);
        if (score_cmd->parsed())
            return cmd_score(ckpt_path, config_path, variant_arg, a_override, eps_override,
                             out_arg);
        if (eval_cmd->parsed()) return cmd_eval(score_files, out_arg);
        if (validate_cmd->parsed())
            return cmd_validate_context(config_path, aug_name, k, max_samples);
        if (bench_cmd->parsed()) return cmd_bench_scores(d, n_list, queries, seed, out_arg);
        if (export_cmd->parsed()) return cmd_export_embeddings(ckpt_path, config_path, out_arg);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const ArtifactError& e) {
        std::cerr << "missing artifact: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
