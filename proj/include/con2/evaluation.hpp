// ============================================================================
// evaluation.hpp - AUROC, silhouette, PCA alignment export, score benchmarks
// ============================================================================

#pragma once
#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "con2/linalg.hpp"
#include "con2/rng.hpp"
#include "con2/scoring.hpp"
#include "con2/trainer.hpp"

namespace con2 {

// Midrank Mann-Whitney AUROC: P(score_anomaly > score_normal) + 1/2 P(equal).
// Exact under ties, which trapezoidal ROC integration is not.
inline double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw ConfigError("auroc: size mismatch");
    long n1 = std::count(labels.begin(), labels.end(), 1);
    long n0 = static_cast<long>(labels.size()) - n1;
    if (n0 == 0 || n1 == 0) throw ConfigError("auroc: both classes must be present");

    std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double rank_sum_anomaly = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        double midrank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k)
            if (labels[order[k]] == 1) rank_sum_anomaly += midrank;
        i = j + 1;
    }
    return (rank_sum_anomaly - static_cast<double>(n1) * (n1 + 1) / 2.0) /
           (static_cast<double>(n0) * static_cast<double>(n1));
}

// Mean silhouette value under cosine distance: (b - a) / max(a, b) per point,
// a = mean intra-cluster distance, b = smallest mean distance to another
// cluster. A point with a = b = 0 contributes 0.
inline double silhouette(const std::vector<std::vector<double>>& reps,
                         const std::vector<int>& labels) {
    std::size_t n = reps.size();
    if (n != labels.size()) throw ConfigError("silhouette: size mismatch");
    std::map<int, std::vector<std::size_t>> clusters;
    for (std::size_t i = 0; i < n; ++i) clusters[labels[i]].push_back(i);
    if (clusters.size() < 2) throw ConfigError("silhouette: need at least 2 clusters");
    for (const auto& [label, members] : clusters)
        if (members.size() < 2)
            throw ConfigError("silhouette: singleton cluster " + std::to_string(label));

    std::size_t d = reps[0].size();
    auto dist = [&](std::size_t a, std::size_t b) {
        return 1.0 - cosine_sim(reps[a].data(), reps[b].data(), d);
    };

    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double a = 0.0;
        double b = std::numeric_limits<double>::infinity();
        for (const auto& [label, members] : clusters) {
            double sum = 0.0;
            long count = 0;
            for (std::size_t j : members) {
                if (j == i) continue;
                sum += dist(i, j);
                count++;
            }
            if (label == labels[i]) {
                a = sum / static_cast<double>(count);
            } else {
                b = std::min(b, sum / static_cast<double>(members.size()));
            }
        }
        double denom = std::max(a, b);
        total += denom > 0.0 ? (b - a) / denom : 0.0;
    }
    return total / static_cast<double>(n);
}

// ----------------------------------------------------------------------------
// Two-component PCA with a fixed sign convention (the largest-magnitude
// loading of each component is made positive) so exports are reproducible.

struct Pca2 {
    std::vector<double> component1, component2;  // unit loadings
    std::vector<double> mean;
    double explained_ratio = 0.0;  // variance captured by the two components
};

inline Pca2 fit_pca2(const std::vector<std::vector<double>>& rows) {
    if (rows.size() < 3) throw ConfigError("pca: need at least 3 samples");
    Pca2 pca;
    pca.mean = row_mean(rows);
    Matrix cov = covariance(rows, pca.mean);
    std::vector<double> eigvals;
    Matrix eigvecs;
    jacobi_eigen_sym(cov, eigvals, eigvecs);
    std::size_t d = pca.mean.size();
    pca.component1.resize(d);
    pca.component2.resize(d);
    for (std::size_t i = 0; i < d; ++i) {
        pca.component1[i] = eigvecs.at(i, 0);
        pca.component2[i] = d > 1 ? eigvecs.at(i, 1) : 0.0;
    }
    for (auto* comp : {&pca.component1, &pca.component2}) {
        std::size_t biggest = 0;
        for (std::size_t i = 1; i < d; ++i)
            if (std::abs((*comp)[i]) > std::abs((*comp)[biggest])) biggest = i;
        if ((*comp)[biggest] < 0.0)
            for (auto& v : *comp) v = -v;
    }
    double total = 0.0;
    for (double v : eigvals) total += std::max(v, 0.0);
    double top2 = std::max(eigvals[0], 0.0) + (eigvals.size() > 1 ? std::max(eigvals[1], 0.0) : 0.0);
    pca.explained_ratio = total > 0.0 ? top2 / total : 1.0;
    return pca;
}

inline std::pair<double, double> pca2_project(const Pca2& pca, const std::vector<double>& row) {
    double p1 = 0.0, p2 = 0.0;
    for (std::size_t i = 0; i < row.size(); ++i) {
        double centered = row[i] - pca.mean[i];
        p1 += centered * pca.component1[i];
        p2 += centered * pca.component2[i];
    }
    return {p1, p2};
}

struct EmbeddingRow {
    int id = 0;
    int context = 0;
    std::string split;  // "train" | "test"
    int anomaly = 0;
    double pc1 = 0.0, pc2 = 0.0;
};

struct PcaSample {
    Image img;
    int id = 0;
    std::string split = "test";
    int anomaly = 0;
};

struct AlignmentExport {
    std::vector<EmbeddingRow> rows;  // two rows per sample id, one per context
    double explained_ratio = 0.0;
};

// Representations of each sample and its context counterpart, pooled and
// reduced to 2 components. Each sample id yields one row per context; the
// figure joins the pair with a segment.
inline AlignmentExport pca_alignment_export(Checkpoint& ckpt, const std::vector<PcaSample>& samples,
                                            ContextAug aug) {
    if (samples.size() < 3) throw ConfigError("pca_alignment_export: need at least 3 samples");
    std::vector<Image> images;
    images.reserve(2 * samples.size());
    for (const auto& s : samples) images.push_back(s.img);
    for (const auto& s : samples) images.push_back(apply_context(s.img, aug));
    auto reps = encode_batch(ckpt, images);

    Pca2 pca = fit_pca2(reps);
    AlignmentExport out;
    out.explained_ratio = pca.explained_ratio;
    out.rows.reserve(reps.size());
    for (std::size_t i = 0; i < reps.size(); ++i) {
        const PcaSample& s = samples[i % samples.size()];
        auto [p1, p2] = pca2_project(pca, reps[i]);
        out.rows.push_back({s.id, i < samples.size() ? 0 : 1, s.split, s.anomaly, p1, p2});
    }
    return out;
}

inline std::string embedding_csv(const AlignmentExport& exp) {
    std::ostringstream os;
    os << "id,context,split,anomaly,pc1,pc2\n";
    for (const auto& r : exp.rows)
        os << r.id << "," << r.context << "," << r.split << "," << r.anomaly << ","
           << format_double(r.pc1) << "," << format_double(r.pc2) << "\n";
    return os.str();
}

// Minimal SVG: a segment per sample id joining its two context embeddings,
// circles for normal points, crosses for anomalies.
inline std::string alignment_svg(const AlignmentExport& exp, int size = 640) {
    double lo_x = 1e300, hi_x = -1e300, lo_y = 1e300, hi_y = -1e300;
    for (const auto& r : exp.rows) {
        lo_x = std::min(lo_x, r.pc1);
        hi_x = std::max(hi_x, r.pc1);
        lo_y = std::min(lo_y, r.pc2);
        hi_y = std::max(hi_y, r.pc2);
    }
    double span = std::max({hi_x - lo_x, hi_y - lo_y, 1e-12});
    auto sx = [&](double x) { return 40.0 + (x - lo_x) / span * (size - 80); };
    auto sy = [&](double y) { return size - 40.0 - (y - lo_y) / span * (size - 80); };

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size
       << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    std::map<int, std::vector<const EmbeddingRow*>> by_id;
    for (const auto& r : exp.rows) by_id[r.id].push_back(&r);
    for (const auto& [id, pair] : by_id) {
        if (pair.size() != 2) continue;
        os << "<line x1=\"" << sx(pair[0]->pc1) << "\" y1=\"" << sy(pair[0]->pc2) << "\" x2=\""
           << sx(pair[1]->pc1) << "\" y2=\"" << sy(pair[1]->pc2)
           << "\" stroke=\"#bbbbbb\" stroke-width=\"0.6\"/>\n";
    }
    for (const auto& r : exp.rows) {
        const char* color = r.context == 0 ? "#4878cf" : "#ee854a";
        if (r.anomaly) {
            double x = sx(r.pc1), y = sy(r.pc2);
            os << "<path d=\"M" << x - 3 << " " << y - 3 << " L" << x + 3 << " " << y + 3 << " M"
               << x - 3 << " " << y + 3 << " L" << x + 3 << " " << y - 3 << "\" stroke=\"" << color
               << "\" stroke-width=\"1.4\"/>\n";
        } else {
            os << "<circle cx=\"" << sx(r.pc1) << "\" cy=\"" << sy(r.pc2)
               << "\" r=\"2.5\" fill=\"" << color << "\"" << (r.split == "train" ? " opacity=\"0.45\"" : "")
               << "/>\n";
        }
    }
    os << "</svg>\n";
    return os.str();
}

// ----------------------------------------------------------------------------
// Score runtime benchmark over synthetic representations.

struct BenchRow {
    std::size_t n = 0;
    double nnd_fit_ms = 0.0;
    double lh_fit_ms = 0.0;
    double nnd_query_us = 0.0;
    double lh_query_us = 0.0;
};

// Fits both score models on n synthetic d-dimensional representations and
// records median per-query wall times. Query cost of s_LH is O(d^2),
// independent of n; s_NND grows linearly with n.
inline std::vector<BenchRow> bench_scores(const std::vector<std::size_t>& n_values, std::size_t d,
                                          std::size_t n_queries, std::uint64_t seed) {
    if (n_values.empty()) throw ConfigError("bench: no n values");
    for (std::size_t i = 1; i < n_values.size(); ++i)
        if (n_values[i] <= n_values[i - 1])
            throw ConfigError("bench: n values must be sorted ascending");
    if (n_values.front() <= d)
        throw ConfigError("bench: smallest n must exceed d for a non-singular covariance");

    using clock = std::chrono::steady_clock;
    auto ms_since = [](clock::time_point t0) {
        return std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    };

    Rng rng(seed);
    std::vector<std::vector<double>> queries(n_queries, std::vector<double>(d));
    for (auto& q : queries) {
        for (auto& v : q) v = rng.normal();
        q = normalize_rep(q);
    }

    std::vector<BenchRow> table;
    for (std::size_t n : n_values) {
        std::vector<std::vector<double>> unit(n, std::vector<double>(d));
        for (auto& r : unit) {
            for (auto& v : r) v = rng.normal();
            r = normalize_rep(r);
        }

        BenchRow row;
        row.n = n;
        auto t0 = clock::now();
        const auto& keys = unit;  // rows are already unit norm
        row.nnd_fit_ms = ms_since(t0);
        t0 = clock::now();
        auto gauss = fit_gaussian_params(unit);
        row.lh_fit_ms = ms_since(t0);

        // median over repeated batch timings; each pass scores every query
        auto median_batch_us = [&](auto&& score_one) {
            std::vector<double> per_query;
            for (int pass = 0; pass < 5; ++pass) {
                auto b0 = clock::now();
                double sink = 0.0;
                for (const auto& q : queries) sink += score_one(q);
                double us =
                    std::chrono::duration<double, std::micro>(clock::now() - b0).count();
                if (sink == 1e300) throw NumericError("unreachable");
                per_query.push_back(us / static_cast<double>(n_queries));
            }
            std::sort(per_query.begin(), per_query.end());
            return per_query[per_query.size() / 2];
        };
        row.nnd_query_us = median_batch_us(
            [&](const std::vector<double>& q) { return nnd_score_from_rep(keys, q); });
        row.lh_query_us = median_batch_us(
            [&](const std::vector<double>& q) { return lh_score_from_normalized(gauss, q); });
        table.push_back(row);
    }
    return table;
}

inline std::string bench_csv(const std::vector<BenchRow>& table) {
    std::ostringstream os;
    os << "n,nnd_fit_ms,lh_fit_ms,nnd_query_us,lh_query_us\n";
    for (const auto& r : table)
        os << r.n << "," << format_double(r.nnd_fit_ms) << "," << format_double(r.lh_fit_ms) << ","
           << format_double(r.nnd_query_us) << "," << format_double(r.lh_query_us) << "\n";
    return os.str();
}

// ----------------------------------------------------------------------------
// Score CSV files (id, score, label) and the evaluation report.

struct ScoreRow {
    int id = 0;
    double score = 0.0;
    int label = -1;  // -1 = unknown
};

// Leading "# key=value" comment lines embed provenance (config hash, seeds)
// directly in the artifact.
struct ScoreFile {
    std::vector<ScoreRow> rows;
    std::map<std::string, std::string> meta;
};

inline std::string score_csv(const std::vector<ScoreRow>& rows,
                             const std::vector<std::pair<std::string, std::string>>& meta = {}) {
    std::ostringstream os;
    for (const auto& [k, v] : meta) os << "# " << k << "=" << v << "\n";
    os << "id,score,label\n";
    for (const auto& r : rows) {
        os << r.id << "," << format_double(r.score) << ",";
        if (r.label >= 0) os << r.label;
        os << "\n";
    }
    return os.str();
}

inline ScoreFile parse_score_csv(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    ScoreFile out;
    bool saw_header = false;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::size_t eq = line.find('=');
            if (eq != std::string::npos) {
                std::string key = line.substr(1, eq - 1);
                while (!key.empty() && key.front() == ' ') key.erase(key.begin());
                out.meta[key] = line.substr(eq + 1);
            }
            continue;
        }
        if (!saw_header) {
            if (line != "id,score,label") throw ArtifactError("score csv: unexpected header");
            saw_header = true;
            continue;
        }
        std::size_t c1 = line.find(',');
        std::size_t c2 = line.find(',', c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos)
            throw ArtifactError("score csv: malformed row: " + line);
        ScoreRow r;
        r.id = std::stoi(line.substr(0, c1));
        r.score = std::strtod(line.substr(c1 + 1, c2 - c1 - 1).c_str(), nullptr);
        std::string label = line.substr(c2 + 1);
        r.label = label.empty() ? -1 : std::stoi(label);
        out.rows.push_back(r);
    }
    if (!saw_header) throw ArtifactError("score csv: unexpected header");
    return out;
}

struct EvalReportRow {
    std::string source;
    std::string variant;
    std::uint64_t seed = 0;
    double auroc_value = 0.0;
    std::string config_hash;
};

inline std::string eval_report_csv(const std::vector<EvalReportRow>& rows) {
    std::ostringstream os;
    os << "source,variant,seed,auroc,config_hash\n";
    for (const auto& r : rows)
        os << r.source << "," << r.variant << "," << r.seed << "," << format_double(r.auroc_value)
           << "," << r.config_hash << "\n";
    return os.str();
}

}  // namespace con2
