#pragma once

// Evaluation arithmetic: NMI (arithmetic-mean normalization), silhouette
// with noise exclusion, the novel-device purity/share pair, and
// post-adaptation known-device accuracy.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flowprofiler/distance.hpp"
#include "flowprofiler/errors.hpp"
#include "flowprofiler/util.hpp"

namespace flowprofiler {

inline double nmi(std::span<const int> labels_a, std::span<const int> labels_b) {
    if (labels_a.size() != labels_b.size()) throw LengthMismatch("label sequences differ in length");
    if (labels_a.empty()) throw LengthMismatch("label sequences are empty");
    const double n = static_cast<double>(labels_a.size());

    std::map<int, double> ca, cb;
    std::map<std::pair<int, int>, double> joint;
    for (size_t i = 0; i < labels_a.size(); ++i) {
        ca[labels_a[i]] += 1;
        cb[labels_b[i]] += 1;
        joint[{labels_a[i], labels_b[i]}] += 1;
    }

    auto entropy = [n](const std::map<int, double>& counts) {
        double h = 0;
        for (const auto& [_, c] : counts) {
            double p = c / n;
            h -= p * std::log(p);
        }
        return h;
    };
    double ha = entropy(ca);
    double hb = entropy(cb);
    if (ha == 0.0 && hb == 0.0) return 1.0; // both constant: identical partitions
    if (ha == 0.0 || hb == 0.0) return 0.0;

    double mi = 0;
    for (const auto& [ab, c] : joint) {
        double pij = c / n;
        double pi = ca[ab.first] / n;
        double pj = cb[ab.second] / n;
        mi += pij * std::log(pij / (pi * pj));
    }
    double v = mi / (0.5 * (ha + hb));
    return std::clamp(v, 0.0, 1.0);
}

struct SilhouetteOptions {
    size_t exact_limit = 5000; // above this, score a seeded uniform sample
    uint64_t seed = 17;
};

// Mean silhouette over non-noise points; singleton clusters score 0.
inline double silhouette(std::span<const Point> points, std::span<const int> labels,
                         SilhouetteOptions opts = {}) {
    if (points.size() != labels.size()) throw LengthMismatch("points/labels differ in length");

    std::vector<size_t> idx;
    for (size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= 0) idx.push_back(i);
    }
    {
        std::set<int> distinct;
        for (size_t i : idx) distinct.insert(labels[i]);
        if (distinct.size() < 2) throw SingleCluster("silhouette needs at least 2 clusters");
    }
    if (idx.size() > opts.exact_limit) {
        std::vector<size_t> sampled;
        sampled.reserve(opts.exact_limit);
        std::mt19937_64 rng(opts.seed);
        std::sample(idx.begin(), idx.end(), std::back_inserter(sampled), opts.exact_limit, rng);
        idx = std::move(sampled);
        std::set<int> distinct;
        for (size_t i : idx) distinct.insert(labels[i]);
        if (distinct.size() < 2) throw SingleCluster("sampled silhouette degenerated to one cluster");
    }

    std::map<int, std::vector<size_t>> by_cluster;
    for (size_t i : idx) by_cluster[labels[i]].push_back(i);

    double total = 0;
    for (size_t i : idx) {
        const auto& own = by_cluster[labels[i]];
        if (own.size() == 1) continue; // singleton scores 0
        double a = 0;
        for (size_t j : own) {
            if (j != i) a += euclidean(points[i], points[j]);
        }
        a /= static_cast<double>(own.size() - 1);
        double b = std::numeric_limits<double>::infinity();
        for (const auto& [cl, members] : by_cluster) {
            if (cl == labels[i]) continue;
            double m = 0;
            for (size_t j : members) m += euclidean(points[i], points[j]);
            b = std::min(b, m / static_cast<double>(members.size()));
        }
        total += (b - a) / std::max(a, b);
    }
    return total / static_cast<double>(idx.size());
}

struct NoveltyEvaluation {
    struct SubclusterCounts {
        uint64_t novel = 0;
        uint64_t known = 0;
        double local_purity() const {
            uint64_t t = novel + known;
            return t ? static_cast<double>(novel) / static_cast<double>(t) : 0.0;
        }
    };
    std::map<int, SubclusterCounts> per_subcluster;
    std::set<int> valid; // subclusters whose local purity meets the threshold
    uint64_t n_total = 0;
    double purity = 0.0;
    double share = 0.0;
};

// Purity = sum over valid subclusters of local_purity * n_novel, divided by
// the valid novel mass; Share = valid novel mass / N_total. Empty valid set
// yields (0, 0).
inline NoveltyEvaluation novelty_eval(std::span<const int> assignments,
                                      const std::vector<bool>& is_novel,
                                      double purity_threshold,
                                      uint64_t n_total) {
    if (assignments.size() != is_novel.size()) throw LengthMismatch("assignments/truth differ in length");
    if (n_total < 1) throw InvalidArgument("N_total must be at least 1");
    if (!(purity_threshold > 0.0 && purity_threshold <= 1.0)) throw InvalidArgument("purity threshold outside (0,1]");

    NoveltyEvaluation ev;
    ev.n_total = n_total;
    for (size_t i = 0; i < assignments.size(); ++i) {
        auto& c = ev.per_subcluster[assignments[i]];
        if (is_novel[i]) ++c.novel;
        else ++c.known;
    }
    double weighted = 0, novel_mass = 0;
    for (const auto& [id, c] : ev.per_subcluster) {
        if (c.novel > 0 && c.local_purity() >= purity_threshold) {
            ev.valid.insert(id);
            weighted += c.local_purity() * static_cast<double>(c.novel);
            novel_mass += static_cast<double>(c.novel);
        }
    }
    if (novel_mass > 0) {
        ev.purity = weighted / novel_mass;
        ev.share = novel_mass / static_cast<double>(n_total);
    }
    return ev;
}

// Majority device label per cluster over baseline data; ties take the
// lexicographically smallest label.
inline std::map<int, std::string> majority_label_map(std::span<const int> assignments,
                                                     std::span<const std::string> labels) {
    if (assignments.size() != labels.size()) throw LengthMismatch("assignments/labels differ in length");
    std::map<int, std::map<std::string, uint64_t>> counts;
    for (size_t i = 0; i < assignments.size(); ++i) counts[assignments[i]][labels[i]] += 1;
    std::map<int, std::string> out;
    for (const auto& [cluster, by_label] : counts) {
        uint64_t best = 0;
        for (const auto& [label, c] : by_label) { // lexicographic order: ties keep the first
            if (c > best) {
                best = c;
                out[cluster] = label;
            }
        }
    }
    return out;
}

// Fraction of known-device points whose cluster maps back to their true
// label; points in unmapped clusters count as wrong.
inline double known_accuracy_post(const std::map<int, std::string>& baseline_map,
                                  std::span<const int> assignments,
                                  std::span<const std::string> truth_labels) {
    if (assignments.size() != truth_labels.size()) throw LengthMismatch("assignments/truth differ in length");
    if (assignments.empty()) throw EmptyEvaluationSet("no known-device evaluation points");
    uint64_t correct = 0;
    for (size_t i = 0; i < assignments.size(); ++i) {
        auto it = baseline_map.find(assignments[i]);
        if (it != baseline_map.end() && it->second == truth_labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(assignments.size());
}

struct EvaluationReport {
    std::string setting;                // e.g. "rq1/dbscan"
    std::optional<int> clusters;
    std::optional<double> noise_pct;    // percent, matching the table convention
    std::optional<double> nmi;
    std::optional<double> silhouette;
    std::optional<double> known_acc_post;
    std::optional<double> novel_purity;
    std::optional<double> novel_share;
    std::optional<double> update_time_s;
    std::string config_hash;
    std::string dataset_id;
    nlohmann::json detail = nlohmann::json::object();

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["setting"] = setting;
        auto put = [&j](const char* key, const auto& v) {
            if (v) j[key] = *v;
            else j[key] = nullptr;
        };
        put("clusters", clusters);
        put("noise_pct", noise_pct);
        put("nmi", nmi);
        put("silhouette", silhouette);
        put("known_acc_post", known_acc_post);
        put("novel_purity", novel_purity);
        put("novel_share", novel_share);
        put("update_time_s", update_time_s);
        j["config_hash"] = config_hash;
        j["dataset_id"] = dataset_id;
        if (!detail.empty()) j["detail"] = detail;
        return j;
    }

    // Flat CSV row for spreadsheet diffing.
    static std::string csv_header() {
        return "setting,clusters,noise_pct,nmi,silhouette,known_acc_post,novel_purity,novel_share,update_time_s\n";
    }
    std::string csv_row() const {
        auto cell = [](const auto& v) -> std::string {
            if (!v) return "";
            return fmt_g17(static_cast<double>(*v));
        };
        return setting + "," + cell(clusters) + "," + cell(noise_pct) + "," + cell(nmi) + "," +
               cell(silhouette) + "," + cell(known_acc_post) + "," + cell(novel_purity) + "," +
               cell(novel_share) + "," + cell(update_time_s) + "\n";
    }
};

} // namespace flowprofiler
