#pragma once

// eps selection via k-distance profiles and the NMI-first grid search over
// DBSCAN parameters.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <span>
#include <vector>

#include "flowprofiler/dbscan.hpp"
#include "flowprofiler/distance.hpp"
#include "flowprofiler/errors.hpp"
#include "flowprofiler/metrics.hpp"
#include "flowprofiler/util.hpp"

namespace flowprofiler {

// Distance of each point to its k-th nearest neighbor (self excluded),
// sorted descending; the knee of this curve suggests eps.
inline std::vector<double> k_distance_profile(std::span<const Point> points, size_t k) {
    if (points.empty() || k >= points.size()) throw InvalidArgument("k must be below the point count");
    require_same_dim(points);
    require_finite(points);
    std::vector<double> out;
    out.reserve(points.size());
    std::vector<double> d;
    for (size_t i = 0; i < points.size(); ++i) {
        d.clear();
        for (size_t j = 0; j < points.size(); ++j) {
            if (j != i) d.push_back(squared_distance(points[i], points[j]));
        }
        std::nth_element(d.begin(), d.begin() + (k - 1), d.end());
        out.push_back(std::sqrt(d[k - 1]));
    }
    std::sort(out.begin(), out.end(), std::greater<>());
    return out;
}

// Geometric knee: the sample farthest from the chord between the first and
// last point of the descending curve.
inline double knee_of(const std::vector<double>& descending) {
    if (descending.empty()) throw InvalidArgument("empty profile");
    if (descending.size() < 3) return descending.back();
    double x0 = 0, y0 = descending.front();
    double x1 = static_cast<double>(descending.size() - 1), y1 = descending.back();
    double dx = x1 - x0, dy = y1 - y0;
    double norm = std::sqrt(dx * dx + dy * dy);
    if (norm == 0) return descending.back();
    size_t best = descending.size() - 1;
    double best_dist = -1;
    for (size_t i = 0; i < descending.size(); ++i) {
        double px = static_cast<double>(i) - x0;
        double py = descending[i] - y0;
        double dist = std::abs(px * dy - py * dx) / norm;
        if (dist > best_dist) {
            best_dist = dist;
            best = i;
        }
    }
    return descending[best];
}

// eps candidates at {0.5, 1, 2} times the k-distance knee for each
// min_pts in {3, 5, 10, 20} (k = min_pts - 1).
inline std::vector<DbscanParams> default_grid(std::span<const Point> points) {
    std::vector<DbscanParams> grid;
    for (size_t min_pts : {3u, 5u, 10u, 20u}) {
        if (min_pts > points.size()) continue;
        double knee = knee_of(k_distance_profile(points, min_pts - 1));
        for (double scale : {0.5, 1.0, 2.0}) {
            double eps = knee * scale;
            if (eps > 0) grid.push_back(DbscanParams{eps, min_pts});
        }
    }
    return grid;
}

struct GridCell {
    DbscanParams params;
    double nmi = 0.0;
    std::optional<double> silhouette; // absent when < 2 clusters survive
    double noise_fraction = 0.0;
    int n_clusters = 0;
};

struct GridSearchResult {
    std::optional<DbscanParams> best; // absent when every cell degenerated
    std::optional<size_t> best_index;
    std::vector<GridCell> table;
};

// Better cell: higher NMI, then higher silhouette, then lower noise.
inline bool grid_cell_better(const GridCell& a, const GridCell& b) {
    if (a.nmi != b.nmi) return a.nmi > b.nmi;
    double sa = a.silhouette.value_or(-2.0), sb = b.silhouette.value_or(-2.0);
    if (sa != sb) return sa > sb;
    return a.noise_fraction < b.noise_fraction;
}

// NMI is computed against ground truth after filtering noise points; cells
// with fewer than two surviving clusters are reported but not eligible.
inline GridSearchResult grid_search(std::span<const Point> points,
                                    std::span<const int> truth_labels,
                                    std::span<const DbscanParams> grid) {
    if (grid.empty()) throw InvalidArgument("empty parameter grid");
    if (points.size() != truth_labels.size()) throw LengthMismatch("points/labels differ in length");

    GridSearchResult res;
    for (const auto& params : grid) {
        auto assignment = dbscan(points, params);
        GridCell cell;
        cell.params = params;
        cell.noise_fraction = assignment.noise_fraction;
        cell.n_clusters = assignment.n_clusters;

        std::vector<int> kept_pred, kept_truth;
        std::vector<Point> kept_points;
        for (size_t i = 0; i < points.size(); ++i) {
            if (assignment.labels[i] >= 0) {
                kept_pred.push_back(assignment.labels[i]);
                kept_truth.push_back(truth_labels[i]);
                kept_points.push_back(points[i]);
            }
        }
        if (!kept_pred.empty()) cell.nmi = nmi(kept_pred, kept_truth);
        if (cell.n_clusters >= 2) {
            cell.silhouette = silhouette(kept_points, kept_pred);
        }
        res.table.push_back(cell);
    }

    for (size_t i = 0; i < res.table.size(); ++i) {
        if (res.table[i].n_clusters < 2) continue;
        if (!res.best_index || grid_cell_better(res.table[i], res.table[*res.best_index])) {
            res.best_index = i;
        }
    }
    if (res.best_index) res.best = res.table[*res.best_index].params;
    return res;
}

inline void write_score_table_csv(const std::filesystem::path& path, const std::vector<GridCell>& table) {
    std::ofstream out(path);
    if (!out) throw IoFailure("cannot write score table: " + path.string());
    out << "eps,min_pts,nmi,silhouette,noise_pct,n_clusters\n";
    for (const auto& c : table) {
        out << fmt_g17(c.params.eps) << ',' << c.params.min_pts << ',' << fmt_g17(c.nmi) << ','
            << (c.silhouette ? fmt_g17(*c.silhouette) : "nan") << ','
            << fmt_g17(c.noise_fraction * 100.0) << ',' << c.n_clusters << '\n';
    }
}

} // namespace flowprofiler
