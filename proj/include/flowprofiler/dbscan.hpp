#pragma once

// Density-based clustering with explicit noise labeling. Exact Euclidean
// neighborhoods (no spatial index); min_pts counts the point itself.

#include <algorithm>
#include <cstdint>
#include <deque>
#include <span>
#include <vector>

#include "flowprofiler/distance.hpp"
#include "flowprofiler/errors.hpp"

namespace flowprofiler {

struct DbscanParams {
    double eps = 0.5;
    size_t min_pts = 5;
};

struct ClusterAssignment {
    std::vector<int> labels; // -1 = noise
    int n_clusters = 0;
    double noise_fraction = 0.0;

    static ClusterAssignment from_labels(std::vector<int> labels) {
        ClusterAssignment a;
        a.labels = std::move(labels);
        std::vector<int> distinct;
        size_t noise = 0;
        for (int l : a.labels) {
            if (l < 0) ++noise;
            else distinct.push_back(l);
        }
        std::sort(distinct.begin(), distinct.end());
        distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
        a.n_clusters = static_cast<int>(distinct.size());
        a.noise_fraction = a.labels.empty() ? 0.0 : static_cast<double>(noise) / a.labels.size();
        return a;
    }
};

inline ClusterAssignment dbscan(std::span<const Point> points, const DbscanParams& params) {
    if (points.empty()) throw InvalidArgument("dbscan needs at least one point");
    if (params.eps <= 0 || params.min_pts < 1) throw InvalidArgument("bad dbscan parameters");
    require_same_dim(points);
    require_finite(points);

    const size_t n = points.size();
    const double eps2 = params.eps * params.eps;
    constexpr int kUndef = -2;
    std::vector<int> labels(n, kUndef);

    auto neighbors_of = [&](size_t i, std::vector<size_t>& out) {
        out.clear();
        for (size_t j = 0; j < n; ++j) {
            if (squared_distance(points[i], points[j]) <= eps2) out.push_back(j);
        }
    };

    std::vector<size_t> neigh, more;
    int cluster = 0;
    for (size_t i = 0; i < n; ++i) {
        if (labels[i] != kUndef) continue;
        neighbors_of(i, neigh);
        if (neigh.size() < params.min_pts) {
            labels[i] = -1;
            continue;
        }
        labels[i] = cluster;
        std::deque<size_t> frontier(neigh.begin(), neigh.end());
        while (!frontier.empty()) {
            size_t j = frontier.front();
            frontier.pop_front();
            if (labels[j] == -1) labels[j] = cluster; // border point
            if (labels[j] != kUndef) continue;
            labels[j] = cluster;
            neighbors_of(j, more);
            if (more.size() >= params.min_pts) {
                frontier.insert(frontier.end(), more.begin(), more.end());
            }
        }
        ++cluster;
    }
    return ClusterAssignment::from_labels(std::move(labels));
}

} // namespace flowprofiler
