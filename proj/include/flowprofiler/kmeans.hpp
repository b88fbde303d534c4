#pragma once

// Lloyd k-means with k-means++ seeding. The batch baseline for the
// centroid-vs-density comparison; also provides the seeding used by the
// mini-batch variant.

#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "flowprofiler/dbscan.hpp"
#include "flowprofiler/distance.hpp"
#include "flowprofiler/errors.hpp"

namespace flowprofiler {

inline std::vector<Point> kmeanspp_init(std::span<const Point> points, size_t k, std::mt19937_64& rng) {
    std::vector<Point> centroids;
    centroids.reserve(k);
    std::uniform_int_distribution<size_t> first(0, points.size() - 1);
    centroids.push_back(points[first(rng)]);
    std::vector<double> d2(points.size());
    while (centroids.size() < k) {
        double total = 0;
        for (size_t i = 0; i < points.size(); ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& c : centroids) best = std::min(best, squared_distance(points[i], c));
            d2[i] = best;
            total += best;
        }
        size_t pick = 0;
        if (total > 0) {
            std::uniform_real_distribution<double> u(0.0, total);
            double r = u(rng);
            double acc = 0;
            for (size_t i = 0; i < points.size(); ++i) {
                acc += d2[i];
                if (acc >= r) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = centroids.size() % points.size(); // all mass at chosen centroids
        }
        centroids.push_back(points[pick]);
    }
    return centroids;
}

inline int nearest_centroid(const Point& p, std::span<const Point> centroids) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (size_t c = 0; c < centroids.size(); ++c) {
        double d = squared_distance(p, centroids[c]);
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(c);
        }
    }
    return best;
}

struct KmeansResult {
    ClusterAssignment assignment;
    std::vector<Point> centroids;
    double inertia = 0;
    int iterations = 0;
    std::vector<double> inertia_history;
};

inline KmeansResult kmeans(std::span<const Point> points, size_t k, uint64_t seed,
                           int max_iter = 300, double tol = 1e-6) {
    if (points.empty() || k < 1 || k > points.size()) throw InvalidArgument("bad kmeans arguments");
    require_same_dim(points);
    require_finite(points);
    const size_t n = points.size();
    const size_t d = points[0].size();

    std::mt19937_64 rng(seed);
    std::vector<Point> centroids = kmeanspp_init(points, k, rng);
    std::vector<int> labels(n, 0);

    KmeansResult res;
    for (int iter = 0; iter < max_iter; ++iter) {
        double inertia = 0;
        for (size_t i = 0; i < n; ++i) {
            labels[i] = nearest_centroid(points[i], centroids);
            inertia += squared_distance(points[i], centroids[labels[i]]);
        }
        res.inertia_history.push_back(inertia);
        res.inertia = inertia;
        res.iterations = iter + 1;

        std::vector<Point> next(k, Point(d, 0.0));
        std::vector<size_t> counts(k, 0);
        for (size_t i = 0; i < n; ++i) {
            ++counts[labels[i]];
            for (size_t j = 0; j < d; ++j) next[labels[i]][j] += points[i][j];
        }
        for (size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) {
                // Re-seed an emptied centroid at the point farthest from
                // its current assignment.
                size_t far = 0;
                double far_d = -1;
                for (size_t i = 0; i < n; ++i) {
                    double dd = squared_distance(points[i], centroids[labels[i]]);
                    if (dd > far_d) {
                        far_d = dd;
                        far = i;
                    }
                }
                next[c] = points[far];
            } else {
                for (size_t j = 0; j < d; ++j) next[c][j] /= static_cast<double>(counts[c]);
            }
        }
        double shift = 0;
        for (size_t c = 0; c < k; ++c) shift = std::max(shift, euclidean(centroids[c], next[c]));
        centroids = std::move(next);
        if (shift < tol) break;
    }

    double inertia = 0;
    for (size_t i = 0; i < n; ++i) {
        labels[i] = nearest_centroid(points[i], centroids);
        inertia += squared_distance(points[i], centroids[labels[i]]);
    }
    res.inertia = inertia;
    res.assignment = ClusterAssignment::from_labels(std::move(labels));
    res.centroids = std::move(centroids);
    return res;
}

} // namespace flowprofiler
