#pragma once

// Mini-batch k-means: k-means++ on the first batch, then per-centroid
// 1/count learning-rate updates. Assignments are frozen against the
// centroids seen at the start of each batch.

#include <chrono>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "flowprofiler/birch.hpp" // UpdateStats
#include "flowprofiler/distance.hpp"
#include "flowprofiler/errors.hpp"
#include "flowprofiler/kmeans.hpp"

namespace flowprofiler {

class MiniBatchKMeans {
public:
    MiniBatchKMeans(size_t k, uint64_t seed) : k_(k), rng_(seed) {
        if (k_ < 1) throw InvalidArgument("k must be at least 1");
    }

    // Test seam: start from explicit centroids with zero counts.
    MiniBatchKMeans(std::vector<Point> centroids, uint64_t seed)
        : k_(centroids.size()), rng_(seed), centroids_(std::move(centroids)), counts_(k_, 0) {}

    bool initialized() const { return !centroids_.empty(); }
    const std::vector<Point>& centroids() const { return centroids_; }
    const std::vector<uint64_t>& counts() const { return counts_; }

    UpdateStats update(std::span<const Point> batch) {
        if (batch.empty()) throw EmptyBatch("empty batch");
        require_same_dim(batch);
        require_finite(batch);
        UpdateStats stats;
        stats.points_absorbed = batch.size();
        auto t0 = std::chrono::steady_clock::now();
        if (!initialized()) {
            size_t k_eff = std::min(k_, batch.size());
            centroids_ = kmeanspp_init(batch, k_eff, rng_);
            counts_.assign(k_eff, 0);
            stats.new_subclusters = k_eff;
        }
        std::vector<int> assigned(batch.size());
        for (size_t i = 0; i < batch.size(); ++i) assigned[i] = nearest_centroid(batch[i], centroids_);
        for (size_t i = 0; i < batch.size(); ++i) {
            int c = assigned[i];
            ++counts_[c];
            double eta = 1.0 / static_cast<double>(counts_[c]);
            Point& cent = centroids_[c];
            for (size_t j = 0; j < cent.size(); ++j) cent[j] += eta * (batch[i][j] - cent[j]);
        }
        auto t1 = std::chrono::steady_clock::now();
        stats.elapsed = std::chrono::duration<double>(t1 - t0).count();
        return stats;
    }

    int assign(const Point& p) const {
        if (!initialized()) throw EmptyModel("mini-batch model not initialized");
        return nearest_centroid(p, centroids_);
    }

    size_t n_centroids() const { return centroids_.size(); }

private:
    size_t k_;
    std::mt19937_64 rng_;
    std::vector<Point> centroids_;
    std::vector<uint64_t> counts_;
};

} // namespace flowprofiler
