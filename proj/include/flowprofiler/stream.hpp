#pragma once

// Common surface over the two incremental clusterers, plus the update
// timing wrapper and the from-scratch refit baseline it is compared
// against.

#include <chrono>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>

#include "flowprofiler/birch.hpp"
#include "flowprofiler/minibatch.hpp"

namespace flowprofiler {

class StreamClusterer {
public:
    virtual ~StreamClusterer() = default;
    virtual UpdateStats update(std::span<const Point> batch) = 0;
    virtual int assign(const Point& p) const = 0;
    // Subcluster id -> global cluster id, covering every subcluster.
    virtual std::map<int, int> global_map(std::optional<size_t> target_k = std::nullopt) const = 0;
    virtual size_t n_subclusters() const = 0;
    virtual std::string name() const = 0;
    virtual std::unique_ptr<StreamClusterer> fresh() const = 0;
};

class BirchClusterer final : public StreamClusterer {
public:
    BirchClusterer(size_t dim, double threshold, size_t branching)
        : dim_(dim), threshold_(threshold), branching_(branching), tree_(dim, threshold, branching) {}

    UpdateStats update(std::span<const Point> batch) override { return tree_.insert_batch(batch); }
    int assign(const Point& p) const override { return tree_.assign(p); }
    std::map<int, int> global_map(std::optional<size_t> target_k = std::nullopt) const override {
        return tree_.global_clusters(target_k);
    }
    size_t n_subclusters() const override { return tree_.n_leaves(); }
    std::string name() const override { return "birch"; }
    std::unique_ptr<StreamClusterer> fresh() const override {
        return std::make_unique<BirchClusterer>(dim_, threshold_, branching_);
    }

    CfTree& tree() { return tree_; }
    const CfTree& tree() const { return tree_; }

private:
    size_t dim_;
    double threshold_;
    size_t branching_;
    CfTree tree_;
};

class MiniBatchClusterer final : public StreamClusterer {
public:
    MiniBatchClusterer(size_t k, uint64_t seed) : k_(k), seed_(seed), model_(k, seed) {}

    UpdateStats update(std::span<const Point> batch) override { return model_.update(batch); }
    int assign(const Point& p) const override { return model_.assign(p); }
    std::map<int, int> global_map(std::optional<size_t> = std::nullopt) const override {
        std::map<int, int> m; // centroids are already the global clusters
        for (size_t c = 0; c < model_.n_centroids(); ++c) m[static_cast<int>(c)] = static_cast<int>(c);
        return m;
    }
    size_t n_subclusters() const override { return model_.n_centroids(); }
    std::string name() const override { return "minibatch"; }
    std::unique_ptr<StreamClusterer> fresh() const override {
        return std::make_unique<MiniBatchClusterer>(k_, seed_);
    }

    MiniBatchKMeans& model() { return model_; }

private:
    size_t k_;
    uint64_t seed_;
    MiniBatchKMeans model_;
};

inline UpdateStats timed_update(StreamClusterer& model, std::span<const Point> batch) {
    auto t0 = std::chrono::steady_clock::now();
    UpdateStats stats = model.update(batch);
    auto t1 = std::chrono::steady_clock::now();
    stats.elapsed = std::chrono::duration<double>(t1 - t0).count();
    return stats;
}

struct RefitResult {
    std::unique_ptr<StreamClusterer> model;
    double elapsed = 0.0;
};

// From-scratch fit over the full accumulated set, in chunks of
// refit_chunk, timed as one unit.
inline RefitResult refit_baseline(const StreamClusterer& prototype, std::span<const Point> all_points,
                                  size_t refit_chunk = 1024) {
    if (all_points.empty()) throw EmptyBatch("refit needs at least one point");
    RefitResult res;
    res.model = prototype.fresh();
    auto t0 = std::chrono::steady_clock::now();
    for (size_t off = 0; off < all_points.size(); off += refit_chunk) {
        size_t len = std::min(refit_chunk, all_points.size() - off);
        res.model->update(all_points.subspan(off, len));
    }
    auto t1 = std::chrono::steady_clock::now();
    res.elapsed = std::chrono::duration<double>(t1 - t0).count();
    return res;
}

} // namespace flowprofiler
