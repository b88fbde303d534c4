#pragma once

// Clustering-feature tree for single-pass incremental profiling. Every node
// entry carries the exact (n, ls, ss) triple of its subtree; parents are
// recomputed as the ordered sum of their children after each touch, so the
// additivity audit can demand bitwise equality.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "flowprofiler/distance.hpp"
#include "flowprofiler/errors.hpp"

namespace flowprofiler {

struct ClusteringFeature {
    uint64_t n = 0;
    Point ls;
    double ss = 0;

    static ClusteringFeature from_point(const Point& p) {
        ClusteringFeature cf;
        cf.n = 1;
        cf.ls = p;
        double s = 0;
        for (double x : p) s += x * x;
        cf.ss = s;
        return cf;
    }

    void add(const ClusteringFeature& other) {
        if (ls.empty()) ls.assign(other.ls.size(), 0.0);
        n += other.n;
        for (size_t j = 0; j < ls.size(); ++j) ls[j] += other.ls[j];
        ss += other.ss;
    }

    Point centroid() const {
        Point c(ls.size());
        for (size_t j = 0; j < ls.size(); ++j) c[j] = ls[j] / static_cast<double>(n);
        return c;
    }

    // ss/n - ||ls/n||^2 in extended precision; may round slightly negative.
    double radius2_raw() const {
        long double dot = 0;
        for (double x : ls) dot += static_cast<long double>(x) * x;
        long double nn = static_cast<long double>(n);
        return static_cast<double>(static_cast<long double>(ss) / nn - dot / (nn * nn));
    }

    double radius2() const { return std::max(0.0, radius2_raw()); }
    double radius() const { return std::sqrt(radius2()); }

    bool operator==(const ClusteringFeature&) const = default;
};

struct UpdateStats {
    uint64_t points_absorbed = 0;
    uint64_t new_subclusters = 0;
    uint64_t splits = 0;
    double elapsed = 0.0; // seconds, wall clock around the pure update
};

class CfTree {
public:
    CfTree(size_t dim, double threshold = 0.5, size_t branching_factor = 50)
        : dim_(dim), threshold_(threshold), branching_(branching_factor) {
        if (dim_ == 0) throw InvalidArgument("dimension must be positive");
        if (threshold_ < 0 || branching_ < 2) throw InvalidArgument("bad cf-tree parameters");
        root_ = std::make_unique<Node>();
    }

    CfTree(CfTree&&) = default;
    CfTree& operator=(CfTree&&) = default;

    // Returns the id of the subcluster that absorbed the point (or was
    // created for it).
    int insert(const Point& p) {
        check_point(p);
        ClusteringFeature pcf = ClusteringFeature::from_point(p);
        total_cf_.add(pcf); // arrival-order running sum, matches a direct oracle
        ++total_points_;
        auto out = insert_rec(*root_, pcf);
        if (out.sibling) {
            auto new_root = std::make_unique<Node>();
            new_root->leaf = false;
            new_root->entries.push_back(Entry{sum_entries(*root_), std::move(root_), -1});
            new_root->entries.push_back(Entry{sum_entries(*out.sibling), std::move(out.sibling), -1});
            root_ = std::move(new_root);
        }
        return out.subcluster_id;
    }

    UpdateStats insert_batch(std::span<const Point> batch) {
        if (batch.empty()) throw EmptyBatch("empty batch");
        UpdateStats stats;
        uint64_t created_before = created_, splits_before = splits_;
        auto t0 = std::chrono::steady_clock::now();
        for (const auto& p : batch) insert(p);
        auto t1 = std::chrono::steady_clock::now();
        stats.points_absorbed = batch.size();
        stats.new_subclusters = created_ - created_before;
        stats.splits = splits_ - splits_before;
        stats.elapsed = std::chrono::duration<double>(t1 - t0).count();
        return stats;
    }

    // Exact global nearest leaf centroid; read-only.
    int assign(const Point& p) const {
        check_point(p);
        int best = -1;
        double best_d = std::numeric_limits<double>::infinity();
        walk_leaves(*root_, [&](const Entry& e) {
            double d = squared_distance(p, e.cf.centroid());
            if (d < best_d) {
                best_d = d;
                best = e.subcluster_id;
            }
        });
        if (best < 0) throw EmptyModel("cf-tree has no leaves");
        return best;
    }

    struct Leaf {
        int id;
        ClusteringFeature cf;
    };

    std::vector<Leaf> leaves() const {
        std::vector<Leaf> out;
        walk_leaves(*root_, [&](const Entry& e) { out.push_back(Leaf{e.subcluster_id, e.cf}); });
        return out;
    }

    size_t n_leaves() const { return leaves().size(); }
    uint64_t total_points() const { return total_points_; }
    double threshold() const { return threshold_; }
    size_t branching_factor() const { return branching_; }
    size_t dim() const { return dim_; }
    const ClusteringFeature& root_cf() const { return total_cf_; }

    // Single-linkage agglomeration over leaf centroids. Stops at target_k
    // clusters, or when the next merge distance exceeds 2 * threshold.
    std::map<int, int> global_clusters(std::optional<size_t> target_k = std::nullopt) const {
        auto lv = leaves();
        if (lv.empty()) throw EmptyModel("cf-tree has no leaves");
        const size_t m = lv.size();
        std::vector<Point> cent(m);
        for (size_t i = 0; i < m; ++i) cent[i] = lv[i].cf.centroid();

        std::vector<int> group(m);
        for (size_t i = 0; i < m; ++i) group[i] = static_cast<int>(i);
        if (m > 1) {
            std::vector<std::vector<double>> dist(m, std::vector<double>(m, 0.0));
            for (size_t i = 0; i < m; ++i) {
                for (size_t j = i + 1; j < m; ++j) {
                    dist[i][j] = dist[j][i] = euclidean(cent[i], cent[j]);
                }
            }
            std::vector<bool> alive(m, true);
            size_t alive_count = m;
            double stop = 2.0 * threshold_;
            while (alive_count > 1) {
                if (target_k && alive_count <= *target_k) break;
                size_t bi = 0, bj = 0;
                double best = std::numeric_limits<double>::infinity();
                for (size_t i = 0; i < m; ++i) {
                    if (!alive[i]) continue;
                    for (size_t j = i + 1; j < m; ++j) {
                        if (!alive[j]) continue;
                        if (dist[i][j] < best) {
                            best = dist[i][j];
                            bi = i;
                            bj = j;
                        }
                    }
                }
                if (!target_k && best > stop) break;
                for (size_t k = 0; k < m; ++k) {
                    if (alive[k] && k != bi && k != bj) {
                        dist[bi][k] = dist[k][bi] = std::min(dist[bi][k], dist[bj][k]);
                    }
                }
                alive[bj] = false;
                --alive_count;
                for (size_t k = 0; k < m; ++k) {
                    if (group[k] == static_cast<int>(bj)) group[k] = static_cast<int>(bi);
                }
            }
        }
        // Compact labels in leaf order.
        std::map<int, int> relabel;
        std::map<int, int> out;
        for (size_t i = 0; i < m; ++i) {
            auto it = relabel.emplace(group[i], static_cast<int>(relabel.size())).first;
            out[lv[i].id] = it->second;
        }
        return out;
    }

    // Full-tree invariant check; throws Error on the first violation.
    void audit() const {
        uint64_t counted = audit_node(*root_, depth_of(*root_));
        if (counted != total_points_) throw Error("cf-tree audit: point count mismatch");
    }

    nlohmann::json snapshot(const std::string& scaler_hash = "") const {
        nlohmann::json j;
        j["format"] = "cftree-v1";
        j["dim"] = dim_;
        j["threshold"] = threshold_;
        j["branching_factor"] = branching_;
        j["scaler_hash"] = scaler_hash;
        auto arr = nlohmann::json::array();
        for (const auto& leaf : leaves()) {
            arr.push_back({{"id", leaf.id}, {"n", leaf.cf.n}, {"ls", leaf.cf.ls}, {"ss", leaf.cf.ss}});
        }
        j["leaves"] = arr;
        return j;
    }

    static CfTree from_snapshot(const nlohmann::json& j) {
        if (j.value("format", "") != "cftree-v1") throw ParseError("unknown cf-tree snapshot format");
        CfTree tree(j.at("dim").get<size_t>(), j.at("threshold").get<double>(),
                    j.at("branching_factor").get<size_t>());
        int max_id = -1;
        for (const auto& leaf : j.at("leaves")) {
            ClusteringFeature cf;
            cf.n = leaf.at("n").get<uint64_t>();
            cf.ls = leaf.at("ls").get<std::vector<double>>();
            cf.ss = leaf.at("ss").get<double>();
            if (cf.ls.size() != tree.dim_) throw ParseError("snapshot leaf dimension mismatch");
            int id = leaf.at("id").get<int>();
            tree.insert_whole_cf(cf, id);
            tree.total_points_ += cf.n;
            tree.total_cf_.add(cf);
            max_id = std::max(max_id, id);
        }
        tree.next_id_ = max_id + 1;
        return tree;
    }

private:
    struct Node;
    struct Entry {
        ClusteringFeature cf;
        std::unique_ptr<Node> child; // null in leaf nodes
        int subcluster_id = -1;      // valid in leaf nodes
    };
    struct Node {
        bool leaf = true;
        std::vector<Entry> entries;
    };

    struct InsertOutcome {
        std::unique_ptr<Node> sibling; // non-null when the node split
        int subcluster_id = -1;
    };

    void check_point(const Point& p) const {
        if (p.size() != dim_) throw DimensionMismatch("point dimension differs from tree");
        for (double x : p) {
            if (!std::isfinite(x)) throw NonFiniteInput("non-finite coordinate");
        }
    }

    static ClusteringFeature sum_entries(const Node& node) {
        ClusteringFeature acc;
        for (const auto& e : node.entries) acc.add(e.cf);
        return acc;
    }

    size_t nearest_entry(const Node& node, const Point& c) const {
        size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (size_t i = 0; i < node.entries.size(); ++i) {
            double d = squared_distance(c, node.entries[i].cf.centroid());
            if (d < best_d) {
                best_d = d;
                best = i;
            }
        }
        return best;
    }

    InsertOutcome insert_rec(Node& node, const ClusteringFeature& pcf) {
        InsertOutcome out;
        if (node.leaf) {
            if (node.entries.empty()) {
                out.subcluster_id = next_id_++;
                ++created_;
                node.entries.push_back(Entry{pcf, nullptr, out.subcluster_id});
                return out;
            }
            Point c = pcf.centroid();
            size_t idx = nearest_entry(node, c);
            ClusteringFeature merged = node.entries[idx].cf;
            merged.add(pcf);
            if (merged.radius2() <= threshold_ * threshold_) {
                node.entries[idx].cf = merged;
                out.subcluster_id = node.entries[idx].subcluster_id;
                return out;
            }
            out.subcluster_id = next_id_++;
            ++created_;
            node.entries.push_back(Entry{pcf, nullptr, out.subcluster_id});
        } else {
            size_t idx = nearest_entry(node, pcf.centroid());
            auto child_out = insert_rec(*node.entries[idx].child, pcf);
            out.subcluster_id = child_out.subcluster_id;
            node.entries[idx].cf = sum_entries(*node.entries[idx].child);
            if (child_out.sibling) {
                Entry sib{sum_entries(*child_out.sibling), std::move(child_out.sibling), -1};
                node.entries.insert(node.entries.begin() + static_cast<std::ptrdiff_t>(idx) + 1, std::move(sib));
            }
        }
        if (node.entries.size() > branching_) out.sibling = split(node);
        return out;
    }

    // Farthest-pair seeding; every entry joins the nearer seed, ties to the
    // lower-indexed one. Relative entry order is preserved on both sides.
    std::unique_ptr<Node> split(Node& node) {
        ++splits_;
        const size_t m = node.entries.size();
        std::vector<Point> cent(m);
        for (size_t i = 0; i < m; ++i) cent[i] = node.entries[i].cf.centroid();
        size_t s1 = 0, s2 = 1;
        double best = -1;
        for (size_t i = 0; i < m; ++i) {
            for (size_t j = i + 1; j < m; ++j) {
                double d = squared_distance(cent[i], cent[j]);
                if (d > best) {
                    best = d;
                    s1 = i;
                    s2 = j;
                }
            }
        }
        auto sibling = std::make_unique<Node>();
        sibling->leaf = node.leaf;
        std::vector<Entry> keep;
        for (size_t i = 0; i < m; ++i) {
            double d1 = squared_distance(cent[i], cent[s1]);
            double d2 = squared_distance(cent[i], cent[s2]);
            if (d1 <= d2) keep.push_back(std::move(node.entries[i]));
            else sibling->entries.push_back(std::move(node.entries[i]));
        }
        node.entries = std::move(keep);
        return sibling;
    }

    // Inserts a whole CF as its own subcluster (snapshot reload path).
    void insert_whole_cf(const ClusteringFeature& cf, int id) {
        Node* node = root_.get();
        std::vector<Node*> path;
        while (!node->leaf) {
            path.push_back(node);
            node = node->entries[nearest_entry(*node, cf.centroid())].child.get();
        }
        node->entries.push_back(Entry{cf, nullptr, id});
        std::unique_ptr<Node> sibling;
        if (node->entries.size() > branching_) sibling = split(*node);
        for (auto it = path.rbegin(); it != path.rend(); ++it) {
            Node* parent = *it;
            for (auto& e : parent->entries) {
                if (e.child) e.cf = sum_entries(*e.child);
            }
            if (sibling) {
                parent->entries.push_back(Entry{sum_entries(*sibling), std::move(sibling), -1});
                sibling = nullptr;
            }
            if (parent->entries.size() > branching_) sibling = split(*parent);
        }
        if (sibling) {
            auto new_root = std::make_unique<Node>();
            new_root->leaf = false;
            new_root->entries.push_back(Entry{sum_entries(*root_), std::move(root_), -1});
            new_root->entries.push_back(Entry{sum_entries(*sibling), std::move(sibling), -1});
            root_ = std::move(new_root);
        }
    }

    template <typename F>
    void walk_leaves(const Node& node, F&& fn) const {
        if (node.leaf) {
            for (const auto& e : node.entries) fn(e);
        } else {
            for (const auto& e : node.entries) walk_leaves(*e.child, fn);
        }
    }

    size_t depth_of(const Node& node) const {
        size_t d = 0;
        const Node* cur = &node;
        while (!cur->leaf) {
            cur = cur->entries.front().child.get();
            ++d;
        }
        return d;
    }

    uint64_t audit_node(const Node& node, size_t expected_depth) const {
        if (node.entries.size() > branching_) throw Error("cf-tree audit: branching factor exceeded");
        uint64_t total = 0;
        if (node.leaf) {
            if (expected_depth != 0) throw Error("cf-tree audit: leaves at uneven depth");
            for (const auto& e : node.entries) {
                if (e.child || e.subcluster_id < 0) throw Error("cf-tree audit: malformed leaf entry");
                if (e.cf.n != 1 && e.cf.radius2() > threshold_ * threshold_) {
                    throw Error("cf-tree audit: leaf radius exceeds threshold");
                }
                total += e.cf.n;
            }
        } else {
            if (node.entries.empty()) throw Error("cf-tree audit: empty internal node");
            for (const auto& e : node.entries) {
                if (!e.child) throw Error("cf-tree audit: internal entry without child");
                ClusteringFeature expect = sum_entries(*e.child);
                if (!(expect == e.cf)) throw Error("cf-tree audit: additivity violated");
                total += audit_node(*e.child, expected_depth - 1);
            }
        }
        return total;
    }

    size_t dim_;
    double threshold_;
    size_t branching_;
    std::unique_ptr<Node> root_;
    int next_id_ = 0;
    uint64_t total_points_ = 0;
    uint64_t created_ = 0;
    uint64_t splits_ = 0;
    ClusteringFeature total_cf_;
};

} // namespace flowprofiler
