#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "flowprofiler/dbscan.hpp"
#include "flowprofiler/kmeans.hpp"
#include "flowprofiler/metrics.hpp"
#include "flowprofiler/tuning.hpp"
#include "support/oracles.hpp"

using namespace flowprofiler;

namespace {

std::vector<Point> pts1d(std::initializer_list<double> xs) {
    std::vector<Point> out;
    for (double x : xs) out.push_back(Point{x});
    return out;
}

} // namespace

TEST_CASE("dbscan separates a dense pair from an outlier") {
    auto pts = pts1d({0.0, 0.5, 10.0});
    auto res = dbscan(pts, DbscanParams{1.0, 2});
    REQUIRE(res.labels == std::vector<int>{0, 0, -1});
    REQUIRE(res.n_clusters == 1);
    REQUIRE(res.noise_fraction == Catch::Approx(1.0 / 3.0));
}

TEST_CASE("dbscan on identical points forms one cluster") {
    std::vector<Point> pts(8, Point{2.0, 2.0});
    auto res = dbscan(pts, DbscanParams{0.1, 8});
    REQUIRE(res.n_clusters == 1);
    REQUIRE(res.noise_fraction == 0.0);
}

TEST_CASE("dbscan with eps below every pairwise distance is all noise") {
    auto pts = pts1d({0.0, 5.0, 11.0, 20.0});
    auto res = dbscan(pts, DbscanParams{0.5, 2});
    REQUIRE(res.n_clusters == 0);
    REQUIRE(res.noise_fraction == 1.0);
}

TEST_CASE("dbscan rejects non-finite input") {
    std::vector<Point> pts = {{0.0}, {std::numeric_limits<double>::quiet_NaN()}};
    REQUIRE_THROWS_AS(dbscan(pts, DbscanParams{1.0, 1}), NonFiniteInput);
}

TEST_CASE("dbscan with min_pts 1 never labels noise") {
    std::mt19937_64 rng(7);
    auto pts = oracles::random_points(60, 3, rng);
    auto res = dbscan(pts, DbscanParams{0.3, 1});
    for (int l : res.labels) REQUIRE(l >= 0);
}

TEST_CASE("dbscan matches the naive reference on random instances") {
    std::mt19937_64 rng(1234);
    for (int trial = 0; trial < 60; ++trial) {
        std::uniform_int_distribution<size_t> nd(5, 160), dd(1, 8), md(1, 8);
        size_t n = nd(rng), d = dd(rng);
        std::vector<Point> pts;
        if (trial % 2 == 0) {
            pts = oracles::random_points(n, d, rng, -5, 5);
        } else {
            auto [bp, bl] = oracles::blobs(3, n / 3 + 1, d, 0.4, 5.0, rng, n / 5);
            pts = bp;
        }
        std::uniform_real_distribution<double> ed(0.2, 4.0);
        DbscanParams params{ed(rng), md(rng)};
        auto got = dbscan(pts, params);
        auto want = oracles::oracle_dbscan(pts, params.eps, params.min_pts);
        INFO("trial " << trial << " n=" << pts.size() << " d=" << d << " eps=" << params.eps
                      << " min_pts=" << params.min_pts);
        REQUIRE(oracles::dbscan_equivalent(pts, params.eps, params.min_pts, got.labels, want.labels, want.core));
    }
}

TEST_CASE("dbscan is input-order invariant up to relabeling") {
    std::mt19937_64 rng(99);
    auto [pts, truth] = oracles::blobs(4, 40, 4, 0.5, 6.0, rng, 30);
    DbscanParams params{1.2, 4};
    auto base = dbscan(pts, params);
    auto ref = oracles::oracle_dbscan(pts, params.eps, params.min_pts);

    std::vector<size_t> perm(pts.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<Point> shuffled;
    for (size_t i : perm) shuffled.push_back(pts[i]);
    auto shuffled_res = dbscan(shuffled, params);
    // Map the shuffled labels back into original order, then compare
    // against the reference partition.
    std::vector<int> unshuffled(pts.size());
    for (size_t k = 0; k < perm.size(); ++k) unshuffled[perm[k]] = shuffled_res.labels[k];
    REQUIRE(oracles::dbscan_equivalent(pts, params.eps, params.min_pts, unshuffled, ref.labels, ref.core));
    REQUIRE(shuffled_res.n_clusters == base.n_clusters);
}

TEST_CASE("kmeans with k equal to n gives zero inertia") {
    std::mt19937_64 rng(5);
    auto pts = oracles::random_points(12, 3, rng);
    auto res = kmeans(pts, pts.size(), 42);
    REQUIRE(res.inertia == Catch::Approx(0.0).margin(1e-12));
    std::set<int> labels(res.assignment.labels.begin(), res.assignment.labels.end());
    REQUIRE(labels.size() == pts.size());
}

TEST_CASE("kmeans recovers two well-separated pairs") {
    auto pts = pts1d({0.0, 0.1, 10.0, 10.1});
    auto res = kmeans(pts, 2, 7);
    REQUIRE(res.assignment.labels[0] == res.assignment.labels[1]);
    REQUIRE(res.assignment.labels[2] == res.assignment.labels[3]);
    REQUIRE(res.assignment.labels[0] != res.assignment.labels[2]);
    // Exhaustive check: no 2-partition has lower within-cluster SSE.
    double best = std::numeric_limits<double>::infinity();
    for (int mask = 1; mask < 15; ++mask) {
        std::vector<double> a, b;
        for (int i = 0; i < 4; ++i) ((mask >> i) & 1 ? a : b).push_back(pts[i][0]);
        if (a.empty() || b.empty()) continue;
        auto sse = [](const std::vector<double>& v) {
            double m = 0;
            for (double x : v) m += x;
            m /= static_cast<double>(v.size());
            double s = 0;
            for (double x : v) s += (x - m) * (x - m);
            return s;
        };
        best = std::min(best, sse(a) + sse(b));
    }
    REQUIRE(res.inertia == Catch::Approx(best).margin(1e-9));
}

TEST_CASE("kmeans is deterministic for a fixed seed") {
    std::mt19937_64 rng(21);
    auto pts = oracles::random_points(80, 5, rng);
    auto a = kmeans(pts, 6, 1717);
    auto b = kmeans(pts, 6, 1717);
    REQUIRE(a.assignment.labels == b.assignment.labels);
    REQUIRE(a.inertia == b.inertia);
}

TEST_CASE("kmeans inertia is non-increasing across iterations") {
    std::mt19937_64 rng(31);
    auto [pts, truth] = oracles::blobs(4, 50, 4, 0.8, 6.0, rng);
    auto res = kmeans(pts, 4, 3);
    for (size_t i = 1; i < res.inertia_history.size(); ++i) {
        REQUIRE(res.inertia_history[i] <= res.inertia_history[i - 1] + 1e-9);
    }
}

TEST_CASE("k-distance profile on tiny fixtures") {
    std::vector<Point> same = {{1.0, 1.0}, {1.0, 1.0}};
    REQUIRE(k_distance_profile(same, 1) == std::vector<double>{0.0, 0.0});

    auto grid = pts1d({0, 1, 2, 3, 4});
    auto prof = k_distance_profile(grid, 1);
    for (double v : prof) REQUIRE(v == Catch::Approx(1.0));
}

TEST_CASE("k-distance profile is permutation invariant") {
    std::mt19937_64 rng(11);
    auto pts = oracles::random_points(50, 4, rng);
    auto a = k_distance_profile(pts, 3);
    std::shuffle(pts.begin(), pts.end(), rng);
    auto b = k_distance_profile(pts, 3);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) REQUIRE(a[i] == Catch::Approx(b[i]).margin(1e-12));
}

TEST_CASE("grid search with a single cell returns it") {
    std::mt19937_64 rng(3);
    auto [pts, truth] = oracles::blobs(2, 30, 3, 0.3, 5.0, rng);
    std::vector<DbscanParams> grid = {{1.0, 3}};
    auto res = grid_search(pts, truth, grid);
    REQUIRE(res.best.has_value());
    REQUIRE(res.best->eps == 1.0);
    REQUIRE(res.table.size() == 1);
}

TEST_CASE("grid search recovers three synthetic blobs with full score") {
    std::mt19937_64 rng(8);
    auto [pts, truth] = oracles::blobs(3, 60, 4, 0.25, 8.0, rng);
    auto grid = default_grid(pts);
    REQUIRE_FALSE(grid.empty());
    auto res = grid_search(pts, truth, grid);
    REQUIRE(res.best.has_value());
    const auto& best = res.table[*res.best_index];
    REQUIRE(best.nmi == Catch::Approx(1.0));
    REQUIRE(best.n_clusters == 3);
}

TEST_CASE("grid search ranking agrees with a re-sort of the table") {
    std::mt19937_64 rng(77);
    auto [pts, truth] = oracles::blobs(3, 40, 3, 0.5, 6.0, rng, 25);
    auto grid = default_grid(pts);
    auto res = grid_search(pts, truth, grid);
    REQUIRE(res.best.has_value());
    std::vector<GridCell> eligible;
    for (const auto& c : res.table) {
        if (c.n_clusters >= 2) eligible.push_back(c);
    }
    std::stable_sort(eligible.begin(), eligible.end(), grid_cell_better);
    REQUIRE(eligible.front().params.eps == res.best->eps);
    REQUIRE(eligible.front().params.min_pts == res.best->min_pts);
}

TEST_CASE("grid search reports scores even when every cell degenerates") {
    std::vector<Point> pts(20, Point{0.0, 0.0}); // one tight clump: never 2 clusters
    std::vector<int> truth(20, 0);
    std::vector<DbscanParams> grid = {{0.5, 3}, {1.0, 5}};
    auto res = grid_search(pts, truth, grid);
    REQUIRE_FALSE(res.best.has_value());
    REQUIRE(res.table.size() == 2);
}

TEST_CASE("nmi on the contract fixtures") {
    std::vector<int> a = {0, 0, 1, 1};
    REQUIRE(nmi(a, std::vector<int>{1, 1, 0, 0}) == Catch::Approx(1.0));
    REQUIRE(nmi(a, std::vector<int>{0, 0, 0, 0}) == Catch::Approx(0.0));
    std::vector<int> b = {0, 1, 1, 1};
    REQUIRE(nmi(a, b) == Catch::Approx(oracles::oracle_nmi(a, b)).margin(1e-12));
    REQUIRE(nmi(std::vector<int>{2, 2, 2}, std::vector<int>{5, 5, 5}) == Catch::Approx(1.0));
    REQUIRE_THROWS_AS(nmi(a, std::vector<int>{0, 1}), LengthMismatch);
}

TEST_CASE("nmi properties: identity, symmetry, relabeling") {
    std::mt19937_64 rng(15);
    std::uniform_int_distribution<int> lab(0, 4);
    for (int trial = 0; trial < 40; ++trial) {
        std::vector<int> a(50), b(50);
        for (auto& x : a) x = lab(rng);
        for (auto& x : b) x = lab(rng);
        REQUIRE(nmi(a, a) == Catch::Approx(1.0));
        REQUIRE(nmi(a, b) == Catch::Approx(nmi(b, a)).margin(1e-12));
        std::vector<int> relabeled(b.size());
        for (size_t i = 0; i < b.size(); ++i) relabeled[i] = 7 - b[i]; // bijection
        REQUIRE(nmi(a, relabeled) == Catch::Approx(nmi(a, b)).margin(1e-12));
        REQUIRE(nmi(a, b) == Catch::Approx(oracles::oracle_nmi(a, b)).margin(1e-12));
    }
}

TEST_CASE("silhouette on two tight far pairs is 1") {
    std::vector<Point> pts = {{0.0}, {0.0}, {10.0}, {10.0}};
    std::vector<int> labels = {0, 0, 1, 1};
    REQUIRE(silhouette(pts, labels) == Catch::Approx(1.0));
}

TEST_CASE("silhouette handles a singleton cluster via the zero rule") {
    std::vector<Point> pts = {{0.0}, {0.1}, {0.2}, {9.0}};
    std::vector<int> labels = {0, 0, 0, 1};
    double s = silhouette(pts, labels);
    REQUIRE(std::isfinite(s));
    REQUIRE(s <= 1.0);
}

TEST_CASE("silhouette requires two clusters after noise filtering") {
    std::vector<Point> pts = {{0.0}, {0.1}, {5.0}};
    std::vector<int> labels = {0, 0, -1};
    REQUIRE_THROWS_AS(silhouette(pts, labels), SingleCluster);
}

TEST_CASE("silhouette matches the direct implementation") {
    std::mt19937_64 rng(123);
    std::uniform_int_distribution<int> lab(-1, 3);
    for (int trial = 0; trial < 40; ++trial) {
        std::uniform_int_distribution<size_t> nd(10, 120);
        auto pts = oracles::random_points(nd(rng), 4, rng);
        std::vector<int> labels(pts.size());
        for (auto& l : labels) l = lab(rng);
        std::set<int> distinct;
        for (int l : labels) {
            if (l >= 0) distinct.insert(l);
        }
        if (distinct.size() < 2) continue;
        REQUIRE(silhouette(pts, labels) == Catch::Approx(oracles::oracle_silhouette(pts, labels)).margin(1e-9));
    }
}

TEST_CASE("sampled silhouette is deterministic") {
    std::mt19937_64 rng(9);
    auto [pts, labels] = oracles::blobs(3, 2200, 3, 0.5, 6.0, rng);
    SilhouetteOptions opts{5000, 101};
    double a = silhouette(pts, labels, opts);
    double b = silhouette(pts, labels, opts);
    REQUIRE(a == b);
}

TEST_CASE("novelty purity and share on the worked fixture") {
    // c0: 8 novel / 2 known (valid at 0.8); c1: 5 / 5 (invalid); N_total 20.
    std::vector<int> assign;
    std::vector<bool> is_novel;
    for (int i = 0; i < 8; ++i) { assign.push_back(0); is_novel.push_back(true); }
    for (int i = 0; i < 2; ++i) { assign.push_back(0); is_novel.push_back(false); }
    for (int i = 0; i < 5; ++i) { assign.push_back(1); is_novel.push_back(true); }
    for (int i = 0; i < 5; ++i) { assign.push_back(1); is_novel.push_back(false); }
    auto ev = novelty_eval(assign, is_novel, 0.8, 20);
    REQUIRE(ev.purity == Catch::Approx(0.8));
    REQUIRE(ev.share == Catch::Approx(0.4));
    REQUIRE(ev.valid == std::set<int>{0});
}

TEST_CASE("novelty eval: perfect isolation and empty valid set") {
    std::vector<int> assign = {0, 0, 1, 1};
    std::vector<bool> all_novel = {true, true, true, true};
    auto perfect = novelty_eval(assign, all_novel, 0.8, 4);
    REQUIRE(perfect.purity == Catch::Approx(1.0));
    REQUIRE(perfect.share == Catch::Approx(1.0));

    std::vector<bool> none_novel = {false, false, false, false};
    auto empty = novelty_eval(assign, none_novel, 0.8, 4);
    REQUIRE(empty.purity == 0.0);
    REQUIRE(empty.share == 0.0);
    REQUIRE(empty.valid.empty());
}

TEST_CASE("novelty eval matches the direct formulas on random count tables") {
    std::mt19937_64 rng(55);
    std::uniform_int_distribution<int> cnt(0, 30);
    std::uniform_real_distribution<double> th(0.3, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        std::uniform_int_distribution<int> ncd(1, 8);
        int nc = ncd(rng);
        std::vector<oracles::CountRow> rows;
        std::vector<int> assign;
        std::vector<bool> is_novel;
        uint64_t total_novel = 0;
        for (int c = 0; c < nc; ++c) {
            oracles::CountRow r{static_cast<uint64_t>(cnt(rng)), static_cast<uint64_t>(cnt(rng))};
            rows.push_back(r);
            for (uint64_t i = 0; i < r.novel; ++i) { assign.push_back(c); is_novel.push_back(true); }
            for (uint64_t i = 0; i < r.known; ++i) { assign.push_back(c); is_novel.push_back(false); }
            total_novel += r.novel;
        }
        uint64_t n_total = total_novel + 5; // some novel samples never clustered
        if (assign.empty()) continue;
        double threshold = th(rng);
        auto ev = novelty_eval(assign, is_novel, threshold, n_total);
        auto [p, s] = oracles::oracle_purity_share(rows, threshold, n_total);
        REQUIRE(ev.purity == Catch::Approx(p).margin(1e-12));
        REQUIRE(ev.share == Catch::Approx(s).margin(1e-12));
    }
}

TEST_CASE("novelty purity is scale invariant; share scales with counts") {
    std::vector<int> assign;
    std::vector<bool> is_novel;
    auto push = [&](int c, int novel, int known) {
        for (int i = 0; i < novel; ++i) { assign.push_back(c); is_novel.push_back(true); }
        for (int i = 0; i < known; ++i) { assign.push_back(c); is_novel.push_back(false); }
    };
    push(0, 9, 1);
    push(1, 17, 3);
    auto ev = novelty_eval(assign, is_novel, 0.8, 100);

    std::vector<int> assign2;
    std::vector<bool> novel2;
    auto push2 = [&](int c, int novel, int known) {
        for (int i = 0; i < novel; ++i) { assign2.push_back(c); novel2.push_back(true); }
        for (int i = 0; i < known; ++i) { assign2.push_back(c); novel2.push_back(false); }
    };
    push2(0, 18, 2); // every count doubled
    push2(1, 34, 6);
    auto ev2 = novelty_eval(assign2, novel2, 0.8, 100);
    REQUIRE(ev2.purity == Catch::Approx(ev.purity).margin(1e-12));
    REQUIRE(ev2.share == Catch::Approx(2.0 * ev.share).margin(1e-12));
}

TEST_CASE("raising the purity threshold never increases share") {
    std::mt19937_64 rng(66);
    std::uniform_int_distribution<int> cnt(0, 20);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<int> assign;
        std::vector<bool> is_novel;
        for (int c = 0; c < 6; ++c) {
            int nv = cnt(rng), kn = cnt(rng);
            for (int i = 0; i < nv; ++i) { assign.push_back(c); is_novel.push_back(true); }
            for (int i = 0; i < kn; ++i) { assign.push_back(c); is_novel.push_back(false); }
        }
        if (assign.empty()) continue;
        double prev = 1.1;
        double last_share = std::numeric_limits<double>::infinity();
        for (double t : {0.2, 0.4, 0.6, 0.8, 1.0}) {
            auto ev = novelty_eval(assign, is_novel, t, 200);
            REQUIRE(ev.share <= last_share + 1e-12);
            last_share = ev.share;
            prev = t;
        }
        (void)prev;
    }
}

TEST_CASE("known accuracy on the contract fixtures") {
    std::map<int, std::string> map = {{0, "cam"}, {1, "plug"}};
    std::vector<int> assign = {0, 0, 1, 1};
    std::vector<std::string> truth = {"cam", "cam", "plug", "plug"};
    REQUIRE(known_accuracy_post(map, assign, truth) == Catch::Approx(1.0));

    std::vector<int> unmapped = {7, 8, 9, 9};
    REQUIRE(known_accuracy_post(map, unmapped, truth) == Catch::Approx(0.0));

    // 2 clusters / 2 devices, hand-counted mixed case.
    std::vector<int> mixed = {0, 1, 1, 0, 0};
    std::vector<std::string> mixed_truth = {"cam", "plug", "cam", "cam", "plug"};
    // correct: i0 (cam->cam), i1 (plug->plug), i3 (cam->cam) = 3 of 5
    REQUIRE(known_accuracy_post(map, mixed, mixed_truth) == Catch::Approx(0.6));

    REQUIRE_THROWS_AS(known_accuracy_post(map, std::vector<int>{}, std::vector<std::string>{}),
                      EmptyEvaluationSet);
}

TEST_CASE("majority label map breaks ties lexicographically") {
    std::vector<int> assign = {0, 0, 1, 1};
    std::vector<std::string> labels = {"b", "a", "x", "x"};
    auto m = majority_label_map(assign, labels);
    REQUIRE(m.at(0) == "a");
    REQUIRE(m.at(1) == "x");
}
