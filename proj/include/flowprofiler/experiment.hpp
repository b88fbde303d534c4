#pragma once

// End-to-end orchestration of the two experiments: static baseline
// profiling (rq1) and incremental adaptation with novelty scoring (rq2).
// Plans come from a declarative config; data comes from capture files or
// from an inline synthetic-corpus spec rendered to pcap first.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "flowprofiler/config.hpp"
#include "flowprofiler/dbscan.hpp"
#include "flowprofiler/errors.hpp"
#include "flowprofiler/features.hpp"
#include "flowprofiler/metrics.hpp"
#include "flowprofiler/pca.hpp"
#include "flowprofiler/stream.hpp"
#include "flowprofiler/synth.hpp"
#include "flowprofiler/tuning.hpp"
#include "flowprofiler/util.hpp"

namespace flowprofiler {

enum class ClustererKind { dbscan, birch, minibatch };

inline ClustererKind parse_clusterer(const std::string& s) {
    if (s == "dbscan") return ClustererKind::dbscan;
    if (s == "birch") return ClustererKind::birch;
    if (s == "minibatch") return ClustererKind::minibatch;
    throw ConfigError("unknown clusterer `" + s + "` (expected dbscan|birch|minibatch)");
}

inline std::string clusterer_name(ClustererKind k) {
    switch (k) {
        case ClustererKind::dbscan: return "dbscan";
        case ClustererKind::birch: return "birch";
        default: return "minibatch";
    }
}

struct HoldoutDevice {
    MacAddress mac;
    NoveltyTier tier = NoveltyTier::high;
};

struct SynthCorpusSpec {
    bool enabled = false;
    std::string preset = "stock5";
    size_t background = 6;
    double background_flows_per_hour = 170.0;
    std::optional<NoveltyTier> holdout;
    double duration = 8100.0;
    double baseline_fraction = 0.6;
    uint64_t seed = 7;

    std::string fingerprint() const {
        std::ostringstream os;
        os << preset << ";" << background << ";" << fmt_g17(background_flows_per_hour) << ";"
           << (holdout ? tier_name(*holdout) : "none") << ";" << fmt_g17(duration) << ";"
           << fmt_g17(baseline_fraction) << ";" << seed;
        return os.str();
    }
};

struct ExperimentPlan {
    std::vector<std::filesystem::path> baseline_captures;
    std::vector<std::filesystem::path> stream_captures;
    std::filesystem::path labels_csv;
    DeviceInventory inventory;
    std::vector<HoldoutDevice> holdout;

    ClustererKind clusterer = ClustererKind::dbscan;
    bool auto_tune = true;
    DbscanParams dbscan_params{0.5, 5};
    double birch_threshold = 0.5;
    size_t birch_branching = 50;
    std::optional<size_t> global_k;
    size_t minibatch_k = 0; // 0: resolved to the known-device count

    FlowAssembler::Config flow;
    std::string scale_mode = "zscore"; // zscore | none
    double purity_threshold = 0.8;
    size_t batch_size = 256;
    bool measure_refit = false;
    uint64_t seed = 42;
    std::string dataset_id;
    std::filesystem::path cache_dir = ".flowcache";
    std::filesystem::path out_root = "runs";
    std::string config_hash;

    std::set<MacAddress> holdout_macs() const {
        std::set<MacAddress> s;
        for (const auto& h : holdout) s.insert(h.mac);
        return s;
    }
    std::set<MacAddress> known_macs() const {
        auto all = inventory.macs();
        for (const auto& h : holdout) all.erase(h.mac);
        return all;
    }
};

// ---- synthetic corpus rendering -------------------------------------------

struct SynthCorpusFiles {
    std::filesystem::path baseline_pcap;
    std::filesystem::path stream_pcap;
    std::filesystem::path labels_csv;
    std::optional<MacAddress> holdout_mac;
};

// Renders the spec to (baseline.pcap, stream.pcap, labels.csv) under dir.
// Baseline window carries stock + background devices; the holdout device
// only ever appears in the stream window. A baseline_fraction of 1 makes a
// baseline-only corpus (no stream capture, no holdout allowed).
inline SynthCorpusFiles build_synth_corpus(const SynthCorpusSpec& spec, const std::filesystem::path& dir) {
    if (spec.preset != "stock5") throw ConfigError("unknown synth preset `" + spec.preset + "`");
    bool with_stream = spec.baseline_fraction < 1.0;
    if (spec.holdout && !with_stream) {
        throw ConfigError("a holdout device needs a stream window (baseline_fraction < 1)");
    }
    std::filesystem::create_directories(dir);

    std::vector<DeviceArchetype> known = stock_archetypes();
    auto bg = background_archetypes(spec.background, spec.background_flows_per_hour);
    known.insert(known.end(), bg.begin(), bg.end());
    std::vector<DeviceArchetype> all = known;
    SynthCorpusFiles files;
    if (spec.holdout) {
        DeviceArchetype h = holdout_archetype(*spec.holdout);
        files.holdout_mac = h.mac;
        all.push_back(h);
    }

    files.baseline_pcap = dir / "baseline.pcap";
    if (with_stream) files.stream_pcap = dir / "stream.pcap";
    files.labels_csv = dir / "labels.csv";
    bool cached = std::filesystem::exists(files.baseline_pcap) && std::filesystem::exists(files.labels_csv) &&
                  (!with_stream || std::filesystem::exists(files.stream_pcap));
    if (cached) return files; // generation is deterministic; reuse

    double split = spec.duration * std::min(1.0, spec.baseline_fraction);
    auto baseline_flows = generate_flows(known, GenConfig{0.0, split, spec.seed});
    if (baseline_flows.empty()) throw Error("synthetic corpus came out empty");
    write_pcap(baseline_flows, files.baseline_pcap);
    if (with_stream) {
        auto stream_flows = generate_flows(all, GenConfig{split, spec.duration, spec.seed});
        if (stream_flows.empty()) throw Error("synthetic stream window came out empty");
        write_pcap(stream_flows, files.stream_pcap);
    }
    inventory_of(all).save(files.labels_csv);
    return files;
}

// ---- plan construction -----------------------------------------------------

namespace plan_detail {

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
}

inline std::set<MacAddress> macs_in_capture(const std::filesystem::path& capture) {
    std::set<MacAddress> seen;
    CaptureReader reader(capture);
    while (auto rec = reader.next()) {
        seen.insert(rec->src_mac);
        seen.insert(rec->dst_mac);
    }
    return seen;
}

} // namespace plan_detail

inline ExperimentPlan build_plan(const std::filesystem::path& config_file,
                                 const std::vector<std::string>& overrides = {},
                                 const std::optional<std::filesystem::path>& out_override = {},
                                 const std::optional<uint64_t>& seed_override = {},
                                 const std::optional<std::string>& clusterer_override = {},
                                 const std::optional<std::filesystem::path>& cache_override = {}) {
    ConfigTable table = load_config(config_file);
    for (const auto& o : overrides) apply_override(table, o);
    ConfigView cfg(table, config_file.filename().string());
    std::filesystem::path base = config_file.parent_path();

    ExperimentPlan plan;
    plan.dataset_id = cfg.get_string("experiment.dataset_id", config_file.stem().string());
    plan.seed = seed_override ? *seed_override : static_cast<uint64_t>(cfg.get_int("experiment.seed", 42));
    plan.clusterer = parse_clusterer(clusterer_override ? *clusterer_override
                                                        : cfg.get_string("experiment.clusterer", "dbscan"));
    plan.out_root = out_override ? *out_override
                                 : plan_detail::resolve(base, cfg.get_string("experiment.out", "runs"));
    if (cache_override) plan.cache_dir = *cache_override;
    else plan.cache_dir = plan_detail::resolve(base, cfg.get_string("experiment.cache", ".flowcache"));

    plan.flow.idle_timeout = cfg.get_double("flow.idle_timeout", 60.0);
    plan.flow.reorder_tolerance = cfg.get_double("flow.reorder_tolerance", 1.0);
    plan.flow.per_flow_packet_cap = static_cast<size_t>(cfg.get_int("flow.per_flow_packet_cap", 100000));

    plan.scale_mode = cfg.get_string("features.scale", "zscore");
    if (plan.scale_mode != "zscore" && plan.scale_mode != "none") {
        throw ConfigError("features.scale must be zscore or none");
    }

    plan.auto_tune = cfg.get_bool("dbscan.auto_tune", !cfg.has("dbscan.eps"));
    plan.dbscan_params.eps = cfg.get_double("dbscan.eps", 0.5);
    plan.dbscan_params.min_pts = static_cast<size_t>(cfg.get_int("dbscan.min_pts", 5));

    plan.birch_threshold = cfg.get_double("birch.threshold", 0.5);
    plan.birch_branching = static_cast<size_t>(cfg.get_int("birch.branching_factor", 50));
    if (cfg.has("birch.global_k")) plan.global_k = static_cast<size_t>(cfg.get_int("birch.global_k"));
    plan.minibatch_k = static_cast<size_t>(cfg.get_int("minibatch.k", 0));

    plan.purity_threshold = cfg.get_double("metrics.purity_threshold", 0.8);
    if (!(plan.purity_threshold > 0.0 && plan.purity_threshold <= 1.0)) {
        throw ConfigError("metrics.purity_threshold outside (0,1]");
    }
    plan.batch_size = static_cast<size_t>(cfg.get_int("stream.batch_size", 256));
    if (plan.batch_size < 1) throw ConfigError("stream.batch_size must be positive");
    plan.measure_refit = cfg.get_bool("stream.measure_refit", false);

    // Data: inline synthetic corpus or explicit capture lists.
    if (cfg.has("data.synth")) {
        SynthCorpusSpec spec;
        spec.enabled = true;
        spec.preset = cfg.get_string("data.synth.preset", "stock5");
        spec.background = static_cast<size_t>(cfg.get_int("data.synth.background", 6));
        spec.background_flows_per_hour = cfg.get_double("data.synth.background_flows_per_hour", 170.0);
        std::string tier = cfg.get_string("data.synth.holdout", "none");
        if (tier != "none") spec.holdout = parse_tier(tier);
        spec.duration = cfg.get_double("data.synth.duration", 8100.0);
        spec.baseline_fraction = cfg.get_double("data.synth.baseline_fraction", 0.6);
        spec.seed = static_cast<uint64_t>(cfg.get_int("data.synth.seed", 7));

        auto dir = plan.out_root / "corpus" / (plan.dataset_id + "-" + hex64(fnv1a(spec.fingerprint())).substr(0, 8));
        auto files = build_synth_corpus(spec, dir);
        plan.baseline_captures = {files.baseline_pcap};
        if (!files.stream_pcap.empty()) plan.stream_captures = {files.stream_pcap};
        plan.labels_csv = files.labels_csv;
        if (files.holdout_mac) plan.holdout.push_back(HoldoutDevice{*files.holdout_mac, *spec.holdout});
    } else {
        for (const auto& p : cfg.get_string_array("data.captures_baseline", true)) {
            plan.baseline_captures.push_back(plan_detail::resolve(base, p));
        }
        for (const auto& p : cfg.get_string_array("data.captures_stream")) {
            plan.stream_captures.push_back(plan_detail::resolve(base, p));
        }
        plan.labels_csv = plan_detail::resolve(base, cfg.get_string("data.labels"));
        for (const auto& h : cfg.get_table_array("data.holdout")) {
            auto mac = MacAddress::parse(h.get_string("mac"));
            if (!mac) throw ConfigError("data.holdout: bad MAC `" + h.get_string("mac") + "`");
            plan.holdout.push_back(HoldoutDevice{*mac, parse_tier(h.get_string("tier", "high"))});
        }
    }

    for (const auto& p : plan.baseline_captures) {
        if (!std::filesystem::exists(p)) throw ConfigError("baseline capture does not exist: " + p.string());
    }
    for (const auto& p : plan.stream_captures) {
        if (!std::filesystem::exists(p)) throw ConfigError("stream capture does not exist: " + p.string());
    }
    if (!std::filesystem::exists(plan.labels_csv)) {
        throw ConfigError("label inventory does not exist: " + plan.labels_csv.string());
    }
    plan.inventory = DeviceInventory::load(plan.labels_csv);

    for (const auto& h : plan.holdout) {
        if (!plan.inventory.names.count(h.mac)) {
            throw ConfigError("holdout MAC " + h.mac.str() + " is not in the label inventory");
        }
    }
    if (plan.known_macs().empty()) throw ConfigError("no known devices remain after holdout exclusion");

    // Holdout-exclusion cross-check: no holdout device may appear in any
    // baseline capture.
    auto hmacs = plan.holdout_macs();
    if (!hmacs.empty()) {
        for (const auto& capture : plan.baseline_captures) {
            auto seen = plan_detail::macs_in_capture(capture);
            for (const auto& mac : hmacs) {
                if (seen.count(mac)) {
                    throw ConfigError("holdout MAC " + mac.str() + " appears in baseline capture " +
                                      capture.string());
                }
            }
        }
    }

    if (plan.minibatch_k == 0) plan.minibatch_k = plan.known_macs().size();

    // Provenance hash: file bytes plus every override knob.
    uint64_t h = hash_file(config_file);
    for (const auto& o : overrides) h = fnv1a(o, h);
    h = fnv1a("seed=" + std::to_string(plan.seed), h);
    h = fnv1a("clusterer=" + clusterer_name(plan.clusterer), h);
    plan.config_hash = hex64(h);
    return plan;
}

// ---- shared pipeline pieces -------------------------------------------------

struct ExtractedSet {
    std::vector<FeatureVector> features;
    uint64_t cache_hits = 0;
    uint64_t device_packets = 0;
    uint64_t dropped = 0;
};

inline ExtractedSet extract_captures(const std::vector<std::filesystem::path>& captures,
                                     const std::set<MacAddress>& devices,
                                     const ExperimentPlan& plan) {
    ExtractedSet out;
    ExtractionConfig cfg{plan.flow};
    for (const auto& capture : captures) {
        auto res = extract_capture_cached(capture, devices, cfg, plan.cache_dir);
        if (res.hit) ++out.cache_hits;
        out.device_packets += res.stats.device_packets;
        out.dropped += res.stats.dropped_out_of_order;
        out.features.insert(out.features.end(), res.features.begin(), res.features.end());
    }
    return out;
}

inline std::vector<std::string> device_names_of(const std::vector<FeatureVector>& features,
                                                const DeviceInventory& inventory) {
    std::vector<std::string> names;
    names.reserve(features.size());
    for (const auto& f : features) {
        auto it = inventory.names.find(f.device_mac);
        names.push_back(it != inventory.names.end() ? it->second : f.device_mac.str());
    }
    return names;
}

inline std::vector<int> label_ids_of(const std::vector<std::string>& names) {
    std::map<std::string, int> ids;
    for (const auto& n : names) ids.emplace(n, 0);
    int next = 0;
    for (auto& [_, id] : ids) id = next++;
    std::vector<int> out;
    out.reserve(names.size());
    for (const auto& n : names) out.push_back(ids[n]);
    return out;
}

inline std::vector<Point> scale_points(const std::vector<FeatureVector>& features,
                                       const std::string& mode,
                                       std::optional<Scaler>& scaler_out) {
    auto pts = to_points(features);
    if (mode == "none") {
        scaler_out.reset();
        return pts;
    }
    Scaler s = Scaler::fit(std::span<const Point>(pts));
    auto scaled = s.transform_all(pts);
    scaler_out = std::move(s);
    return scaled;
}

// ---- rq1 core ---------------------------------------------------------------

struct Rq1Options {
    bool auto_tune = true;
    DbscanParams params{0.5, 5};
    std::string scale_mode = "zscore";
    uint64_t seed = 42;
};

struct Rq1Outcome {
    ClusterAssignment assignment;
    DbscanParams used_params;
    std::vector<GridCell> grid_table;
    std::vector<Point> scaled;
    double nmi = 0;
    double silhouette = 0;
    int clusters = 0;
    double noise_pct = 0;
    size_t n_points = 0;
};

inline Rq1Outcome rq1_core(const std::vector<FeatureVector>& baseline,
                           const std::vector<std::string>& truth_names,
                           const Rq1Options& opts) {
    if (baseline.size() < 10) throw DegenerateClustering("baseline set too small to profile");
    {
        std::set<std::string> distinct(truth_names.begin(), truth_names.end());
        if (distinct.size() < 2) throw DegenerateClustering("single ground-truth device class");
    }

    Rq1Outcome out;
    std::optional<Scaler> scaler;
    out.scaled = scale_points(baseline, opts.scale_mode, scaler);
    auto truth = label_ids_of(truth_names);

    out.used_params = opts.params;
    if (opts.auto_tune) {
        auto grid = default_grid(out.scaled);
        if (grid.empty()) throw DegenerateGrid("could not build a parameter grid");
        auto res = grid_search(out.scaled, truth, grid);
        out.grid_table = res.table;
        if (!res.best) throw DegenerateGrid("every grid cell degenerated to fewer than 2 clusters");
        out.used_params = *res.best;
    }

    out.assignment = dbscan(out.scaled, out.used_params);
    std::vector<int> kept_pred, kept_truth;
    std::vector<Point> kept_points;
    for (size_t i = 0; i < out.scaled.size(); ++i) {
        if (out.assignment.labels[i] >= 0) {
            kept_pred.push_back(out.assignment.labels[i]);
            kept_truth.push_back(truth[i]);
            kept_points.push_back(out.scaled[i]);
        }
    }
    if (out.assignment.n_clusters < 2) {
        throw DegenerateClustering("fewer than 2 clusters survive noise filtering");
    }
    out.nmi = nmi(kept_pred, kept_truth);
    out.silhouette = silhouette(kept_points, kept_pred, SilhouetteOptions{5000, opts.seed});
    out.clusters = out.assignment.n_clusters;
    out.noise_pct = out.assignment.noise_fraction * 100.0;
    out.n_points = baseline.size();
    return out;
}

// ---- rq2 core ---------------------------------------------------------------

struct Rq2Options {
    ClustererKind clusterer = ClustererKind::birch;
    double birch_threshold = 0.5;
    size_t birch_branching = 50;
    std::optional<size_t> global_k;
    size_t minibatch_k = 5;
    size_t batch_size = 256;
    double purity_threshold = 0.8;
    std::string scale_mode = "zscore";
    uint64_t seed = 42;
    bool measure_refit = false;
};

struct HoldoutResult {
    MacAddress mac;
    std::string tier;
    NoveltyEvaluation eval;
    uint64_t n_total = 0;
};

struct Rq2Outcome {
    std::vector<int> stream_subclusters; // assignment per stream point
    std::vector<int> stream_global;      // via the global map
    std::vector<size_t> stream_order;    // indices into the input stream set, batch order
    double nmi = 0;
    std::optional<double> silhouette;
    double known_acc_post = 0;
    std::vector<HoldoutResult> holdouts;
    double mean_update_s = 0;
    double fit_s = 0;
    std::optional<double> refit_s;
    size_t n_batches = 0;
    size_t n_subclusters = 0;
    size_t n_global_clusters = 0;
    std::optional<Scaler> scaler;
};

inline Rq2Outcome rq2_core(const std::vector<FeatureVector>& baseline,
                           const std::vector<FeatureVector>& stream,
                           const DeviceInventory& inventory,
                           const std::vector<HoldoutDevice>& holdout,
                           const Rq2Options& opts) {
    if (opts.clusterer == ClustererKind::dbscan) throw ConfigError("rq2 needs an incremental clusterer");
    if (baseline.size() < 2) throw DegenerateClustering("baseline set too small to fit");
    if (stream.empty()) throw DegenerateClustering("stream set is empty");

    Rq2Outcome out;
    auto base_pts_raw = to_points(baseline);
    std::vector<Point> base_pts;
    if (opts.scale_mode == "none") {
        base_pts = base_pts_raw;
    } else {
        out.scaler = Scaler::fit(std::span<const Point>(base_pts_raw));
        base_pts = out.scaler->transform_all(base_pts_raw);
    }

    std::unique_ptr<StreamClusterer> model;
    if (opts.clusterer == ClustererKind::birch) {
        model = std::make_unique<BirchClusterer>(base_pts[0].size(), opts.birch_threshold, opts.birch_branching);
    } else {
        model = std::make_unique<MiniBatchClusterer>(opts.minibatch_k, opts.seed);
    }

    // Baseline fit, untimed batches.
    {
        auto t0 = std::chrono::steady_clock::now();
        for (size_t off = 0; off < base_pts.size(); off += opts.batch_size) {
            size_t len = std::min(opts.batch_size, base_pts.size() - off);
            model->update(std::span<const Point>(base_pts.data() + off, len));
        }
        out.fit_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }

    // Stream in timestamp order.
    out.stream_order.resize(stream.size());
    for (size_t i = 0; i < stream.size(); ++i) out.stream_order[i] = i;
    std::stable_sort(out.stream_order.begin(), out.stream_order.end(), [&](size_t a, size_t b) {
        return stream[a].flow_start < stream[b].flow_start;
    });

    std::vector<Point> stream_pts;
    stream_pts.reserve(stream.size());
    for (size_t idx : out.stream_order) {
        Point p = stream[idx].as_point();
        stream_pts.push_back(out.scaler ? out.scaler->transform(p) : p);
    }

    double total_update = 0;
    for (size_t off = 0; off < stream_pts.size(); off += opts.batch_size) {
        size_t len = std::min(opts.batch_size, stream_pts.size() - off);
        auto stats = timed_update(*model, std::span<const Point>(stream_pts.data() + off, len));
        total_update += stats.elapsed;
        ++out.n_batches;
    }
    out.mean_update_s = out.n_batches ? total_update / static_cast<double>(out.n_batches) : 0.0;

    // Post-adaptation evaluation over the stream set.
    out.stream_subclusters.resize(stream_pts.size());
    for (size_t i = 0; i < stream_pts.size(); ++i) out.stream_subclusters[i] = model->assign(stream_pts[i]);
    auto gmap = model->global_map(opts.global_k);
    out.stream_global.resize(stream_pts.size());
    for (size_t i = 0; i < stream_pts.size(); ++i) out.stream_global[i] = gmap.at(out.stream_subclusters[i]);
    out.n_subclusters = model->n_subclusters();
    {
        std::set<int> g;
        for (const auto& [_, v] : gmap) g.insert(v);
        out.n_global_clusters = g.size();
    }

    std::vector<std::string> stream_names;
    stream_names.reserve(stream.size());
    for (size_t idx : out.stream_order) {
        auto it = inventory.names.find(stream[idx].device_mac);
        stream_names.push_back(it != inventory.names.end() ? it->second : stream[idx].device_mac.str());
    }
    auto truth_ids = label_ids_of(stream_names);

    out.nmi = nmi(out.stream_global, truth_ids);
    try {
        out.silhouette = silhouette(stream_pts, out.stream_global, SilhouetteOptions{5000, opts.seed});
    } catch (const SingleCluster&) {
        out.silhouette.reset();
    }

    auto hset = [&] {
        std::set<MacAddress> s;
        for (const auto& h : holdout) s.insert(h.mac);
        return s;
    }();

    // Novelty scoring per holdout device.
    for (const auto& h : holdout) {
        std::vector<bool> is_novel(stream_pts.size());
        uint64_t n_total = 0;
        for (size_t i = 0; i < stream_pts.size(); ++i) {
            bool nov = stream[out.stream_order[i]].device_mac == h.mac;
            is_novel[i] = nov;
            if (nov) ++n_total;
        }
        if (n_total == 0) throw ConfigError("holdout MAC " + h.mac.str() + " never appears in the stream set");
        HoldoutResult hr;
        hr.mac = h.mac;
        hr.tier = tier_name(h.tier);
        hr.n_total = n_total;
        hr.eval = novelty_eval(out.stream_subclusters, is_novel, opts.purity_threshold, n_total);
        out.holdouts.push_back(std::move(hr));
    }

    // Known-device accuracy over stream points from non-holdout devices.
    std::vector<int> known_assign;
    std::vector<std::string> known_truth;
    for (size_t i = 0; i < stream_pts.size(); ++i) {
        const auto& mac = stream[out.stream_order[i]].device_mac;
        if (!hset.count(mac)) {
            known_assign.push_back(out.stream_subclusters[i]);
            known_truth.push_back(stream_names[i]);
        }
    }
    out.known_acc_post = known_accuracy_post(baseline_map, known_assign, known_truth);

    if (opts.measure_refit) {
        std::vector<Point> all = base_pts;
        all.insert(all.end(), stream_pts.begin(), stream_pts.end());
        auto refit = refit_baseline(*model, all, opts.batch_size);
        out.refit_s = refit.elapsed;
    }
    return out;
}

// ---- artifact plumbing ------------------------------------------------------

inline std::filesystem::path make_run_dir(const std::filesystem::path& root, const std::string& name) {
    std::filesystem::create_directories(root);
    auto now = std::chrono::system_clock::now();
    std::time_t tt = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char stamp[32];
    std::strftime(stamp, sizeof(stamp), "%Y%m%d-%H%M%S", &tm);
    std::filesystem::path dir = root / (name + "-" + stamp);
    for (int k = 2; std::filesystem::exists(dir); ++k) {
        dir = root / (name + "-" + std::string(stamp) + "-" + std::to_string(k));
    }
    std::filesystem::create_directories(dir);
    return dir;
}

struct MembershipRow {
    double flow_start;
    std::string device;
    int cluster;
};

inline void write_membership_csv(const std::filesystem::path& path, const std::vector<MembershipRow>& rows) {
    std::ofstream out(path);
    if (!out) throw IoFailure("cannot write membership table: " + path.string());
    out << "flow_start,device,cluster\n";
    for (const auto& r : rows) out << fmt_g17(r.flow_start) << ',' << r.device << ',' << r.cluster << '\n';
}

struct ProjectionRow {
    double x, y;
    int cluster;
    std::string device;
};

inline void write_projection_csv(const std::filesystem::path& path, const std::vector<ProjectionRow>& rows) {
    std::ofstream out(path);
    if (!out) throw IoFailure("cannot write projection: " + path.string());
    out << "x,y,cluster,device\n";
    for (const auto& r : rows) {
        out << fmt_g17(r.x) << ',' << fmt_g17(r.y) << ',' << r.cluster << ',' << r.device << '\n';
    }
}

struct RunArtifacts {
    EvaluationReport report;
    std::filesystem::path dir;
};

inline RunArtifacts run_rq1(const ExperimentPlan& plan) {
    auto t_start = std::chrono::steady_clock::now();
    auto extracted = extract_captures(plan.baseline_captures, plan.known_macs(), plan);
    auto names = device_names_of(extracted.features, plan.inventory);

    Rq1Options opts;
    opts.auto_tune = plan.auto_tune;
    opts.params = plan.dbscan_params;
    opts.scale_mode = plan.scale_mode;
    opts.seed = plan.seed;
    auto outcome = rq1_core(extracted.features, names, opts);

    EvaluationReport report;
    report.setting = "rq1/dbscan";
    report.clusters = outcome.clusters;
    report.noise_pct = outcome.noise_pct;
    report.nmi = outcome.nmi;
    report.silhouette = outcome.silhouette;
    report.config_hash = plan.config_hash;
    report.dataset_id = plan.dataset_id;
    report.detail["eps"] = outcome.used_params.eps;
    report.detail["min_pts"] = outcome.used_params.min_pts;
    report.detail["n_points"] = outcome.n_points;
    report.detail["auto_tuned"] = plan.auto_tune;
    report.detail["scale"] = plan.scale_mode;
    report.detail["seed"] = plan.seed;

    auto dir = make_run_dir(plan.out_root, "rq1");
    write_text_file(dir / "report.json", report.to_json().dump(2) + "\n");

    std::vector<MembershipRow> membership;
    for (size_t i = 0; i < extracted.features.size(); ++i) {
        membership.push_back(MembershipRow{extracted.features[i].flow_start, names[i], outcome.assignment.labels[i]});
    }
    write_membership_csv(dir / "membership.csv", membership);

    Pca2D pca = Pca2D::fit(outcome.scaled);
    std::vector<ProjectionRow> projection;
    for (size_t i = 0; i < outcome.scaled.size(); ++i) {
        auto [x, y] = pca.project(outcome.scaled[i]);
        projection.push_back(ProjectionRow{x, y, outcome.assignment.labels[i], names[i]});
    }
    write_projection_csv(dir / "projection.csv", projection);
    if (!outcome.grid_table.empty()) write_score_table_csv(dir / "grid_scores.csv", outcome.grid_table);

    double total_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    std::ostringstream log;
    log << "run: rq1\nconfig_hash: " << plan.config_hash << "\ndataset: " << plan.dataset_id
        << "\nseed: " << plan.seed << "\ncache_hits: " << extracted.cache_hits
        << "\ndevice_packets: " << extracted.device_packets << "\ndropped_out_of_order: " << extracted.dropped
        << "\nflows: " << extracted.features.size() << "\neps: " << fmt_g17(outcome.used_params.eps)
        << "\nmin_pts: " << outcome.used_params.min_pts << "\nwall_s: " << fmt_g9(total_s) << "\n";
    write_text_file(dir / "run.log", log.str());
    return RunArtifacts{report, dir};
}

inline RunArtifacts run_rq2(const ExperimentPlan& plan) {
    if (plan.clusterer == ClustererKind::dbscan) {
        throw ConfigError("rq2 requires --clusterer birch or minibatch");
    }
    if (plan.holdout.empty()) throw ConfigError("rq2 needs at least one holdout device");
    if (plan.stream_captures.empty()) throw ConfigError("rq2 needs stream captures");

    auto t_start = std::chrono::steady_clock::now();
    auto base = extract_captures(plan.baseline_captures, plan.known_macs(), plan);
    auto stream = extract_captures(plan.stream_captures, plan.inventory.macs(), plan);

    Rq2Options opts;
    opts.clusterer = plan.clusterer;
    opts.birch_threshold = plan.birch_threshold;
    opts.birch_branching = plan.birch_branching;
    opts.global_k = plan.global_k;
    opts.minibatch_k = plan.minibatch_k;
    opts.batch_size = plan.batch_size;
    opts.purity_threshold = plan.purity_threshold;
    opts.scale_mode = plan.scale_mode;
    opts.seed = plan.seed;
    opts.measure_refit = plan.measure_refit;

    auto outcome = rq2_core(base.features, stream.features, plan.inventory, plan.holdout, opts);

    EvaluationReport report;
    report.setting = "rq2/" + clusterer_name(plan.clusterer);
    report.nmi = outcome.nmi;
    report.silhouette = outcome.silhouette;
    report.known_acc_post = outcome.known_acc_post;
    if (!outcome.holdouts.empty()) {
        report.novel_purity = outcome.holdouts.front().eval.purity;
        report.novel_share = outcome.holdouts.front().eval.share;
    }
    report.update_time_s = outcome.mean_update_s;
    report.config_hash = plan.config_hash;
    report.dataset_id = plan.dataset_id;
    report.detail["n_subclusters"] = outcome.n_subclusters;
    report.detail["n_global_clusters"] = outcome.n_global_clusters;
    report.detail["n_batches"] = outcome.n_batches;
    report.detail["batch_size"] = plan.batch_size;
    report.detail["fit_time_s"] = outcome.fit_s;
    if (outcome.refit_s) report.detail["refit_time_s"] = *outcome.refit_s;
    if (plan.clusterer == ClustererKind::birch) {
        report.detail["birch_threshold"] = plan.birch_threshold;
        report.detail["birch_branching_factor"] = plan.birch_branching;
    } else {
        report.detail["minibatch_k"] = plan.minibatch_k;
    }
    auto holdout_json = nlohmann::json::array();
    for (const auto& h : outcome.holdouts) {
        holdout_json.push_back({{"mac", h.mac.str()},
                                {"tier", h.tier},
                                {"purity", h.eval.purity},
                                {"share", h.eval.share},
                                {"n_total", h.n_total},
                                {"valid_subclusters", h.eval.valid.size()}});
    }
    report.detail["holdouts"] = holdout_json;

    auto dir = make_run_dir(plan.out_root, "rq2-" + clusterer_name(plan.clusterer));
    write_text_file(dir / "report.json", report.to_json().dump(2) + "\n");

    std::vector<std::string> stream_names;
    for (size_t idx : outcome.stream_order) {
        auto it = plan.inventory.names.find(stream.features[idx].device_mac);
        stream_names.push_back(it != plan.inventory.names.end() ? it->second
                                                                : stream.features[idx].device_mac.str());
    }
    std::vector<MembershipRow> membership;
    for (size_t i = 0; i < outcome.stream_order.size(); ++i) {
        membership.push_back(MembershipRow{stream.features[outcome.stream_order[i]].flow_start,
                                           stream_names[i], outcome.stream_global[i]});
    }
    write_membership_csv(dir / "membership.csv", membership);

    // Projection axes come from baseline data only.
    {
        auto base_pts_raw = to_points(base.features);
        std::vector<Point> base_scaled = outcome.scaler ? outcome.scaler->transform_all(base_pts_raw)
                                                        : base_pts_raw;
        Pca2D pca = Pca2D::fit(base_scaled);
        std::vector<ProjectionRow> projection;
        for (size_t i = 0; i < outcome.stream_order.size(); ++i) {
            Point p = stream.features[outcome.stream_order[i]].as_point();
            if (outcome.scaler) p = outcome.scaler->transform(p);
            auto [x, y] = pca.project(p);
            projection.push_back(ProjectionRow{x, y, outcome.stream_global[i], stream_names[i]});
        }
        write_projection_csv(dir / "projection.csv", projection);
    }

    double total_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    std::ostringstream log;
    log << "run: rq2/" << clusterer_name(plan.clusterer) << "\nconfig_hash: " << plan.config_hash
        << "\ndataset: " << plan.dataset_id << "\nseed: " << plan.seed
        << "\nbaseline_flows: " << base.features.size() << "\nstream_flows: " << stream.features.size()
        << "\ncache_hits: " << base.cache_hits + stream.cache_hits
        << "\nsubclusters: " << outcome.n_subclusters << "\nfit_s: " << fmt_g9(outcome.fit_s)
        << "\nmean_update_s: " << fmt_g9(outcome.mean_update_s) << "\nwall_s: " << fmt_g9(total_s) << "\n";
    write_text_file(dir / "run.log", log.str());
    return RunArtifacts{report, dir};
}

} // namespace flowprofiler
