#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "flowprofiler/cli.hpp"
#include "flowprofiler/experiment.hpp"
#include "flowprofiler/pca.hpp"
#include "support/oracles.hpp"

using namespace flowprofiler;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
    auto dir = fs::temp_directory_path() / ("fp_pipe_" + tag + "_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    return dir;
}

MacAddress mac_of(int i) {
    MacAddress m;
    m.bytes = {0x02, 0x10, 0x00, 0x00, 0x00, static_cast<uint8_t>(i)};
    return m;
}

FeatureVector feature_from_point(const Point& p, const MacAddress& mac, double flow_start) {
    FeatureVector v;
    v.set_from_point(p);
    v.device_mac = mac;
    v.flow_start = flow_start;
    return v;
}

// Fabricated 26-d blob features, one device per blob.
struct BlobWorld {
    std::vector<FeatureVector> features;
    std::vector<std::string> names;
    DeviceInventory inventory;
};

BlobWorld blob_world(size_t n_devices, size_t per_device, double spread, std::mt19937_64& rng,
                     double t0 = 0.0) {
    BlobWorld w;
    std::normal_distribution<double> jitter(0.0, spread);
    double t = t0;
    for (size_t d = 0; d < n_devices; ++d) {
        // Fixed center per device id, so separate worlds share geometry.
        std::mt19937_64 crng(1000 + d);
        std::uniform_real_distribution<double> center(-8.0, 8.0);
        Point c(kFeatureDim);
        for (auto& x : c) x = center(crng);
        MacAddress mac = mac_of(static_cast<int>(d));
        std::string name = "device-" + std::to_string(d);
        w.inventory.names[mac] = name;
        for (size_t i = 0; i < per_device; ++i) {
            Point p(kFeatureDim);
            for (size_t j = 0; j < kFeatureDim; ++j) p[j] = c[j] + jitter(rng);
            t += 0.25;
            w.features.push_back(feature_from_point(p, mac, t));
            w.names.push_back(name);
        }
    }
    return w;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

nlohmann::json scrub_timing(nlohmann::json j) {
    j.erase("update_time_s");
    if (j.contains("detail")) {
        j["detail"].erase("fit_time_s");
        j["detail"].erase("refit_time_s");
    }
    return j;
}

} // namespace

TEST_CASE("pca recovers the dominant axis") {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n01(0.0, 1.0);
    std::vector<Point> pts;
    for (int i = 0; i < 400; ++i) {
        double t = n01(rng) * 5.0;
        pts.push_back(Point{t, 2.0 * t + 0.05 * n01(rng), 0.01 * n01(rng)});
    }
    auto pca = Pca2D::fit(pts);
    // The first axis carries nearly all the variance of (1,2,0)/sqrt(5).
    double var_x = 0;
    for (const auto& p : pts) {
        auto [x, y] = pca.project(p);
        var_x += x * x;
        (void)y;
    }
    var_x /= static_cast<double>(pts.size());
    REQUIRE(var_x > 100.0); // ~5^2 * 5 = 125 expected

    auto again = Pca2D::fit(pts);
    for (const auto& p : pts) {
        REQUIRE(pca.project(p)[0] == again.project(p)[0]);
        REQUIRE(pca.project(p)[1] == again.project(p)[1]);
    }
}

TEST_CASE("rq1 core profiles fabricated devices cleanly") {
    std::mt19937_64 rng(11);
    auto w = blob_world(5, 120, 0.15, rng);
    Rq1Options opts;
    opts.scale_mode = "zscore";
    auto out = rq1_core(w.features, w.names, opts);
    REQUIRE(out.clusters >= 5);
    REQUIRE(out.nmi >= 0.95);
    REQUIRE(out.silhouette > 0.5);
    REQUIRE(out.noise_pct < 40.0);
}

TEST_CASE("rq1 core rejects a single-device corpus") {
    std::mt19937_64 rng(12);
    auto w = blob_world(1, 50, 0.2, rng);
    Rq1Options opts;
    REQUIRE_THROWS_AS(rq1_core(w.features, w.names, opts), DegenerateClustering);
}

TEST_CASE("rq2 core: birch isolates a novel device; minibatch stays anchored") {
    std::mt19937_64 rng(13);
    // Baseline counts dominate the novel volume, so the 1/count learning
    // rate keeps mini-batch centroids pinned to the known devices.
    auto base = blob_world(3, 500, 0.2, rng);

    // Stream: fresh draws from the same devices plus a distant novel device.
    auto stream = blob_world(3, 120, 0.2, rng, /*t0=*/1e6);
    MacAddress novel = mac_of(9);
    stream.inventory.names[novel] = "novel-thing";
    base.inventory.names[novel] = "novel-thing";
    std::normal_distribution<double> jitter(0.0, 0.2);
    double t = 2e6;
    for (int i = 0; i < 60; ++i) {
        Point p(kFeatureDim, 20.0); // outside every known blob
        for (auto& x : p) x += jitter(rng);
        t += 0.25;
        stream.features.push_back(feature_from_point(p, novel, t));
    }

    std::vector<HoldoutDevice> holdout = {{novel, NoveltyTier::high}};
    Rq2Options opts;
    opts.scale_mode = "none";
    opts.birch_threshold = 1.0;
    opts.batch_size = 128;
    opts.clusterer = ClustererKind::birch;
    auto birch = rq2_core(base.features, stream.features, base.inventory, holdout, opts);
    REQUIRE(birch.holdouts.size() == 1);
    REQUIRE(birch.holdouts[0].eval.purity >= 0.8);
    REQUIRE(birch.holdouts[0].eval.share >= 0.6);
    REQUIRE(birch.known_acc_post > 0.8);
    REQUIRE(birch.mean_update_s > 0.0);

    opts.clusterer = ClustererKind::minibatch;
    opts.minibatch_k = 3;
    auto mini = rq2_core(base.features, stream.features, base.inventory, holdout, opts);
    REQUIRE(mini.holdouts[0].eval.purity < birch.holdouts[0].eval.purity);
}

TEST_CASE("rq2 core never lets truth labels influence clustering") {
    std::mt19937_64 rng(14);
    auto base = blob_world(3, 150, 0.25, rng);
    auto stream = blob_world(3, 80, 0.25, rng, 1e6);
    MacAddress novel = mac_of(9);
    base.inventory.names[novel] = "novel";
    stream.inventory.names[novel] = "novel";
    double t = 2e6;
    for (int i = 0; i < 60; ++i) {
        Point p(kFeatureDim, -30.0);
        t += 1.0;
        stream.features.push_back(feature_from_point(p, novel, t));
    }
    std::vector<HoldoutDevice> holdout = {{novel, NoveltyTier::high}};
    Rq2Options opts;
    opts.scale_mode = "none";
    opts.clusterer = ClustererKind::birch;
    auto a = rq2_core(base.features, stream.features, base.inventory, holdout, opts);

    // Permute every device name; assignments must not move.
    DeviceInventory permuted = base.inventory;
    std::vector<std::string> names;
    for (auto& [mac, name] : permuted.names) names.push_back(name);
    std::rotate(names.begin(), names.begin() + 1, names.end());
    size_t k = 0;
    for (auto& [mac, name] : permuted.names) name = names[k++];
    auto b = rq2_core(base.features, stream.features, permuted, holdout, opts);
    REQUIRE(a.stream_subclusters == b.stream_subclusters);
    REQUIRE(a.stream_global == b.stream_global);
}

TEST_CASE("rq2 core processes stream batches in timestamp order") {
    std::mt19937_64 rng(15);
    auto base = blob_world(2, 100, 0.2, rng);
    auto stream = blob_world(2, 100, 0.2, rng, 5e5);
    MacAddress novel = mac_of(9);
    base.inventory.names[novel] = "novel";
    double t = 9e5;
    for (int i = 0; i < 30; ++i) {
        stream.features.push_back(feature_from_point(Point(kFeatureDim, 25.0), novel, t));
        t += 2.0;
    }
    // Shuffle input order; the core must re-impose time order.
    std::shuffle(stream.features.begin(), stream.features.end(), rng);
    std::vector<HoldoutDevice> holdout = {{novel, NoveltyTier::high}};
    Rq2Options opts;
    opts.scale_mode = "none";
    opts.clusterer = ClustererKind::birch;
    auto out = rq2_core(base.features, stream.features, base.inventory, holdout, opts);
    double prev = -1e18;
    for (size_t idx : out.stream_order) {
        REQUIRE(stream.features[idx].flow_start >= prev);
        prev = stream.features[idx].flow_start;
    }
}

// ---- plans and CLI ------------------------------------------------------------

namespace {

fs::path write_synth_plan(const fs::path& dir, const std::string& extra = "") {
    auto cfg = dir / "plan.toml";
    std::ostringstream os;
    os << "[experiment]\n"
       << "dataset_id = \"unit\"\n"
       << "seed = 5\n"
       << "out = \"" << (dir / "runs").string() << "\"\n"
       << "cache = \"" << (dir / "cache").string() << "\"\n"
       << "[data.synth]\n"
       << "duration = 1500.0\n"
       << "background = 2\n"
       << "background_flows_per_hour = 120.0\n"
       << "holdout = \"high\"\n"
       << "seed = 3\n"
       << extra;
    write_text_file(cfg, os.str());
    return cfg;
}

} // namespace

TEST_CASE("build_plan fills defaults from a minimal config") {
    auto dir = temp_dir("plan_min");
    auto cfg = write_synth_plan(dir);
    auto plan = build_plan(cfg);
    REQUIRE(plan.seed == 5);
    REQUIRE(plan.clusterer == ClustererKind::dbscan);
    REQUIRE(plan.flow.idle_timeout == 60.0);
    REQUIRE(plan.batch_size == 256);
    REQUIRE(plan.purity_threshold == 0.8);
    REQUIRE(plan.baseline_captures.size() == 1);
    REQUIRE(plan.stream_captures.size() == 1);
    REQUIRE(plan.holdout.size() == 1);
    REQUIRE(fs::exists(plan.baseline_captures[0]));
    REQUIRE(plan.minibatch_k == plan.known_macs().size());
    REQUIRE_FALSE(plan.config_hash.empty());
}

TEST_CASE("build_plan rejects a holdout present in a baseline capture") {
    auto dir = temp_dir("plan_holdout");
    // Render a corpus, then misuse the stream capture (which carries the
    // holdout device) as a baseline capture.
    auto synth_cfg = write_synth_plan(dir);
    auto plan = build_plan(synth_cfg);
    auto mac = plan.holdout[0].mac;

    std::ostringstream os;
    os << "[experiment]\nseed = 1\n[data]\n"
       << "captures_baseline = [\"" << plan.stream_captures[0].string() << "\"]\n"
       << "labels = \"" << plan.labels_csv.string() << "\"\n"
       << "[[data.holdout]]\nmac = \"" << mac.str() << "\"\ntier = \"high\"\n";
    auto bad_cfg = dir / "bad.toml";
    write_text_file(bad_cfg, os.str());
    try {
        build_plan(bad_cfg);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        REQUIRE(std::string(e.what()).find(mac.str()) != std::string::npos);
    }
}

TEST_CASE("build_plan rejects unknown clusterers and missing files") {
    auto dir = temp_dir("plan_bad");
    auto cfg = write_synth_plan(dir, "[nothing]\n");
    REQUIRE_THROWS_AS(build_plan(cfg, {"experiment.clusterer=\"quantum\""}), ConfigError);

    std::ostringstream os;
    os << "[experiment]\n[data]\ncaptures_baseline = [\"/does/not/exist.pcap\"]\nlabels = \"x.csv\"\n";
    auto cfg2 = dir / "missing.toml";
    write_text_file(cfg2, os.str());
    REQUIRE_THROWS_AS(build_plan(cfg2), ConfigError);
}

TEST_CASE("rq1 run is deterministic and writes the full artifact set") {
    auto dir = temp_dir("rq1_det");
    auto cfg = write_synth_plan(dir);
    auto plan = build_plan(cfg);
    auto a = run_rq1(plan);
    auto b = run_rq1(plan);
    REQUIRE(fs::exists(a.dir / "report.json"));
    REQUIRE(fs::exists(a.dir / "membership.csv"));
    REQUIRE(fs::exists(a.dir / "projection.csv"));
    REQUIRE(fs::exists(a.dir / "run.log"));
    auto ja = scrub_timing(nlohmann::json::parse(slurp(a.dir / "report.json")));
    auto jb = scrub_timing(nlohmann::json::parse(slurp(b.dir / "report.json")));
    REQUIRE(ja == jb);
    REQUIRE(slurp(a.dir / "membership.csv") == slurp(b.dir / "membership.csv"));
    REQUIRE(slurp(a.dir / "projection.csv") == slurp(b.dir / "projection.csv"));

    // projection.csv column contract
    std::string proj = slurp(a.dir / "projection.csv");
    REQUIRE(proj.rfind("x,y,cluster,device\n", 0) == 0);
    std::string memb = slurp(a.dir / "membership.csv");
    REQUIRE(memb.rfind("flow_start,device,cluster\n", 0) == 0);
}

TEST_CASE("rq2 run produces reports for both stream clusterers") {
    auto dir = temp_dir("rq2_run");
    auto cfg = write_synth_plan(dir);
    auto plan = build_plan(cfg, {}, {}, {}, std::string("birch"));
    auto res = run_rq2(plan);
    REQUIRE(res.report.novel_purity.has_value());
    REQUIRE(res.report.update_time_s.has_value());
    REQUIRE(res.report.nmi.has_value());
    REQUIRE(fs::exists(res.dir / "report.json"));

    auto plan_mini = build_plan(cfg, {}, {}, {}, std::string("minibatch"));
    auto res_mini = run_rq2(plan_mini);
    REQUIRE(res_mini.report.setting == "rq2/minibatch");
    REQUIRE(*res_mini.report.novel_purity <= *res.report.novel_purity);
}

TEST_CASE("cli maps error classes to exit codes") {
    auto dir = temp_dir("cli_codes");
    REQUIRE(cli_main({"--definitely-not-a-flag"}) == 2);
    REQUIRE(cli_main({"rq1"}) == 2); // missing --config

    write_text_file(dir / "broken.toml", "not a config\n");
    REQUIRE(cli_main({"rq1", "--config", (dir / "broken.toml").string()}) == 2);

    // Parse failure: a config that points at a garbage capture.
    write_text_file(dir / "garbage.pcap", "garbage bytes here");
    DeviceInventory inv;
    inv.names[mac_of(1)] = "thing";
    inv.save(dir / "labels.csv");
    std::ostringstream os;
    os << "[experiment]\nout = \"" << (dir / "runs").string() << "\"\n[data]\ncaptures_baseline = [\""
       << (dir / "garbage.pcap").string() << "\"]\nlabels = \"" << (dir / "labels.csv").string() << "\"\n";
    write_text_file(dir / "garbage.toml", os.str());
    REQUIRE(cli_main({"rq1", "--config", (dir / "garbage.toml").string()}) == 3);
}

TEST_CASE("cli extract is idempotent via the cache") {
    auto dir = temp_dir("cli_extract");
    auto archetypes = stock_archetypes();
    auto flows = generate_flows(archetypes, GenConfig{0.0, 200.0, 12});
    write_pcap(flows, dir / "c.pcap");
    inventory_of(archetypes).save(dir / "labels.csv");

    auto cache = dir / "cache";
    REQUIRE(cli_main({"extract", "--captures", (dir / "c.pcap").string(), "--labels",
                      (dir / "labels.csv").string(), "--out", cache.string()}) == 0);
    REQUIRE(fs::exists(cache / "c.pcap.features.csv"));
    REQUIRE(fs::exists(cache / "c.pcap.meta.json"));
    auto before = slurp(cache / "c.pcap.features.csv");
    REQUIRE(cli_main({"extract", "--captures", (dir / "c.pcap").string(), "--labels",
                      (dir / "labels.csv").string(), "--out", cache.string()}) == 0);
    REQUIRE(slurp(cache / "c.pcap.features.csv") == before);
}

TEST_CASE("extract on a capture with no monitored packets leaves an empty csv") {
    auto dir = temp_dir("cli_empty");
    auto archetypes = stock_archetypes();
    auto flows = generate_flows(archetypes, GenConfig{0.0, 120.0, 12});
    write_pcap(flows, dir / "c.pcap");
    DeviceInventory other;
    other.names[mac_of(42)] = "stranger";
    other.save(dir / "labels.csv");
    REQUIRE(cli_main({"extract", "--captures", (dir / "c.pcap").string(), "--labels",
                      (dir / "labels.csv").string(), "--out", (dir / "cache").string()}) == 0);
    auto csv = slurp(dir / "cache" / "c.pcap.features.csv");
    REQUIRE(csv == feature_csv_header());
}

TEST_CASE("golden pcap extracts to the checked-in feature csv byte for byte") {
    fs::path data(FLOWPROFILER_TEST_DATA);
    auto pcap = data / "golden_small.pcap";
    auto golden = data / "golden_features.csv";
    REQUIRE(fs::exists(pcap));
    REQUIRE(fs::exists(golden));
    auto dir = temp_dir("golden");
    auto inv = DeviceInventory::load(data / "golden_labels.csv");
    auto res = extract_capture_cached(pcap, inv.macs(), ExtractionConfig{}, dir);
    REQUIRE(slurp(res.csv_path) == slurp(golden));
}

TEST_CASE("the installed binary honors help and bad flags") {
    std::string bin(FLOWPROFILER_BIN);
    REQUIRE(std::system((bin + " --help > /dev/null 2>&1").c_str()) == 0);
    int rc = std::system((bin + " --nope > /dev/null 2>&1").c_str());
    REQUIRE(WEXITSTATUS(rc) == 2);
    rc = std::system((bin + " report /nonexistent/report.json > /dev/null 2>&1").c_str());
    REQUIRE(WEXITSTATUS(rc) == 3);
}

TEST_CASE("report subcommand prints and exports a stored report") {
    auto dir = temp_dir("report_cmd");
    EvaluationReport r;
    r.setting = "rq1/dbscan";
    r.clusters = 7;
    r.nmi = 0.91;
    r.silhouette = 0.55;
    r.noise_pct = 22.5;
    r.dataset_id = "unit";
    r.config_hash = "deadbeef";
    write_text_file(dir / "report.json", r.to_json().dump(2));
    REQUIRE(cli_main({"report", (dir / "report.json").string(), "--csv", (dir / "flat.csv").string()}) == 0);
    auto csv = slurp(dir / "flat.csv");
    REQUIRE(csv.find("rq1/dbscan") != std::string::npos);
    REQUIRE(csv.rfind("setting,clusters,noise_pct", 0) == 0);
}
