#pragma once

// The per-flow feature set: one static column (initial TTL mode) plus 25
// behavioral columns, and the z-score scaler used before clustering.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flowprofiler/errors.hpp"
#include "flowprofiler/flow.hpp"
#include "flowprofiler/util.hpp"

namespace flowprofiler {

inline constexpr size_t kFeatureDim = 26;

inline const std::array<std::string, kFeatureDim>& feature_columns() {
    static const std::array<std::string, kFeatureDim> cols = {
        "initial_ttl_mode",
        "iat_mean", "iat_std", "iat_median", "iat_max",
        "total_packets", "total_bytes", "flow_duration", "packet_rate", "byte_rate",
        "tcp_ratio", "udp_ratio",
        "pkt_size_bin_0", "pkt_size_bin_1", "pkt_size_bin_2", "pkt_size_bin_3",
        "pkt_size_bin_4", "pkt_size_bin_5", "pkt_size_bin_6", "pkt_size_bin_7",
        "top_dst_port_0_val", "top_dst_port_1_val", "top_dst_port_2_val",
        "top_dst_port_0_ratio", "top_dst_port_1_ratio", "top_dst_port_2_ratio",
    };
    return cols;
}

struct FeatureVector {
    double initial_ttl_mode = 0;
    double iat_mean = 0, iat_std = 0, iat_median = 0, iat_max = 0;
    double total_packets = 0, total_bytes = 0, flow_duration = 0;
    double packet_rate = 0, byte_rate = 0;
    double tcp_ratio = 0, udp_ratio = 0;
    std::array<double, kSizeBins> pkt_size_bin{};
    std::array<double, 3> top_dst_port_val{};
    std::array<double, 3> top_dst_port_ratio{};
    MacAddress device_mac;
    double flow_start = 0;

    Point as_point() const {
        Point p(kFeatureDim);
        p[0] = initial_ttl_mode;
        p[1] = iat_mean;
        p[2] = iat_std;
        p[3] = iat_median;
        p[4] = iat_max;
        p[5] = total_packets;
        p[6] = total_bytes;
        p[7] = flow_duration;
        p[8] = packet_rate;
        p[9] = byte_rate;
        p[10] = tcp_ratio;
        p[11] = udp_ratio;
        for (size_t i = 0; i < kSizeBins; ++i) p[12 + i] = pkt_size_bin[i];
        for (size_t i = 0; i < 3; ++i) p[20 + i] = top_dst_port_val[i];
        for (size_t i = 0; i < 3; ++i) p[23 + i] = top_dst_port_ratio[i];
        return p;
    }

    void set_from_point(const Point& p) {
        if (p.size() != kFeatureDim) throw DimensionMismatch("feature point must have 26 columns");
        initial_ttl_mode = p[0];
        iat_mean = p[1];
        iat_std = p[2];
        iat_median = p[3];
        iat_max = p[4];
        total_packets = p[5];
        total_bytes = p[6];
        flow_duration = p[7];
        packet_rate = p[8];
        byte_rate = p[9];
        tcp_ratio = p[10];
        udp_ratio = p[11];
        for (size_t i = 0; i < kSizeBins; ++i) pkt_size_bin[i] = p[12 + i];
        for (size_t i = 0; i < 3; ++i) top_dst_port_val[i] = p[20 + i];
        for (size_t i = 0; i < 3; ++i) top_dst_port_ratio[i] = p[23 + i];
    }
};

// IAT statistics use consecutive gaps of the interleaved (bidirectional)
// timestamp sequence; std is the population form so 2-packet flows are
// well defined.
inline FeatureVector extract(const FlowRecord& flow) {
    const FlowAccumulator& acc = flow.acc;
    if (acc.total_packets == 0) throw InvalidArgument("flow has no packets");

    FeatureVector v;
    v.device_mac = flow.key.device_mac;
    v.flow_start = acc.first_ts;

    if (!acc.ttl_counts.empty()) {
        uint64_t best = 0;
        for (const auto& [ttl, count] : acc.ttl_counts) { // ascending ttl: ties pick the smallest
            if (count > best) {
                best = count;
                v.initial_ttl_mode = static_cast<double>(ttl);
            }
        }
    }

    std::vector<double> ts(acc.timestamps);
    std::sort(ts.begin(), ts.end());
    if (ts.size() >= 2) {
        std::vector<double> iat(ts.size() - 1);
        for (size_t i = 1; i < ts.size(); ++i) iat[i - 1] = ts[i] - ts[i - 1];
        double sum = 0;
        for (double g : iat) sum += g;
        v.iat_mean = sum / static_cast<double>(iat.size());
        double var = 0;
        for (double g : iat) var += (g - v.iat_mean) * (g - v.iat_mean);
        v.iat_std = std::sqrt(var / static_cast<double>(iat.size()));
        v.iat_max = *std::max_element(iat.begin(), iat.end());
        std::sort(iat.begin(), iat.end());
        size_t m = iat.size() / 2;
        v.iat_median = iat.size() % 2 ? iat[m] : 0.5 * (iat[m - 1] + iat[m]);
    }

    double n = static_cast<double>(acc.total_packets);
    v.total_packets = n;
    v.total_bytes = static_cast<double>(acc.total_bytes);
    v.flow_duration = acc.last_ts - acc.first_ts;
    if (v.flow_duration > 0) {
        v.packet_rate = n / v.flow_duration;
        v.byte_rate = v.total_bytes / v.flow_duration;
    }
    v.tcp_ratio = static_cast<double>(acc.tcp_count) / n;
    v.udp_ratio = static_cast<double>(acc.udp_count) / n;
    for (size_t i = 0; i < kSizeBins; ++i) {
        v.pkt_size_bin[i] = static_cast<double>(acc.size_bins[i]) / n;
    }

    if (acc.outbound_packets > 0 && !acc.dst_port_counts.empty()) {
        std::vector<std::pair<uint16_t, uint64_t>> ports(acc.dst_port_counts.begin(), acc.dst_port_counts.end());
        std::stable_sort(ports.begin(), ports.end(),
                         [](const auto& a, const auto& b) { return a.second > b.second; });
        double denom = static_cast<double>(acc.outbound_packets);
        for (size_t i = 0; i < 3 && i < ports.size(); ++i) {
            v.top_dst_port_val[i] = static_cast<double>(ports[i].first);
            v.top_dst_port_ratio[i] = static_cast<double>(ports[i].second) / denom;
        }
    }
    return v;
}

inline std::vector<FeatureVector> extract_all(const std::vector<FlowRecord>& flows) {
    std::vector<FeatureVector> out;
    out.reserve(flows.size());
    for (const auto& f : flows) out.push_back(extract(f));
    return out;
}

// Per-column standardization. Population std; zero-variance columns map
// to zero.
class Scaler {
public:
    static Scaler fit(std::span<const Point> points) {
        if (points.size() < 2) throw InsufficientData("scaler needs at least 2 vectors");
        size_t d = points[0].size();
        Scaler s;
        s.mean_.assign(d, 0.0);
        s.std_.assign(d, 0.0);
        double n = static_cast<double>(points.size());
        for (const auto& p : points) {
            if (p.size() != d) throw DimensionMismatch("inconsistent point dimensions");
            for (size_t j = 0; j < d; ++j) s.mean_[j] += p[j];
        }
        for (size_t j = 0; j < d; ++j) s.mean_[j] /= n;
        for (const auto& p : points) {
            for (size_t j = 0; j < d; ++j) {
                double dlt = p[j] - s.mean_[j];
                s.std_[j] += dlt * dlt;
            }
        }
        for (size_t j = 0; j < d; ++j) s.std_[j] = std::sqrt(s.std_[j] / n);
        return s;
    }

    static Scaler fit(const std::vector<FeatureVector>& vectors) {
        std::vector<Point> pts;
        pts.reserve(vectors.size());
        for (const auto& v : vectors) pts.push_back(v.as_point());
        return fit(std::span<const Point>(pts));
    }

    Point transform(const Point& p) const {
        check(p);
        Point out(p.size());
        for (size_t j = 0; j < p.size(); ++j) {
            out[j] = std_[j] > 0 ? (p[j] - mean_[j]) / std_[j] : 0.0;
        }
        return out;
    }

    Point inverse_transform(const Point& z) const {
        check(z);
        Point out(z.size());
        for (size_t j = 0; j < z.size(); ++j) out[j] = z[j] * std_[j] + mean_[j];
        return out;
    }

    std::vector<Point> transform_all(std::span<const Point> points) const {
        std::vector<Point> out;
        out.reserve(points.size());
        for (const auto& p : points) out.push_back(transform(p));
        return out;
    }

    size_t dim() const { return mean_.size(); }
    const std::vector<double>& mean() const { return mean_; }
    const std::vector<double>& std_dev() const { return std_; }

    // Stable identity used to tie model snapshots back to their scaling.
    std::string content_hash() const {
        std::string s;
        for (size_t j = 0; j < mean_.size(); ++j) {
            s += fmt_g17(mean_[j]);
            s += ',';
            s += fmt_g17(std_[j]);
            s += ';';
        }
        return hex64(fnv1a(s));
    }

private:
    void check(const Point& p) const {
        if (mean_.empty()) throw InsufficientData("scaler not fitted");
        if (p.size() != mean_.size()) throw DimensionMismatch("point dimension differs from fit");
    }

    std::vector<double> mean_;
    std::vector<double> std_;
};

inline std::vector<Point> to_points(const std::vector<FeatureVector>& vectors) {
    std::vector<Point> pts;
    pts.reserve(vectors.size());
    for (const auto& v : vectors) pts.push_back(v.as_point());
    return pts;
}

// ---- feature cache -------------------------------------------------------
//
// One CSV per capture, floats at 9 significant digits, plus a meta file
// carrying the hash of (capture bytes, extraction config). Loads go through
// the CSV even on a cold run, so cached and fresh paths see identical
// (quantized) values.

struct ExtractionConfig {
    FlowAssembler::Config flow;

    std::string fingerprint(const std::set<MacAddress>& devices) const {
        std::ostringstream os;
        os << "v1;timeout=" << fmt_g17(flow.idle_timeout)
           << ";reorder=" << fmt_g17(flow.reorder_tolerance)
           << ";cap=" << flow.per_flow_packet_cap << ";macs=";
        for (const auto& m : devices) os << m.str() << "|";
        os << ";cols=";
        for (const auto& c : feature_columns()) os << c << ",";
        return os.str();
    }
};

inline std::string feature_csv_header() {
    std::string h;
    for (const auto& c : feature_columns()) {
        h += c;
        h += ',';
    }
    h += "device_mac,flow_start\n";
    return h;
}

inline void write_feature_csv(const std::filesystem::path& path, const std::vector<FeatureVector>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoFailure("cannot write feature cache: " + path.string());
    out << feature_csv_header();
    for (const auto& v : rows) {
        Point p = v.as_point();
        for (double x : p) out << fmt_g9(x) << ',';
        out << v.device_mac.str() << ',' << fmt_g9(v.flow_start) << '\n';
    }
    if (!out) throw IoFailure("feature cache write failed: " + path.string());
}

inline std::vector<FeatureVector> read_feature_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoFailure("cannot open feature cache: " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw ParseError("feature cache is empty: " + path.string());
    std::vector<FeatureVector> rows;
    size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != kFeatureDim + 2) {
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                             std::to_string(kFeatureDim + 2) + " columns");
        }
        Point p(kFeatureDim);
        for (size_t j = 0; j < kFeatureDim; ++j) p[j] = std::strtod(cells[j].c_str(), nullptr);
        FeatureVector v;
        v.set_from_point(p);
        auto mac = MacAddress::parse(cells[kFeatureDim]);
        if (!mac) throw ParseError(path.string() + ":" + std::to_string(lineno) + ": bad MAC");
        v.device_mac = *mac;
        v.flow_start = std::strtod(cells[kFeatureDim + 1].c_str(), nullptr);
        rows.push_back(v);
    }
    return rows;
}

struct CacheOutcome {
    std::vector<FeatureVector> features;
    bool hit = false;
    std::filesystem::path csv_path;
    std::string config_hash;
    AssemblyStats stats; // zeros on a cache hit
};

inline CacheOutcome extract_capture_cached(const std::filesystem::path& capture,
                                           const std::set<MacAddress>& devices,
                                           const ExtractionConfig& cfg,
                                           const std::filesystem::path& cache_dir) {
    std::filesystem::create_directories(cache_dir);
    uint64_t h = hash_file(capture);
    h = fnv1a(cfg.fingerprint(devices), h);
    std::string hash = hex64(h);

    std::string stem = capture.filename().string();
    auto csv_path = cache_dir / (stem + ".features.csv");
    auto meta_path = cache_dir / (stem + ".meta.json");

    CacheOutcome out;
    out.csv_path = csv_path;
    out.config_hash = hash;

    if (std::filesystem::exists(meta_path) && std::filesystem::exists(csv_path)) {
        std::ifstream mf(meta_path);
        nlohmann::json meta = nlohmann::json::parse(mf, nullptr, false);
        if (!meta.is_discarded() && meta.value("config_hash", "") == hash) {
            out.features = read_feature_csv(csv_path);
            out.hit = true;
            return out;
        }
    }

    auto packets = read_capture(capture);
    auto assembled = assemble(packets, devices, cfg.flow);
    out.stats = assembled.stats;
    auto features = extract_all(assembled.flows);
    write_feature_csv(csv_path, features);
    nlohmann::json meta = {
        {"capture", capture.filename().string()},
        {"config_hash", hash},
        {"rows", features.size()},
    };
    write_text_file(meta_path, meta.dump(2) + "\n");
    out.features = read_feature_csv(csv_path); // quantized view, same as a later hit
    return out;
}

} // namespace flowprofiler
