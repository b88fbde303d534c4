#pragma once

// Parameterized device archetypes standing in for real captures at desk
// scale: labeled flows with controllable separability, drift, and novelty
// tiers, emitted either as FlowRecords or as classic pcap bytes.
//
// Timestamps are generated on the microsecond grid in exactly the form the
// pcap reader reconstructs, so generate -> write -> ingest -> assemble is
// an identity on flow accumulators.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "flowprofiler/config.hpp"
#include "flowprofiler/errors.hpp"
#include "flowprofiler/flow.hpp"
#include "flowprofiler/pcap.hpp"
#include "flowprofiler/util.hpp"

namespace flowprofiler {

struct DeviceArchetype {
    MacAddress mac;
    std::string name;
    double iat_mu = 0.0;    // log-normal, log-seconds
    double iat_sigma = 0.5;
    std::array<double, kSizeBins> size_mix{}; // weights over the feature size bins
    double tcp_p = 1.0, udp_p = 0.0, other_p = 0.0; // per-flow protocol mix
    std::vector<std::pair<uint16_t, double>> ports; // weighted destination ports
    uint8_t ttl = 64;
    double flows_per_hour = 120.0;
    double mean_packets_per_flow = 12.0;
    std::optional<std::pair<double, double>> drift; // (d_mu, d_sigma) per simulated day

    void validate() const {
        double s = 0;
        for (double w : size_mix) {
            if (w < 0) throw ConfigError("archetype " + name + ": negative size-mix weight");
            s += w;
        }
        if (std::abs(s - 1.0) > 1e-9) throw ConfigError("archetype " + name + ": size mix must sum to 1");
        double p = tcp_p + udp_p + other_p;
        if (std::abs(p - 1.0) > 1e-9) throw ConfigError("archetype " + name + ": protocol mix must sum to 1");
        if (flows_per_hour <= 0) throw ConfigError("archetype " + name + ": flows_per_hour must be positive");
        if (mean_packets_per_flow < 1) throw ConfigError("archetype " + name + ": mean packets below 1");
        if ((tcp_p > 0 || udp_p > 0) && ports.empty()) {
            throw ConfigError("archetype " + name + ": TCP/UDP traffic needs a port profile");
        }
        double pw = 0;
        for (const auto& [port, w] : ports) {
            if (w < 0) throw ConfigError("archetype " + name + ": negative port weight");
            pw += w;
        }
        if (!ports.empty() && std::abs(pw - 1.0) > 1e-9) {
            throw ConfigError("archetype " + name + ": port weights must sum to 1");
        }
    }
};

struct GenConfig {
    double t_start = 0.0;
    double t_end = 3600.0;
    uint64_t seed = 42;
    double max_intra_iat = 50.0; // keep flows below the assembler idle timeout
    double outbound_prob = 0.65;
};

struct GeneratedFlow {
    FlowRecord record;
    std::vector<PacketRecord> packets; // timestamp order
    std::string device_name;
};

namespace synth_detail {

// Value identical to what CaptureReader computes from (sec, usec).
inline double pcap_quantize(double t) {
    double sec = std::floor(t);
    auto usec = static_cast<int64_t>(std::llround((t - sec) * 1e6));
    if (usec >= 1000000) {
        sec += 1;
        usec -= 1000000;
    }
    if (usec < 0) usec = 0;
    return sec + static_cast<double>(usec) * 1e-6;
}

inline size_t pick_weighted(std::span<const double> weights, std::mt19937_64& rng) {
    double total = 0;
    for (double w : weights) total += w;
    std::uniform_real_distribution<double> u(0.0, total);
    double r = u(rng);
    double acc = 0;
    for (size_t i = 0; i < weights.size(); ++i) {
        acc += weights[i];
        if (r <= acc) return i;
    }
    return weights.size() - 1;
}

inline uint32_t min_frame_len(uint8_t proto) {
    if (proto == 6) return 54;  // eth + ipv4 + tcp
    if (proto == 17) return 42; // eth + ipv4 + udp
    return 42;                  // eth + ipv4 + payload slack
}

inline std::pair<uint32_t, uint32_t> size_bin_range(size_t bin, uint8_t proto) {
    uint32_t lo = bin == 0 ? 0 : kSizeBinEdges[bin - 1];
    uint32_t hi = bin < kSizeBinEdges.size() ? kSizeBinEdges[bin] - 1 : 2400;
    lo = std::max(lo, min_frame_len(proto));
    if (hi < lo) hi = lo;
    return {lo, hi};
}

} // namespace synth_detail

inline std::span<const double> size_mix_span(const DeviceArchetype& a) {
    return std::span<const double>(a.size_mix.data(), a.size_mix.size());
}

// Deterministic given the seed; each archetype draws from its own
// sub-stream so the output does not depend on list order.
inline std::vector<GeneratedFlow> generate_flows(std::span<const DeviceArchetype> archetypes, const GenConfig& cfg) {
    using namespace synth_detail;
    if (archetypes.empty()) throw InvalidArgument("no archetypes");
    if (cfg.t_end <= cfg.t_start) throw InvalidArgument("empty generation window");
    for (const auto& a : archetypes) a.validate();

    std::vector<GeneratedFlow> out;
    for (size_t ai = 0; ai < archetypes.size(); ++ai) {
        const DeviceArchetype& a = archetypes[ai];
        uint64_t sub = splitmix64(cfg.seed ^ fnv1a(a.mac.str()) ^ fnv1a(fmt_g17(cfg.t_start)));
        std::mt19937_64 rng(sub);

        uint64_t h = fnv1a(a.mac.str());
        IpAddress device_ip = IpAddress::v4(192, 168, static_cast<uint8_t>(1 + (h >> 8) % 32),
                                            static_cast<uint8_t>(2 + h % 250));
        IpAddress remote_ip = IpAddress::v4(10, static_cast<uint8_t>((h >> 24) % 250),
                                            static_cast<uint8_t>((h >> 16) % 250),
                                            static_cast<uint8_t>(1 + (h >> 32) % 250));
        MacAddress remote_mac;
        remote_mac.bytes = {0x02, 0xff, static_cast<uint8_t>(h >> 24), static_cast<uint8_t>(h >> 16),
                            static_cast<uint8_t>(h >> 8), static_cast<uint8_t>(h)};

        std::vector<double> port_weights;
        for (const auto& [_, w] : a.ports) port_weights.push_back(w);
        std::array<double, 3> proto_weights = {a.tcp_p, a.udp_p, a.other_p};

        double mean_gap = 3600.0 / a.flows_per_hour;
        std::exponential_distribution<double> gap(1.0 / mean_gap);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        std::poisson_distribution<int> extra_packets(std::max(0.0, a.mean_packets_per_flow - 1.0));

        uint16_t ephemeral = 40000;
        double t = cfg.t_start + gap(rng);
        while (t < cfg.t_end) {
            double day = std::floor((t - cfg.t_start) / 86400.0);
            double mu = a.iat_mu, sigma = a.iat_sigma;
            if (a.drift) {
                mu += a.drift->first * day;
                sigma = std::max(0.01, sigma + a.drift->second * day);
            }
            std::lognormal_distribution<double> iat(mu, sigma);

            size_t proto_pick = pick_weighted(proto_weights, rng);
            uint8_t proto = proto_pick == 0 ? 6 : (proto_pick == 1 ? 17 : 1);
            uint16_t dport = 0, sport = 0;
            if (proto == 6 || proto == 17) {
                dport = a.ports[pick_weighted(port_weights, rng)].first;
                sport = ephemeral;
                ephemeral = ephemeral >= 65000 ? 40000 : static_cast<uint16_t>(ephemeral + 1);
            }

            int n_packets = 1 + extra_packets(rng);
            GeneratedFlow gf;
            gf.device_name = a.name;
            Endpoint dev_ep{device_ip, sport};
            Endpoint rem_ep{remote_ip, dport};
            gf.record.key = FlowKey::canonical(a.mac, dev_ep, rem_ep, proto);

            double pt = pcap_quantize(t);
            for (int pi = 0; pi < n_packets; ++pi) {
                bool outbound = pi == 0 ? true : unit(rng) < cfg.outbound_prob;
                PacketRecord p;
                p.timestamp = pt;
                p.ethertype = 0x0800;
                p.src_mac = outbound ? a.mac : remote_mac;
                p.dst_mac = outbound ? remote_mac : a.mac;
                p.src_ip = outbound ? device_ip : remote_ip;
                p.dst_ip = outbound ? remote_ip : device_ip;
                p.ip_ttl = a.ttl; // remote hop mirrors the device: per-flow TTL mode stays pinned
                p.protocol = proto;
                if (proto == 6 || proto == 17) {
                    p.src_port = outbound ? sport : dport;
                    p.dst_port = outbound ? dport : sport;
                }
                if (proto == 6) p.tcp_flags = 0x10;
                size_t bin = pick_weighted(size_mix_span(a), rng);
                auto [lo, hi] = size_bin_range(bin, proto);
                p.frame_len = std::uniform_int_distribution<uint32_t>(lo, hi)(rng);
                gf.record.acc.add(p, outbound);
                gf.packets.push_back(std::move(p));

                if (pi + 1 < n_packets) {
                    double g = std::clamp(iat(rng), 1e-6, cfg.max_intra_iat);
                    double nt = pcap_quantize(pt + g);
                    if (nt <= pt) nt = pcap_quantize(pt + 2e-6);
                    pt = nt;
                }
            }
            std::sort(gf.record.acc.timestamps.begin(), gf.record.acc.timestamps.end());
            out.push_back(std::move(gf));
            t += gap(rng);
        }
    }
    std::sort(out.begin(), out.end(), [](const GeneratedFlow& a, const GeneratedFlow& b) {
        if (a.record.acc.first_ts != b.record.acc.first_ts) return a.record.acc.first_ts < b.record.acc.first_ts;
        return a.record.key < b.record.key;
    });
    return out;
}

inline std::vector<FlowRecord> records_of(const std::vector<GeneratedFlow>& flows) {
    std::vector<FlowRecord> out;
    out.reserve(flows.size());
    for (const auto& f : flows) out.push_back(f.record);
    return out;
}

inline DeviceInventory inventory_of(std::span<const DeviceArchetype> archetypes) {
    DeviceInventory inv;
    for (const auto& a : archetypes) inv.names[a.mac] = a.name;
    return inv;
}

inline void write_pcap(const std::vector<GeneratedFlow>& flows, const std::filesystem::path& path) {
    if (flows.empty()) throw InvalidArgument("no flows to write");
    struct Item {
        double ts;
        size_t flow, idx;
    };
    std::vector<Item> order;
    for (size_t f = 0; f < flows.size(); ++f) {
        for (size_t i = 0; i < flows[f].packets.size(); ++i) {
            order.push_back(Item{flows[f].packets[i].timestamp, f, i});
        }
    }
    std::stable_sort(order.begin(), order.end(), [](const Item& a, const Item& b) { return a.ts < b.ts; });
    PcapWriter writer(path);
    for (const auto& it : order) {
        const PacketRecord& p = flows[it.flow].packets[it.idx];
        auto frame = encode_frame(p);
        writer.write(p.timestamp, frame);
    }
    writer.close();
}

// ---- stock corpus ---------------------------------------------------------

inline MacAddress synth_mac(uint8_t group, uint8_t idx) {
    MacAddress m;
    m.bytes = {0x02, 0x00, 0x00, 0x00, group, idx};
    return m;
}

// Five well-separated device profiles: distinct port, size mass, timing,
// and TTL signatures.
inline std::vector<DeviceArchetype> stock_archetypes() {
    std::vector<DeviceArchetype> v;
    {
        DeviceArchetype a;
        a.mac = synth_mac(1, 1);
        a.name = "cam-like";
        a.iat_mu = -3.0;
        a.iat_sigma = 0.4;
        a.size_mix = {0, 0, 0, 0, 0.1, 0.2, 0.6, 0.1};
        a.tcp_p = 1.0;
        a.udp_p = 0.0;
        a.other_p = 0.0;
        a.ports = {{443, 1.0}};
        a.ttl = 64;
        a.flows_per_hour = 720;
        a.mean_packets_per_flow = 30;
        v.push_back(a);
    }
    {
        DeviceArchetype a;
        a.mac = synth_mac(1, 2);
        a.name = "plug-like";
        a.iat_mu = 0.8;
        a.iat_sigma = 0.4;
        a.size_mix = {0.7, 0.3, 0, 0, 0, 0, 0, 0};
        a.tcp_p = 1.0;
        a.udp_p = 0.0;
        a.other_p = 0.0;
        a.ports = {{8883, 1.0}};
        a.ttl = 255;
        a.flows_per_hour = 360;
        a.mean_packets_per_flow = 8;
        v.push_back(a);
    }
    {
        DeviceArchetype a;
        a.mac = synth_mac(1, 3);
        a.name = "sensor-like";
        a.iat_mu = 1.6;
        a.iat_sigma = 0.3;
        a.size_mix = {0.9, 0.1, 0, 0, 0, 0, 0, 0};
        a.tcp_p = 0.0;
        a.udp_p = 1.0;
        a.other_p = 0.0;
        a.ports = {{5683, 1.0}};
        a.ttl = 64;
        a.flows_per_hour = 300;
        a.mean_packets_per_flow = 6;
        v.push_back(a);
    }
    {
        DeviceArchetype a;
        a.mac = synth_mac(1, 4);
        a.name = "hub-like";
        a.iat_mu = -1.0;
        a.iat_sigma = 0.5;
        a.size_mix = {0.2, 0.5, 0.3, 0, 0, 0, 0, 0};
        a.tcp_p = 0.8;
        a.udp_p = 0.2;
        a.other_p = 0.0;
        a.ports = {{8443, 1.0}};
        a.ttl = 64;
        a.flows_per_hour = 450;
        a.mean_packets_per_flow = 15;
        v.push_back(a);
    }
    {
        DeviceArchetype a;
        a.mac = synth_mac(1, 5);
        a.name = "speaker-like";
        a.iat_mu = -2.0;
        a.iat_sigma = 0.5;
        a.size_mix = {0, 0.1, 0.5, 0.4, 0, 0, 0, 0};
        a.tcp_p = 1.0;
        a.udp_p = 0.0;
        a.other_p = 0.0;
        a.ports = {{4070, 1.0}};
        a.ttl = 128;
        a.flows_per_hour = 540;
        a.mean_packets_per_flow = 20;
        v.push_back(a);
    }
    return v;
}

enum class NoveltyTier { low, medium, high };

inline NoveltyTier parse_tier(const std::string& s) {
    if (s == "low") return NoveltyTier::low;
    if (s == "medium") return NoveltyTier::medium;
    if (s == "high") return NoveltyTier::high;
    throw ConfigError("unknown novelty tier `" + s + "` (expected low|medium|high)");
}

inline std::string tier_name(NoveltyTier t) {
    switch (t) {
        case NoveltyTier::low: return "low";
        case NoveltyTier::medium: return "medium";
        default: return "high";
    }
}

// low: a clone of plug-like under a new MAC; medium: camera ports with
// shifted sizes/timing; high: disjoint everything.
inline DeviceArchetype holdout_archetype(NoveltyTier tier) {
    if (tier == NoveltyTier::low) {
        DeviceArchetype a = stock_archetypes()[1];
        a.mac = synth_mac(2, 1);
        a.name = "plug-like-b";
        return a;
    }
    if (tier == NoveltyTier::medium) {
        DeviceArchetype a;
        a.mac = synth_mac(2, 2);
        a.name = "cam-like-alt";
        a.iat_mu = -1.5;
        a.iat_sigma = 0.4;
        a.size_mix = {0, 0, 0.3, 0.5, 0.2, 0, 0, 0};
        a.tcp_p = 1.0;
        a.ports = {{443, 1.0}};
        a.ttl = 64;
        a.flows_per_hour = 420;
        a.mean_packets_per_flow = 18;
        return a;
    }
    DeviceArchetype a;
    a.mac = synth_mac(2, 3);
    a.name = "novel-device";
    a.iat_mu = 0.2;
    a.iat_sigma = 0.6;
    a.size_mix = {0, 0, 0.2, 0, 0, 0, 0, 0.8};
    a.tcp_p = 0.0;
    a.udp_p = 1.0;
    a.other_p = 0.0;
    a.ports = {{61613, 1.0}};
    a.ttl = 32;
    a.flows_per_hour = 600;
    a.mean_packets_per_flow = 10;
    return a;
}

// Diffuse profiles that scatter across feature space: wide timing, flat
// size mixtures, and a large weakly-weighted port set per archetype.
inline std::vector<DeviceArchetype> background_archetypes(size_t count, double flows_per_hour) {
    static constexpr std::array<uint8_t, 6> ttls = {32, 64, 100, 128, 200, 255};
    std::vector<DeviceArchetype> v;
    for (size_t i = 0; i < count; ++i) {
        DeviceArchetype a;
        a.mac = synth_mac(9, static_cast<uint8_t>(1 + i));
        a.name = "background-" + std::to_string(i);
        std::mt19937_64 rng(splitmix64(0x6261636bULL + i));
        a.iat_mu = -2.0 + 3.5 * std::uniform_real_distribution<double>(0, 1)(rng);
        a.iat_sigma = 1.2;
        double rest = 1.0;
        for (size_t b = 0; b + 1 < kSizeBins; ++b) {
            double w = std::uniform_real_distribution<double>(0.05, 0.2)(rng);
            w = std::min(w, rest);
            a.size_mix[b] = w;
            rest -= w;
        }
        a.size_mix[kSizeBins - 1] = rest;
        a.tcp_p = 0.5;
        a.udp_p = 0.45;
        a.other_p = 0.05;
        std::uniform_int_distribution<uint16_t> portd(1024, 49151);
        for (int k = 0; k < 24; ++k) a.ports.emplace_back(portd(rng), 1.0 / 24.0);
        a.ttl = ttls[i % ttls.size()];
        a.flows_per_hour = flows_per_hour;
        a.mean_packets_per_flow = 10;
        v.push_back(a);
    }
    return v;
}

// ---- archetypes from config ------------------------------------------------

inline DeviceArchetype archetype_from_config(const ConfigView& t) {
    DeviceArchetype a;
    auto mac = MacAddress::parse(t.get_string("mac"));
    if (!mac) throw ConfigError("archetype: bad MAC `" + t.get_string("mac") + "`");
    a.mac = *mac;
    a.name = t.get_string("name");
    a.iat_mu = t.get_double("iat_mu", 0.0);
    a.iat_sigma = t.get_double("iat_sigma", 0.5);
    auto mix = t.get_double_array("size_mix");
    if (!mix.empty()) {
        if (mix.size() != kSizeBins) throw ConfigError("archetype " + a.name + ": size_mix needs 8 weights");
        std::copy(mix.begin(), mix.end(), a.size_mix.begin());
    } else {
        a.size_mix = {0.5, 0.5, 0, 0, 0, 0, 0, 0};
    }
    a.tcp_p = t.get_double("tcp", 1.0);
    a.udp_p = t.get_double("udp", 0.0);
    a.other_p = t.get_double("other", 0.0);
    auto ports = t.get_double_array("ports");
    auto weights = t.get_double_array("port_weights");
    if (!ports.empty()) {
        if (!weights.empty() && weights.size() != ports.size()) {
            throw ConfigError("archetype " + a.name + ": port_weights length differs from ports");
        }
        for (size_t i = 0; i < ports.size(); ++i) {
            double w = weights.empty() ? 1.0 / static_cast<double>(ports.size()) : weights[i];
            a.ports.emplace_back(static_cast<uint16_t>(ports[i]), w);
        }
    }
    a.ttl = static_cast<uint8_t>(t.get_int("ttl", 64));
    a.flows_per_hour = t.get_double("flows_per_hour", 120.0);
    a.mean_packets_per_flow = t.get_double("mean_packets", 12.0);
    if (t.has("drift_mu_per_day") || t.has("drift_sigma_per_day")) {
        a.drift = {t.get_double("drift_mu_per_day", 0.0), t.get_double("drift_sigma_per_day", 0.0)};
    }
    a.validate();
    return a;
}

} // namespace flowprofiler
