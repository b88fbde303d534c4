#pragma once

// Groups monitored-device packets into bidirectional flows bounded by an
// idle timeout. A packet between two monitored devices contributes to one
// flow per device.

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "flowprofiler/errors.hpp"
#include "flowprofiler/pcap.hpp"
#include "flowprofiler/types.hpp"

namespace flowprofiler {

// Packet-size histogram edges, bytes on wire: powers of two up to the
// Ethernet MTU, with a 1280/1514 split for the near-full frames.
inline constexpr std::array<uint32_t, 7> kSizeBinEdges = {64, 128, 256, 512, 1024, 1280, 1514};
inline constexpr size_t kSizeBins = 8;

inline size_t size_bin_index(uint32_t frame_len) {
    size_t i = 0;
    while (i < kSizeBinEdges.size() && frame_len >= kSizeBinEdges[i]) ++i;
    return i;
}

struct Endpoint {
    std::optional<IpAddress> ip; // absent for non-IP traffic
    uint16_t port = 0;           // 0 when the transport has no ports

    auto operator<=>(const Endpoint&) const = default;
};

struct FlowKey {
    MacAddress device_mac; // the monitored side
    Endpoint endpoint_a;   // endpoint_a <= endpoint_b
    Endpoint endpoint_b;
    uint8_t protocol = 0;

    auto operator<=>(const FlowKey&) const = default;

    static FlowKey canonical(const MacAddress& device, Endpoint x, Endpoint y, uint8_t proto) {
        if (y < x) std::swap(x, y);
        return FlowKey{device, std::move(x), std::move(y), proto};
    }
};

struct FlowAccumulator {
    double first_ts = 0.0;
    double last_ts = 0.0;
    std::vector<double> timestamps; // sorted when the flow is closed
    std::array<uint64_t, kSizeBins> size_bins{};
    std::map<uint8_t, uint64_t> ttl_counts;
    uint64_t tcp_count = 0;
    uint64_t udp_count = 0;
    uint64_t total_packets = 0;
    uint64_t total_bytes = 0;
    uint64_t outbound_packets = 0;              // device -> remote
    std::map<uint16_t, uint64_t> dst_port_counts; // device -> remote only

    void add(const PacketRecord& p, bool outbound) {
        if (total_packets == 0) {
            first_ts = last_ts = p.timestamp;
        } else {
            first_ts = std::min(first_ts, p.timestamp);
            last_ts = std::max(last_ts, p.timestamp);
        }
        timestamps.push_back(p.timestamp);
        ++size_bins[size_bin_index(p.frame_len)];
        if (p.ip_ttl) ++ttl_counts[*p.ip_ttl];
        if (p.protocol) {
            if (*p.protocol == 6) ++tcp_count;
            else if (*p.protocol == 17) ++udp_count;
        }
        ++total_packets;
        total_bytes += p.frame_len;
        if (outbound) {
            ++outbound_packets;
            if (p.dst_port) ++dst_port_counts[*p.dst_port];
        }
    }

    bool operator==(const FlowAccumulator&) const = default;
};

struct FlowRecord {
    FlowKey key;
    FlowAccumulator acc;

    bool operator==(const FlowRecord&) const = default;
};

struct AssemblyStats {
    uint64_t device_packets = 0; // one count per (packet, monitored device) pair
    uint64_t dropped_out_of_order = 0;
    uint64_t forced_closes = 0;
};

class FlowAssembler {
public:
    struct Config {
        double idle_timeout = 60.0;
        double reorder_tolerance = 1.0;
        size_t per_flow_packet_cap = 100000;
    };

    explicit FlowAssembler(std::set<MacAddress> device_macs)
        : FlowAssembler(std::move(device_macs), Config{}) {}

    FlowAssembler(std::set<MacAddress> device_macs, Config cfg)
        : devices_(std::move(device_macs)), cfg_(cfg) {
        if (devices_.empty()) throw InvalidArgument("device MAC set is empty");
    }

    void push(const PacketRecord& p) {
        if (devices_.count(p.src_mac)) add_for_device(p, p.src_mac, true);
        if (p.dst_mac != p.src_mac && devices_.count(p.dst_mac)) add_for_device(p, p.dst_mac, false);
    }

    // Closes every open flow; final batch is ordered by (first_ts, key).
    void finish() {
        std::vector<std::pair<FlowKey, FlowAccumulator>> rest;
        rest.reserve(open_.size());
        for (auto& [key, acc] : open_) rest.emplace_back(key, std::move(acc));
        open_.clear();
        std::sort(rest.begin(), rest.end(), [](const auto& a, const auto& b) {
            if (a.second.first_ts != b.second.first_ts) return a.second.first_ts < b.second.first_ts;
            return a.first < b.first;
        });
        for (auto& [key, acc] : rest) emit(key, std::move(acc));
    }

    std::vector<FlowRecord> take_closed() { return std::exchange(closed_, {}); }

    const AssemblyStats& stats() const { return stats_; }

private:
    void add_for_device(const PacketRecord& p, const MacAddress& device, bool outbound) {
        ++stats_.device_packets;
        double& dev_clock = device_clock_[device];
        if (p.timestamp < dev_clock - cfg_.reorder_tolerance) {
            ++stats_.dropped_out_of_order;
            return;
        }
        dev_clock = std::max(dev_clock, p.timestamp);

        Endpoint src{p.src_ip, p.src_port.value_or(0)};
        Endpoint dst{p.dst_ip, p.dst_port.value_or(0)};
        FlowKey key = FlowKey::canonical(device, src, dst, p.protocol.value_or(0));

        auto it = open_.find(key);
        if (it != open_.end() && p.timestamp - it->second.last_ts > cfg_.idle_timeout) {
            emit(key, std::move(it->second));
            open_.erase(it);
            it = open_.end();
        }
        if (it == open_.end()) it = open_.emplace(key, FlowAccumulator{}).first;
        it->second.add(p, outbound);
        if (it->second.total_packets >= cfg_.per_flow_packet_cap) {
            ++stats_.forced_closes;
            emit(key, std::move(it->second));
            open_.erase(it);
        }
    }

    void emit(const FlowKey& key, FlowAccumulator acc) {
        std::sort(acc.timestamps.begin(), acc.timestamps.end());
        closed_.push_back(FlowRecord{key, std::move(acc)});
    }

    std::set<MacAddress> devices_;
    Config cfg_;
    std::map<FlowKey, FlowAccumulator> open_;
    std::map<MacAddress, double> device_clock_;
    std::vector<FlowRecord> closed_;
    AssemblyStats stats_;
};

struct AssemblyResult {
    std::vector<FlowRecord> flows;
    AssemblyStats stats;
};

inline AssemblyResult assemble(const std::vector<PacketRecord>& packets,
                               const std::set<MacAddress>& device_macs,
                               FlowAssembler::Config cfg = {}) {
    FlowAssembler asmblr(device_macs, cfg);
    for (const auto& p : packets) asmblr.push(p);
    asmblr.finish();
    return AssemblyResult{asmblr.take_closed(), asmblr.stats()};
}

inline std::pair<std::vector<FlowRecord>, std::vector<FlowRecord>>
split_train_stream(const std::vector<FlowRecord>& flows, double cutoff) {
    std::vector<FlowRecord> baseline, stream;
    for (const auto& f : flows) {
        (f.acc.first_ts < cutoff ? baseline : stream).push_back(f);
    }
    return {std::move(baseline), std::move(stream)};
}

// Device label inventory: CSV with header `mac,device_name`.
struct DeviceInventory {
    std::map<MacAddress, std::string> names;

    std::set<MacAddress> macs() const {
        std::set<MacAddress> out;
        for (const auto& [mac, _] : names) out.insert(mac);
        return out;
    }

    static DeviceInventory load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw IoFailure("cannot open label inventory: " + path.string());
        DeviceInventory inv;
        std::string line;
        size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            auto comma = line.find(',');
            if (comma == std::string::npos) {
                throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected `mac,device_name`");
            }
            std::string mac_s = line.substr(0, comma);
            std::string name = line.substr(comma + 1);
            if (lineno == 1 && mac_s == "mac") continue;
            auto mac = MacAddress::parse(mac_s);
            if (!mac) {
                throw ParseError(path.string() + ":" + std::to_string(lineno) + ": bad MAC `" + mac_s + "`");
            }
            inv.names[*mac] = name;
        }
        if (inv.names.empty()) throw ParseError("label inventory is empty: " + path.string());
        return inv;
    }

    void save(const std::filesystem::path& path) const {
        std::ofstream out(path);
        if (!out) throw IoFailure("cannot write label inventory: " + path.string());
        out << "mac,device_name\n";
        for (const auto& [mac, name] : names) out << mac.str() << "," << name << "\n";
    }
};

} // namespace flowprofiler
