#pragma once

// Classic libpcap file support: 24-byte global header, 16-byte per-packet
// headers, microsecond or nanosecond timestamps, either byte order.
// pcapng is deliberately not handled.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <vector>

#include "flowprofiler/errors.hpp"
#include "flowprofiler/types.hpp"

namespace flowprofiler {

struct PacketRecord {
    double timestamp = 0.0; // seconds since epoch, fractional part kept
    MacAddress src_mac;
    MacAddress dst_mac;
    uint16_t ethertype = 0;
    std::optional<IpAddress> src_ip;
    std::optional<IpAddress> dst_ip;
    std::optional<uint8_t> ip_ttl; // v4 TTL or v6 hop limit
    std::optional<uint8_t> protocol;
    std::optional<uint16_t> src_port;
    std::optional<uint16_t> dst_port;
    uint32_t frame_len = 0; // bytes on wire
    std::optional<uint8_t> tcp_flags;

    bool operator==(const PacketRecord&) const = default;
};

namespace detail {

inline uint16_t rd16be(const uint8_t* p) {
    return static_cast<uint16_t>((p[0] << 8) | p[1]);
}
inline uint32_t rd32(const uint8_t* p, bool swap) {
    uint32_t v;
    std::memcpy(&v, p, 4);
    if (swap) v = __builtin_bswap32(v);
    return v;
}
inline uint16_t rd16(const uint8_t* p, bool swap) {
    uint16_t v;
    std::memcpy(&v, p, 2);
    if (swap) v = __builtin_bswap16(v);
    return v;
}

// Walks IPv6 extension headers far enough to find the transport protocol.
inline bool is_v6_extension(uint8_t h) {
    return h == 0 || h == 43 || h == 60; // hop-by-hop, routing, dstopts
}

} // namespace detail

// Decodes one Ethernet frame. Everything below the link layer degrades to
// absent fields instead of failing; only a frame shorter than the 14-byte
// Ethernet header is an error.
inline PacketRecord decode_frame(std::span<const uint8_t> raw, double ts, uint32_t wire_len = 0) {
    if (raw.size() < 14) throw FrameTooShort("frame shorter than Ethernet header");

    PacketRecord rec;
    rec.timestamp = ts;
    rec.frame_len = wire_len ? wire_len : static_cast<uint32_t>(raw.size());
    for (int i = 0; i < 6; ++i) rec.dst_mac.bytes[i] = raw[i];
    for (int i = 0; i < 6; ++i) rec.src_mac.bytes[i] = raw[6 + i];

    size_t off = 12;
    uint16_t etype = detail::rd16be(raw.data() + off);
    off += 2;
    while (etype == 0x8100) { // 802.1Q, possibly stacked
        if (off + 4 > raw.size()) {
            rec.ethertype = etype;
            return rec;
        }
        etype = detail::rd16be(raw.data() + off + 2);
        off += 4;
    }
    rec.ethertype = etype;

    bool ports_allowed = false; // first fragment only
    size_t l4 = 0;

    if (etype == 0x0800) { // IPv4
        if (off + 20 > raw.size()) return rec;
        const uint8_t* ip = raw.data() + off;
        if ((ip[0] >> 4) != 4) return rec;
        size_t ihl = static_cast<size_t>(ip[0] & 0x0f) * 4;
        if (ihl < 20 || off + ihl > raw.size()) return rec;
        rec.ip_ttl = ip[8];
        rec.protocol = ip[9];
        rec.src_ip = IpAddress::v4_from(ip + 12);
        rec.dst_ip = IpAddress::v4_from(ip + 16);
        uint16_t frag = detail::rd16be(ip + 6);
        ports_allowed = (frag & 0x1fff) == 0;
        l4 = off + ihl;
    } else if (etype == 0x86dd) { // IPv6
        if (off + 40 > raw.size()) return rec;
        const uint8_t* ip = raw.data() + off;
        if ((ip[0] >> 4) != 6) return rec;
        rec.ip_ttl = ip[7]; // hop limit
        rec.src_ip = IpAddress::v6_from(ip + 8);
        rec.dst_ip = IpAddress::v6_from(ip + 24);
        uint8_t next = ip[6];
        size_t pos = off + 40;
        ports_allowed = true;
        for (int hop = 0; hop < 8 && detail::is_v6_extension(next); ++hop) {
            if (pos + 8 > raw.size()) {
                rec.protocol = next;
                return rec;
            }
            uint8_t nn = raw[pos];
            pos += 8 + static_cast<size_t>(raw[pos + 1]) * 8;
            next = nn;
            if (pos > raw.size()) {
                rec.protocol = next;
                return rec;
            }
        }
        if (next == 44) { // fragment header
            if (pos + 8 > raw.size()) {
                rec.protocol = next;
                return rec;
            }
            uint16_t fo = detail::rd16be(raw.data() + pos + 2);
            ports_allowed = (fo & 0xfff8) == 0;
            next = raw[pos];
            pos += 8;
        }
        rec.protocol = next;
        l4 = pos;
    } else {
        return rec; // ARP and friends: link-layer fields only
    }

    if (!ports_allowed || !rec.protocol) return rec;
    if (*rec.protocol == 6) { // TCP: require the 20-byte fixed header
        if (l4 + 20 > raw.size()) return rec;
        rec.src_port = detail::rd16be(raw.data() + l4);
        rec.dst_port = detail::rd16be(raw.data() + l4 + 2);
        rec.tcp_flags = raw[l4 + 13];
    } else if (*rec.protocol == 17) { // UDP
        if (l4 + 8 > raw.size()) return rec;
        rec.src_port = detail::rd16be(raw.data() + l4);
        rec.dst_port = detail::rd16be(raw.data() + l4 + 2);
    }
    return rec;
}

// Builds an Ethernet/IPv4 frame that decode_frame maps back onto the given
// record, zero-padded to frame_len bytes. Used by the traffic synthesizer.
// Checksums are left zero; nothing downstream reads them.
inline std::vector<uint8_t> encode_frame(const PacketRecord& rec) {
    if (rec.ethertype != 0x0800 || !rec.src_ip || !rec.dst_ip || rec.src_ip->v6) {
        throw InvalidArgument("encode_frame handles IPv4 frames only");
    }
    uint8_t proto = rec.protocol.value_or(0);
    size_t l4_len = proto == 6 ? 20 : (proto == 17 ? 8 : 0);
    size_t min_len = 14 + 20 + l4_len;
    if (rec.frame_len < min_len) {
        throw InvalidArgument("frame_len below header size");
    }
    std::vector<uint8_t> f(rec.frame_len, 0);
    for (int i = 0; i < 6; ++i) f[i] = rec.dst_mac.bytes[i];
    for (int i = 0; i < 6; ++i) f[6 + i] = rec.src_mac.bytes[i];
    f[12] = 0x08;
    f[13] = 0x00;
    uint8_t* ip = f.data() + 14;
    ip[0] = 0x45;
    uint16_t total = static_cast<uint16_t>(rec.frame_len - 14);
    ip[2] = static_cast<uint8_t>(total >> 8);
    ip[3] = static_cast<uint8_t>(total & 0xff);
    ip[8] = rec.ip_ttl.value_or(64);
    ip[9] = proto;
    for (int i = 0; i < 4; ++i) ip[12 + i] = rec.src_ip->bytes[i];
    for (int i = 0; i < 4; ++i) ip[16 + i] = rec.dst_ip->bytes[i];
    uint8_t* l4 = ip + 20;
    if (proto == 6) {
        l4[0] = static_cast<uint8_t>(*rec.src_port >> 8);
        l4[1] = static_cast<uint8_t>(*rec.src_port & 0xff);
        l4[2] = static_cast<uint8_t>(*rec.dst_port >> 8);
        l4[3] = static_cast<uint8_t>(*rec.dst_port & 0xff);
        l4[12] = 0x50; // data offset 5
        l4[13] = rec.tcp_flags.value_or(0x10);
    } else if (proto == 17) {
        l4[0] = static_cast<uint8_t>(*rec.src_port >> 8);
        l4[1] = static_cast<uint8_t>(*rec.src_port & 0xff);
        l4[2] = static_cast<uint8_t>(*rec.dst_port >> 8);
        l4[3] = static_cast<uint8_t>(*rec.dst_port & 0xff);
        uint16_t ulen = static_cast<uint16_t>(rec.frame_len - 34);
        l4[4] = static_cast<uint8_t>(ulen >> 8);
        l4[5] = static_cast<uint8_t>(ulen & 0xff);
    }
    return f;
}

class CaptureReader {
public:
    explicit CaptureReader(const std::filesystem::path& path) : in_(path, std::ios::binary), path_(path.string()) {
        if (!in_) throw IoFailure("cannot open capture: " + path_);
        uint8_t hdr[24];
        in_.read(reinterpret_cast<char*>(hdr), 24);
        if (in_.gcount() != 24) throw TruncatedHeader("global header truncated: " + path_);
        uint32_t magic;
        std::memcpy(&magic, hdr, 4);
        switch (magic) {
            case 0xa1b2c3d4u: swap_ = false; nanos_ = false; break;
            case 0xd4c3b2a1u: swap_ = true;  nanos_ = false; break;
            case 0xa1b23c4du: swap_ = false; nanos_ = true;  break;
            case 0x4d3cb2a1u: swap_ = true;  nanos_ = true;  break;
            case 0x0a0d0d0au: throw UnsupportedFormat("pcapng is not supported: " + path_);
            default: throw UnsupportedFormat("unknown capture magic: " + path_);
        }
        snaplen_ = detail::rd32(hdr + 16, swap_);
        uint32_t linktype = detail::rd32(hdr + 20, swap_);
        if (linktype != 1) throw UnsupportedFormat("non-Ethernet linktype " + std::to_string(linktype) + ": " + path_);
    }

    // nullopt at clean EOF. Sub-Ethernet frames are skipped and counted.
    std::optional<PacketRecord> next() {
        for (;;) {
            uint8_t hdr[16];
            in_.read(reinterpret_cast<char*>(hdr), 16);
            if (in_.gcount() == 0 && in_.eof()) return std::nullopt;
            if (in_.gcount() != 16) throw TruncatedHeader("packet header truncated: " + path_);
            uint32_t sec = detail::rd32(hdr, swap_);
            uint32_t frac = detail::rd32(hdr + 4, swap_);
            uint32_t incl = detail::rd32(hdr + 8, swap_);
            uint32_t orig = detail::rd32(hdr + 12, swap_);
            if (incl > kMaxFrame) throw TruncatedHeader("implausible captured length: " + path_);
            buf_.resize(incl);
            in_.read(reinterpret_cast<char*>(buf_.data()), incl);
            if (static_cast<uint32_t>(in_.gcount()) != incl) throw TruncatedHeader("packet data truncated: " + path_);
            double ts = static_cast<double>(sec) + static_cast<double>(frac) * (nanos_ ? 1e-9 : 1e-6);
            if (incl < 14) {
                ++skipped_short_;
                continue;
            }
            ++packets_read_;
            return decode_frame(std::span<const uint8_t>(buf_.data(), buf_.size()), ts, orig ? orig : incl);
        }
    }

    uint64_t packets_read() const { return packets_read_; }
    uint64_t skipped_short() const { return skipped_short_; }
    uint32_t snaplen() const { return snaplen_; }

private:
    static constexpr uint32_t kMaxFrame = 1u << 26;
    std::ifstream in_;
    std::string path_;
    std::vector<uint8_t> buf_;
    bool swap_ = false;
    bool nanos_ = false;
    uint32_t snaplen_ = 0;
    uint64_t packets_read_ = 0;
    uint64_t skipped_short_ = 0;
};

inline std::vector<PacketRecord> read_capture(const std::filesystem::path& path) {
    CaptureReader reader(path);
    std::vector<PacketRecord> out;
    while (auto rec = reader.next()) out.push_back(std::move(*rec));
    return out;
}

// Writes native-order microsecond pcap. Timestamps are quantized to the
// microsecond grid; the synthesizer generates on that grid so the
// write/read round trip is exact.
class PcapWriter {
public:
    explicit PcapWriter(const std::filesystem::path& path, uint32_t snaplen = 65535)
        : out_(path, std::ios::binary), path_(path.string()) {
        if (!out_) throw IoFailure("cannot open pcap for writing: " + path_);
        uint8_t hdr[24] = {0};
        uint32_t magic = 0xa1b2c3d4u;
        std::memcpy(hdr, &magic, 4);
        hdr[4] = 2; // version 2.4
        hdr[6] = 4;
        std::memcpy(hdr + 16, &snaplen, 4);
        uint32_t linktype = 1;
        std::memcpy(hdr + 20, &linktype, 4);
        out_.write(reinterpret_cast<const char*>(hdr), 24);
    }

    void write(double ts, std::span<const uint8_t> frame) {
        uint32_t sec = static_cast<uint32_t>(std::floor(ts));
        auto usec = static_cast<int64_t>(std::llround((ts - sec) * 1e6));
        if (usec >= 1000000) {
            ++sec;
            usec -= 1000000;
        }
        if (usec < 0) usec = 0;
        uint32_t hdr[4] = {sec, static_cast<uint32_t>(usec),
                           static_cast<uint32_t>(frame.size()), static_cast<uint32_t>(frame.size())};
        out_.write(reinterpret_cast<const char*>(hdr), 16);
        out_.write(reinterpret_cast<const char*>(frame.data()), static_cast<std::streamsize>(frame.size()));
        if (!out_) throw IoFailure("pcap write failed: " + path_);
    }

    void close() {
        out_.flush();
        if (!out_) throw IoFailure("pcap flush failed: " + path_);
        out_.close();
    }

private:
    std::ofstream out_;
    std::string path_;
};

} // namespace flowprofiler
