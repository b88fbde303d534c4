#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

namespace flowprofiler {

using Point = std::vector<double>;

struct MacAddress {
    std::array<uint8_t, 6> bytes{};

    auto operator<=>(const MacAddress&) const = default;

    std::string str() const {
        char buf[18];
        std::snprintf(buf, sizeof(buf), "%02x:%02x:%02x:%02x:%02x:%02x",
                      bytes[0], bytes[1], bytes[2], bytes[3], bytes[4], bytes[5]);
        return std::string(buf);
    }

    static std::optional<MacAddress> parse(const std::string& s) {
        MacAddress m;
        unsigned v[6];
        if (std::sscanf(s.c_str(), "%2x:%2x:%2x:%2x:%2x:%2x",
                        &v[0], &v[1], &v[2], &v[3], &v[4], &v[5]) != 6) {
            return std::nullopt;
        }
        for (int i = 0; i < 6; ++i) m.bytes[i] = static_cast<uint8_t>(v[i]);
        return m;
    }
};

// v4 addresses occupy the first 4 bytes; the flag keeps the two families
// from ever comparing equal.
struct IpAddress {
    bool v6 = false;
    std::array<uint8_t, 16> bytes{};

    auto operator<=>(const IpAddress&) const = default;

    static IpAddress v4_from(const uint8_t* p) {
        IpAddress a;
        for (int i = 0; i < 4; ++i) a.bytes[i] = p[i];
        return a;
    }
    static IpAddress v6_from(const uint8_t* p) {
        IpAddress a;
        a.v6 = true;
        for (int i = 0; i < 16; ++i) a.bytes[i] = p[i];
        return a;
    }
    static IpAddress v4(uint8_t a, uint8_t b, uint8_t c, uint8_t d) {
        uint8_t raw[4] = {a, b, c, d};
        return v4_from(raw);
    }

    std::string str() const {
        char buf[64];
        if (!v6) {
            std::snprintf(buf, sizeof(buf), "%u.%u.%u.%u", bytes[0], bytes[1], bytes[2], bytes[3]);
        } else {
            std::snprintf(buf, sizeof(buf),
                          "%02x%02x:%02x%02x:%02x%02x:%02x%02x:%02x%02x:%02x%02x:%02x%02x:%02x%02x",
                          bytes[0], bytes[1], bytes[2], bytes[3], bytes[4], bytes[5], bytes[6], bytes[7],
                          bytes[8], bytes[9], bytes[10], bytes[11], bytes[12], bytes[13], bytes[14], bytes[15]);
        }
        return std::string(buf);
    }
};

} // namespace flowprofiler
