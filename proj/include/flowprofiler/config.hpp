#pragma once

// Declarative config files: a TOML subset covering what the toolkit needs.
// Supported: [section] and [[array-of-tables]] headers with dotted names,
// bare/dotted keys, strings with the usual escapes, integers, floats,
// booleans, and single-line arrays. Anything fancier is rejected loudly.

#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "flowprofiler/errors.hpp"

namespace flowprofiler {

class ConfigValue;
using ConfigArray = std::vector<ConfigValue>;
using ConfigTable = std::map<std::string, ConfigValue>;

class ConfigValue {
public:
    using Storage = std::variant<std::monostate, bool, int64_t, double, std::string, ConfigArray, ConfigTable>;

    ConfigValue() = default;
    ConfigValue(bool v) : v_(v) {}
    ConfigValue(int64_t v) : v_(v) {}
    ConfigValue(double v) : v_(v) {}
    ConfigValue(std::string v) : v_(std::move(v)) {}
    ConfigValue(ConfigArray v) : v_(std::move(v)) {}
    ConfigValue(ConfigTable v) : v_(std::move(v)) {}

    bool is_table() const { return std::holds_alternative<ConfigTable>(v_); }
    bool is_array() const { return std::holds_alternative<ConfigArray>(v_); }
    bool is_string() const { return std::holds_alternative<std::string>(v_); }
    bool is_bool() const { return std::holds_alternative<bool>(v_); }
    bool is_number() const {
        return std::holds_alternative<int64_t>(v_) || std::holds_alternative<double>(v_);
    }

    ConfigTable& table() { return std::get<ConfigTable>(v_); }
    const ConfigTable& table() const { return std::get<ConfigTable>(v_); }
    ConfigArray& array() { return std::get<ConfigArray>(v_); }
    const ConfigArray& array() const { return std::get<ConfigArray>(v_); }
    const std::string& str() const { return std::get<std::string>(v_); }
    bool boolean() const { return std::get<bool>(v_); }
    double number() const {
        if (auto* i = std::get_if<int64_t>(&v_)) return static_cast<double>(*i);
        return std::get<double>(v_);
    }
    int64_t integer() const {
        if (auto* d = std::get_if<double>(&v_)) return static_cast<int64_t>(*d);
        return std::get<int64_t>(v_);
    }

private:
    Storage v_;
};

namespace detail {

inline std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline bool bare_key_ok(const std::string& k) {
    if (k.empty()) return false;
    for (char c : k) {
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-') return false;
    }
    return true;
}

inline std::vector<std::string> split_path(const std::string& dotted, const std::string& where) {
    std::vector<std::string> parts;
    std::stringstream ss(dotted);
    std::string part;
    while (std::getline(ss, part, '.')) {
        part = trim(part);
        if (!bare_key_ok(part)) throw ConfigError(where + ": bad key `" + dotted + "`");
        parts.push_back(part);
    }
    if (parts.empty()) throw ConfigError(where + ": empty key");
    return parts;
}

struct ValueParser {
    const std::string& s;
    size_t pos = 0;
    const std::string& where;

    void skip_ws() {
        while (pos < s.size() && (s[pos] == ' ' || s[pos] == '\t')) ++pos;
    }

    ConfigValue parse() {
        skip_ws();
        if (pos >= s.size()) throw ConfigError(where + ": missing value");
        char c = s[pos];
        if (c == '"') return parse_string();
        if (c == '[') return parse_array();
        return parse_scalar();
    }

    ConfigValue parse_string() {
        ++pos;
        std::string out;
        while (pos < s.size() && s[pos] != '"') {
            char c = s[pos++];
            if (c == '\\') {
                if (pos >= s.size()) throw ConfigError(where + ": dangling escape");
                char e = s[pos++];
                switch (e) {
                    case 'n': out += '\n'; break;
                    case 't': out += '\t'; break;
                    case 'r': out += '\r'; break;
                    case '"': out += '"'; break;
                    case '\\': out += '\\'; break;
                    default: throw ConfigError(where + ": unsupported escape \\" + std::string(1, e));
                }
            } else {
                out += c;
            }
        }
        if (pos >= s.size()) throw ConfigError(where + ": unterminated string");
        ++pos;
        return ConfigValue(std::move(out));
    }

    ConfigValue parse_array() {
        ++pos;
        ConfigArray arr;
        skip_ws();
        if (pos < s.size() && s[pos] == ']') {
            ++pos;
            return ConfigValue(std::move(arr));
        }
        for (;;) {
            arr.push_back(parse());
            skip_ws();
            if (pos < s.size() && s[pos] == ',') {
                ++pos;
                skip_ws();
                if (pos < s.size() && s[pos] == ']') { // trailing comma
                    ++pos;
                    return ConfigValue(std::move(arr));
                }
                continue;
            }
            if (pos < s.size() && s[pos] == ']') {
                ++pos;
                return ConfigValue(std::move(arr));
            }
            throw ConfigError(where + ": expected `,` or `]` in array");
        }
    }

    ConfigValue parse_scalar() {
        size_t start = pos;
        while (pos < s.size() && s[pos] != ',' && s[pos] != ']' && s[pos] != ' ' && s[pos] != '\t') ++pos;
        std::string tok = s.substr(start, pos - start);
        if (tok == "true") return ConfigValue(true);
        if (tok == "false") return ConfigValue(false);
        bool floaty = tok.find_first_of(".eE") != std::string::npos;
        try {
            size_t used = 0;
            if (floaty) {
                double d = std::stod(tok, &used);
                if (used == tok.size()) return ConfigValue(d);
            } else {
                int64_t i = std::stoll(tok, &used);
                if (used == tok.size()) return ConfigValue(i);
            }
        } catch (const std::exception&) {
        }
        throw ConfigError(where + ": cannot parse value `" + tok + "`");
    }
};

// Strips a # comment, ignoring # inside strings.
inline std::string strip_comment(const std::string& line) {
    bool in_str = false;
    for (size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (c == '"' && (i == 0 || line[i - 1] != '\\')) in_str = !in_str;
        if (c == '#' && !in_str) return line.substr(0, i);
    }
    return line;
}

inline ConfigTable* descend(ConfigTable& root, const std::vector<std::string>& path, const std::string& where) {
    ConfigTable* cur = &root;
    for (const auto& part : path) {
        auto it = cur->find(part);
        if (it == cur->end()) {
            it = cur->emplace(part, ConfigValue(ConfigTable{})).first;
        }
        if (it->second.is_array()) { // descend into the latest array-of-tables element
            auto& arr = it->second.array();
            if (arr.empty() || !arr.back().is_table()) {
                throw ConfigError(where + ": `" + part + "` is not a table");
            }
            cur = &arr.back().table();
        } else if (it->second.is_table()) {
            cur = &it->second.table();
        } else {
            throw ConfigError(where + ": `" + part + "` is not a table");
        }
    }
    return cur;
}

} // namespace detail

inline ConfigTable parse_config(std::istream& in, const std::string& name) {
    ConfigTable root;
    ConfigTable* current = &root;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string where = name + ":" + std::to_string(lineno);
        line = detail::trim(detail::strip_comment(line));
        if (line.empty()) continue;

        if (line.front() == '[') {
            bool array = line.size() > 1 && line[1] == '[';
            std::string closer = array ? "]]" : "]";
            size_t end = line.rfind(closer);
            if (end == std::string::npos || end + closer.size() != line.size()) {
                throw ConfigError(where + ": malformed section header");
            }
            std::string inner = detail::trim(line.substr(array ? 2 : 1, end - (array ? 2 : 1)));
            auto path = detail::split_path(inner, where);
            if (array) {
                ConfigTable* parent = detail::descend(root, {path.begin(), path.end() - 1}, where);
                auto it = parent->find(path.back());
                if (it == parent->end()) {
                    it = parent->emplace(path.back(), ConfigValue(ConfigArray{})).first;
                }
                if (!it->second.is_array()) throw ConfigError(where + ": `" + path.back() + "` is not an array of tables");
                it->second.array().push_back(ConfigValue(ConfigTable{}));
                current = &it->second.array().back().table();
            } else {
                current = detail::descend(root, path, where);
            }
            continue;
        }

        size_t eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(where + ": expected `key = value`");
        auto path = detail::split_path(detail::trim(line.substr(0, eq)), where);
        std::string rhs = detail::trim(line.substr(eq + 1));
        detail::ValueParser vp{rhs, 0, where};
        ConfigValue value = vp.parse();
        vp.skip_ws();
        if (vp.pos != rhs.size()) throw ConfigError(where + ": trailing characters after value");

        ConfigTable* dst = current;
        if (path.size() > 1) dst = detail::descend(*current, {path.begin(), path.end() - 1}, where);
        if (dst->count(path.back())) throw ConfigError(where + ": duplicate key `" + path.back() + "`");
        dst->emplace(path.back(), std::move(value));
    }
    return root;
}

inline ConfigTable load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    return parse_config(in, path.filename().string());
}

// `--set a.b.c=value` overrides, applied after the file.
inline void apply_override(ConfigTable& root, const std::string& spec) {
    size_t eq = spec.find('=');
    if (eq == std::string::npos) throw ConfigError("override must look like key=value: `" + spec + "`");
    std::string where = "--set " + spec;
    auto path = detail::split_path(detail::trim(spec.substr(0, eq)), where);
    std::string rhs = detail::trim(spec.substr(eq + 1));
    detail::ValueParser vp{rhs, 0, where};
    ConfigValue value = vp.parse();
    ConfigTable* dst = &root;
    if (path.size() > 1) dst = detail::descend(root, {path.begin(), path.end() - 1}, where);
    (*dst)[path.back()] = std::move(value);
}

// Typed, path-addressed reads with diagnostics that name the offending key.
class ConfigView {
public:
    explicit ConfigView(const ConfigTable& root, std::string name = "config") : root_(&root), name_(std::move(name)) {}

    const ConfigValue* find(const std::string& dotted) const {
        auto path = detail::split_path(dotted, name_);
        const ConfigTable* cur = root_;
        const ConfigValue* val = nullptr;
        for (size_t i = 0; i < path.size(); ++i) {
            auto it = cur->find(path[i]);
            if (it == cur->end()) return nullptr;
            val = &it->second;
            if (i + 1 < path.size()) {
                if (!val->is_table()) return nullptr;
                cur = &val->table();
            }
        }
        return val;
    }

    bool has(const std::string& dotted) const { return find(dotted) != nullptr; }

    std::string get_string(const std::string& key, std::optional<std::string> fallback = {}) const {
        const ConfigValue* v = find(key);
        if (!v) {
            if (fallback) return *fallback;
            throw_missing(key);
        }
        if (!v->is_string()) throw ConfigError(name_ + ": `" + key + "` must be a string");
        return v->str();
    }

    double get_double(const std::string& key, std::optional<double> fallback = {}) const {
        const ConfigValue* v = find(key);
        if (!v) {
            if (fallback) return *fallback;
            throw_missing(key);
        }
        if (!v->is_number()) throw ConfigError(name_ + ": `" + key + "` must be a number");
        return v->number();
    }

    int64_t get_int(const std::string& key, std::optional<int64_t> fallback = {}) const {
        const ConfigValue* v = find(key);
        if (!v) {
            if (fallback) return *fallback;
            throw_missing(key);
        }
        if (!v->is_number()) throw ConfigError(name_ + ": `" + key + "` must be an integer");
        return v->integer();
    }

    bool get_bool(const std::string& key, std::optional<bool> fallback = {}) const {
        const ConfigValue* v = find(key);
        if (!v) {
            if (fallback) return *fallback;
            throw_missing(key);
        }
        if (!v->is_bool()) throw ConfigError(name_ + ": `" + key + "` must be a boolean");
        return v->boolean();
    }

    std::vector<std::string> get_string_array(const std::string& key, bool required = false) const {
        const ConfigValue* v = find(key);
        if (!v) {
            if (required) throw_missing(key);
            return {};
        }
        if (!v->is_array()) throw ConfigError(name_ + ": `" + key + "` must be an array");
        std::vector<std::string> out;
        for (const auto& e : v->array()) {
            if (!e.is_string()) throw ConfigError(name_ + ": `" + key + "` must contain strings");
            out.push_back(e.str());
        }
        return out;
    }

    std::vector<double> get_double_array(const std::string& key, bool required = false) const {
        const ConfigValue* v = find(key);
        if (!v) {
            if (required) throw_missing(key);
            return {};
        }
        if (!v->is_array()) throw ConfigError(name_ + ": `" + key + "` must be an array");
        std::vector<double> out;
        for (const auto& e : v->array()) {
            if (!e.is_number()) throw ConfigError(name_ + ": `" + key + "` must contain numbers");
            out.push_back(e.number());
        }
        return out;
    }

    std::vector<ConfigView> get_table_array(const std::string& key) const {
        const ConfigValue* v = find(key);
        if (!v) return {};
        if (!v->is_array()) throw ConfigError(name_ + ": `" + key + "` must be an array of tables");
        std::vector<ConfigView> out;
        for (const auto& e : v->array()) {
            if (!e.is_table()) throw ConfigError(name_ + ": `" + key + "` must contain tables");
            out.emplace_back(e.table(), name_ + "." + key);
        }
        return out;
    }

    const ConfigTable& root() const { return *root_; }

private:
    [[noreturn]] void throw_missing(const std::string& key) const {
        throw ConfigError(name_ + ": missing required key `" + key + "`");
    }

    const ConfigTable* root_;
    std::string name_;
};

} // namespace flowprofiler
