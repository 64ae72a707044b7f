#include "dpg/config.hpp"

#include <fstream>
#include <sstream>

#include "dpg/errors.hpp"

namespace dpg {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return {};
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) out.push_back(trim(cur));
    return out;
}

} // namespace

KeyValueConfig KeyValueConfig::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open config file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_string(buf.str());
}

KeyValueConfig KeyValueConfig::parse_string(const std::string& text) {
    KeyValueConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw config_error("config line " + std::to_string(lineno) + " has no '='");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw config_error("config line " + std::to_string(lineno) + " has empty key");
        cfg.values_[key] = value;
    }
    return cfg;
}

bool KeyValueConfig::has(const std::string& key) const { return values_.count(key) != 0; }

std::string KeyValueConfig::raw(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw config_error("missing config key: " + key);
    read_.insert(key);
    return it->second;
}

std::string KeyValueConfig::get_string(const std::string& key) const { return raw(key); }

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
    return has(key) ? raw(key) : fallback;
}

std::int64_t KeyValueConfig::get_int(const std::string& key) const {
    const std::string v = raw(key);
    try {
        std::size_t pos = 0;
        std::int64_t out = std::stoll(v, &pos);
        if (pos != v.size()) throw config_error("");
        return out;
    } catch (...) {
        throw config_error("config key " + key + " is not an integer: " + v);
    }
}

std::int64_t KeyValueConfig::get_int(const std::string& key, std::int64_t fallback) const {
    return has(key) ? get_int(key) : fallback;
}

double KeyValueConfig::get_double(const std::string& key) const {
    const std::string v = raw(key);
    try {
        std::size_t pos = 0;
        double out = std::stod(v, &pos);
        if (pos != v.size()) throw config_error("");
        return out;
    } catch (...) {
        throw config_error("config key " + key + " is not a number: " + v);
    }
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
}

bool KeyValueConfig::get_bool(const std::string& key) const {
    const std::string v = raw(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw config_error("config key " + key + " is not a boolean: " + v);
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
    return has(key) ? get_bool(key) : fallback;
}

std::vector<std::int64_t> KeyValueConfig::get_int_list(const std::string& key) const {
    std::vector<std::int64_t> out;
    for (const auto& part : split(raw(key), ',')) {
        try {
            out.push_back(std::stoll(part));
        } catch (...) {
            throw config_error("config key " + key + " has a non-integer element: " + part);
        }
    }
    return out;
}

std::vector<std::int64_t> KeyValueConfig::get_int_list(const std::string& key,
                                                       std::vector<std::int64_t> fallback) const {
    return has(key) ? get_int_list(key) : std::move(fallback);
}

std::vector<double> KeyValueConfig::get_double_list(const std::string& key) const {
    std::vector<double> out;
    for (const auto& part : split(raw(key), ',')) {
        try {
            out.push_back(std::stod(part));
        } catch (...) {
            throw config_error("config key " + key + " has a non-numeric element: " + part);
        }
    }
    return out;
}

std::vector<double> KeyValueConfig::get_double_list(const std::string& key,
                                                    std::vector<double> fallback) const {
    return has(key) ? get_double_list(key) : std::move(fallback);
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
    values_[key] = value;
}

std::vector<std::string> KeyValueConfig::unread_keys() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_)
        if (read_.count(k) == 0) out.push_back(k);
    return out;
}

std::string KeyValueConfig::canonical_text() const {
    std::string out;
    for (const auto& [k, v] : values_) {
        out += k;
        out += " = ";
        out += v;
        out += "\n";
    }
    return out;
}

} // namespace dpg
