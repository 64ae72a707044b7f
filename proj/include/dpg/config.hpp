#ifndef DPG_CONFIG_HPP
#define DPG_CONFIG_HPP

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace dpg {

// Plain-text key/value tree: one `dotted.key = value` per line, `#` starts a
// comment, lists are comma-separated. Keys read through the typed getters
// are tracked so a run can reject unrecognized (likely misspelled) keys.
class KeyValueConfig {
public:
    static KeyValueConfig parse_file(const std::string& path);
    static KeyValueConfig parse_string(const std::string& text);

    bool has(const std::string& key) const;

    std::string get_string(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    std::int64_t get_int(const std::string& key) const;
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
    double get_double(const std::string& key) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<std::int64_t> get_int_list(const std::string& key) const;
    std::vector<std::int64_t> get_int_list(const std::string& key,
                                           std::vector<std::int64_t> fallback) const;
    std::vector<double> get_double_list(const std::string& key) const;
    std::vector<double> get_double_list(const std::string& key,
                                        std::vector<double> fallback) const;

    void set(const std::string& key, const std::string& value);

    // Keys present in the file but never read; used to reject typos.
    std::vector<std::string> unread_keys() const;

    // Sorted `key = value` lines; the canonical snapshot format.
    std::string canonical_text() const;

private:
    std::string raw(const std::string& key) const;

    std::map<std::string, std::string> values_;
    mutable std::set<std::string> read_;
};

} // namespace dpg

#endif
