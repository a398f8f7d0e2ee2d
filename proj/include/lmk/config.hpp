#pragma once

#include <map>
#include <string>
#include <vector>

namespace lmk {

// Line-based `key = value` text with optional [section] headers and '#'
// comments. Keys are unique; a key inside a section is addressable both as
// "section.key" and by its bare name.
class Config {
public:
    Config() = default;

    static Config parse_file(const std::string& path);
    static Config parse_string(const std::string& text);

    bool has(const std::string& key) const;
    std::string get_str(const std::string& key, const std::string& fallback = "") const;
    double get_real(const std::string& key, double fallback) const;
    int get_int(const std::string& key, int fallback) const;
    long long get_int64(const std::string& key, long long fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<int> get_int_list(const std::string& key, const std::vector<int>& fallback) const;

    void set(const std::string& key, const std::string& value);

    const std::map<std::string, std::string>& entries() const { return entries_; }
    std::string to_text() const;

private:
    const std::string* find(const std::string& key) const;
    std::map<std::string, std::string> entries_;  // "section.key" or "key" -> value
};

}  // namespace lmk
