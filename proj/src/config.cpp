#include "lmk/config.hpp"

#include <fstream>
#include <sstream>

#include "lmk/errors.hpp"

namespace lmk {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

Config Config::parse_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("config: cannot open " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_string(ss.str());
}

Config Config::parse_string(const std::string& text) {
    Config cfg;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ParseError("config: unterminated section header", lineno);
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const size_t eq = line.find('=');
        if (eq == std::string::npos) throw ParseError("config: expected key = value", lineno);
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ParseError("config: empty key", lineno);
        std::string full = section.empty() ? key : section + "." + key;
        if (cfg.entries_.count(full)) throw ParseError("config: duplicate key " + full, lineno);
        cfg.entries_[full] = value;
    }
    return cfg;
}

const std::string* Config::find(const std::string& key) const {
    auto it = entries_.find(key);
    if (it != entries_.end()) return &it->second;
    // bare-name lookup across sections
    for (const auto& [k, v] : entries_) {
        const size_t dot = k.rfind('.');
        if (dot != std::string::npos && k.compare(dot + 1, std::string::npos, key) == 0) return &v;
    }
    return nullptr;
}

bool Config::has(const std::string& key) const { return find(key) != nullptr; }

std::string Config::get_str(const std::string& key, const std::string& fallback) const {
    const std::string* v = find(key);
    return v ? *v : fallback;
}

double Config::get_real(const std::string& key, double fallback) const {
    const std::string* v = find(key);
    if (!v) return fallback;
    try {
        return std::stod(*v);
    } catch (...) {
        throw std::invalid_argument("config: key " + key + " is not a number: " + *v);
    }
}

int Config::get_int(const std::string& key, int fallback) const {
    return int(get_int64(key, fallback));
}

long long Config::get_int64(const std::string& key, long long fallback) const {
    const std::string* v = find(key);
    if (!v) return fallback;
    try {
        return std::stoll(*v);
    } catch (...) {
        throw std::invalid_argument("config: key " + key + " is not an integer: " + *v);
    }
}

bool Config::get_bool(const std::string& key, bool fallback) const {
    const std::string* v = find(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
    if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
    throw std::invalid_argument("config: key " + key + " is not a boolean: " + *v);
}

std::vector<int> Config::get_int_list(const std::string& key, const std::vector<int>& fallback) const {
    const std::string* v = find(key);
    if (!v) return fallback;
    std::vector<int> out;
    std::string token;
    std::istringstream ss(*v);
    while (std::getline(ss, token, ',')) {
        token = trim(token);
        if (token.empty()) continue;
        try {
            out.push_back(std::stoi(token));
        } catch (...) {
            throw std::invalid_argument("config: key " + key + " has a non-integer entry: " + token);
        }
    }
    return out;
}

void Config::set(const std::string& key, const std::string& value) { entries_[key] = value; }

std::string Config::to_text() const {
    std::string out;
    for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
    return out;
}

}  // namespace lmk
