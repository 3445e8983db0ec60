#include "bsdelab/kvconfig.hpp"

#include "bsdelab/errors.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

namespace bsdelab {

namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

bool valid_key(const std::string& key) {
    return !key.empty() && std::all_of(key.begin(), key.end(), [](unsigned char c) {
        return std::isalnum(c) || c == '_' || c == '.' || c == '-';
    });
}

}  // namespace

double parse_double(const std::string& text, const std::string& what) {
    const std::string s = trim(text);
    double v = 0.0;
    const auto* end = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (s.empty() || ec != std::errc() || ptr != end) {
        throw ValidationError(what + ": '" + text + "' is not a number");
    }
    return v;
}

long long parse_int(const std::string& text, const std::string& what) {
    const std::string s = trim(text);
    long long v = 0;
    const auto* end = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (s.empty() || ec != std::errc() || ptr != end) {
        throw ValidationError(what + ": '" + text + "' is not an integer");
    }
    return v;
}

KvConfig KvConfig::parse(const std::string& text, const std::string& source) {
    KvConfig cfg;
    cfg.source_ = source;
    std::istringstream in(text);
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        const std::string where = source + ":" + std::to_string(number);
        if (eq == std::string::npos) throw ValidationError(where + ": expected 'key = value'", "CONFIG_SYNTAX");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (!valid_key(key)) throw ValidationError(where + ": invalid key '" + key + "'", "CONFIG_SYNTAX");
        if (!cfg.entries_.emplace(key, value).second) {
            throw ValidationError(where + ": duplicate key '" + key + "'", "CONFIG_SYNTAX");
        }
    }
    return cfg;
}

KvConfig KvConfig::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot read config file '" + path + "'", "CONFIG_IO");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str(), path);
}

void KvConfig::set(const std::string& key, const std::string& value) {
    require(valid_key(key), "invalid config key '" + key + "'");
    entries_[key] = value;
}

bool KvConfig::has(const std::string& key) const { return entries_.count(key) != 0; }

const std::string& KvConfig::raw(const std::string& key) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) throw ValidationError("missing config key '" + key + "'", "MISSING_KEY");
    used_.insert(key);
    return it->second;
}

std::string KvConfig::get_string(const std::string& key) const { return raw(key); }

std::string KvConfig::get_string(const std::string& key, const std::string& fallback) const {
    return has(key) ? raw(key) : fallback;
}

double KvConfig::get_double(const std::string& key) const { return parse_double(raw(key), key); }

double KvConfig::get_double(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
}

long long KvConfig::get_int(const std::string& key) const { return parse_int(raw(key), key); }

long long KvConfig::get_int(const std::string& key, long long fallback) const {
    return has(key) ? get_int(key) : fallback;
}

bool KvConfig::get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const std::string v = raw(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ValidationError(key + ": '" + v + "' is not a boolean");
}

std::vector<double> KvConfig::get_list(const std::string& key) const {
    std::string v = raw(key);
    std::replace(v.begin(), v.end(), ',', ' ');
    std::istringstream in(v);
    std::vector<double> out;
    std::string item;
    while (in >> item) out.push_back(parse_double(item, key));
    if (out.empty()) throw ValidationError(key + ": empty list");
    return out;
}

std::vector<double> KvConfig::get_list(const std::string& key, const std::vector<double>& fallback) const {
    return has(key) ? get_list(key) : fallback;
}

std::vector<std::string> KvConfig::keys_with_prefix(const std::string& prefix) const {
    std::vector<std::string> out;
    for (const auto& [key, _] : entries_) {
        if (key.size() > prefix.size() && key.compare(0, prefix.size(), prefix) == 0) {
            out.push_back(key.substr(prefix.size()));
        }
    }
    return out;
}

void KvConfig::reject_unused() const {
    for (const auto& [key, _] : entries_) {
        if (!used_.count(key)) throw ValidationError("unknown config key '" + key + "'", "UNKNOWN_KEY");
    }
}

std::uint64_t KvConfig::hash(const std::set<std::string>& exclude) const {
    std::uint64_t h = 14695981039346656037ull;
    const auto feed = [&h](const std::string& s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 1099511628211ull;
        }
    };
    for (const auto& [key, value] : entries_) {
        if (exclude.count(key)) continue;
        feed(key);
        feed("=");
        feed(value);
        feed("\n");
    }
    return h;
}

}  // namespace bsdelab
