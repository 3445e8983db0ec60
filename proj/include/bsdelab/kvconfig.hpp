#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace bsdelab {

/// Flat `key = value` configuration with `#` comments. Every lookup marks the
/// key as consumed so that leftover keys can be rejected after a run is set up.
class KvConfig {
public:
    static KvConfig parse(const std::string& text, const std::string& source = "<config>");
    static KvConfig load(const std::string& path);

    void set(const std::string& key, const std::string& value);
    bool has(const std::string& key) const;

    std::string get_string(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key) const;
    double get_double(const std::string& key, double fallback) const;
    long long get_int(const std::string& key) const;
    long long get_int(const std::string& key, long long fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    /// Comma- or whitespace-separated reals.
    std::vector<double> get_list(const std::string& key) const;
    std::vector<double> get_list(const std::string& key, const std::vector<double>& fallback) const;

    /// Keys starting with prefix, with the prefix stripped. Does not mark them consumed.
    std::vector<std::string> keys_with_prefix(const std::string& prefix) const;

    /// Throws ValidationError (UNKNOWN_KEY) naming the first key never read.
    void reject_unused() const;

    /// FNV-1a over the sorted entries, excluding the given keys.
    std::uint64_t hash(const std::set<std::string>& exclude = {}) const;

    const std::map<std::string, std::string>& entries() const noexcept { return entries_; }

private:
    const std::string& raw(const std::string& key) const;

    std::string source_;
    std::map<std::string, std::string> entries_;
    mutable std::set<std::string> used_;
};

double parse_double(const std::string& text, const std::string& what);
long long parse_int(const std::string& text, const std::string& what);

}  // namespace bsdelab
