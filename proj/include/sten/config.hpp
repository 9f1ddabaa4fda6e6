#pragma once

// Flat key = value configuration with namespaced keys (data.*, model.*,
// train.*, eval.*) and CLI --key value overrides.

#include <map>
#include <string>
#include <vector>

namespace sten {

class Config {
public:
    static Config load(const std::string& path);
    static const std::vector<std::string>& known_keys();
    static bool is_known(const std::string& key);

    // throws on unknown keys
    void set(const std::string& key, const std::string& value);
    bool has(const std::string& key) const;

    std::string get_str(const std::string& key, const std::string& def) const;
    int get_int(const std::string& key, int def) const;
    double get_double(const std::string& key, double def) const;
    bool get_bool(const std::string& key, bool def) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t def) const;

    std::string dump() const;

private:
    std::map<std::string, std::string> kv_;
};

} // namespace sten
