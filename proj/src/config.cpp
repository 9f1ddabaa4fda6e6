#include "sten/config.hpp"

#include "sten/tensor.hpp" // Error

#include <algorithm>
#include <fstream>
#include <sstream>

namespace sten {

const std::vector<std::string>& Config::known_keys() {
    static const std::vector<std::string> keys = {
        "data.events", "data.social", "data.min_user_events", "data.min_item_events",
        "data.out_dir",
        "sim.num_users", "sim.base_rate", "sim.self_alpha", "sim.mutual_alpha",
        "sim.decay", "sim.horizon", "sim.num_items", "sim.social_edge_prob",
        "sim.pref_drift", "sim.seed",
        "model.d", "model.M", "model.l_m", "model.l_max", "model.max_order",
        "model.metapath_cap", "model.no_GE", "model.no_MT", "model.no_ST", "model.no_TC",
        "model.log_dt", "model.squared_reg", "model.seed",
        "train.learning_rate", "train.batch_size", "train.epochs", "train.gamma",
        "train.dropout_ratio", "train.negatives_per_positive", "train.patience",
        "train.seed", "train.checkpoint",
        "eval.ks", "eval.mode", "eval.checkpoint", "eval.user", "eval.out",
    };
    return keys;
}

bool Config::is_known(const std::string& key) {
    const auto& ks = known_keys();
    return std::find(ks.begin(), ks.end(), key) != ks.end();
}

void Config::set(const std::string& key, const std::string& value) {
    if (!is_known(key)) throw Error("config: unknown key '" + key + "'");
    kv_[key] = value;
}

bool Config::has(const std::string& key) const { return kv_.count(key) != 0; }

Config Config::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("config: cannot open " + path);
    Config cfg;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        auto strip = [](std::string s) {
            auto b = s.find_first_not_of(" \t\r");
            auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        line = strip(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw Error("config: line " + std::to_string(line_no) + " is not key = value");
        cfg.set(strip(line.substr(0, eq)), strip(line.substr(eq + 1)));
    }
    return cfg;
}

std::string Config::get_str(const std::string& key, const std::string& def) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? def : it->second;
}

int Config::get_int(const std::string& key, int def) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    try {
        return std::stoi(it->second);
    } catch (...) {
        throw Error("config: " + key + " = '" + it->second + "' is not an integer");
    }
}

double Config::get_double(const std::string& key, double def) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    try {
        return std::stod(it->second);
    } catch (...) {
        throw Error("config: " + key + " = '" + it->second + "' is not a number");
    }
}

bool Config::get_bool(const std::string& key, bool def) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw Error("config: " + key + " = '" + it->second + "' is not a boolean");
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t def) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    try {
        return std::stoull(it->second);
    } catch (...) {
        throw Error("config: " + key + " = '" + it->second + "' is not an integer");
    }
}

std::string Config::dump() const {
    std::ostringstream os;
    for (const auto& [k, v] : kv_) os << k << " = " << v << "\n";
    return os.str();
}

} // namespace sten
