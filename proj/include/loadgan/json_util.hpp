#pragma once

// Strict reading of configuration objects: every key must be consumed,
// otherwise finish() fails listing the unknown ones.

#include <set>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace loadgan::json_util {

using json = nlohmann::json;
using ordered = nlohmann::ordered_json;

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class Reader {
public:
    Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    template <class T>
    void get(const std::string& key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(where_ + "." + key + ": " + e.what());
        }
    }

    // Sub-object for nested readers; marks the key as consumed.
    const json* child(const std::string& key) {
        seen_.insert(key);
        return j_.contains(key) ? &j_.at(key) : nullptr;
    }

    std::string path(const std::string& key) const { return where_ + "." + key; }

    void finish() const {
        std::string unknown;
        for (const auto& [k, _] : j_.items()) {
            if (!seen_.count(k)) unknown += (unknown.empty() ? "" : ", ") + k;
        }
        if (!unknown.empty()) throw ConfigError(where_ + ": unknown key(s): " + unknown);
    }

private:
    const json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

}  // namespace loadgan::json_util
