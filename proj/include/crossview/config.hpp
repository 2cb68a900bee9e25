#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace crossview {

// JSON-backed run configuration. Every key is validated against the known
// schema at load time; an unrecognized key is an error naming the key, so
// typos fail loudly instead of silently falling back to defaults.
class Config {
public:
    Config();  // all defaults
    static Config from_file(const std::string& path);
    static Config from_json(const nlohmann::json& j);

    // Typed accessors with the documented defaults baked in. `key` is a
    // dotted path such as "diffusion.eta".
    double get_double(const std::string& key) const;
    int get_int(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    std::string get_string(const std::string& key) const;
    std::vector<double> get_double_list(const std::string& key) const;
    std::vector<std::string> get_string_list(const std::string& key) const;

    // Effective configuration (defaults overlaid with user values).
    nlohmann::json effective() const;
    // Only the user-supplied values (what was parsed from the file).
    const nlohmann::json& overrides() const { return user_; }

private:
    nlohmann::json user_;
};

}  // namespace crossview
