#include "crossview/config.hpp"

#include <fstream>
#include <stdexcept>

namespace crossview {
namespace {

using nlohmann::json;

// One flat table of every known key with its default value. Arrays are
// homogeneous scalar lists. Defaults not fixed by the problem statement
// (guidance weights, InfoNCE temperature, learning rate scales) are
// arbitrary-but-documented and meant to be swept.
const json& schema_defaults() {
    static const json defaults = {
        {"camera",
         {{"type", "panorama"},  // "panorama" | "pinhole"
          {"width", 512},
          {"height", 128},
          {"elev_top_deg", 45.0},
          {"elev_bottom_deg", -45.0},
          {"hfov_deg", 90.0},
          {"vfov_deg", 22.5}}},
        {"sat", {{"meters_per_pixel", 0.5}, {"width", 256}, {"height", 256}}},
        // Hypothesis heights are camera-relative by default; "ground" makes
        // them heights above the ground plane instead.
        {"geometry", {{"height_reference", "camera"}}},
        {"diffusion",
         {{"steps", 50},
          {"beta_start", 8.5e-4},
          {"beta_end", 0.012},
          {"kind", "linear"},  // "linear" | "cosine"
          {"eta", 1.0},
          {"lambda_pose", 0.0},
          {"gamma_text", 1.0}}},
        {"gca",
         {{"heights", json::array({-3.0, -2.0, -1.0, 1.0, 2.0, 3.0, 4.0, 5.0})},
          {"predictor", "zero_offset_uniform"},  // | "seeded_linear"
          {"offset_clamp", 1.0},
          {"stride", 1}}},
        {"iha",
         {{"lr", 1e-3},
          {"steps", 40},
          {"candidates", 9},
          {"tau", 0.1},
          {"perturb_trans", 8.0},
          {"perturb_yaw_deg", 10.0},
          {"fd_step", 1e-3},
          {"crop", 64},
          {"z_grad", "analytic"}}},  // | "zero"
        {"text", {{"lexicon", ""}, {"patches", 4}, {"patch_size", 0}}},
        {"model",
         {{"kind", "gaussian"},  // | "warp_oracle" | "external"
          {"var", 0.05},
          {"target", ""},
          {"eps_dir", ""}}},
        {"eval",
         {{"metrics", json::array({"ssim", "rmse", "psnr", "sd", "feature_distance"})},
          {"sky_crop", 0.5}}},
        {"synth", {{"difficulty", "boxes"}}},
    };
    return defaults;
}

void validate_keys(const json& user, const json& schema, const std::string& prefix) {
    if (!user.is_object())
        throw std::invalid_argument("config: expected object at '" +
                                    (prefix.empty() ? std::string("<root>") : prefix) + "'");
    for (auto it = user.begin(); it != user.end(); ++it) {
        const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (!schema.contains(it.key()))
            throw std::invalid_argument("config: unknown key '" + path + "'");
        const json& ref = schema.at(it.key());
        if (ref.is_object()) {
            validate_keys(it.value(), ref, path);
        } else if (ref.is_array()) {
            if (!it.value().is_array())
                throw std::invalid_argument("config: '" + path + "' must be an array");
        } else if (ref.is_string()) {
            if (!it.value().is_string())
                throw std::invalid_argument("config: '" + path + "' must be a string");
        } else if (ref.is_boolean()) {
            if (!it.value().is_boolean())
                throw std::invalid_argument("config: '" + path + "' must be a boolean");
        } else {
            if (!it.value().is_number())
                throw std::invalid_argument("config: '" + path + "' must be a number");
        }
    }
}

const json* lookup(const json& root, const std::string& key) {
    const json* cur = &root;
    std::size_t start = 0;
    while (true) {
        const std::size_t dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? dot : dot - start);
        if (!cur->is_object() || !cur->contains(part)) return nullptr;
        cur = &cur->at(part);
        if (dot == std::string::npos) return cur;
        start = dot + 1;
    }
}

const json& resolve(const json& user, const std::string& key) {
    if (const json* v = lookup(user, key)) return *v;
    if (const json* v = lookup(schema_defaults(), key)) return *v;
    throw std::invalid_argument("config: no such key '" + key + "'");
}

void merge_into(json& dst, const json& src) {
    for (auto it = src.begin(); it != src.end(); ++it) {
        if (it.value().is_object() && dst.contains(it.key()) && dst[it.key()].is_object())
            merge_into(dst[it.key()], it.value());
        else
            dst[it.key()] = it.value();
    }
}

}  // namespace

Config::Config() : user_(json::object()) {}

Config Config::from_json(const json& j) {
    validate_keys(j, schema_defaults(), "");
    Config c;
    c.user_ = j;
    return c;
}

Config Config::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw std::runtime_error("config: parse error in '" + path + "': " + e.what());
    }
    return from_json(j);
}

double Config::get_double(const std::string& key) const {
    const json& v = resolve(user_, key);
    if (!v.is_number()) throw std::invalid_argument("config: '" + key + "' is not a number");
    return v.get<double>();
}

int Config::get_int(const std::string& key) const {
    const json& v = resolve(user_, key);
    if (!v.is_number()) throw std::invalid_argument("config: '" + key + "' is not a number");
    return v.get<int>();
}

bool Config::get_bool(const std::string& key) const {
    const json& v = resolve(user_, key);
    if (!v.is_boolean()) throw std::invalid_argument("config: '" + key + "' is not a boolean");
    return v.get<bool>();
}

std::string Config::get_string(const std::string& key) const {
    const json& v = resolve(user_, key);
    if (!v.is_string()) throw std::invalid_argument("config: '" + key + "' is not a string");
    return v.get<std::string>();
}

std::vector<double> Config::get_double_list(const std::string& key) const {
    const json& v = resolve(user_, key);
    if (!v.is_array()) throw std::invalid_argument("config: '" + key + "' is not an array");
    std::vector<double> out;
    for (const auto& e : v) {
        if (!e.is_number())
            throw std::invalid_argument("config: '" + key + "' must hold numbers");
        out.push_back(e.get<double>());
    }
    return out;
}

std::vector<std::string> Config::get_string_list(const std::string& key) const {
    const json& v = resolve(user_, key);
    if (!v.is_array()) throw std::invalid_argument("config: '" + key + "' is not an array");
    std::vector<std::string> out;
    for (const auto& e : v) {
        if (!e.is_string())
            throw std::invalid_argument("config: '" + key + "' must hold strings");
        out.push_back(e.get<std::string>());
    }
    return out;
}

json Config::effective() const {
    json merged = schema_defaults();
    merge_into(merged, user_);
    return merged;
}

}  // namespace crossview
