#include "fewshot6d/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "fewshot6d/errors.hpp"

namespace fewshot6d {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

struct Entry {
    std::function<void(Config&, const std::string&)> set;
    std::function<std::string(const Config&)> get;
};

template <typename T>
T parse_value(const std::string& key, const std::string& text);

template <>
double parse_value<double>(const std::string& key, const std::string& text) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(text, &pos);
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': expected a number, got '" + text + "'");
    }
    if (pos != text.size()) {
        throw ConfigError("key '" + key + "': trailing characters in '" + text + "'");
    }
    return v;
}

template <>
int parse_value<int>(const std::string& key, const std::string& text) {
    std::size_t pos = 0;
    long v = 0;
    try {
        v = std::stol(text, &pos);
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': expected an integer, got '" + text + "'");
    }
    if (pos != text.size()) {
        throw ConfigError("key '" + key + "': trailing characters in '" + text + "'");
    }
    return static_cast<int>(v);
}

template <>
std::uint64_t parse_value<std::uint64_t>(const std::string& key, const std::string& text) {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
        v = std::stoull(text, &pos);
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': expected an unsigned integer, got '" + text + "'");
    }
    if (pos != text.size()) {
        throw ConfigError("key '" + key + "': trailing characters in '" + text + "'");
    }
    return v;
}

template <>
bool parse_value<bool>(const std::string& key, const std::string& text) {
    if (text == "true" || text == "1" || text == "on") return true;
    if (text == "false" || text == "0" || text == "off") return false;
    throw ConfigError("key '" + key + "': expected true/false, got '" + text + "'");
}

template <typename T>
std::string format_value(const T& v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

template <>
std::string format_value<bool>(const bool& v) {
    return v ? "true" : "false";
}

template <>
std::string format_value<double>(const double& v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

const std::map<std::string, Entry>& registry() {
#define FEWSHOT6D_CFG(key, member, type)                                             \
    {                                                                                \
        key, Entry{[](Config& c, const std::string& v) {                             \
                       c.member = parse_value<type>(key, v);                         \
                   },                                                                \
                   [](const Config& c) { return format_value<type>(c.member); }}     \
    }
    static const std::map<std::string, Entry> entries = {
        FEWSHOT6D_CFG("segmentation.color_weight", segmentation.color_weight, double),
        FEWSHOT6D_CFG("segmentation.normal_weight", segmentation.normal_weight, double),
        FEWSHOT6D_CFG("segmentation.position_weight", segmentation.position_weight, double),
        FEWSHOT6D_CFG("segmentation.scene_scale", segmentation.scene_scale, double),
        FEWSHOT6D_CFG("segmentation.bandwidth", segmentation.bandwidth, double),
        FEWSHOT6D_CFG("segmentation.min_segment_px", segmentation.min_segment_px, int),
        FEWSHOT6D_CFG("segmentation.seed_stride", segmentation.seed_stride, int),
        FEWSHOT6D_CFG("segmentation.max_iterations", segmentation.max_iterations, int),
        FEWSHOT6D_CFG("adaptation.temperature", adaptation.temperature, double),
        FEWSHOT6D_CFG("adaptation.embed_dim", adaptation.embed_dim, int),
        FEWSHOT6D_CFG("adaptation.step", adaptation.step, double),
        FEWSHOT6D_CFG("adaptation.max_iterations", adaptation.max_iterations, int),
        FEWSHOT6D_CFG("adaptation.loss_threshold", adaptation.loss_threshold, double),
        FEWSHOT6D_CFG("adaptation.center_fallback_px", adaptation.center_fallback_px, double),
        FEWSHOT6D_CFG("model.voxel", model.voxel, double),
        FEWSHOT6D_CFG("model.outlier_removal", model.outlier_removal, bool),
        FEWSHOT6D_CFG("model.outlier_k", model.outlier_k, int),
        FEWSHOT6D_CFG("model.outlier_sigma", model.outlier_sigma, double),
        FEWSHOT6D_CFG("registration.voxel", registration.voxel, double),
        FEWSHOT6D_CFG("registration.normal_radius_factor", registration.normal_radius_factor, double),
        FEWSHOT6D_CFG("registration.feature_radius_factor", registration.feature_radius_factor, double),
        FEWSHOT6D_CFG("registration.edge_ratio", registration.edge_ratio, double),
        FEWSHOT6D_CFG("registration.inlier_factor", registration.inlier_factor, double),
        FEWSHOT6D_CFG("registration.ransac_max_iterations", registration.ransac_max_iterations, int),
        FEWSHOT6D_CFG("registration.ransac_early_fitness", registration.ransac_early_fitness, double),
        FEWSHOT6D_CFG("registration.icp_max_iterations", registration.icp_max_iterations, int),
        FEWSHOT6D_CFG("registration.icp_tolerance", registration.icp_tolerance, double),
        FEWSHOT6D_CFG("registration.icp_max_corr", registration.icp_max_corr, double),
        FEWSHOT6D_CFG("registration.point_to_plane", registration.point_to_plane, bool),
        FEWSHOT6D_CFG("registration.seed", registration.seed, std::uint64_t),
        FEWSHOT6D_CFG("pipeline.reject_conf", pipeline.reject_conf, double),
        FEWSHOT6D_CFG("pipeline.conf_seg_uncertain", pipeline.conf_seg_uncertain, double),
        FEWSHOT6D_CFG("pipeline.crop_margin", pipeline.crop_margin, double),
        FEWSHOT6D_CFG("pipeline.crop_px", pipeline.crop_px, int),
        FEWSHOT6D_CFG("pipeline.top_r", pipeline.top_r, int),
        FEWSHOT6D_CFG("synth.width", synth.width, int),
        FEWSHOT6D_CFG("synth.height", synth.height, int),
        FEWSHOT6D_CFG("synth.fx", synth.fx, double),
        FEWSHOT6D_CFG("synth.fy", synth.fy, double),
        FEWSHOT6D_CFG("synth.depth_sigma", synth.depth_sigma, double),
        FEWSHOT6D_CFG("synth.depth_quad", synth.depth_quad, double),
        FEWSHOT6D_CFG("synth.surface_step", synth.surface_step, double),
        FEWSHOT6D_CFG("synth.splat_radius", synth.splat_radius, double),
        FEWSHOT6D_CFG("jobs", jobs, int),
    };
#undef FEWSHOT6D_CFG
    return entries;
}

}  // namespace

void apply_config_entry(Config& cfg, const std::string& key, const std::string& value) {
    const auto& reg = registry();
    const auto it = reg.find(key);
    if (it == reg.end()) throw ConfigError("unknown key '" + key + "'");
    it->second.set(cfg, value);
}

Config load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    Config cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected 'key = value'");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        try {
            apply_config_entry(cfg, key, value);
        } catch (const ConfigError& e) {
            throw ConfigError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return cfg;
}

std::string dump_config(const Config& cfg) {
    std::ostringstream os;
    for (const auto& [key, entry] : registry()) {
        os << key << " = " << entry.get(cfg) << "\n";
    }
    return os.str();
}

}  // namespace fewshot6d
