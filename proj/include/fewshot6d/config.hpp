#pragma once

#include <cstdint>
#include <string>

namespace fewshot6d {

// Every tunable named by the toolkit, with its default. Values load from a
// plain "key = value" text file ('#' starts a comment); unknown keys are
// rejected so typos surface immediately. Key names mirror the member paths,
// e.g. "segmentation.bandwidth = 0.35".
struct Config {
    struct Segmentation {
        double color_weight = 1.0;     // w_c on CIELAB channels
        double normal_weight = 0.5;    // w_n on surface normals
        double position_weight = 2.0;  // w_p on 3D position
        double scene_scale = 1.0;      // meters; divides the position channel
        double bandwidth = 0.35;       // mean-shift kernel radius in feature space
        int min_segment_px = 50;       // at 640x480, scaled with resolution
        int seed_stride = 4;           // mean-shift seed subgrid stride
        int max_iterations = 100;      // per-seed mean-shift iteration cap
    } segmentation;

    struct Adaptation {
        double temperature = 0.07;
        int embed_dim = 32;
        double step = 0.5;             // gradient step before backtracking
        int max_iterations = 50;
        double loss_threshold = 0.01;  // stop when mean pair loss drops below
        double center_fallback_px = 10.0;  // occluded-center fallback radius
    } adaptation;

    struct Model {
        double voxel = 0.004;          // meters, centroid-per-cell downsampling
        bool outlier_removal = false;
        int outlier_k = 16;
        double outlier_sigma = 2.0;
    } model;

    struct Registration {
        double voxel = 0.004;              // meters; inlier threshold = 1.5 * voxel
        double normal_radius_factor = 2.0;  // * voxel
        double feature_radius_factor = 5.0; // * voxel
        double edge_ratio = 0.9;            // RANSAC edge-length ratio check
        double inlier_factor = 1.5;         // * voxel
        int ransac_max_iterations = 100000;
        double ransac_early_fitness = 0.8;
        int icp_max_iterations = 100;
        double icp_tolerance = 1e-6;        // meters, mean-residual change
        double icp_max_corr = 0.10;         // meters, correspondence cutoff
        bool point_to_plane = false;
        std::uint64_t seed = 7;
    } registration;

    struct Pipeline {
        double reject_conf = 0.3;        // below this, report "target not found"
        double conf_seg_uncertain = 1.05;  // near-tie flag threshold on conf_seg
        double crop_margin = 1.2;
        int crop_px = 128;
        int top_r = 4;                  // reference rotation hypotheses
    } pipeline;

    struct Synth {
        int width = 640;
        int height = 480;
        double fx = 525.0;
        double fy = 525.0;
        double depth_sigma = 0.002;     // meters, additive Gaussian
        double depth_quad = 0.005;      // quadratic range coefficient (per m^2)
        double surface_step = 0.001;    // meters between sampled surface points
        double splat_radius = 1.5;      // pixels
    } synth;

    int jobs = 1;
};

// Loads cfg over defaults; throws ConfigError for unreadable files, bad
// syntax, or unknown keys.
Config load_config(const std::string& path);

// Applies a single "key = value" assignment (same names as the file).
void apply_config_entry(Config& cfg, const std::string& key, const std::string& value);

// Serializes every key, suitable as a template config file.
std::string dump_config(const Config& cfg);

}  // namespace fewshot6d
