#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fewshot6d/config.hpp"
#include "fewshot6d/geometry.hpp"

namespace fewshot6d {

// Per-pixel dense features. Invalid pixels (depth 0) are masked and never
// participate in clustering or representations.
struct DenseFeatureMap {
    int width = 0;
    int height = 0;
    int dim = 0;
    std::vector<double> data;     // width * height * dim, row-major
    std::vector<std::uint8_t> valid;  // width * height

    void resize(int w, int h, int d) {
        width = w;
        height = h;
        dim = d;
        data.assign(static_cast<std::size_t>(w) * h * d, 0.0);
        valid.assign(static_cast<std::size_t>(w) * h, 0);
    }

    std::size_t idx(int x, int y) const {
        return static_cast<std::size_t>(y) * width + x;
    }

    Eigen::Map<const Eigen::VectorXd> at(int x, int y) const {
        return {&data[idx(x, y) * dim], dim};
    }
    Eigen::Map<Eigen::VectorXd> at(int x, int y) {
        return {&data[idx(x, y) * dim], dim};
    }
    Eigen::Map<const Eigen::VectorXd> at(std::size_t linear) const {
        return {&data[linear * dim], dim};
    }
};

struct Segment {
    int id = 0;
    std::vector<std::int32_t> pixels;  // linear indices, row-major ascending
    int min_x = 0, min_y = 0, max_x = 0, max_y = 0;

    int count() const { return static_cast<int>(pixels.size()); }
};

// Instance label map plus its segment list. Label 0 is background/invalid;
// every non-zero label appears exactly once in `segments`.
struct Segmentation {
    int width = 0;
    int height = 0;
    std::vector<std::int32_t> label_map;
    std::vector<Segment> segments;

    const Segment* find(int id) const {
        for (const auto& s : segments) {
            if (s.id == id) return &s;
        }
        return nullptr;
    }
};

// CIELAB (D65) from sRGB in [0,1]; L normalized to [0,1], a/b to ~[-1,1].
Eigen::Vector3d rgb_to_lab_normalized(float r, float g, float b);

// 9-D feature per valid pixel: weighted Lab color, surface normal from a
// central-difference cross product on backprojected depth, and the 3D point
// divided by scene_scale. Throws AllDepthInvalid when no pixel has depth.
DenseFeatureMap extract_features(const RgbdFrame& frame, const Config::Segmentation& cfg);

// Mean-shift clustering of the pixel features with a Gaussian kernel.
// Seeds come from a subgrid of valid pixels; converged modes within
// bandwidth/2 merge (transitively), remaining pixels attach to the nearest
// converged mode, and segments under the resolution-scaled minimum pixel
// count fall back to background.
Segmentation mean_shift_segment(const DenseFeatureMap& feat, double bandwidth,
                                const Config::Segmentation& cfg, int jobs = 1);

// Mean of the (optionally head-projected) pixel features over the segment,
// L2-normalized. head, when present, is an E x D projection.
Eigen::VectorXd segment_representation(const DenseFeatureMap& feat, const Segment& seg,
                                       const Eigen::MatrixXd* head = nullptr);

// Binary feature-map exchange format: 16-byte header (u32 magic, H, W, D)
// followed by H*W*D little-endian float32 values, row-major. Lets an external
// backbone replace extract_features without code changes; the validity mask
// is reconstructed from the frame's depth on import.
inline constexpr std::uint32_t kFeatureMapMagic = 0x50414D46;  // "FMAP"

void write_feature_map(const std::string& path, const DenseFeatureMap& feat);
DenseFeatureMap read_feature_map(const std::string& path, const RgbdFrame& frame);

}  // namespace fewshot6d
