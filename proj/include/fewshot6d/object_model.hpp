#pragma once

#include <string>
#include <vector>

#include "fewshot6d/config.hpp"
#include "fewshot6d/geometry.hpp"
#include "fewshot6d/segmentation.hpp"

namespace fewshot6d {

// Canonical-frame point model merged from posed reference views.
struct ObjectModel {
    PointCloud canonical_cloud;
    double diameter = 0.0;  // max pairwise distance of canonical_cloud
    int source_count = 0;
};

// Backprojects every segment pixel with positive depth into the camera frame.
PointCloud segment_to_cloud(const RgbdFrame& frame, const Segment& segment);

// Centroid-per-cell voxel downsampling; output is independent of input order.
PointCloud voxel_downsample(const PointCloud& cloud, double voxel);

// Drops points whose mean distance to their k nearest neighbors exceeds the
// global mean by more than sigma standard deviations.
PointCloud remove_statistical_outliers(const PointCloud& cloud, int k, double sigma);

// Maps each view into the canonical frame via the inverse of its pose,
// merges, downsamples, and measures the diameter.
ObjectModel build_canonical_model(const std::vector<std::pair<PointCloud, Pose>>& clouds,
                                  const Config::Model& cfg = {});

// Maximum pairwise distance. Exact (O(n^2)) up to max_exact points; larger
// clouds are deterministically thinned to max_exact first.
double estimate_diameter(const PointCloud& cloud, std::size_t max_exact = 5000);

// ASCII exchange format: header "<count> <diameter>" then one "x y z" per line.
void save_object_model(const std::string& path, const ObjectModel& model);
ObjectModel load_object_model(const std::string& path);

}  // namespace fewshot6d
