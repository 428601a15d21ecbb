#pragma once

#include <cstdint>
#include <vector>

#include "fewshot6d/config.hpp"
#include "fewshot6d/geometry.hpp"
#include "fewshot6d/kdtree.hpp"

namespace fewshot6d {

struct RegistrationResult {
    Pose pose;           // source -> target
    double fitness = 0.0;  // inlier fraction of the source correspondences
    double rmse = 0.0;      // meters, over inlier correspondences
    int iterations = 0;
    std::vector<double> residual_history;  // ICP mean residual per iteration
};

// PCA normals over radius neighborhoods, oriented away from the cloud
// centroid so the field is invariant under rigid motion of the whole cloud.
std::vector<Eigen::Vector3d> estimate_normals(const PointCloud& cloud, double radius);

// 33-bin FPFH signature per point (11 bins per Darboux angle), L1-normalized.
// normal_radius defaults to 0.4 * feature_radius when non-positive.
PointCloud local_descriptors(const PointCloud& cloud, double feature_radius,
                             double normal_radius = 0.0);

// Closed-form least-squares rigid alignment (Kabsch/Umeyama without scale)
// mapping source points onto target points. Throws DegenerateConfiguration
// for fewer than 3 pairs or collinear/coincident configurations.
Pose kabsch_align(const std::vector<std::pair<Eigen::Vector3d, Eigen::Vector3d>>& pairs);

// RANSAC over 3-point descriptor correspondences with an edge-length ratio
// check, followed by an iterated closed-form polish on the inlier set.
// Deterministic for a fixed cfg.seed.
RegistrationResult global_register(const PointCloud& source, const PointCloud& target,
                                   const Config::Registration& cfg);

// Point-to-point ICP from an initial pose. Correspondences beyond
// cfg.icp_max_corr are ignored; iterations stop when the mean residual
// change drops below cfg.icp_tolerance. The mean residual over the current
// correspondence set never increases across accepted updates.
RegistrationResult icp(const PointCloud& source, const PointCloud& target, const Pose& init,
                       const Config::Registration& cfg);

// Mean nearest-neighbor distance of the posed source points to the target
// tree; shared by hypothesis scoring and the refinement acceptance gate.
double mean_nn_residual(const PointCloud& source, const KdTree& target_tree,
                        const Pose& pose);

}  // namespace fewshot6d
