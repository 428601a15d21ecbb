#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstdint>
#include <vector>

#include "fewshot6d/errors.hpp"

namespace fewshot6d {

// Pinhole camera model. Pixel centers sit on integer coordinates, so the
// optical axis projects exactly onto (cx, cy).
struct CameraIntrinsics {
    double fx = 0.0;
    double fy = 0.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 0;
    int height = 0;

    bool valid() const {
        return fx > 0.0 && fy > 0.0 && width > 0 && height > 0 &&
               cx >= 0.0 && cx < width && cy >= 0.0 && cy < height;
    }
};

// Rigid transform, object/source frame -> camera/target frame.
// Rotation drift from long composition chains is controlled by re-projecting
// onto SO(3) (polar decomposition) once the chain exceeds kMaxChain ops.
struct Pose {
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();
    int chain = 0;  // compositions since the last re-orthonormalization

    static constexpr int kMaxChain = 100;

    Eigen::Vector3d apply(const Eigen::Vector3d& p) const {
        return rotation * p + translation;
    }

    Eigen::Matrix4d matrix() const {
        Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
        m.topLeftCorner<3, 3>() = rotation;
        m.topRightCorner<3, 1>() = translation;
        return m;
    }

    static Pose from_matrix(const Eigen::Matrix4d& m) {
        Pose p;
        p.rotation = m.topLeftCorner<3, 3>();
        p.translation = m.topRightCorner<3, 1>();
        return p;
    }
};

bool is_valid_rotation(const Eigen::Matrix3d& r, double tol = 1e-9);

// Nearest rotation matrix in the Frobenius sense (polar decomposition).
Eigen::Matrix3d orthonormalize(const Eigen::Matrix3d& r);

Pose compose(const Pose& a, const Pose& b);  // applies b, then a
Pose invert(const Pose& a);

// 3D points in meters, optionally with one descriptor row per point.
struct PointCloud {
    std::vector<Eigen::Vector3d> points;
    Eigen::MatrixXd descriptors;  // rows() == points.size() when present

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
    bool has_descriptors() const { return descriptors.rows() > 0; }
};

PointCloud transform(const Pose& pose, const PointCloud& cloud);

// Registered color + depth pair. Color is RGB interleaved in [0,1]; depth is
// meters with 0 marking invalid pixels.
struct RgbdFrame {
    int width = 0;
    int height = 0;
    std::vector<float> color;  // 3 * width * height
    std::vector<float> depth;  // width * height
    CameraIntrinsics intrinsics;

    void resize(int w, int h) {
        width = w;
        height = h;
        color.assign(static_cast<std::size_t>(3) * w * h, 0.0f);
        depth.assign(static_cast<std::size_t>(w) * h, 0.0f);
    }

    float depth_at(int x, int y) const { return depth[idx(x, y)]; }
    const float* color_at(int x, int y) const { return &color[3 * idx(x, y)]; }
    float* color_at(int x, int y) { return &color[3 * idx(x, y)]; }

    std::size_t idx(int x, int y) const {
        return static_cast<std::size_t>(y) * width + x;
    }
};

// u = fx*x/z + cx, v = fy*y/z + cy. Throws NonPositiveDepth for z <= 0.
Eigen::Vector2d project(const Eigen::Vector3d& point, const CameraIntrinsics& k);

// Inverse of project at a given depth. Throws InvalidDepth for depth <= 0
// or non-finite depth.
Eigen::Vector3d backproject(const Eigen::Vector2d& pixel, double depth,
                            const CameraIntrinsics& k);

}  // namespace fewshot6d
