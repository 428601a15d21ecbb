#include "fewshot6d/geometry.hpp"

#include <Eigen/SVD>

#include <cmath>

namespace fewshot6d {

bool is_valid_rotation(const Eigen::Matrix3d& r, double tol) {
    for (int c = 0; c < 3; ++c) {
        if (std::abs(r.col(c).norm() - 1.0) > tol) return false;
    }
    return std::abs(r.determinant() - 1.0) <= tol;
}

Eigen::Matrix3d orthonormalize(const Eigen::Matrix3d& r) {
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d u = svd.matrixU();
    Eigen::Matrix3d v = svd.matrixV();
    Eigen::Matrix3d out = u * v.transpose();
    if (out.determinant() < 0.0) {
        u.col(2) *= -1.0;
        out = u * v.transpose();
    }
    return out;
}

Pose compose(const Pose& a, const Pose& b) {
    Pose out;
    out.rotation = a.rotation * b.rotation;
    out.translation = a.rotation * b.translation + a.translation;
    out.chain = a.chain + b.chain + 1;
    if (out.chain > Pose::kMaxChain) {
        out.rotation = orthonormalize(out.rotation);
        out.chain = 0;
    }
    return out;
}

Pose invert(const Pose& a) {
    Pose out;
    out.rotation = a.rotation.transpose();
    out.translation = -(out.rotation * a.translation);
    out.chain = a.chain;
    return out;
}

PointCloud transform(const Pose& pose, const PointCloud& cloud) {
    PointCloud out;
    out.points.reserve(cloud.points.size());
    for (const auto& p : cloud.points) out.points.push_back(pose.apply(p));
    out.descriptors = cloud.descriptors;
    return out;
}

Eigen::Vector2d project(const Eigen::Vector3d& point, const CameraIntrinsics& k) {
    const double z = point.z();
    if (!(z > 0.0)) {
        throw NonPositiveDepth("point depth must be positive, got z=" + std::to_string(z));
    }
    return {k.fx * point.x() / z + k.cx, k.fy * point.y() / z + k.cy};
}

Eigen::Vector3d backproject(const Eigen::Vector2d& pixel, double depth,
                            const CameraIntrinsics& k) {
    if (!(depth > 0.0) || !std::isfinite(depth)) {
        throw InvalidDepth("depth must be positive and finite, got " + std::to_string(depth));
    }
    return {(pixel.x() - k.cx) * depth / k.fx, (pixel.y() - k.cy) * depth / k.fy, depth};
}

}  // namespace fewshot6d
