#include "fewshot6d/object_model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "fewshot6d/kdtree.hpp"

namespace fewshot6d {

PointCloud segment_to_cloud(const RgbdFrame& frame, const Segment& segment) {
    if (segment.pixels.empty()) throw EmptySegment("segment " + std::to_string(segment.id));
    PointCloud cloud;
    for (const auto pi : segment.pixels) {
        const int x = static_cast<int>(pi % frame.width);
        const int y = static_cast<int>(pi / frame.width);
        const double d = frame.depth_at(x, y);
        if (d > 0.0) {
            cloud.points.push_back(backproject({double(x), double(y)}, d, frame.intrinsics));
        }
    }
    if (cloud.empty()) {
        throw EmptyCloud("segment " + std::to_string(segment.id) + " has no valid depth");
    }
    return cloud;
}

PointCloud voxel_downsample(const PointCloud& cloud, double voxel) {
    if (!(voxel > 0.0)) throw ConfigError("voxel size must be positive");
    std::map<std::array<std::int64_t, 3>, std::vector<std::size_t>> cells;
    for (std::size_t i = 0; i < cloud.points.size(); ++i) {
        const auto& p = cloud.points[i];
        cells[{static_cast<std::int64_t>(std::floor(p.x() / voxel)),
               static_cast<std::int64_t>(std::floor(p.y() / voxel)),
               static_cast<std::int64_t>(std::floor(p.z() / voxel))}]
            .push_back(i);
    }
    PointCloud out;
    out.points.reserve(cells.size());
    for (auto& [key, members] : cells) {
        // Sorted accumulation keeps the centroid independent of input order.
        std::sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
            const auto& pa = cloud.points[a];
            const auto& pb = cloud.points[b];
            if (pa.x() != pb.x()) return pa.x() < pb.x();
            if (pa.y() != pb.y()) return pa.y() < pb.y();
            return pa.z() < pb.z();
        });
        Eigen::Vector3d sum = Eigen::Vector3d::Zero();
        for (const auto m : members) sum += cloud.points[m];
        out.points.push_back(sum / static_cast<double>(members.size()));
    }
    return out;
}

PointCloud remove_statistical_outliers(const PointCloud& cloud, int k, double sigma) {
    const std::size_t n = cloud.points.size();
    if (n <= static_cast<std::size_t>(k) + 1) return cloud;
    KdTree tree(cloud.points);
    std::vector<double> mean_dist(n, 0.0);
    std::vector<std::pair<double, std::size_t>> heap;
    for (std::size_t i = 0; i < n; ++i) {
        // k nearest via a widening radius search around the query point.
        double r = 0.0;
        std::vector<std::size_t> nbrs;
        for (r = 1e-3; nbrs.size() <= static_cast<std::size_t>(k); r *= 2.0) {
            tree.radius(cloud.points[i].data(), r, nbrs);
            if (r > 1e6) break;
        }
        std::vector<double> dists;
        dists.reserve(nbrs.size());
        for (const auto j : nbrs) {
            if (j != i) dists.push_back((cloud.points[j] - cloud.points[i]).norm());
        }
        std::sort(dists.begin(), dists.end());
        double sum = 0.0;
        const std::size_t kk = std::min<std::size_t>(k, dists.size());
        for (std::size_t j = 0; j < kk; ++j) sum += dists[j];
        mean_dist[i] = kk > 0 ? sum / static_cast<double>(kk) : 0.0;
    }
    double mu = 0.0;
    for (const double d : mean_dist) mu += d;
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (const double d : mean_dist) var += (d - mu) * (d - mu);
    const double sd = std::sqrt(var / static_cast<double>(n));
    const double cutoff = mu + sigma * sd;
    PointCloud out;
    for (std::size_t i = 0; i < n; ++i) {
        if (mean_dist[i] <= cutoff) out.points.push_back(cloud.points[i]);
    }
    return out;
}

ObjectModel build_canonical_model(const std::vector<std::pair<PointCloud, Pose>>& clouds,
                                  const Config::Model& cfg) {
    PointCloud merged;
    int sources = 0;
    for (const auto& [cloud, pose] : clouds) {
        if (cloud.empty()) continue;
        const Pose to_canonical = invert(pose);
        for (const auto& p : cloud.points) merged.points.push_back(to_canonical.apply(p));
        ++sources;
    }
    if (merged.empty()) throw EmptyCloud("no reference view produced any points");

    if (cfg.outlier_removal) {
        merged = remove_statistical_outliers(merged, cfg.outlier_k, cfg.outlier_sigma);
    }
    ObjectModel model;
    model.canonical_cloud = voxel_downsample(merged, cfg.voxel);
    model.diameter = estimate_diameter(model.canonical_cloud);
    model.source_count = sources;
    return model;
}

double estimate_diameter(const PointCloud& cloud, std::size_t max_exact) {
    const std::size_t n = cloud.points.size();
    if (n < 2) throw TooFewPoints("diameter needs at least 2 points, got " + std::to_string(n));

    const std::vector<Eigen::Vector3d>* pts = &cloud.points;
    std::vector<Eigen::Vector3d> thinned;
    if (n > max_exact) {
        // Deterministic thinning: sort lexicographically, take a fixed stride.
        thinned = cloud.points;
        std::sort(thinned.begin(), thinned.end(),
                  [](const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
                      if (a.x() != b.x()) return a.x() < b.x();
                      if (a.y() != b.y()) return a.y() < b.y();
                      return a.z() < b.z();
                  });
        const std::size_t stride = (n + max_exact - 1) / max_exact;
        std::vector<Eigen::Vector3d> kept;
        for (std::size_t i = 0; i < n; i += stride) kept.push_back(thinned[i]);
        thinned = std::move(kept);
        pts = &thinned;
    }

    double best2 = 0.0;
    const auto& v = *pts;
    for (std::size_t i = 0; i + 1 < v.size(); ++i) {
        for (std::size_t j = i + 1; j < v.size(); ++j) {
            best2 = std::max(best2, (v[i] - v[j]).squaredNorm());
        }
    }
    return std::sqrt(best2);
}

void save_object_model(const std::string& path, const ObjectModel& model) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write object model '" + path + "'");
    char line[128];
    std::snprintf(line, sizeof(line), "%zu %.17g\n", model.canonical_cloud.points.size(),
                  model.diameter);
    out << line;
    for (const auto& p : model.canonical_cloud.points) {
        std::snprintf(line, sizeof(line), "%.17g %.17g %.17g\n", p.x(), p.y(), p.z());
        out << line;
    }
    if (!out) throw IoError("short write on object model '" + path + "'");
}

ObjectModel load_object_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read object model '" + path + "'");
    std::size_t count = 0;
    ObjectModel model;
    if (!(in >> count >> model.diameter)) {
        throw IoError("bad object model header in '" + path + "'");
    }
    model.canonical_cloud.points.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        auto& p = model.canonical_cloud.points[i];
        if (!(in >> p.x() >> p.y() >> p.z())) {
            throw IoError("object model '" + path + "' truncated at point " + std::to_string(i));
        }
    }
    model.source_count = 1;
    return model;
}

}  // namespace fewshot6d
