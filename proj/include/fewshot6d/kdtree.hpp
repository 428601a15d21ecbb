#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

namespace fewshot6d {

// Median-split k-d tree over fixed-dimension points, shared by registration,
// mean-shift, and the ADD-S metric. Build is deterministic for a given input
// order; queries return exact results.
class KdTree {
public:
    KdTree() = default;

    // data: n points, row-major, dim values each. Copied in.
    KdTree(const double* data, std::size_t n, int dim) { build(data, n, dim); }

    explicit KdTree(const std::vector<Eigen::Vector3d>& pts) {
        std::vector<double> flat;
        flat.reserve(pts.size() * 3);
        for (const auto& p : pts) {
            flat.push_back(p.x());
            flat.push_back(p.y());
            flat.push_back(p.z());
        }
        build(flat.data(), pts.size(), 3);
    }

    void build(const double* data, std::size_t n, int dim) {
        dim_ = dim;
        n_ = n;
        pts_.assign(data, data + n * dim);
        idx_.resize(n);
        std::iota(idx_.begin(), idx_.end(), std::size_t{0});
        nodes_.clear();
        nodes_.reserve(2 * n + 1);
        if (n > 0) root_ = build_node(0, n);
    }

    std::size_t size() const { return n_; }
    int dim() const { return dim_; }

    // Index and squared distance of the nearest point; n must be > 0.
    std::pair<std::size_t, double> nearest(const double* q) const {
        std::size_t best = idx_[0];
        double best_d2 = std::numeric_limits<double>::infinity();
        search_nearest(root_, q, best, best_d2);
        return {best, best_d2};
    }

    std::pair<std::size_t, double> nearest(const Eigen::Vector3d& q) const {
        return nearest(q.data());
    }

    // All point indices within radius of q, appended in ascending index order.
    void radius(const double* q, double r, std::vector<std::size_t>& out) const {
        out.clear();
        if (n_ == 0) return;
        search_radius(root_, q, r * r, out);
        std::sort(out.begin(), out.end());
    }

private:
    struct Node {
        int axis = -1;           // -1 marks a leaf
        double split = 0.0;
        std::int32_t left = -1;
        std::int32_t right = -1;
        std::uint32_t begin = 0;  // leaf range into idx_
        std::uint32_t end = 0;
    };

    static constexpr std::size_t kLeafSize = 16;

    const double* point(std::size_t i) const { return &pts_[i * dim_]; }

    double dist2(const double* a, const double* b) const {
        double s = 0.0;
        for (int d = 0; d < dim_; ++d) {
            const double diff = a[d] - b[d];
            s += diff * diff;
        }
        return s;
    }

    std::int32_t build_node(std::size_t begin, std::size_t end) {
        Node node;
        if (end - begin <= kLeafSize) {
            node.begin = static_cast<std::uint32_t>(begin);
            node.end = static_cast<std::uint32_t>(end);
            nodes_.push_back(node);
            return static_cast<std::int32_t>(nodes_.size() - 1);
        }
        // Split on the axis with the largest spread over this range.
        int axis = 0;
        double best_spread = -1.0;
        for (int d = 0; d < dim_; ++d) {
            double lo = std::numeric_limits<double>::infinity();
            double hi = -lo;
            for (std::size_t i = begin; i < end; ++i) {
                const double v = point(idx_[i])[d];
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            if (hi - lo > best_spread) {
                best_spread = hi - lo;
                axis = d;
            }
        }
        const std::size_t mid = begin + (end - begin) / 2;
        std::nth_element(idx_.begin() + begin, idx_.begin() + mid, idx_.begin() + end,
                         [&](std::size_t a, std::size_t b) {
                             const double va = point(a)[axis];
                             const double vb = point(b)[axis];
                             return va < vb || (va == vb && a < b);
                         });
        node.axis = axis;
        node.split = point(idx_[mid])[axis];
        nodes_.push_back(node);
        const auto self = static_cast<std::int32_t>(nodes_.size() - 1);
        const auto left = build_node(begin, mid);
        const auto right = build_node(mid, end);
        nodes_[self].left = left;
        nodes_[self].right = right;
        return self;
    }

    void search_nearest(std::int32_t ni, const double* q, std::size_t& best,
                        double& best_d2) const {
        const Node& node = nodes_[ni];
        if (node.axis < 0) {
            for (std::uint32_t i = node.begin; i < node.end; ++i) {
                const std::size_t pi = idx_[i];
                const double d2 = dist2(q, point(pi));
                if (d2 < best_d2 || (d2 == best_d2 && pi < best)) {
                    best_d2 = d2;
                    best = pi;
                }
            }
            return;
        }
        const double delta = q[node.axis] - node.split;
        const std::int32_t near = delta < 0.0 ? node.left : node.right;
        const std::int32_t far = delta < 0.0 ? node.right : node.left;
        search_nearest(near, q, best, best_d2);
        if (delta * delta <= best_d2) search_nearest(far, q, best, best_d2);
    }

    void search_radius(std::int32_t ni, const double* q, double r2,
                       std::vector<std::size_t>& out) const {
        const Node& node = nodes_[ni];
        if (node.axis < 0) {
            for (std::uint32_t i = node.begin; i < node.end; ++i) {
                const std::size_t pi = idx_[i];
                if (dist2(q, point(pi)) <= r2) out.push_back(pi);
            }
            return;
        }
        const double delta = q[node.axis] - node.split;
        const std::int32_t near = delta < 0.0 ? node.left : node.right;
        const std::int32_t far = delta < 0.0 ? node.right : node.left;
        search_radius(near, q, r2, out);
        if (delta * delta <= r2) search_radius(far, q, r2, out);
    }

    int dim_ = 0;
    std::size_t n_ = 0;
    std::int32_t root_ = -1;
    std::vector<double> pts_;
    std::vector<std::size_t> idx_;
    std::vector<Node> nodes_;
};

}  // namespace fewshot6d
