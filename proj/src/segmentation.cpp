#include "fewshot6d/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>

#include "fewshot6d/kdtree.hpp"
#include "fewshot6d/parallel.hpp"

namespace fewshot6d {

namespace {

double srgb_to_linear(double c) {
    return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

double lab_f(double t) {
    constexpr double delta = 6.0 / 29.0;
    return t > delta * delta * delta ? std::cbrt(t)
                                     : t / (3.0 * delta * delta) + 4.0 / 29.0;
}

}  // namespace

Eigen::Vector3d rgb_to_lab_normalized(float r, float g, float b) {
    const double rl = srgb_to_linear(r);
    const double gl = srgb_to_linear(g);
    const double bl = srgb_to_linear(b);
    // sRGB D65 reference white.
    const double x = (0.4124564 * rl + 0.3575761 * gl + 0.1804375 * bl) / 0.95047;
    const double y = 0.2126729 * rl + 0.7151522 * gl + 0.0721750 * bl;
    const double z = (0.0193339 * rl + 0.1191920 * gl + 0.9503041 * bl) / 1.08883;
    const double fx = lab_f(x);
    const double fy = lab_f(y);
    const double fz = lab_f(z);
    const double lab_l = 116.0 * fy - 16.0;
    const double lab_a = 500.0 * (fx - fy);
    const double lab_b = 200.0 * (fy - fz);
    return {lab_l / 100.0, lab_a / 128.0, lab_b / 128.0};
}

DenseFeatureMap extract_features(const RgbdFrame& frame, const Config::Segmentation& cfg) {
    const int w = frame.width;
    const int h = frame.height;
    DenseFeatureMap feat;
    feat.resize(w, h, 9);

    std::size_t n_valid = 0;
    std::vector<Eigen::Vector3d> points(static_cast<std::size_t>(w) * h,
                                        Eigen::Vector3d::Zero());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double d = frame.depth_at(x, y);
            if (d > 0.0) {
                points[frame.idx(x, y)] = backproject({double(x), double(y)}, d, frame.intrinsics);
                feat.valid[feat.idx(x, y)] = 1;
                ++n_valid;
            }
        }
    }
    if (n_valid == 0) throw AllDepthInvalid("frame has no pixel with positive depth");

    auto diff = [&](int x0, int y0, int x1, int y1) -> Eigen::Vector3d {
        // Central difference, degrading to one-sided when a neighbor is missing.
        const bool v0 = x0 >= 0 && y0 >= 0 && x0 < w && y0 < h && feat.valid[feat.idx(x0, y0)];
        const bool v1 = x1 >= 0 && y1 >= 0 && x1 < w && y1 < h && feat.valid[feat.idx(x1, y1)];
        if (v0 && v1) return points[frame.idx(x1, y1)] - points[frame.idx(x0, y0)];
        return Eigen::Vector3d::Zero();
    };

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!feat.valid[feat.idx(x, y)]) continue;
            const Eigen::Vector3d& p = points[frame.idx(x, y)];
            const float* rgb = frame.color_at(x, y);
            const Eigen::Vector3d lab = rgb_to_lab_normalized(rgb[0], rgb[1], rgb[2]);

            Eigen::Vector3d dx = diff(x - 1, y, x + 1, y);
            if (dx.isZero()) dx = diff(x, y, x + 1, y) + diff(x - 1, y, x, y);
            Eigen::Vector3d dy = diff(x, y - 1, x, y + 1);
            if (dy.isZero()) dy = diff(x, y, x, y + 1) + diff(x, y - 1, x, y);
            Eigen::Vector3d n = dx.cross(dy);
            const double nn = n.norm();
            if (nn > 1e-12) {
                n /= nn;
                if (n.dot(p) > 0.0) n = -n;  // face the camera
            } else {
                n.setZero();
            }

            auto f = feat.at(x, y);
            f.segment<3>(0) = cfg.color_weight * lab;
            f.segment<3>(3) = cfg.normal_weight * n;
            f.segment<3>(6) = (cfg.position_weight / cfg.scene_scale) * p;
        }
    }
    return feat;
}

namespace {

// Density sample: quantized, weight-accumulated copy of the seed subgrid.
// Member features are summed in sorted order so the result is independent of
// pixel iteration order.
struct SampleSet {
    std::vector<double> pos;      // n * dim
    std::vector<double> weight;   // n
    int dim = 0;
    std::size_t size() const { return weight.size(); }
};

SampleSet build_samples(const DenseFeatureMap& feat, double bandwidth, int stride) {
    const int dim = feat.dim;
    std::vector<std::size_t> linear;
    for (int y = 0; y < feat.height; y += stride) {
        for (int x = 0; x < feat.width; x += stride) {
            if (feat.valid[feat.idx(x, y)]) linear.push_back(feat.idx(x, y));
        }
    }
    if (linear.empty()) {
        for (std::size_t i = 0; i < feat.valid.size(); ++i) {
            if (feat.valid[i]) linear.push_back(i);
        }
    }

    const double cell = bandwidth / 16.0;
    std::map<std::vector<std::int64_t>, std::vector<std::size_t>> cells;
    std::vector<std::int64_t> key(dim);
    for (const auto li : linear) {
        const auto f = feat.at(li);
        for (int d = 0; d < dim; ++d) key[d] = static_cast<std::int64_t>(std::floor(f[d] / cell));
        cells[key].push_back(li);
    }

    SampleSet out;
    out.dim = dim;
    for (auto& [k, members] : cells) {
        std::sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
            const auto fa = feat.at(a);
            const auto fb = feat.at(b);
            for (int d = 0; d < dim; ++d) {
                if (fa[d] != fb[d]) return fa[d] < fb[d];
            }
            return a < b;
        });
        Eigen::VectorXd sum = Eigen::VectorXd::Zero(dim);
        for (const auto m : members) sum += feat.at(m);
        sum /= static_cast<double>(members.size());
        for (int d = 0; d < dim; ++d) out.pos.push_back(sum[d]);
        out.weight.push_back(static_cast<double>(members.size()));
    }
    return out;
}

struct UnionFind {
    std::vector<std::size_t> parent;
    explicit UnionFind(std::size_t n) : parent(n) {
        std::iota(parent.begin(), parent.end(), std::size_t{0});
    }
    std::size_t find(std::size_t a) {
        while (parent[a] != a) {
            parent[a] = parent[parent[a]];
            a = parent[a];
        }
        return a;
    }
    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return;
        if (b < a) std::swap(a, b);
        parent[b] = a;
    }
};

}  // namespace

Segmentation mean_shift_segment(const DenseFeatureMap& feat, double bandwidth,
                                const Config::Segmentation& cfg, int jobs) {
    if (!(bandwidth > 0.0)) throw ConfigError("mean-shift bandwidth must be positive");
    const int dim = feat.dim;
    Segmentation seg;
    seg.width = feat.width;
    seg.height = feat.height;
    seg.label_map.assign(feat.valid.size(), 0);

    const SampleSet samples = build_samples(feat, bandwidth, std::max(1, cfg.seed_stride));
    if (samples.size() == 0) return seg;

    KdTree tree(samples.pos.data(), samples.size(), dim);
    const double query_radius = 3.0 * bandwidth;
    const double inv_two_bw2 = 1.0 / (2.0 * bandwidth * bandwidth);
    const double converge_eps2 = (bandwidth * 1e-3) * (bandwidth * 1e-3);

    // Every sample is a seed; iterate to its density mode.
    std::vector<double> modes(samples.pos.size());
    parallel_for(samples.size(), jobs, [&](std::size_t si) {
        std::vector<double> m(samples.pos.begin() + si * dim,
                              samples.pos.begin() + (si + 1) * dim);
        std::vector<double> next(dim);
        std::vector<std::size_t> nbrs;
        for (int it = 0; it < cfg.max_iterations; ++it) {
            tree.radius(m.data(), query_radius, nbrs);
            double wsum = 0.0;
            std::fill(next.begin(), next.end(), 0.0);
            for (const auto ni : nbrs) {
                const double* x = &samples.pos[ni * dim];
                double d2 = 0.0;
                for (int d = 0; d < dim; ++d) {
                    const double diff = m[d] - x[d];
                    d2 += diff * diff;
                }
                const double wk = samples.weight[ni] * std::exp(-d2 * inv_two_bw2);
                wsum += wk;
                for (int d = 0; d < dim; ++d) next[d] += wk * x[d];
            }
            if (wsum <= 0.0) break;
            double shift2 = 0.0;
            for (int d = 0; d < dim; ++d) {
                next[d] /= wsum;
                const double diff = next[d] - m[d];
                shift2 += diff * diff;
            }
            m = next;
            if (shift2 < converge_eps2) break;
        }
        std::copy(m.begin(), m.end(), modes.begin() + si * dim);
    });

    // Deduplicate coincident modes, then merge modes within bandwidth/2
    // transitively. Union-find over the proximity graph is independent of
    // processing order.
    const double dedup_cell = bandwidth * 1e-2;
    std::map<std::vector<std::int64_t>, std::vector<std::size_t>> mode_cells;
    std::vector<std::int64_t> key(dim);
    for (std::size_t si = 0; si < samples.size(); ++si) {
        for (int d = 0; d < dim; ++d) {
            key[d] = static_cast<std::int64_t>(std::floor(modes[si * dim + d] / dedup_cell));
        }
        mode_cells[key].push_back(si);
    }
    std::vector<double> umodes;          // unique modes, n_u * dim
    std::vector<double> uweight;         // total sample weight per unique mode
    std::vector<std::size_t> sample_to_unique(samples.size());
    for (const auto& [k, members] : mode_cells) {
        const std::size_t ui = uweight.size();
        Eigen::VectorXd sum = Eigen::VectorXd::Zero(dim);
        double wsum = 0.0;
        for (const auto si : members) {
            sum += Eigen::Map<const Eigen::VectorXd>(&modes[si * dim], dim) * samples.weight[si];
            wsum += samples.weight[si];
            sample_to_unique[si] = ui;
        }
        sum /= wsum;
        for (int d = 0; d < dim; ++d) umodes.push_back(sum[d]);
        uweight.push_back(wsum);
    }
    const std::size_t n_unique = uweight.size();

    KdTree mode_tree(umodes.data(), n_unique, dim);
    UnionFind uf(n_unique);
    std::vector<std::size_t> nbrs;
    for (std::size_t ui = 0; ui < n_unique; ++ui) {
        mode_tree.radius(&umodes[ui * dim], bandwidth / 2.0, nbrs);
        for (const auto vj : nbrs) uf.unite(ui, vj);
    }

    std::vector<std::int32_t> unique_to_cluster(n_unique);
    std::int32_t n_clusters = 0;
    {
        std::map<std::size_t, std::int32_t> roots;
        for (std::size_t ui = 0; ui < n_unique; ++ui) {
            const auto root = uf.find(ui);
            auto it = roots.find(root);
            if (it == roots.end()) it = roots.emplace(root, n_clusters++).first;
            unique_to_cluster[ui] = it->second;
        }
    }

    // Assign every valid pixel to the cluster of its nearest converged mode.
    const std::size_t n_px = feat.valid.size();
    std::vector<std::int32_t> px_cluster(n_px, -1);
    parallel_for(n_px, jobs, [&](std::size_t pi) {
        if (!feat.valid[pi]) return;
        const auto [ui, d2] = mode_tree.nearest(&feat.data[pi * dim]);
        (void)d2;
        px_cluster[pi] = unique_to_cluster[ui];
    });

    std::vector<std::int64_t> cluster_px(n_clusters, 0);
    for (std::size_t pi = 0; pi < n_px; ++pi) {
        if (px_cluster[pi] >= 0) ++cluster_px[px_cluster[pi]];
    }

    const double area_scale = static_cast<double>(feat.width) * feat.height / (640.0 * 480.0);
    const std::int64_t min_px =
        std::max<std::int64_t>(1, std::llround(cfg.min_segment_px * area_scale));

    // Keep clusters meeting the size floor; order by pixel count (largest
    // first), tie-broken by first pixel, and relabel 1..N.
    std::vector<std::int32_t> keep;
    for (std::int32_t c = 0; c < n_clusters; ++c) {
        if (cluster_px[c] >= min_px) keep.push_back(c);
    }
    std::vector<std::int64_t> first_px(n_clusters, std::numeric_limits<std::int64_t>::max());
    for (std::size_t pi = 0; pi < n_px; ++pi) {
        const auto c = px_cluster[pi];
        if (c >= 0 && first_px[c] == std::numeric_limits<std::int64_t>::max()) {
            first_px[c] = static_cast<std::int64_t>(pi);
        }
    }
    std::sort(keep.begin(), keep.end(), [&](std::int32_t a, std::int32_t b) {
        if (cluster_px[a] != cluster_px[b]) return cluster_px[a] > cluster_px[b];
        return first_px[a] < first_px[b];
    });

    std::vector<std::int32_t> cluster_to_label(n_clusters, 0);
    for (std::size_t i = 0; i < keep.size(); ++i) {
        cluster_to_label[keep[i]] = static_cast<std::int32_t>(i + 1);
    }

    seg.segments.resize(keep.size());
    for (std::size_t i = 0; i < keep.size(); ++i) {
        auto& s = seg.segments[i];
        s.id = static_cast<std::int32_t>(i + 1);
        s.min_x = feat.width;
        s.min_y = feat.height;
        s.max_x = -1;
        s.max_y = -1;
    }
    for (std::size_t pi = 0; pi < n_px; ++pi) {
        const auto c = px_cluster[pi];
        if (c < 0) continue;
        const auto label = cluster_to_label[c];
        if (label == 0) continue;
        seg.label_map[pi] = label;
        auto& s = seg.segments[label - 1];
        s.pixels.push_back(static_cast<std::int32_t>(pi));
        const int x = static_cast<int>(pi % feat.width);
        const int y = static_cast<int>(pi / feat.width);
        s.min_x = std::min(s.min_x, x);
        s.min_y = std::min(s.min_y, y);
        s.max_x = std::max(s.max_x, x);
        s.max_y = std::max(s.max_y, y);
    }
    return seg;
}

Eigen::VectorXd segment_representation(const DenseFeatureMap& feat, const Segment& seg,
                                       const Eigen::MatrixXd* head) {
    if (seg.pixels.empty()) throw EmptySegment("segment " + std::to_string(seg.id));
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(feat.dim);
    for (const auto pi : seg.pixels) {
        mean += feat.at(static_cast<std::size_t>(pi));
    }
    mean /= static_cast<double>(seg.pixels.size());

    Eigen::VectorXd rep;
    if (head != nullptr) {
        if (head->cols() != feat.dim) {
            throw DimensionMismatch("head expects dim " + std::to_string(head->cols()) +
                                    ", features have " + std::to_string(feat.dim));
        }
        rep = (*head) * mean;
    } else {
        rep = mean;
    }
    const double n = rep.norm();
    if (!(n > 0.0)) throw EmptySegment("segment " + std::to_string(seg.id) +
                                       " has a zero representation");
    return rep / n;
}

void write_feature_map(const std::string& path, const DenseFeatureMap& feat) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write feature map '" + path + "'");
    const std::uint32_t header[4] = {kFeatureMapMagic, static_cast<std::uint32_t>(feat.height),
                                     static_cast<std::uint32_t>(feat.width),
                                     static_cast<std::uint32_t>(feat.dim)};
    out.write(reinterpret_cast<const char*>(header), sizeof(header));
    std::vector<float> buf(feat.data.size());
    for (std::size_t i = 0; i < feat.data.size(); ++i) buf[i] = static_cast<float>(feat.data[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!out) throw IoError("short write on feature map '" + path + "'");
}

DenseFeatureMap read_feature_map(const std::string& path, const RgbdFrame& frame) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read feature map '" + path + "'");
    std::uint32_t header[4] = {0, 0, 0, 0};
    in.read(reinterpret_cast<char*>(header), sizeof(header));
    if (!in || header[0] != kFeatureMapMagic) {
        throw IoError("bad feature map header in '" + path + "'");
    }
    const int h = static_cast<int>(header[1]);
    const int w = static_cast<int>(header[2]);
    const int d = static_cast<int>(header[3]);
    if (w != frame.width || h != frame.height) {
        throw IoError("feature map size " + std::to_string(w) + "x" + std::to_string(h) +
                      " does not match frame " + std::to_string(frame.width) + "x" +
                      std::to_string(frame.height));
    }
    DenseFeatureMap feat;
    feat.resize(w, h, d);
    std::vector<float> buf(feat.data.size());
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!in) throw IoError("short read on feature map '" + path + "'");
    for (std::size_t i = 0; i < buf.size(); ++i) feat.data[i] = buf[i];
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            feat.valid[feat.idx(x, y)] = frame.depth_at(x, y) > 0.0f ? 1 : 0;
        }
    }
    return feat;
}

}  // namespace fewshot6d
