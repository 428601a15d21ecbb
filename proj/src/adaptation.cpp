#include "fewshot6d/adaptation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>

namespace fewshot6d {

namespace {

Eigen::VectorXd segment_mean_feature(const DenseFeatureMap& feat, const Segment& seg) {
    if (seg.pixels.empty()) throw EmptySegment("segment " + std::to_string(seg.id));
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(feat.dim);
    for (const auto pi : seg.pixels) mean += feat.at(static_cast<std::size_t>(pi));
    return mean / static_cast<double>(seg.pixels.size());
}

// Ordered positive pairs; the single-positive case degenerates to the
// self-pair so the loss still discriminates against negatives.
std::vector<std::pair<int, int>> positive_pairs(int m) {
    std::vector<std::pair<int, int>> pairs;
    if (m == 1) {
        pairs.emplace_back(0, 0);
        return pairs;
    }
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < m; ++j) {
            if (i != j) pairs.emplace_back(i, j);
        }
    }
    return pairs;
}

struct Reps {
    Eigen::MatrixXd r;        // unit columns, positives first then negatives
    Eigen::VectorXd inv_norm; // 1/|W m| per column
};

Reps compute_reps(const detail::AdaptationProblem& problem, const Eigen::MatrixXd& head) {
    const int m = static_cast<int>(problem.positive_feats.size());
    const int k = static_cast<int>(problem.negative_feats.size());
    Reps reps;
    reps.r.resize(head.rows(), m + k);
    reps.inv_norm.resize(m + k);
    for (int c = 0; c < m + k; ++c) {
        const Eigen::VectorXd& feat =
            c < m ? problem.positive_feats[c] : problem.negative_feats[c - m];
        Eigen::VectorXd u = head * feat;
        const double n = u.norm();
        reps.inv_norm[c] = 1.0 / n;
        reps.r.col(c) = u * reps.inv_norm[c];
    }
    return reps;
}

}  // namespace

double contrastive_loss(const Eigen::VectorXd& r_i, const Eigen::VectorXd& r_j,
                        const std::vector<Eigen::VectorXd>& negatives, double tau) {
    if (r_i.size() != r_j.size()) {
        throw DimensionMismatch("r_i has dim " + std::to_string(r_i.size()) +
                                ", r_j has dim " + std::to_string(r_j.size()));
    }
    for (const auto& n : negatives) {
        if (n.size() != r_i.size()) {
            throw DimensionMismatch("negative has dim " + std::to_string(n.size()) +
                                    ", expected " + std::to_string(r_i.size()));
        }
    }
    if (negatives.empty()) return 0.0;

    const double s_pos = r_i.dot(r_j) / tau;
    double max_term = s_pos;
    std::vector<double> terms;
    terms.reserve(negatives.size() + 1);
    terms.push_back(s_pos);
    for (const auto& n : negatives) {
        const double s = r_i.dot(n) / tau;
        terms.push_back(s);
        max_term = std::max(max_term, s);
    }
    double sum = 0.0;
    for (const double t : terms) sum += std::exp(t - max_term);
    const double lse = max_term + std::log(sum);
    return lse - s_pos;
}

namespace detail {

AdaptationProblem build_problem(const std::vector<ReferenceSample>& references,
                                const std::vector<DenseFeatureMap>& feat_maps) {
    if (references.size() != feat_maps.size()) {
        throw DimensionMismatch("got " + std::to_string(references.size()) +
                                " references but " + std::to_string(feat_maps.size()) +
                                " feature maps");
    }
    AdaptationProblem problem;
    for (std::size_t i = 0; i < references.size(); ++i) {
        const auto& ref = references[i];
        const auto& feat = feat_maps[i];
        if (problem.feature_dim == 0) problem.feature_dim = feat.dim;
        if (feat.dim != problem.feature_dim) {
            throw DimensionMismatch("feature map " + std::to_string(i) + " has dim " +
                                    std::to_string(feat.dim) + ", expected " +
                                    std::to_string(problem.feature_dim));
        }
        if (ref.positive_id) {
            const Segment* s = ref.segmentation.find(*ref.positive_id);
            if (s == nullptr) {
                throw NoSegments("reference " + std::to_string(i) +
                                 " names a missing positive segment");
            }
            problem.positive_feats.push_back(segment_mean_feature(feat, *s));
        }
        for (const int nid : ref.negative_ids) {
            const Segment* s = ref.segmentation.find(nid);
            if (s == nullptr) continue;
            problem.negative_feats.push_back(segment_mean_feature(feat, *s));
        }
    }
    return problem;
}

double problem_loss(const AdaptationProblem& problem, const Eigen::MatrixXd& head,
                    double tau, double* mean_loss) {
    const int m = static_cast<int>(problem.positive_feats.size());
    const int k = static_cast<int>(problem.negative_feats.size());
    if (m == 0) throw NoPositives("no reference contributed a positive segment");
    const Reps reps = compute_reps(problem, head);
    const auto pairs = positive_pairs(m);

    double total = 0.0;
    std::vector<double> terms(k + 1);
    for (const auto& [i, j] : pairs) {
        const double s_pos = reps.r.col(i).dot(reps.r.col(j)) / tau;
        if (k == 0) continue;  // empty denominator beyond the positive: exact 0
        double max_term = s_pos;
        terms[0] = s_pos;
        for (int n = 0; n < k; ++n) {
            terms[n + 1] = reps.r.col(i).dot(reps.r.col(m + n)) / tau;
            max_term = std::max(max_term, terms[n + 1]);
        }
        double sum = 0.0;
        for (const double t : terms) sum += std::exp(t - max_term);
        total += max_term + std::log(sum) - s_pos;
    }
    if (mean_loss != nullptr) *mean_loss = total / static_cast<double>(pairs.size());
    return total;
}

Eigen::MatrixXd problem_gradient(const AdaptationProblem& problem,
                                 const Eigen::MatrixXd& head, double tau) {
    const int m = static_cast<int>(problem.positive_feats.size());
    const int k = static_cast<int>(problem.negative_feats.size());
    if (m == 0) throw NoPositives("no reference contributed a positive segment");
    const Reps reps = compute_reps(problem, head);
    const auto pairs = positive_pairs(m);

    // Coefficients dL/ds_ab accumulated over all pairs' softmax terms.
    Eigen::MatrixXd coeff = Eigen::MatrixXd::Zero(m + k, m + k);
    std::vector<double> p(k + 1);
    for (const auto& [i, j] : pairs) {
        if (k == 0) continue;
        double max_term = reps.r.col(i).dot(reps.r.col(j)) / tau;
        p[0] = max_term;
        for (int n = 0; n < k; ++n) {
            p[n + 1] = reps.r.col(i).dot(reps.r.col(m + n)) / tau;
            max_term = std::max(max_term, p[n + 1]);
        }
        double sum = 0.0;
        for (auto& v : p) {
            v = std::exp(v - max_term);
            sum += v;
        }
        for (auto& v : p) v /= sum;
        coeff(i, j) += (p[0] - 1.0) / tau;
        for (int n = 0; n < k; ++n) coeff(i, m + n) += p[n + 1] / tau;
    }

    const auto feat_of = [&](int c) -> const Eigen::VectorXd& {
        return c < m ? problem.positive_feats[c] : problem.negative_feats[c - m];
    };

    // d s_ab / dW = (I - r_a r_a^T) r_b / |u_a| m_a^T + (a <-> b); the
    // self-similarity s_aa is constant 1 and contributes nothing.
    Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(head.rows(), head.cols());
    for (int a = 0; a < m + k; ++a) {
        for (int b = 0; b < m + k; ++b) {
            const double c = coeff(a, b);
            if (c == 0.0 || a == b) continue;
            const Eigen::VectorXd ra = reps.r.col(a);
            const Eigen::VectorXd rb = reps.r.col(b);
            const Eigen::VectorXd da = (rb - ra * ra.dot(rb)) * reps.inv_norm[a];
            const Eigen::VectorXd db = (ra - rb * rb.dot(ra)) * reps.inv_norm[b];
            grad.noalias() += c * da * feat_of(a).transpose();
            grad.noalias() += c * db * feat_of(b).transpose();
        }
    }
    return grad;
}

Eigen::MatrixXd initial_head(int embed_dim, int feature_dim) {
    Eigen::MatrixXd head = Eigen::MatrixXd::Zero(embed_dim, feature_dim);
    for (int r = 0; r < embed_dim; ++r) head(r, r % feature_dim) = 1.0;
    return head;
}

}  // namespace detail

ReferenceSample mine_reference(const RgbdFrame& frame, const Pose& pose,
                               const Segmentation& segmentation,
                               double fallback_radius_px) {
    ReferenceSample ref;
    ref.frame = frame;
    ref.pose = pose;
    ref.segmentation = segmentation;

    const Eigen::Vector2d center = project(pose.translation, frame.intrinsics);
    const long px = std::lround(center.x());
    const long py = std::lround(center.y());
    if (px < 0 || py < 0 || px >= frame.width || py >= frame.height) {
        throw CenterOutsideImage("object center projects to (" + std::to_string(center.x()) +
                                 ", " + std::to_string(center.y()) + ")");
    }

    const std::int32_t label = segmentation.label_map[segmentation.width * py + px];
    if (label > 0) {
        ref.positive_id = label;
    } else {
        // Occluded-center fallback: nearest segment within the radius.
        double best_d = std::numeric_limits<double>::infinity();
        int best_id = 0;
        for (const auto& seg : segmentation.segments) {
            for (const auto pi : seg.pixels) {
                const double dx = static_cast<double>(pi % segmentation.width) - center.x();
                const double dy = static_cast<double>(pi / segmentation.width) - center.y();
                const double d = std::sqrt(dx * dx + dy * dy);
                if (d < best_d) {
                    best_d = d;
                    best_id = seg.id;
                }
            }
        }
        if (best_id != 0 && best_d <= fallback_radius_px) ref.positive_id = best_id;
    }

    for (const auto& seg : segmentation.segments) {
        if (ref.positive_id && seg.id == *ref.positive_id) continue;
        ref.negative_ids.push_back(seg.id);
    }
    return ref;
}

double total_loss(const AdaptationState& state) {
    const int m = static_cast<int>(state.r_positive.size());
    if (m == 0) throw NoPositives("adaptation state holds no positive representations");
    double total = 0.0;
    for (const auto& [i, j] : positive_pairs(m)) {
        total += contrastive_loss(state.r_positive[i], state.r_positive[j],
                                  state.r_negative, state.temperature);
    }
    return total;
}

AdaptationState adapt(const std::vector<ReferenceSample>& references,
                      const std::vector<DenseFeatureMap>& feat_maps,
                      const Config::Adaptation& cfg) {
    const auto problem = detail::build_problem(references, feat_maps);
    if (problem.positive_feats.empty()) {
        throw NoPositives("no reference contributed a positive segment");
    }

    Eigen::MatrixXd head = detail::initial_head(cfg.embed_dim, problem.feature_dim);
    std::vector<double> history;

    for (int iter = 0;; ++iter) {
        double mean = 0.0;
        problem_loss(problem, head, cfg.temperature, &mean);
        history.push_back(mean);
        if (mean < cfg.loss_threshold || iter >= cfg.max_iterations) break;

        const Eigen::MatrixXd grad =
            detail::problem_gradient(problem, head, cfg.temperature) /
            static_cast<double>(positive_pairs(static_cast<int>(problem.positive_feats.size())).size());

        // Halving backtracking: accept the first step that does not increase
        // the loss; stop once no step helps.
        double alpha = cfg.step;
        bool improved = false;
        while (alpha >= 1e-9) {
            const Eigen::MatrixXd candidate = head - alpha * grad;
            double cand_mean = 0.0;
            problem_loss(problem, candidate, cfg.temperature, &cand_mean);
            if (cand_mean <= mean) {
                head = candidate;
                improved = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!improved) break;
    }

    AdaptationState state;
    state.head = head;
    state.temperature = cfg.temperature;
    state.loss_history = std::move(history);
    const Reps reps = compute_reps(problem, head);
    const int m = static_cast<int>(problem.positive_feats.size());
    const int k = static_cast<int>(problem.negative_feats.size());
    for (int i = 0; i < m; ++i) state.r_positive.push_back(reps.r.col(i));
    for (int n = 0; n < k; ++n) state.r_negative.push_back(reps.r.col(m + n));
    Eigen::VectorXd mean_rep = Eigen::VectorXd::Zero(head.rows());
    for (const auto& r : state.r_positive) mean_rep += r;
    state.r_star = mean_rep / mean_rep.norm();
    return state;
}

TargetPrediction identify_target(const DenseFeatureMap& test_feat,
                                 const Segmentation& test_seg,
                                 const AdaptationState& state,
                                 double conf_seg_uncertain) {
    if (test_seg.segments.empty()) throw NoSegments("test segmentation is empty");
    if (state.r_star.size() == 0) throw NoPositives("adaptation state has no r_star");

    TargetPrediction pred;
    for (const auto& seg : test_seg.segments) {
        const Eigen::VectorXd rep = segment_representation(test_feat, seg, &state.head);
        pred.ranked_candidates.emplace_back(seg.id, rep.dot(state.r_star));
    }
    std::sort(pred.ranked_candidates.begin(), pred.ranked_candidates.end(),
              [](const auto& a, const auto& b) {
                  if (a.second != b.second) return a.second > b.second;
                  return a.first < b.first;
              });
    pred.segment_id = pred.ranked_candidates.front().first;
    pred.conf = pred.ranked_candidates.front().second;
    if (pred.ranked_candidates.size() >= 2) {
        const double second = pred.ranked_candidates[1].second;
        pred.conf_seg = second != 0.0 ? pred.conf / second
                                      : std::numeric_limits<double>::infinity();
    } else {
        pred.conf_seg = std::numeric_limits<double>::infinity();
    }
    pred.uncertain = pred.conf_seg < conf_seg_uncertain;
    return pred;
}

namespace {

constexpr std::uint32_t kStateMagic = 0x54534441;  // "ADST"
constexpr std::uint32_t kStateVersion = 1;

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
}

void write_vector(std::ofstream& out, const Eigen::VectorXd& v) {
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
}

Eigen::VectorXd read_vector(std::ifstream& in, int n) {
    Eigen::VectorXd v(n);
    in.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    return v;
}

}  // namespace

void save_adaptation_state(const std::string& path, const AdaptationState& state) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write adaptation state '" + path + "'");
    const auto e = static_cast<std::uint32_t>(state.head.rows());
    const auto d = static_cast<std::uint32_t>(state.head.cols());
    write_pod(out, kStateMagic);
    write_pod(out, kStateVersion);
    write_pod(out, e);
    write_pod(out, d);
    for (std::uint32_t r = 0; r < e; ++r) {
        for (std::uint32_t c = 0; c < d; ++c) write_pod(out, state.head(r, c));
    }
    write_pod(out, static_cast<std::uint32_t>(state.r_positive.size()));
    for (const auto& v : state.r_positive) write_vector(out, v);
    write_pod(out, static_cast<std::uint32_t>(state.r_negative.size()));
    for (const auto& v : state.r_negative) write_vector(out, v);
    write_vector(out, state.r_star);
    write_pod(out, state.temperature);
    write_pod(out, static_cast<std::uint32_t>(state.loss_history.size()));
    for (const double v : state.loss_history) write_pod(out, v);
    if (!out) throw IoError("short write on adaptation state '" + path + "'");
}

AdaptationState load_adaptation_state(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read adaptation state '" + path + "'");
    if (read_pod<std::uint32_t>(in) != kStateMagic) {
        throw IoError("bad adaptation state magic in '" + path + "'");
    }
    const auto version = read_pod<std::uint32_t>(in);
    if (version != kStateVersion) {
        throw IoError("unsupported adaptation state version " + std::to_string(version));
    }
    const auto e = read_pod<std::uint32_t>(in);
    const auto d = read_pod<std::uint32_t>(in);
    AdaptationState state;
    state.head.resize(e, d);
    for (std::uint32_t r = 0; r < e; ++r) {
        for (std::uint32_t c = 0; c < d; ++c) state.head(r, c) = read_pod<double>(in);
    }
    const auto m = read_pod<std::uint32_t>(in);
    for (std::uint32_t i = 0; i < m; ++i) state.r_positive.push_back(read_vector(in, e));
    const auto k = read_pod<std::uint32_t>(in);
    for (std::uint32_t i = 0; i < k; ++i) state.r_negative.push_back(read_vector(in, e));
    state.r_star = read_vector(in, e);
    state.temperature = read_pod<double>(in);
    const auto hn = read_pod<std::uint32_t>(in);
    for (std::uint32_t i = 0; i < hn; ++i) state.loss_history.push_back(read_pod<double>(in));
    if (!in) throw IoError("short read on adaptation state '" + path + "'");
    return state;
}

}  // namespace fewshot6d
