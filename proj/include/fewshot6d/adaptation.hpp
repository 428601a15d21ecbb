#pragma once

#include <Eigen/Core>

#include <optional>
#include <string>
#include <vector>

#include "fewshot6d/config.hpp"
#include "fewshot6d/geometry.hpp"
#include "fewshot6d/segmentation.hpp"

namespace fewshot6d {

// One posed reference image with its mined positive/negative segments.
struct ReferenceSample {
    RgbdFrame frame;
    Pose pose;  // object -> camera
    Segmentation segmentation;
    std::optional<int> positive_id;
    std::vector<int> negative_ids;
};

// The adapted embedding head plus the representation sets it produces.
// All representation vectors are unit norm; r_star is the normalized mean
// of r_positive. loss_history records the mean pair loss per iteration.
struct AdaptationState {
    Eigen::MatrixXd head;                     // E x D projection
    std::vector<Eigen::VectorXd> r_positive;  // one per reference with a positive
    std::vector<Eigen::VectorXd> r_negative;
    Eigen::VectorXd r_star;
    std::vector<double> loss_history;
    double temperature = 0.07;
};

struct TargetPrediction {
    int segment_id = 0;
    double conf = 0.0;      // cosine similarity of the winner to r_star
    double conf_seg = 0.0;  // winner conf / runner-up conf; +inf with one candidate
    bool uncertain = false; // conf_seg below the configured near-tie threshold
    std::vector<std::pair<int, double>> ranked_candidates;  // conf descending
};

// Chooses the positive segment by reprojecting the object center; every other
// segment becomes a negative. A center on background falls back to the
// nearest segment within fallback_radius_px; past that the sample carries
// negatives only. Throws CenterOutsideImage when the center projects off the
// frame.
ReferenceSample mine_reference(const RgbdFrame& frame, const Pose& pose,
                               const Segmentation& segmentation,
                               double fallback_radius_px = 10.0);

// l_ij = -log( exp(sim(r_i,r_j)/tau) / sum_{r' in negatives + {r_j}} exp(sim(r_i,r')/tau) ),
// evaluated in log-sum-exp form. Exactly 0 when negatives is empty.
double contrastive_loss(const Eigen::VectorXd& r_i, const Eigen::VectorXd& r_j,
                        const std::vector<Eigen::VectorXd>& negatives, double tau);

// Sum of contrastive_loss over ordered positive pairs (i != j); a single
// positive uses the self-pair so the loss reduces to discriminating it
// against the negatives.
double total_loss(const AdaptationState& state);

// Gradient-descent adaptation of the head on the mined segments. Segments
// stay fixed; representations are recomputed from the updated head every
// iteration. Stops when the mean pair loss drops below cfg.loss_threshold
// or after cfg.max_iterations.
AdaptationState adapt(const std::vector<ReferenceSample>& references,
                      const std::vector<DenseFeatureMap>& feat_maps,
                      const Config::Adaptation& cfg);

// Ranks the test segments by cosine similarity to r_star.
TargetPrediction identify_target(const DenseFeatureMap& test_feat,
                                 const Segmentation& test_seg,
                                 const AdaptationState& state,
                                 double conf_seg_uncertain = 1.05);

// Versioned binary serialization so adapt and estimate can run as separate
// invocations.
void save_adaptation_state(const std::string& path, const AdaptationState& state);
AdaptationState load_adaptation_state(const std::string& path);

namespace detail {

// Mean base feature per mined segment; positives ordered by reference index.
struct AdaptationProblem {
    std::vector<Eigen::VectorXd> positive_feats;
    std::vector<Eigen::VectorXd> negative_feats;
    int feature_dim = 0;
};

AdaptationProblem build_problem(const std::vector<ReferenceSample>& references,
                                const std::vector<DenseFeatureMap>& feat_maps);

// Sum (and mean) of the pair losses for head W on the problem's features.
double problem_loss(const AdaptationProblem& problem, const Eigen::MatrixXd& head,
                    double tau, double* mean_loss = nullptr);

// Analytic d(total_loss)/dW; exposed for the finite-difference check.
Eigen::MatrixXd problem_gradient(const AdaptationProblem& problem,
                                 const Eigen::MatrixXd& head, double tau);

// Tiled-identity initial head (row-orthonormal identity slice when E <= D).
Eigen::MatrixXd initial_head(int embed_dim, int feature_dim);

}  // namespace detail

}  // namespace fewshot6d
