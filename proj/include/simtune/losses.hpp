#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "simtune/encoder.hpp"
#include "simtune/matrix.hpp"
#include "simtune/sampler.hpp"

namespace simtune {

enum class TripletMetric { Euclidean, Cosine };

std::string_view to_string(TripletMetric metric);
TripletMetric triplet_metric_from_string(std::string_view name);

struct LossHyper {
    double tau = 0.1;
    double margin = 0.2;
    double alpha = 0.0;
    double arc_scale = 64.0;
    double arc_margin = 0.5;
    TripletMetric triplet_metric = TripletMetric::Euclidean;

    /// Throws InvalidConfig on tau <= 0, alpha < 0, margin < 0, arc_scale <= 0
    /// or arc_margin < 0.
    void validate() const;
};

/// Loss over embedding matrices. grads[i] is dL/d(input i), shape-matched.
struct LossValue {
    double value = 0.0;
    std::vector<Matrix> grads;
};

/// Mean over anchors of -log softmax_j(cos(u_i, v_j)/tau)[i]. The denominator
/// includes the positive pair.
LossValue contrastive_loss(const Matrix& u, const Matrix& v, double tau);

/// (contrastive(img, txt) + contrastive(txt, img)) / 2.
LossValue clip_symmetric_loss(const Matrix& img, const Matrix& txt, double tau);

/// Mean over rows of max(D(a,p) - D(a,n) + margin, 0). The subgradient at
/// zero slack is zero.
LossValue triplet_loss(const Matrix& a, const Matrix& p, const Matrix& n, double margin,
                       TripletMetric metric = TripletMetric::Euclidean);

/// Additive angular margin cross-entropy: logits s*cos(theta_j), target logit
/// s*cos(theta_y + m). grads = {d/d emb, d/d class_weights}.
LossValue arc_margin_loss(const Matrix& emb, std::span<const int> labels,
                          const Matrix& class_weights, double scale, double margin);

/// A task term plus the weighted similarity term, with gradients for every
/// trainable parameter group touched.
struct ObjectiveValue {
    double value = 0.0;
    double task_term = 0.0;        // contrastive / CLIP / angular-margin part
    double similarity_term = 0.0;  // unweighted similarity-loss part
    EncoderGrads vision;
    Matrix caption_grad;           // shaped like the caption table, empty if unused
    Matrix class_weight_grad;      // shaped like the class weights, empty if unused
};

/// mean_i ||f_theta(x_i) - f_theta0(x_i)||^2; gradient flows only into params.
ObjectiveValue similarity_loss(const EncoderParams& params, const EncoderSnapshot& snapshot,
                               const Matrix& x);

/// CLIP loss between image embeddings and caption rows + alpha * mean drift of
/// the images.
ObjectiveValue classification_objective(const EncoderParams& params, const CaptionTable& table,
                                        const EncoderSnapshot& snapshot, const LabeledBatch& batch,
                                        const LossHyper& hyper);

/// CLIP loss between f(U) and f(V) + alpha * mean_i(drift(U_i) + drift(V_i)).
/// Throws DuplicateIdentity when identities repeat.
ObjectiveValue pairwise_objective(const EncoderParams& params, const EncoderSnapshot& snapshot,
                                  const PairBatch& batch, const LossHyper& hyper);

/// Angular-margin variant of the pairwise objective: both views are classified
/// against `class_weights`, row `class_rows[i]` holding identity i of the batch.
ObjectiveValue margin_pairwise_objective(const EncoderParams& params,
                                         const EncoderSnapshot& snapshot, const PairBatch& batch,
                                         std::span<const int> class_rows,
                                         const Matrix& class_weights, const LossHyper& hyper);

/// Angular-margin variant of the classification objective, using caption
/// rows as class weights.
ObjectiveValue margin_classification_objective(const EncoderParams& params,
                                               const CaptionTable& table,
                                               const EncoderSnapshot& snapshot,
                                               const LabeledBatch& batch, const LossHyper& hyper);

}  // namespace simtune
