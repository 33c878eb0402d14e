#include "simtune/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "simtune/error.hpp"

namespace simtune {

std::string_view to_string(TripletMetric metric) {
    return metric == TripletMetric::Euclidean ? "euclidean" : "cosine";
}

TripletMetric triplet_metric_from_string(std::string_view name) {
    if (name == "euclidean") return TripletMetric::Euclidean;
    if (name == "cosine") return TripletMetric::Cosine;
    throw Error(ErrorKind::InvalidConfig, "unknown triplet metric '" + std::string(name) + "'");
}

void LossHyper::validate() const {
    if (!(tau > 0.0)) throw Error(ErrorKind::InvalidConfig, "tau must be > 0");
    if (!(alpha >= 0.0)) throw Error(ErrorKind::InvalidConfig, "alpha must be >= 0");
    if (!(margin >= 0.0)) throw Error(ErrorKind::InvalidConfig, "margin must be >= 0");
    if (!(arc_scale > 0.0)) throw Error(ErrorKind::InvalidConfig, "arc_scale must be > 0");
    if (!(arc_margin >= 0.0)) throw Error(ErrorKind::InvalidConfig, "arc_margin must be >= 0");
}

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw Error(ErrorKind::DimMismatch,
                    std::string(what) + ": " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                        " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    }
}

void require_finite(double v, const char* what) {
    if (!std::isfinite(v)) throw Error(ErrorKind::NonFinite, std::string(what) + " is not finite");
}

// Row-wise log-softmax cross-entropy against `targets`; writes d(mean loss)/d(logits).
double softmax_cross_entropy(const Matrix& logits, std::span<const std::size_t> targets,
                             Matrix& grad_logits) {
    const std::size_t n = logits.rows();
    const double inv_n = 1.0 / static_cast<double>(n);
    grad_logits = Matrix(n, logits.cols());
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        auto z = logits.row(i);
        const double zmax = *std::max_element(z.begin(), z.end());
        double sum = 0.0;
        for (double v : z) sum += std::exp(v - zmax);
        const double lse = zmax + std::log(sum);
        total += lse - z[targets[i]];
        auto g = grad_logits.row(i);
        for (std::size_t j = 0; j < z.size(); ++j) g[j] = std::exp(z[j] - lse) * inv_n;
        g[targets[i]] -= inv_n;
    }
    return total * inv_n;
}

void scale_in_place(Matrix& m, double s) {
    for (double& v : m.data()) v *= s;
}

}  // namespace

LossValue contrastive_loss(const Matrix& u, const Matrix& v, double tau) {
    if (!(tau > 0.0)) throw Error(ErrorKind::InvalidConfig, "tau must be > 0");
    require_same_shape(u, v, "contrastive_loss");
    if (u.rows() == 0) throw Error(ErrorKind::DimMismatch, "contrastive_loss on an empty batch");

    std::vector<double> nu, nv;
    const Matrix uh = row_l2_normalize(u, nu);
    const Matrix vh = row_l2_normalize(v, nv);
    Matrix logits = matmul_bt(uh, vh);
    scale_in_place(logits, 1.0 / tau);

    std::vector<std::size_t> diag(u.rows());
    for (std::size_t i = 0; i < diag.size(); ++i) diag[i] = i;
    Matrix g;
    LossValue out;
    out.value = softmax_cross_entropy(logits, diag, g);
    require_finite(out.value, "contrastive loss");

    scale_in_place(g, 1.0 / tau);
    const Matrix grad_uh = matmul(g, vh);
    const Matrix grad_vh = matmul_at(g, uh);
    out.grads.push_back(row_l2_normalize_backward(grad_uh, uh, nu));
    out.grads.push_back(row_l2_normalize_backward(grad_vh, vh, nv));
    return out;
}

LossValue clip_symmetric_loss(const Matrix& img, const Matrix& txt, double tau) {
    LossValue a = contrastive_loss(img, txt, tau);
    LossValue b = contrastive_loss(txt, img, tau);
    LossValue out;
    out.value = 0.5 * (a.value + b.value);
    Matrix gi = a.grads[0];
    add_in_place(gi, b.grads[1]);
    scale_in_place(gi, 0.5);
    Matrix gt = a.grads[1];
    add_in_place(gt, b.grads[0]);
    scale_in_place(gt, 0.5);
    out.grads = {std::move(gi), std::move(gt)};
    return out;
}

namespace {

// Distance between two rows and its gradient with respect to each row.
double row_distance(std::span<const double> x, std::span<const double> y, TripletMetric metric,
                    std::vector<double>& gx, std::vector<double>& gy) {
    const std::size_t d = x.size();
    gx.assign(d, 0.0);
    gy.assign(d, 0.0);
    if (metric == TripletMetric::Euclidean) {
        double s = 0.0;
        for (std::size_t c = 0; c < d; ++c) s += (x[c] - y[c]) * (x[c] - y[c]);
        const double dist = std::sqrt(s);
        if (dist > 0.0) {
            for (std::size_t c = 0; c < d; ++c) {
                gx[c] = (x[c] - y[c]) / dist;
                gy[c] = -gx[c];
            }
        }
        return dist;
    }
    const double nx = norm2(x);
    const double ny = norm2(y);
    if (!(nx > 1e-12) || !(ny > 1e-12)) throw Error(ErrorKind::ZeroRow, "triplet_loss cosine distance");
    const double cos = dot(x, y) / (nx * ny);
    // D = 1 - cos
    for (std::size_t c = 0; c < d; ++c) {
        gx[c] = -(y[c] / ny - cos * x[c] / nx) / nx;
        gy[c] = -(x[c] / nx - cos * y[c] / ny) / ny;
    }
    return 1.0 - cos;
}

}  // namespace

LossValue triplet_loss(const Matrix& a, const Matrix& p, const Matrix& n, double margin,
                       TripletMetric metric) {
    require_same_shape(a, p, "triplet_loss anchor/positive");
    require_same_shape(a, n, "triplet_loss anchor/negative");
    if (a.rows() == 0) throw Error(ErrorKind::DimMismatch, "triplet_loss on an empty batch");
    if (!(margin >= 0.0)) throw Error(ErrorKind::InvalidConfig, "margin must be >= 0");

    LossValue out;
    out.grads = {Matrix(a.rows(), a.cols()), Matrix(a.rows(), a.cols()), Matrix(a.rows(), a.cols())};
    const double inv_b = 1.0 / static_cast<double>(a.rows());
    std::vector<double> gap_a, gap_p, gan_a, gan_n;
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double dap = row_distance(a.row(i), p.row(i), metric, gap_a, gap_p);
        const double dan = row_distance(a.row(i), n.row(i), metric, gan_a, gan_n);
        const double slack = dap - dan + margin;
        if (slack <= 0.0) continue;
        out.value += slack * inv_b;
        auto ga = out.grads[0].row(i);
        auto gp = out.grads[1].row(i);
        auto gn = out.grads[2].row(i);
        for (std::size_t c = 0; c < a.cols(); ++c) {
            ga[c] += (gap_a[c] - gan_a[c]) * inv_b;
            gp[c] += gap_p[c] * inv_b;
            gn[c] -= gan_n[c] * inv_b;
        }
    }
    require_finite(out.value, "triplet loss");
    return out;
}

LossValue arc_margin_loss(const Matrix& emb, std::span<const int> labels, const Matrix& class_weights,
                          double scale, double margin) {
    if (emb.rows() == 0) throw Error(ErrorKind::DimMismatch, "arc_margin_loss on an empty batch");
    if (labels.size() != emb.rows()) throw Error(ErrorKind::DimMismatch, "one label per embedding row");
    if (emb.cols() != class_weights.cols())
        throw Error(ErrorKind::DimMismatch, "class weights dimension differs from embeddings");
    if (!(scale > 0.0) || !(margin >= 0.0))
        throw Error(ErrorKind::InvalidConfig, "arc_margin_loss needs scale > 0 and margin >= 0");
    const std::size_t num_classes = class_weights.rows();
    std::vector<std::size_t> targets(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
            throw Error(ErrorKind::LabelOutOfRange,
                        "label " + std::to_string(labels[i]) + " with " + std::to_string(num_classes) +
                            " classes");
        }
        targets[i] = static_cast<std::size_t>(labels[i]);
    }

    std::vector<double> ne, nw;
    const Matrix eh = row_l2_normalize(emb, ne);
    const Matrix wh = row_l2_normalize(class_weights, nw);
    Matrix cosines = matmul_bt(eh, wh);
    for (double& c : cosines.data()) c = std::clamp(c, -1.0, 1.0);

    const double cos_m = std::cos(margin);
    const double sin_m = std::sin(margin);
    Matrix logits = cosines;
    std::vector<double> target_slope(emb.rows(), 1.0);
    for (std::size_t i = 0; i < emb.rows(); ++i) {
        const double c = cosines(i, targets[i]);
        if (margin != 0.0) {
            const double sin_t = std::max(std::sqrt(std::max(0.0, 1.0 - c * c)), 1e-12);
            logits(i, targets[i]) = c * cos_m - sin_t * sin_m;  // cos(theta + m)
            target_slope[i] = cos_m + c * sin_m / sin_t;
        }
    }
    scale_in_place(logits, scale);

    Matrix g;
    LossValue out;
    out.value = softmax_cross_entropy(logits, targets, g);
    require_finite(out.value, "arc margin loss");

    scale_in_place(g, scale);
    for (std::size_t i = 0; i < emb.rows(); ++i) g(i, targets[i]) *= target_slope[i];
    const Matrix grad_eh = matmul(g, wh);
    const Matrix grad_wh = matmul_at(g, eh);
    out.grads.push_back(row_l2_normalize_backward(grad_eh, eh, ne));
    out.grads.push_back(row_l2_normalize_backward(grad_wh, wh, nw));
    return out;
}

namespace {

struct DriftTerm {
    double value = 0.0;  // sum of squared distances / batch_size
    Matrix grad_output;
};

DriftTerm drift_term(const Matrix& output, const EncoderSnapshot& snapshot, const Matrix& x,
                     double batch_size) {
    const Matrix frozen = forward_vision(snapshot.params(), x);
    if (frozen.cols() != output.cols())
        throw Error(ErrorKind::DimMismatch, "embedding dims differ from snapshot");
    DriftTerm t;
    t.grad_output = Matrix(output.rows(), output.cols());
    auto o = output.data();
    auto f = frozen.data();
    auto g = t.grad_output.data();
    for (std::size_t i = 0; i < o.size(); ++i) {
        const double d = o[i] - f[i];
        t.value += d * d;
        g[i] = 2.0 * d / batch_size;
    }
    t.value /= batch_size;
    return t;
}

}  // namespace

ObjectiveValue similarity_loss(const EncoderParams& params, const EncoderSnapshot& snapshot,
                               const Matrix& x) {
    if (x.rows() == 0) throw Error(ErrorKind::DimMismatch, "similarity_loss on an empty batch");
    ForwardCache cache;
    const Matrix out = forward_vision(params, x, cache);
    DriftTerm t = drift_term(out, snapshot, x, static_cast<double>(x.rows()));
    ObjectiveValue v;
    v.value = t.value;
    v.similarity_term = t.value;
    v.vision = backward_vision(params, cache, t.grad_output);
    return v;
}

ObjectiveValue classification_objective(const EncoderParams& params, const CaptionTable& table,
                                        const EncoderSnapshot& snapshot, const LabeledBatch& batch,
                                        const LossHyper& hyper) {
    hyper.validate();
    if (batch.images.rows() == 0) throw Error(ErrorKind::DimMismatch, "empty batch");
    if (batch.captions.size() != batch.images.rows())
        throw Error(ErrorKind::DimMismatch, "one caption per image");
    const auto rows = table.indices_of(batch.captions);
    const Matrix txt = select_rows(table.embeddings(), rows);

    ForwardCache cache;
    const Matrix img = forward_vision(params, batch.images, cache);
    const LossValue clip = clip_symmetric_loss(img, txt, hyper.tau);
    DriftTerm sim = drift_term(img, snapshot, batch.images, static_cast<double>(img.rows()));

    ObjectiveValue v;
    v.task_term = clip.value;
    v.similarity_term = sim.value;
    v.value = clip.value + hyper.alpha * sim.value;

    Matrix grad_img = clip.grads[0];
    add_in_place(grad_img, sim.grad_output, hyper.alpha);
    v.vision = backward_vision(params, cache, grad_img);

    v.caption_grad = Matrix(table.size(), table.embed_dim());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        auto dst = v.caption_grad.row(rows[i]);
        auto src = clip.grads[1].row(i);
        for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
    }
    return v;
}

ObjectiveValue pairwise_objective(const EncoderParams& params, const EncoderSnapshot& snapshot,
                                  const PairBatch& batch, const LossHyper& hyper) {
    hyper.validate();
    require_distinct_identities(batch);
    require_same_shape(batch.u, batch.v, "pairwise_objective views");
    if (batch.u.rows() == 0) throw Error(ErrorKind::DimMismatch, "empty batch");
    if (batch.identity_ids.size() != batch.u.rows()) {
        throw Error(ErrorKind::DimMismatch, "one identity id per pair required");
    }
    const double b = static_cast<double>(batch.u.rows());

    ForwardCache cu, cv;
    const Matrix fu = forward_vision(params, batch.u, cu);
    const Matrix fv = forward_vision(params, batch.v, cv);
    const LossValue clip = clip_symmetric_loss(fu, fv, hyper.tau);
    DriftTerm su = drift_term(fu, snapshot, batch.u, b);
    DriftTerm sv = drift_term(fv, snapshot, batch.v, b);

    ObjectiveValue v;
    v.task_term = clip.value;
    v.similarity_term = su.value + sv.value;
    v.value = clip.value + hyper.alpha * v.similarity_term;

    Matrix gu = clip.grads[0];
    add_in_place(gu, su.grad_output, hyper.alpha);
    Matrix gv = clip.grads[1];
    add_in_place(gv, sv.grad_output, hyper.alpha);
    v.vision = backward_vision(params, cu, gu);
    add_in_place(v.vision, backward_vision(params, cv, gv));
    return v;
}

ObjectiveValue margin_pairwise_objective(const EncoderParams& params,
                                         const EncoderSnapshot& snapshot, const PairBatch& batch,
                                         std::span<const int> class_rows,
                                         const Matrix& class_weights, const LossHyper& hyper) {
    hyper.validate();
    require_distinct_identities(batch);
    require_same_shape(batch.u, batch.v, "margin_pairwise_objective views");
    if (class_rows.size() != batch.u.rows())
        throw Error(ErrorKind::DimMismatch, "one class row per identity");
    const std::size_t n = batch.u.rows();
    const double b = static_cast<double>(n);

    ForwardCache cu, cv;
    const Matrix fu = forward_vision(params, batch.u, cu);
    const Matrix fv = forward_vision(params, batch.v, cv);
    std::vector<int> labels(class_rows.begin(), class_rows.end());
    labels.insert(labels.end(), class_rows.begin(), class_rows.end());
    const LossValue arc =
        arc_margin_loss(vstack(fu, fv), labels, class_weights, hyper.arc_scale, hyper.arc_margin);
    DriftTerm su = drift_term(fu, snapshot, batch.u, b);
    DriftTerm sv = drift_term(fv, snapshot, batch.v, b);

    ObjectiveValue v;
    v.task_term = arc.value;
    v.similarity_term = su.value + sv.value;
    v.value = arc.value + hyper.alpha * v.similarity_term;

    Matrix gu(n, fu.cols()), gv(n, fv.cols());
    for (std::size_t i = 0; i < n; ++i) {
        std::copy_n(arc.grads[0].row(i).begin(), fu.cols(), gu.row(i).begin());
        std::copy_n(arc.grads[0].row(n + i).begin(), fv.cols(), gv.row(i).begin());
    }
    add_in_place(gu, su.grad_output, hyper.alpha);
    add_in_place(gv, sv.grad_output, hyper.alpha);
    v.vision = backward_vision(params, cu, gu);
    add_in_place(v.vision, backward_vision(params, cv, gv));
    v.class_weight_grad = arc.grads[1];
    return v;
}

ObjectiveValue margin_classification_objective(const EncoderParams& params,
                                               const CaptionTable& table,
                                               const EncoderSnapshot& snapshot,
                                               const LabeledBatch& batch, const LossHyper& hyper) {
    hyper.validate();
    if (batch.captions.size() != batch.images.rows())
        throw Error(ErrorKind::DimMismatch, "one caption per image");
    const auto rows = table.indices_of(batch.captions);
    std::vector<int> labels(rows.begin(), rows.end());

    ForwardCache cache;
    const Matrix img = forward_vision(params, batch.images, cache);
    const LossValue arc =
        arc_margin_loss(img, labels, table.embeddings(), hyper.arc_scale, hyper.arc_margin);
    DriftTerm sim = drift_term(img, snapshot, batch.images, static_cast<double>(img.rows()));

    ObjectiveValue v;
    v.task_term = arc.value;
    v.similarity_term = sim.value;
    v.value = arc.value + hyper.alpha * sim.value;
    Matrix grad_img = arc.grads[0];
    add_in_place(grad_img, sim.grad_output, hyper.alpha);
    v.vision = backward_vision(params, cache, grad_img);
    v.caption_grad = arc.grads[1];
    return v;
}

}  // namespace simtune
