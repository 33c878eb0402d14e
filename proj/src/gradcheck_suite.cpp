#include "simtune/gradcheck_suite.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "simtune/encoder.hpp"
#include "simtune/error.hpp"
#include "simtune/gradcheck.hpp"
#include "simtune/losses.hpp"

namespace simtune {

namespace {

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * rng.uniform(); }

std::size_t between(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.uniform_index(hi - lo + 1); }

Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols) {
    Matrix m(rows, cols);
    for (double& v : m.data()) v = rng.normal();
    return m;
}

// Packs matrices into one flat vector and unpacks views of it.
struct Packing {
    std::vector<std::pair<std::size_t, std::size_t>> shapes;

    std::vector<double> pack(std::initializer_list<const Matrix*> ms) {
        std::vector<double> flat;
        for (const Matrix* m : ms) {
            shapes.emplace_back(m->rows(), m->cols());
            flat.insert(flat.end(), m->data().begin(), m->data().end());
        }
        return flat;
    }

    std::vector<Matrix> unpack(std::span<const double> flat) const {
        std::vector<Matrix> out;
        std::size_t pos = 0;
        for (auto [r, c] : shapes) {
            out.emplace_back(r, c, std::vector<double>(flat.begin() + static_cast<std::ptrdiff_t>(pos),
                                                       flat.begin() + static_cast<std::ptrdiff_t>(pos + r * c)));
            pos += r * c;
        }
        return out;
    }
};

std::vector<double> concat(const std::vector<Matrix>& grads) {
    std::vector<double> flat;
    for (const auto& g : grads) flat.insert(flat.end(), g.data().begin(), g.data().end());
    return flat;
}

EncoderParams small_encoder(Rng& rng, std::size_t in, std::size_t hidden, std::size_t embed) {
    const std::size_t widths[] = {in, hidden, embed};
    EncoderParams p = init_encoder(widths, rng);
    for (auto& l : p.layers)
        for (double& b : l.bias) b = 0.3 * rng.normal();
    return p;
}

EncoderParams perturbed(const EncoderParams& p, Rng& rng, double scale) {
    EncoderParams q = p;
    for (auto view : parameter_views(q))
        for (double& v : view) v += scale * rng.normal();
    return q;
}

GradcheckInstance contrastive_case(Rng& rng, bool symmetric) {
    const std::size_t b = between(rng, 2, 6);
    const std::size_t d = between(rng, 2, 8);
    const double tau = uniform(rng, 0.05, 1.0);
    const Matrix u = random_matrix(rng, b, d);
    const Matrix v = random_matrix(rng, b, d);
    auto packing = std::make_shared<Packing>();
    GradcheckInstance inst;
    inst.at = packing->pack({&u, &v});
    inst.loss = [packing, tau, symmetric](std::span<const double> x) {
        const auto m = packing->unpack(x);
        return symmetric ? clip_symmetric_loss(m[0], m[1], tau).value : contrastive_loss(m[0], m[1], tau).value;
    };
    inst.analytic = concat(symmetric ? clip_symmetric_loss(u, v, tau).grads : contrastive_loss(u, v, tau).grads);
    return inst;
}

double distance(std::span<const double> x, std::span<const double> y, TripletMetric metric) {
    if (metric == TripletMetric::Cosine) return 1.0 - dot(x, y) / (norm2(x) * norm2(y));
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
    return std::sqrt(s);
}

GradcheckInstance triplet_case(Rng& rng) {
    const TripletMetric metric = rng.uniform() < 0.5 ? TripletMetric::Euclidean : TripletMetric::Cosine;
    for (;;) {
        const std::size_t b = between(rng, 1, 6);
        const std::size_t d = between(rng, 2, 8);
        const double margin = uniform(rng, 0.0, 1.0);
        const Matrix a = random_matrix(rng, b, d);
        const Matrix p = random_matrix(rng, b, d);
        const Matrix n = random_matrix(rng, b, d);
        // Resample until every row is clear of the hinge kink.
        bool off_kink = true;
        for (std::size_t i = 0; i < b; ++i) {
            const double slack = distance(a.row(i), p.row(i), metric) - distance(a.row(i), n.row(i), metric) + margin;
            if (std::abs(slack) < 1e-2) off_kink = false;
        }
        if (!off_kink) continue;
        auto packing = std::make_shared<Packing>();
        GradcheckInstance inst;
        inst.at = packing->pack({&a, &p, &n});
        inst.loss = [packing, margin, metric](std::span<const double> x) {
            const auto m = packing->unpack(x);
            return triplet_loss(m[0], m[1], m[2], margin, metric).value;
        };
        inst.analytic = concat(triplet_loss(a, p, n, margin, metric).grads);
        return inst;
    }
}

GradcheckInstance arc_case(Rng& rng) {
    const std::size_t n = between(rng, 2, 6);
    const std::size_t d = between(rng, 2, 6);
    const std::size_t c = between(rng, 2, 5);
    const double scale = uniform(rng, 1.0, 16.0);
    const double margin = uniform(rng, 0.0, 0.5);
    const Matrix emb = random_matrix(rng, n, d);
    const Matrix w = random_matrix(rng, c, d);
    std::vector<int> labels(n);
    for (int& l : labels) l = static_cast<int>(rng.uniform_index(c));
    auto packing = std::make_shared<Packing>();
    GradcheckInstance inst;
    inst.at = packing->pack({&emb, &w});
    inst.loss = [packing, labels, scale, margin](std::span<const double> x) {
        const auto m = packing->unpack(x);
        return arc_margin_loss(m[0], labels, m[1], scale, margin).value;
    };
    inst.analytic = concat(arc_margin_loss(emb, labels, w, scale, margin).grads);
    return inst;
}

GradcheckInstance similarity_case(Rng& rng) {
    const std::size_t in = between(rng, 2, 5);
    const EncoderParams params = small_encoder(rng, in, between(rng, 2, 6), between(rng, 2, 4));
    const auto snapshot = std::make_shared<EncoderSnapshot>(perturbed(params, rng, 0.3));
    const Matrix x = random_matrix(rng, between(rng, 1, 6), in);
    GradcheckInstance inst;
    inst.at = flatten(params);
    inst.loss = [params, snapshot, x](std::span<const double> flat) {
        EncoderParams p = params;
        unflatten(flat, p);
        return similarity_loss(p, *snapshot, x).value;
    };
    inst.analytic = flatten(similarity_loss(params, *snapshot, x).vision);
    return inst;
}

GradcheckInstance classification_case(Rng& rng) {
    const std::size_t in = between(rng, 2, 5);
    const std::size_t embed = between(rng, 2, 4);
    const EncoderParams params = small_encoder(rng, in, between(rng, 2, 6), embed);
    const auto snapshot = std::make_shared<EncoderSnapshot>(perturbed(params, rng, 0.3));
    const std::size_t classes = between(rng, 2, 4);
    std::vector<std::string> captions;
    for (std::size_t c = 0; c < classes; ++c) captions.push_back(caption_for_class("c" + std::to_string(c)));
    const CaptionTable table(captions, random_matrix(rng, classes, embed));
    LabeledBatch batch;
    const std::size_t b = between(rng, 2, 6);
    batch.images = random_matrix(rng, b, in);
    for (std::size_t i = 0; i < b; ++i) {
        const std::size_t c = rng.uniform_index(classes);
        batch.class_ids.push_back(static_cast<int>(c));
        batch.captions.push_back(captions[c]);
    }
    LossHyper hyper;
    hyper.tau = uniform(rng, 0.05, 1.0);
    const double alphas[] = {0.0, 0.1, 1.0, 100.0};
    hyper.alpha = alphas[rng.uniform_index(4)];

    const std::size_t n_vision = params.parameter_count();
    GradcheckInstance inst;
    inst.at = flatten(params);
    inst.at.insert(inst.at.end(), table.embeddings().data().begin(), table.embeddings().data().end());
    inst.loss = [=](std::span<const double> flat) {
        EncoderParams p = params;
        unflatten(flat.first(n_vision), p);
        CaptionTable t = table;
        std::copy(flat.begin() + static_cast<std::ptrdiff_t>(n_vision), flat.end(), t.embeddings().data().begin());
        return classification_objective(p, t, *snapshot, batch, hyper).value;
    };
    const ObjectiveValue v = classification_objective(params, table, *snapshot, batch, hyper);
    inst.analytic = flatten(v.vision);
    inst.analytic.insert(inst.analytic.end(), v.caption_grad.data().begin(), v.caption_grad.data().end());
    return inst;
}

PairBatch random_pair_batch(Rng& rng, std::size_t in) {
    PairBatch batch;
    const std::size_t b = between(rng, 2, 6);
    batch.u = random_matrix(rng, b, in);
    batch.v = batch.u;
    for (double& x : batch.v.data()) x += 0.5 * rng.normal();
    for (std::size_t i = 0; i < b; ++i) batch.identity_ids.push_back(static_cast<int>(i * 7 + 3));
    return batch;
}

GradcheckInstance pairwise_case(Rng& rng) {
    const std::size_t in = between(rng, 2, 5);
    const EncoderParams params = small_encoder(rng, in, between(rng, 2, 6), between(rng, 2, 4));
    const auto snapshot = std::make_shared<EncoderSnapshot>(perturbed(params, rng, 0.3));
    const PairBatch batch = random_pair_batch(rng, in);
    LossHyper hyper;
    hyper.alpha = rng.uniform() < 0.5 ? 1.0 : uniform(rng, 0.0, 10.0);
    hyper.tau = rng.uniform() < 0.5 ? 0.1 : uniform(rng, 0.05, 1.0);
    GradcheckInstance inst;
    inst.at = flatten(params);
    inst.loss = [=](std::span<const double> flat) {
        EncoderParams p = params;
        unflatten(flat, p);
        return pairwise_objective(p, *snapshot, batch, hyper).value;
    };
    inst.analytic = flatten(pairwise_objective(params, *snapshot, batch, hyper).vision);
    return inst;
}

GradcheckInstance margin_pairwise_case(Rng& rng) {
    const std::size_t in = between(rng, 2, 5);
    const std::size_t embed = between(rng, 2, 4);
    const EncoderParams params = small_encoder(rng, in, between(rng, 2, 6), embed);
    const auto snapshot = std::make_shared<EncoderSnapshot>(perturbed(params, rng, 0.3));
    const PairBatch batch = random_pair_batch(rng, in);
    const std::size_t classes = batch.u.rows() + between(rng, 0, 3);
    const Matrix weights = random_matrix(rng, classes, embed);
    std::vector<int> rows;
    for (std::size_t i = 0; i < batch.u.rows(); ++i) rows.push_back(static_cast<int>(i));
    LossHyper hyper;
    hyper.alpha = uniform(rng, 0.0, 2.0);
    hyper.arc_scale = uniform(rng, 1.0, 16.0);
    hyper.arc_margin = uniform(rng, 0.0, 0.5);

    const std::size_t n_vision = params.parameter_count();
    GradcheckInstance inst;
    inst.at = flatten(params);
    inst.at.insert(inst.at.end(), weights.data().begin(), weights.data().end());
    inst.loss = [=](std::span<const double> flat) {
        EncoderParams p = params;
        unflatten(flat.first(n_vision), p);
        Matrix w = weights;
        std::copy(flat.begin() + static_cast<std::ptrdiff_t>(n_vision), flat.end(), w.data().begin());
        return margin_pairwise_objective(p, *snapshot, batch, rows, w, hyper).value;
    };
    const ObjectiveValue v = margin_pairwise_objective(params, *snapshot, batch, rows, weights, hyper);
    inst.analytic = flatten(v.vision);
    inst.analytic.insert(inst.analytic.end(), v.class_weight_grad.data().begin(),
                         v.class_weight_grad.data().end());
    return inst;
}

}  // namespace

std::vector<GradcheckCase> default_gradcheck_cases() {
    return {
        {"contrastive_loss", [](Rng& r) { return contrastive_case(r, false); }},
        {"clip_symmetric_loss", [](Rng& r) { return contrastive_case(r, true); }},
        {"triplet_loss", triplet_case},
        {"arc_margin_loss", arc_case},
        {"similarity_loss", similarity_case},
        {"classification_objective", classification_case},
        {"pairwise_objective", pairwise_case},
        {"margin_pairwise_objective", margin_pairwise_case},
    };
}

std::vector<GradcheckResult> run_gradcheck(const std::vector<GradcheckCase>& cases,
                                           std::size_t instances, std::uint64_t seed, double h,
                                           std::string_view corrupt) {
    if (instances == 0) throw Error(ErrorKind::InvalidConfig, "gradcheck needs at least one instance");
    std::vector<GradcheckResult> results;
    Rng root(seed);
    for (const auto& c : cases) {
        Rng rng = root.split();
        GradcheckResult r{c.name, instances, 0.0, false};
        for (std::size_t i = 0; i < instances; ++i) {
            GradcheckInstance inst = c.make(rng);
            if (c.name == corrupt && !inst.analytic.empty()) {
                inst.analytic[i % inst.analytic.size()] += 0.1 + std::abs(inst.analytic[i % inst.analytic.size()]);
            }
            const auto numeric = finite_diff_grad(inst.loss, inst.at, h);
            const double floor = gradcheck_floor(inst.loss(inst.at));
            r.max_rel_err = std::max(r.max_rel_err, max_relative_error(inst.analytic, numeric, floor));
        }
        r.passed = r.max_rel_err < kGradcheckTolerance;
        results.push_back(r);
    }
    return results;
}

}  // namespace simtune
