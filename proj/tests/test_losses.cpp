#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "simtune/gradcheck.hpp"
#include "simtune/gradcheck_suite.hpp"
#include "simtune/losses.hpp"
#include "simtune/sampler.hpp"
#include "test_util.hpp"

using namespace simtune;

namespace {

Matrix permute_rows(const Matrix& m, const std::vector<std::size_t>& perm) { return select_rows(m, perm); }

EncoderParams small_net(std::uint64_t seed) {
    Rng rng(seed);
    const std::size_t widths[] = {3, 6, 4};
    return init_encoder(widths, rng);
}

EncoderParams perturbed(const EncoderParams& p, std::uint64_t seed, double scale) {
    Rng rng(seed);
    EncoderParams q = p;
    for (auto view : parameter_views(q))
        for (double& v : view) v += scale * rng.normal();
    return q;
}

struct Fixture {
    EncoderParams theta;
    EncoderParams theta0;
    CaptionTable table;
    LabeledBatch batch;
};

Fixture classification_fixture(std::uint64_t seed) {
    Fixture f;
    f.theta0 = small_net(seed);
    f.theta = perturbed(f.theta0, seed + 1, 0.2);
    Rng rng(seed + 2);
    std::vector<std::string> captions;
    for (int c = 0; c < 4; ++c) captions.push_back(caption_for_class(class_name(c)));
    f.table = CaptionTable(captions, testutil::random_matrix(4, 4, rng));
    f.batch.images = testutil::random_matrix(6, 3, rng);
    for (int i = 0; i < 6; ++i) {
        f.batch.class_ids.push_back(i % 4);
        f.batch.captions.push_back(captions[static_cast<std::size_t>(i % 4)]);
    }
    return f;
}

double clip_of(const Fixture& f, double tau) {
    return clip_symmetric_loss(forward_vision(f.theta, f.batch.images), forward_text(f.table, f.batch.captions), tau)
        .value;
}

}  // namespace

TEST_CASE("contrastive_loss: single pair is exactly zero") {
    Rng rng(1);
    for (double tau : {0.01, 0.1, 1.0}) {
        const auto lv = contrastive_loss(testutil::random_matrix(1, 5, rng), testutil::random_matrix(1, 5, rng), tau);
        CHECK(lv.value == 0.0);
    }
}

TEST_CASE("contrastive_loss: uniform similarities give ln N") {
    for (std::size_t n : {2u, 4u, 7u}) {
        for (double tau : {0.01, 0.1, 1.0, 10.0}) {
            const Matrix same(n, 3, 1.0);
            CHECK(std::abs(contrastive_loss(same, same, tau).value - std::log(static_cast<double>(n))) <= 1e-9);
        }
    }
}

TEST_CASE("contrastive_loss matches the definition") {
    Rng rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t b = 1 + rng.uniform_index(8);
        const Matrix u = testutil::random_matrix(b, 5, rng);
        const Matrix v = testutil::random_matrix(b, 5, rng);
        CHECK(contrastive_loss(u, v, 0.5).value == doctest::Approx(oracle::contrastive(u, v, 0.5)).epsilon(1e-12));
    }
}

TEST_CASE("contrastive_loss gradient on a random 4x8 batch") {
    Rng rng(3);
    const Matrix u = testutil::random_matrix(4, 8, rng);
    const Matrix v = testutil::random_matrix(4, 8, rng);
    const auto lv = contrastive_loss(u, v, 0.1);
    std::vector<double> at(u.data().begin(), u.data().end());
    at.insert(at.end(), v.data().begin(), v.data().end());
    auto f = [](std::span<const double> x) {
        return contrastive_loss(Matrix(4, 8, {x.begin(), x.begin() + 32}), Matrix(4, 8, {x.begin() + 32, x.end()}), 0.1)
            .value;
    };
    std::vector<double> analytic(lv.grads[0].data().begin(), lv.grads[0].data().end());
    analytic.insert(analytic.end(), lv.grads[1].data().begin(), lv.grads[1].data().end());
    CHECK(max_relative_error(analytic, finite_diff_grad(f, at), gradcheck_floor(lv.value)) < 1e-4);
}

TEST_CASE("contrastive_loss stays finite at small temperature") {
    Rng rng(4);
    for (double tau : {0.01, 1e-3}) {
        const auto lv = contrastive_loss(testutil::random_matrix(16, 8, rng), testutil::random_matrix(16, 8, rng), tau);
        CHECK(std::isfinite(lv.value));
        CHECK(all_finite(lv.grads[0]));
    }
}

TEST_CASE("contrastive terms are invariant to positive row scaling") {
    Rng rng(5);
    const Matrix u = testutil::random_matrix(5, 4, rng);
    const Matrix v = testutil::random_matrix(5, 4, rng);
    Matrix scaled = u;
    for (std::size_t i = 0; i < scaled.rows(); ++i)
        for (double& x : scaled.row(i)) x *= 0.1 + 10.0 * static_cast<double>(i);
    CHECK(contrastive_loss(scaled, v, 0.1).value == doctest::Approx(contrastive_loss(u, v, 0.1).value).epsilon(1e-12));
    CHECK(clip_symmetric_loss(scaled, v, 0.1).value ==
          doctest::Approx(clip_symmetric_loss(u, v, 0.1).value).epsilon(1e-12));
}

TEST_CASE("contrastive_loss errors") {
    CHECK_THROWS_KIND(contrastive_loss(Matrix{{1, 0}}, Matrix{{1, 0}, {0, 1}}, 0.1), ErrorKind::DimMismatch);
    CHECK_THROWS_KIND(contrastive_loss(Matrix{{1, 0}}, Matrix{{1, 0}}, 0.0), ErrorKind::InvalidConfig);
    CHECK_THROWS_KIND(contrastive_loss(Matrix{{0, 0}}, Matrix{{1, 0}}, 0.1), ErrorKind::ZeroRow);
}

TEST_CASE("clip_symmetric_loss: permutation, symmetry and composition") {
    Rng rng(6);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t b = 2 + rng.uniform_index(7);
        const Matrix img = testutil::random_matrix(b, 6, rng);
        const Matrix txt = testutil::random_matrix(b, 6, rng);
        const double tau = 0.05 + rng.uniform();
        const double base = clip_symmetric_loss(img, txt, tau).value;

        std::vector<std::size_t> perm(b);
        std::iota(perm.begin(), perm.end(), 0);
        for (std::size_t i = b - 1; i > 0; --i) std::swap(perm[i], perm[rng.uniform_index(i + 1)]);
        CHECK(clip_symmetric_loss(permute_rows(img, perm), permute_rows(txt, perm), tau).value ==
              doctest::Approx(base).epsilon(1e-12));
        CHECK(clip_symmetric_loss(txt, img, tau).value == doctest::Approx(base).epsilon(1e-12));
        const double composed =
            (contrastive_loss(img, txt, tau).value + contrastive_loss(txt, img, tau).value) / 2.0;
        CHECK(std::abs(base - composed) <= 1e-12);
    }
}

TEST_CASE("triplet_loss examples") {
    const Matrix a{{0.0}};
    CHECK(std::abs(triplet_loss(a, Matrix{{0.2}}, Matrix{{0.5}}, 0.3).value) <= 1e-15);
    CHECK(triplet_loss(a, Matrix{{0.5}}, Matrix{{0.2}}, 0.3).value == doctest::Approx(0.6).epsilon(1e-15));
    Rng rng(7);
    for (TripletMetric metric : {TripletMetric::Euclidean, TripletMetric::Cosine}) {
        const Matrix anchors = testutil::random_matrix(5, 3, rng);
        const Matrix same = testutil::random_matrix(5, 3, rng);
        CHECK(triplet_loss(anchors, same, same, 0.7, metric).value == doctest::Approx(0.7).epsilon(1e-15));
    }
    CHECK_THROWS_KIND(triplet_loss(a, a, a, -1.0), ErrorKind::InvalidConfig);
}

TEST_CASE("triplet_loss: satisfied rows contribute no gradient") {
    const auto lv = triplet_loss(Matrix{{0.0}, {0.0}}, Matrix{{0.1}, {0.9}}, Matrix{{1.0}, {0.1}}, 0.2);
    CHECK(lv.grads[0](0, 0) == 0.0);
    CHECK(lv.grads[1](0, 0) == 0.0);
    CHECK(lv.grads[1](1, 0) != 0.0);
}

TEST_CASE("arc_margin_loss: margin zero, scale one is softmax cross-entropy on cosines") {
    Rng rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix emb = testutil::random_matrix(5, 4, rng);
        const Matrix w = testutil::random_matrix(3, 4, rng);
        std::vector<int> labels;
        for (int i = 0; i < 5; ++i) labels.push_back(static_cast<int>(rng.uniform_index(3)));
        double expected = 0;
        for (std::size_t i = 0; i < 5; ++i) {
            double denom = 0;
            for (std::size_t j = 0; j < 3; ++j) denom += std::exp(oracle::cosine(emb.row(i), w.row(j)));
            expected += -std::log(std::exp(oracle::cosine(emb.row(i), w.row(static_cast<std::size_t>(labels[i])))) / denom);
        }
        CHECK(arc_margin_loss(emb, labels, w, 1.0, 0.0).value == doctest::Approx(expected / 5).epsilon(1e-12));
    }
}

TEST_CASE("arc_margin_loss is non-decreasing in the margin") {
    Rng rng(9);
    int checked = 0;
    while (checked < 50) {
        const Matrix emb = testutil::random_matrix(4, 5, rng);
        const Matrix w = testutil::random_matrix(3, 5, rng);
        const std::vector<int> labels = {0, 1, 2, 1};
        // Only angles where theta + m stays within [0, pi] are in scope.
        bool in_range = true;
        for (std::size_t i = 0; i < 4; ++i)
            in_range = in_range && std::acos(oracle::cosine(emb.row(i), w.row(static_cast<std::size_t>(labels[i])))) + 0.8 <=
                                       3.14159;
        if (!in_range) continue;
        ++checked;
        double prev = -1.0;
        for (double m = 0.0; m <= 0.8; m += 0.05) {
            const double v = arc_margin_loss(emb, labels, w, 16.0, m).value;
            CHECK(v >= prev);
            prev = v;
        }
    }
}

TEST_CASE("arc_margin_loss errors") {
    const std::vector<int> bad = {3};
    CHECK_THROWS_KIND(arc_margin_loss(Matrix{{1, 0}}, bad, Matrix{{1, 0}, {0, 1}}, 8.0, 0.2), ErrorKind::LabelOutOfRange);
    const std::vector<int> ok = {0};
    CHECK_THROWS_KIND(arc_margin_loss(Matrix{{1, 0}}, ok, Matrix{{1, 0, 0}}, 8.0, 0.2), ErrorKind::DimMismatch);
    CHECK_THROWS_KIND(arc_margin_loss(Matrix{{1, 0}}, ok, Matrix{{1, 0}}, 0.0, 0.2), ErrorKind::InvalidConfig);
}

TEST_CASE("similarity_loss examples") {
    EncoderParams zero;
    zero.layers.push_back({Matrix(2, 1), {0.0, 0.0}});
    EncoderParams moved = zero;
    moved.layers[0].bias = {1.0, 2.0};
    const auto ov = similarity_loss(moved, EncoderSnapshot(zero), Matrix{{0.7}});
    CHECK(ov.value == 5.0);

    const EncoderParams p = small_net(10);
    Rng rng(11);
    const auto same = similarity_loss(p, EncoderSnapshot(p), testutil::random_matrix(8, 3, rng));
    CHECK(same.value == 0.0);
    for (double g : flatten(same.vision)) CHECK(g == 0.0);
}

TEST_CASE("classification_objective reductions") {
    const Fixture f = classification_fixture(20);
    LossHyper h;
    h.tau = 0.1;
    h.alpha = 0.0;
    const auto ov = classification_objective(f.theta, f.table, EncoderSnapshot(f.theta0), f.batch, h);
    CHECK(std::abs(ov.value - clip_of(f, 0.1)) < 1e-12);
    CHECK(ov.value == ov.task_term);

    for (double alpha : {0.0, 1.0, 100.0, 1e6}) {
        h.alpha = alpha;
        const auto at_snapshot = classification_objective(f.theta, f.table, EncoderSnapshot(f.theta), f.batch, h);
        CHECK(at_snapshot.similarity_term == 0.0);
        CHECK(at_snapshot.value == at_snapshot.task_term);
        CHECK(std::abs(at_snapshot.value - clip_of(f, 0.1)) < 1e-12);
    }
}

TEST_CASE("classification_objective at alpha 100 is clip + 100 * mean drift") {
    for (std::uint64_t seed = 30; seed < 40; ++seed) {
        const Fixture f = classification_fixture(seed);
        LossHyper h;
        h.tau = 0.1;
        h.alpha = 100.0;
        const EncoderSnapshot snap(f.theta0);
        const auto ov = classification_objective(f.theta, f.table, snap, f.batch, h);
        const double expected = clip_of(f, 0.1) + 100.0 * mean_drift(f.theta, snap, f.batch.images);
        CHECK(std::abs(ov.value - expected) < 1e-10);
    }
}

TEST_CASE("classification_objective is affine and increasing in alpha") {
    const Fixture f = classification_fixture(41);
    const EncoderSnapshot snap(f.theta0);
    LossHyper h;
    std::vector<double> values;
    for (double alpha : {0.0, 0.5, 1.0, 2.0}) {
        h.alpha = alpha;
        values.push_back(classification_objective(f.theta, f.table, snap, f.batch, h).value);
    }
    for (std::size_t i = 1; i < values.size(); ++i) CHECK(values[i] > values[i - 1]);
    CHECK((values[2] - values[0]) == doctest::Approx(values[3] - values[2]).epsilon(1e-10));
}

TEST_CASE("pairwise_objective reductions") {
    const EncoderParams theta0 = small_net(50);
    const EncoderParams theta = perturbed(theta0, 51, 0.3);
    Rng rng(52);
    PairBatch batch;
    batch.u = testutil::random_matrix(5, 3, rng);
    batch.v = batch.u;
    batch.identity_ids = {4, 8, 15, 16, 23};
    LossHyper h;
    h.tau = 0.1;
    h.alpha = 0.0;
    const auto ov = pairwise_objective(theta, EncoderSnapshot(theta0), batch, h);
    const Matrix fu = forward_vision(theta, batch.u);
    CHECK(std::abs(ov.value - clip_symmetric_loss(fu, fu, 0.1).value) < 1e-12);
    CHECK(ov.similarity_term > 0.0);

    batch.v = testutil::random_matrix(5, 3, rng);
    h.alpha = 7.0;
    const auto at_snapshot = pairwise_objective(theta, EncoderSnapshot(theta), batch, h);
    CHECK(at_snapshot.similarity_term == 0.0);
    CHECK(at_snapshot.value == at_snapshot.task_term);

    const auto ov2 = pairwise_objective(theta, EncoderSnapshot(theta0), batch, h);
    const EncoderSnapshot snap(theta0);
    const double expected = clip_symmetric_loss(forward_vision(theta, batch.u), forward_vision(theta, batch.v), 0.1).value +
                            7.0 * (mean_drift(theta, snap, batch.u) + mean_drift(theta, snap, batch.v));
    CHECK(std::abs(ov2.value - expected) < 1e-10);

    batch.identity_ids = {1, 2, 3, 2, 5};
    CHECK_THROWS_KIND(pairwise_objective(theta, snap, batch, h), ErrorKind::DuplicateIdentity);
}

TEST_CASE("margin objectives reduce to the angular-margin loss at alpha 0") {
    const Fixture f = classification_fixture(60);
    LossHyper h;
    h.alpha = 0.0;
    h.arc_scale = 16.0;
    h.arc_margin = 0.3;
    const auto ov = margin_classification_objective(f.theta, f.table, EncoderSnapshot(f.theta0), f.batch, h);
    const auto expected =
        arc_margin_loss(forward_vision(f.theta, f.batch.images), f.batch.class_ids, f.table.embeddings(), 16.0, 0.3);
    CHECK(std::abs(ov.value - expected.value) < 1e-12);
}

TEST_CASE("every loss passes the gradient check") {
    for (const auto& r : run_gradcheck(default_gradcheck_cases(), 20, 99)) {
        CAPTURE(r.name);
        CHECK(r.instances == 20);
        CHECK(r.max_rel_err < kGradcheckTolerance);
        CHECK(r.passed);
    }
}

TEST_CASE("gradient checker catches a corrupted gradient") {
    const auto results = run_gradcheck(default_gradcheck_cases(), 3, 1, 1e-5, "arc_margin_loss");
    for (const auto& r : results) {
        CAPTURE(r.name);
        CHECK(r.passed == (r.name != "arc_margin_loss"));
    }
    CHECK_THROWS_KIND(run_gradcheck(default_gradcheck_cases(), 0, 1), ErrorKind::InvalidConfig);
}
