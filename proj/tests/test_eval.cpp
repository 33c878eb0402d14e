#include <cmath>
#include <limits>

#include "oracles.hpp"
#include "simtune/eval.hpp"
#include "simtune/sampler.hpp"
#include "test_util.hpp"

using namespace simtune;

namespace {

// Scores on a coarse grid so ties are common.
std::vector<double> grid_scores(Rng& rng, std::size_t n) {
    std::vector<double> s(n);
    for (double& v : s) v = static_cast<double>(rng.uniform_index(11)) / 10.0 - 0.5;
    return s;
}

}  // namespace

TEST_CASE("retrieval_at_k examples") {
    const std::size_t truth[] = {0, 1};
    const std::size_t ks[] = {1, 2};
    const auto a = retrieval_at_k(Matrix{{0.9, 0.1}, {0.2, 0.8}}, truth, ks);
    CHECK(a.at(1) == 1.0);
    const auto b = retrieval_at_k(Matrix{{0.1, 0.9}, {0.2, 0.8}}, truth, ks);
    CHECK(b.at(1) == 0.5);
    CHECK(b.at(2) == 1.0);
    const std::size_t bad[] = {3};
    CHECK_THROWS_KIND(retrieval_at_k(Matrix{{0.1, 0.9}, {0.2, 0.8}}, truth, bad), ErrorKind::KOutOfRange);
    const std::size_t zero[] = {0};
    CHECK_THROWS_KIND(retrieval_at_k(Matrix{{0.1, 0.9}, {0.2, 0.8}}, truth, zero), ErrorKind::KOutOfRange);
}

TEST_CASE("retrieval_at_k: ties rank the lower column first") {
    const std::size_t ks[] = {1};
    const std::size_t first[] = {0};
    const std::size_t second[] = {1};
    CHECK(retrieval_at_k(Matrix{{0.5, 0.5}}, first, ks).at(1) == 1.0);
    CHECK(retrieval_at_k(Matrix{{0.5, 0.5}}, second, ks).at(1) == 0.0);
}

TEST_CASE("retrieval_at_k agrees with brute force, is monotone and saturates at k = C") {
    Rng rng(1);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t q = 1 + rng.uniform_index(20);
        const std::size_t c = 1 + rng.uniform_index(20);
        Matrix sim(q, c);
        for (double& v : sim.data()) v = static_cast<double>(rng.uniform_index(7)) / 6.0;
        std::vector<std::size_t> truth(q);
        for (auto& t : truth) t = rng.uniform_index(c);
        std::vector<std::size_t> ks(c);
        for (std::size_t k = 0; k < c; ++k) ks[k] = k + 1;
        const auto got = retrieval_at_k(sim, truth, ks);
        double prev = 0.0;
        for (std::size_t k : ks) {
            CHECK(got.at(k) == oracle::retrieval_at_k(sim, truth, k));
            CHECK(got.at(k) >= prev);
            prev = got.at(k);
        }
        CHECK(got.at(c) == 1.0);
    }
}

TEST_CASE("zero-shot prediction") {
    const Matrix classes{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    const std::size_t truth[] = {0, 1, 2};
    CHECK(zero_shot_accuracy(classes, classes, truth) == 1.0);
    // Equidistant from all classes: lowest index wins.
    CHECK(zero_shot_predict(Matrix{{1, 1, 1}}, classes) == std::vector<std::size_t>{0});
    CHECK(zero_shot_predict(Matrix{{0, 1, 1}}, classes) == std::vector<std::size_t>{1});
}

TEST_CASE("zero-shot prediction matches brute-force nearest class") {
    Rng rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        const Matrix img = testutil::random_matrix(50, 6, rng);
        const Matrix cls = testutil::random_matrix(1 + rng.uniform_index(9), 6, rng);
        const auto pred = zero_shot_predict(img, cls);
        for (std::size_t i = 0; i < 50; ++i) CHECK(pred[i] == oracle::nearest_by_cosine(img.row(i), cls));
    }
}

TEST_CASE("tar_at_far worked example") {
    const ScoreSet s{{0.9, 0.8, 0.4}, {0.7, 0.3, 0.1, 0.05}};
    const double far[] = {0.25};
    const auto p = tar_at_far(s, far);
    CHECK(p[0].threshold == 0.7);
    CHECK(p[0].tar == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    const auto o = oracle::tar_at_far(s.genuine, s.impostor, 0.25);
    CHECK(o.threshold == 0.7);
    CHECK(o.tar == p[0].tar);
}

TEST_CASE("tar_at_far limits") {
    // Thresholds are drawn from the impostor scores, so a target below
    // 1/|impostor| leaves only +inf even for separable scores.
    const ScoreSet separable{{0.8, 0.9, 0.95}, {0.1, 0.5, 0.7}};
    for (double f : {1.0 / 3.0, 0.5, 1.0}) {
        const double far[] = {f};
        CHECK(tar_at_far(separable, far)[0].tar == 1.0);
    }
    const double tiny[] = {0.01};
    CHECK(tar_at_far(separable, tiny)[0].tar == 0.0);
    const ScoreSet mixed{{0.2, 0.4, 0.6}, {0.3, 0.5, 0.7}};
    const double all[] = {1.0};
    const auto p = tar_at_far(mixed, all);
    CHECK(p[0].threshold == 0.3);
    CHECK(p[0].tar == doctest::Approx(2.0 / 3.0));
    const double none[] = {0.1};
    const auto q = tar_at_far(mixed, none);
    CHECK(q[0].threshold == std::numeric_limits<double>::infinity());
    CHECK(q[0].tar == 0.0);
}

TEST_CASE("tar_at_far errors") {
    const double far[] = {0.1};
    CHECK_THROWS_KIND(tar_at_far(ScoreSet{{}, {0.1}}, far), ErrorKind::EmptyScores);
    CHECK_THROWS_KIND(tar_at_far(ScoreSet{{0.1}, {}}, far), ErrorKind::EmptyScores);
    const double bad[] = {1.5};
    CHECK_THROWS_KIND(tar_at_far(ScoreSet{{0.1}, {0.2}}, bad), ErrorKind::InvalidConfig);
    const double zero[] = {0.0};
    CHECK_THROWS_KIND(tar_at_far(ScoreSet{{0.1}, {0.2}}, zero), ErrorKind::InvalidConfig);
}

TEST_CASE("tar_at_far agrees with brute force and is monotone in FAR") {
    Rng rng(3);
    const double fars[] = {0.01, 0.05, 0.1, 0.25, 0.5, 1.0};
    for (int trial = 0; trial < 300; ++trial) {
        const ScoreSet s{grid_scores(rng, 1 + rng.uniform_index(50)), grid_scores(rng, 1 + rng.uniform_index(50))};
        const auto pts = tar_at_far(s, fars);
        double prev = 0.0;
        for (std::size_t i = 0; i < std::size(fars); ++i) {
            const auto o = oracle::tar_at_far(s.genuine, s.impostor, fars[i]);
            CHECK(pts[i].threshold == o.threshold);
            CHECK(pts[i].tar == o.tar);
            CHECK(pts[i].tar >= prev);
            prev = pts[i].tar;
        }
    }
}

TEST_CASE("cluster_variance examples") {
    const std::vector<int> one = {0, 0};
    CHECK(cluster_variance(Matrix{{0, 0}, {2, 0}}, one, false) == 0.5);
    const std::vector<int> distinct = {0, 1, 2};
    CHECK(cluster_variance(Matrix{{1, 2}, {3, 4}, {5, 7}}, distinct) == 0.0);
    const int expected[] = {0, 1, 5};
    CHECK_THROWS_KIND(cluster_variance(Matrix{{1, 2}, {3, 4}, {5, 7}}, distinct, true, expected), ErrorKind::EmptyClass);
    CHECK_THROWS_KIND(cluster_variance(Matrix{{1, 2}}, one), ErrorKind::DimMismatch);
}

TEST_CASE("cluster_variance matches a two-pass recomputation") {
    Rng rng(4);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + rng.uniform_index(40);
        const Matrix emb = testutil::random_matrix(n, 1 + rng.uniform_index(6), rng);
        std::vector<int> labels(n);
        for (int& l : labels) l = static_cast<int>(rng.uniform_index(5));
        for (bool normalize : {true, false}) {
            CHECK(std::abs(cluster_variance(emb, labels, normalize) - oracle::cluster_variance(emb, labels, normalize)) <
                  1e-12);
        }
    }
}

TEST_CASE("verification_scores enumerates every pair") {
    const Matrix emb{{1, 0}, {1, 0}, {0, 1}, {1, 1}};
    const std::vector<int> labels = {7, 7, 8, 8};
    const ScoreSet s = verification_scores(emb, labels);
    CHECK(s.genuine.size() == 2);
    CHECK(s.impostor.size() == 4);
    CHECK(s.genuine[0] == 1.0);
}

TEST_CASE("metrics are invariant to positive row rescaling") {
    Rng rng(5);
    const Matrix emb = testutil::random_matrix(30, 4, rng);
    std::vector<int> labels(30);
    for (std::size_t i = 0; i < 30; ++i) labels[i] = static_cast<int>(i % 6);
    Matrix scaled = emb;
    for (std::size_t i = 0; i < 30; ++i)
        for (double& v : scaled.row(i)) v *= 0.01 + static_cast<double>(i);
    const ScoreSet a = verification_scores(emb, labels);
    const ScoreSet b = verification_scores(scaled, labels);
    const auto ta = tar_at_far(a, kDeskFarTargets);
    const auto tb = tar_at_far(b, kDeskFarTargets);
    for (std::size_t i = 0; i < ta.size(); ++i) CHECK(ta[i].tar == tb[i].tar);
    CHECK(cluster_variance(emb, labels) == doctest::Approx(cluster_variance(scaled, labels)).epsilon(1e-12));
    const Matrix cls = testutil::random_matrix(6, 4, rng);
    CHECK(zero_shot_predict(emb, cls) == zero_shot_predict(scaled, cls));
}

TEST_CASE("evaluate: perfect separation and self-drift") {
    // Identity encoder over inputs equal to their class caption embeddings.
    Model m;
    m.vision.layers.push_back({Matrix{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}, {0, 0, 0}});
    std::vector<std::string> captions;
    for (int c = 0; c < 3; ++c) captions.push_back(caption_for_class(class_name(c)));
    m.captions = CaptionTable(captions, Matrix{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
    Dataset d;
    d.x = Matrix{{2, 0, 0}, {0, 3, 0}, {0, 0, 1}, {1, 0.1, 0}, {0, 1, 0.1}, {0.1, 0, 1}};
    d.labels = {0, 1, 2, 0, 1, 2};
    d.domains.assign(6, 0);
    const MetricsReport r = evaluate(m, EncoderSnapshot(m.vision), d, Protocol::Classification, "ID");
    CHECK(r.metrics.at("accuracy") == 1.0);
    CHECK(r.metrics.at("ret@1") == 1.0);
    CHECK(r.metrics.at("mean_drift") == 0.0);
    CHECK_FALSE(r.metrics.contains("ret@5"));

    const MetricsReport v = evaluate(m, EncoderSnapshot(m.vision), d, Protocol::Verification, "OOD");
    for (const auto& [name, value] : v.metrics) {
        if (name.rfind("tar@", 0) == 0 || name == "accuracy") {
            CHECK(value >= 0.0);
            CHECK(value <= 1.0);
        }
    }
    CHECK(v.metrics.contains("tar@far=1e-1"));
    CHECK(v.dataset_tag == "OOD");
}

TEST_CASE("protocol names and tar keys") {
    CHECK(protocol_from_string("verification") == Protocol::Verification);
    CHECK_THROWS_KIND(protocol_from_string("ranking"), ErrorKind::InvalidConfig);
    CHECK(tar_key(0.01) == "tar@far=1e-2");
    CHECK(tar_key(0.05) == "tar@far=5e-2");
}
