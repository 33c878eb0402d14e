#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "oracles.hpp"
#include "simtune/eval.hpp"
#include "simtune/sampler.hpp"
#include "simtune/synthdata.hpp"
#include "test_util.hpp"

using namespace simtune;

namespace {

SyntheticSpec random_spec(Rng& rng) {
    SyntheticSpec s;
    s.num_classes = 3 + rng.uniform_index(10);
    s.held_out_classes.clear();
    const std::size_t held = 1 + rng.uniform_index(s.num_classes - 2);
    for (std::size_t i : rng.sample_without_replacement(s.num_classes, held)) s.held_out_classes.push_back(static_cast<int>(i));
    std::sort(s.held_out_classes.begin(), s.held_out_classes.end());
    s.num_domains = 2 + rng.uniform_index(3);
    s.input_dim = 2 + rng.uniform_index(6);
    s.samples_per_class_per_domain = 2 + rng.uniform_index(5);
    s.noise_sigma = rng.uniform();
    s.domain_shift_strength = rng.uniform();
    s.seed = rng.next_u64();
    return s;
}

std::set<std::vector<double>> rows_of(const Dataset& d) {
    std::set<std::vector<double>> rows;
    for (std::size_t i = 0; i < d.size(); ++i) rows.emplace(d.x.row(i).begin(), d.x.row(i).end());
    return rows;
}

}  // namespace

TEST_CASE("generators are deterministic under the seed") {
    SyntheticSpec spec;
    spec.seed = 77;
    for (Task task : {Task::Classification, Task::Pairwise}) {
        const DatasetSplits a = generate(spec, task);
        const DatasetSplits b = generate(spec, task);
        CHECK(a.pretrain == b.pretrain);
        CHECK(a.finetune_id == b.finetune_id);
        CHECK(a.test_id == b.test_id);
        CHECK(a.test_ood == b.test_ood);
        CHECK(a.prototypes == b.prototypes);
        spec.seed = 78;
        CHECK_FALSE(generate(spec, task).pretrain == a.pretrain);
        spec.seed = 77;
    }
}

TEST_CASE("split membership holds over random specs") {
    Rng rng(1);
    for (int trial = 0; trial < 60; ++trial) {
        const SyntheticSpec spec = random_spec(rng);
        const Task task = trial % 2 ? Task::Pairwise : Task::Classification;
        const DatasetSplits s = generate(spec, task);
        const std::set<int> held(spec.held_out_classes.begin(), spec.held_out_classes.end());
        for (const Dataset* d : {&s.finetune_id, &s.test_id}) {
            CHECK(d->size() == (spec.num_classes - held.size()) * spec.samples_per_class_per_domain);
            for (std::size_t i = 0; i < d->size(); ++i) {
                CHECK_FALSE(held.contains(d->labels[i]));
                CHECK(d->domains[i] == 0);
            }
        }
        CHECK(s.test_ood.classes().size() == spec.num_classes);
        for (int dom : s.test_ood.domains) CHECK(dom >= 1);
        CHECK(s.pretrain.classes().size() == spec.num_classes);
        CHECK(s.pretrain.size() == spec.num_classes * spec.num_domains * spec.samples_per_class_per_domain);

        if (spec.noise_sigma > 0) {
            // Independent draws: no sample is shared between splits.
            const auto ft = rows_of(s.finetune_id);
            const auto te = rows_of(s.test_id);
            const auto od = rows_of(s.test_ood);
            const auto pt = rows_of(s.pretrain);
            for (const auto& r : te) CHECK_FALSE(ft.contains(r));
            for (const auto& r : od) CHECK_FALSE(pt.contains(r));
            for (const auto& r : ft) CHECK_FALSE(pt.contains(r));
        }
        if (task == Task::Pairwise) {
            Rng draw(2);
            CHECK_NOTHROW(sample_identity_batch(s.finetune_id, 2, draw));
        }
    }
}

TEST_CASE("noiseless, shift-free data is perfectly separable by nearest prototype") {
    SyntheticSpec spec;
    spec.noise_sigma = 0.0;
    spec.domain_shift_strength = 0.0;
    const DatasetSplits s = generate(spec, Task::Classification);
    for (const Dataset* d : {&s.pretrain, &s.finetune_id, &s.test_id, &s.test_ood}) {
        for (std::size_t i = 0; i < d->size(); ++i) {
            std::size_t best = 0;
            double best_d = 1e300;
            for (std::size_t c = 0; c < s.prototypes.rows(); ++c) {
                double dist = 0;
                for (std::size_t k = 0; k < spec.input_dim; ++k)
                    dist += std::pow(d->x(i, k) - s.prototypes(c, k), 2);
                if (dist < best_d) {
                    best_d = dist;
                    best = c;
                }
            }
            CHECK(static_cast<int>(best) == d->labels[i]);
        }
    }
}

TEST_CASE("zero shift strength makes every domain map the identity") {
    SyntheticSpec spec;
    spec.domain_shift_strength = 0.0;
    const DatasetSplits s = generate(spec, Task::Classification);
    REQUIRE(s.domain_maps.size() == spec.num_domains);
    for (const Matrix& m : s.domain_maps) {
        for (std::size_t r = 0; r < m.rows(); ++r)
            for (std::size_t c = 0; c < m.cols(); ++c) CHECK(m(r, c) == (r == c ? 1.0 : 0.0));
    }
}

TEST_CASE("noiseless identities give genuine scores of one within a domain") {
    SyntheticSpec spec;
    spec.noise_sigma = 0.0;
    spec.num_classes = 12;
    spec.held_out_classes = {10, 11};
    const DatasetSplits s = generate(spec, Task::Pairwise);
    const ScoreSet scores = verification_scores(s.finetune_id.x, s.finetune_id.labels);
    REQUIRE_FALSE(scores.genuine.empty());
    for (double g : scores.genuine) CHECK(g == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("domain shift moves identity centroids") {
    SyntheticSpec spec;
    spec.num_classes = 20;
    spec.held_out_classes = {19};
    spec.domain_shift_strength = 0.5;
    const DatasetSplits s = generate(spec, Task::Pairwise);
    std::map<std::pair<int, int>, std::vector<double>> sums;
    std::map<std::pair<int, int>, int> counts;
    for (std::size_t i = 0; i < s.pretrain.size(); ++i) {
        auto& acc = sums[{s.pretrain.labels[i], s.pretrain.domains[i]}];
        acc.resize(spec.input_dim, 0.0);
        for (std::size_t k = 0; k < spec.input_dim; ++k) acc[k] += s.pretrain.x(i, k);
    }
    double total = 0;
    int n = 0;
    for (int c = 0; c < 20; ++c) {
        for (int dom = 1; dom < static_cast<int>(spec.num_domains); ++dom) {
            total += oracle::cosine(sums.at({c, 0}), sums.at({c, dom}));
            ++n;
        }
    }
    CHECK(total / n < 1.0);
    CHECK(total / n > 0.0);
}

TEST_CASE("spec validation and json") {
    SyntheticSpec s;
    CHECK(spec_from_json(to_json(s)) == s);
    s.held_out_classes = {12};
    CHECK_THROWS_KIND(s.validate(), ErrorKind::InvalidSpec);
    s = SyntheticSpec{};
    s.held_out_classes = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    CHECK_THROWS_KIND(s.validate(), ErrorKind::InvalidSpec);
    s = SyntheticSpec{};
    s.num_domains = 1;
    CHECK_THROWS_KIND(s.validate(), ErrorKind::InvalidSpec);
    s = SyntheticSpec{};
    s.noise_sigma = -0.1;
    CHECK_THROWS_KIND(s.validate(), ErrorKind::InvalidSpec);
    s = SyntheticSpec{};
    s.samples_per_class_per_domain = 1;
    CHECK_NOTHROW(generate(s, Task::Classification));
    CHECK_THROWS_KIND(generate(s, Task::Pairwise), ErrorKind::InvalidSpec);
    CHECK_THROWS_KIND(spec_from_json({{"num_classes", "ten"}}), ErrorKind::ConfigParse);
}

TEST_CASE("pair enumeration") {
    Dataset d;
    d.x = Matrix(4, 1);
    d.labels = {1, 2, 1, 1};
    d.domains = {0, 0, 0, 0};
    const PairIndex p = enumerate_pairs(d);
    CHECK(p.genuine.size() == 3);
    CHECK(p.impostor.size() == 3);
}

TEST_CASE("probe inputs stack both test splits") {
    const DatasetSplits s = generate(SyntheticSpec{}, Task::Classification);
    const Matrix probe = probe_inputs(s);
    CHECK(probe.rows() == s.test_id.size() + s.test_ood.size());
}
