#include "simtune/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <utility>

#include "simtune/error.hpp"
#include "simtune/rng.hpp"

namespace simtune {

std::string_view to_string(Task task) {
    return task == Task::Classification ? "classification" : "pairwise";
}

Task task_from_string(std::string_view name) {
    if (name == "classification") return Task::Classification;
    if (name == "pairwise") return Task::Pairwise;
    throw Error(ErrorKind::InvalidConfig, "unknown task '" + std::string(name) + "'");
}

void SyntheticSpec::validate() const {
    auto fail = [](const std::string& msg) { throw Error(ErrorKind::InvalidSpec, msg); };
    if (num_classes < 2) fail("num_classes must be >= 2");
    if (num_domains < 2) fail("num_domains must be >= 2");
    if (input_dim < 1) fail("input_dim must be >= 1");
    if (samples_per_class_per_domain < 1) fail("samples_per_class_per_domain must be >= 1");
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) fail("noise_sigma must be >= 0");
    if (!(domain_shift_strength >= 0.0) || !std::isfinite(domain_shift_strength))
        fail("domain_shift_strength must be >= 0");
    std::set<int> seen;
    for (int c : held_out_classes) {
        if (c < 0 || static_cast<std::size_t>(c) >= num_classes)
            fail("held-out class " + std::to_string(c) + " out of range");
        if (!seen.insert(c).second) fail("held-out class " + std::to_string(c) + " repeated");
    }
    if (seen.size() >= num_classes) fail("every class is held out");
}

nlohmann::json to_json(const SyntheticSpec& s) {
    return {{"num_classes", s.num_classes},
            {"held_out_classes", s.held_out_classes},
            {"num_domains", s.num_domains},
            {"input_dim", s.input_dim},
            {"samples_per_class_per_domain", s.samples_per_class_per_domain},
            {"noise_sigma", s.noise_sigma},
            {"domain_shift_strength", s.domain_shift_strength},
            {"seed", s.seed}};
}

SyntheticSpec spec_from_json(const nlohmann::json& j) {
    SyntheticSpec s;
    try {
        s.num_classes = j.value("num_classes", s.num_classes);
        s.held_out_classes = j.value("held_out_classes", s.held_out_classes);
        s.num_domains = j.value("num_domains", s.num_domains);
        s.input_dim = j.value("input_dim", s.input_dim);
        s.samples_per_class_per_domain =
            j.value("samples_per_class_per_domain", s.samples_per_class_per_domain);
        s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
        s.domain_shift_strength = j.value("domain_shift_strength", s.domain_shift_strength);
        s.seed = j.value("seed", s.seed);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::ConfigParse, e.what());
    }
    return s;
}

const Dataset& DatasetSplits::split(std::string_view name) const {
    if (name == "pretrain") return pretrain;
    if (name == "finetune_id") return finetune_id;
    if (name == "test_id") return test_id;
    if (name == "test_ood") return test_ood;
    throw Error(ErrorKind::InvalidConfig, "unknown split '" + std::string(name) + "'");
}

Dataset& DatasetSplits::split(std::string_view name) {
    return const_cast<Dataset&>(std::as_const(*this).split(name));
}

namespace {

class Generator {
public:
    explicit Generator(const SyntheticSpec& spec) : spec_(spec), rng_(spec.seed) {
        const std::size_t d = spec.input_dim;
        Rng proto_rng = rng_.split();
        prototypes_ = Matrix(spec.num_classes, d);
        for (double& v : prototypes_.data()) v = proto_rng.normal();

        Rng map_rng = rng_.split();
        const double lambda = spec.domain_shift_strength;
        const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
        for (std::size_t m = 0; m < spec.num_domains; ++m) {
            Matrix a(d, d);
            for (std::size_t r = 0; r < d; ++r) a(r, r) = 1.0;
            if (m > 0) {
                for (std::size_t r = 0; r < d; ++r) {
                    for (std::size_t c = 0; c < d; ++c) {
                        const double identity = r == c ? 1.0 : 0.0;
                        a(r, c) = (1.0 - lambda) * identity + lambda * map_rng.normal() * inv_sqrt_d;
                    }
                }
            }
            maps_.push_back(std::move(a));
        }
    }

    Dataset draw(std::span<const std::size_t> domains, std::span<const int> classes) {
        Rng rng = rng_.split();
        const std::size_t d = spec_.input_dim;
        const std::size_t n = spec_.samples_per_class_per_domain;
        Dataset out;
        std::vector<double> data;
        std::vector<double> z(d);
        for (std::size_t m : domains) {
            for (int c : classes) {
                for (std::size_t s = 0; s < n; ++s) {
                    for (std::size_t k = 0; k < d; ++k)
                        z[k] = prototypes_(static_cast<std::size_t>(c), k) + spec_.noise_sigma * rng.normal();
                    for (std::size_t r = 0; r < d; ++r) data.push_back(dot(maps_[m].row(r), z));
                    out.labels.push_back(c);
                    out.domains.push_back(static_cast<int>(m));
                }
            }
        }
        out.x = Matrix(out.labels.size(), d, std::move(data));
        return out;
    }

    Matrix prototypes_;
    std::vector<Matrix> maps_;

private:
    SyntheticSpec spec_;
    Rng rng_;
};

}  // namespace

DatasetSplits generate_classification(const SyntheticSpec& spec) {
    spec.validate();
    Generator gen(spec);

    std::vector<int> all_classes(spec.num_classes);
    for (std::size_t c = 0; c < spec.num_classes; ++c) all_classes[c] = static_cast<int>(c);
    std::vector<int> seen_classes;
    for (int c : all_classes) {
        if (std::find(spec.held_out_classes.begin(), spec.held_out_classes.end(), c) ==
            spec.held_out_classes.end())
            seen_classes.push_back(c);
    }
    std::vector<std::size_t> all_domains(spec.num_domains);
    for (std::size_t m = 0; m < spec.num_domains; ++m) all_domains[m] = m;
    const std::vector<std::size_t> id_domain = {0};
    const std::vector<std::size_t> ood_domains(all_domains.begin() + 1, all_domains.end());

    DatasetSplits s;
    s.spec = spec;
    s.task = Task::Classification;
    s.pretrain = gen.draw(all_domains, all_classes);
    s.finetune_id = gen.draw(id_domain, seen_classes);
    s.test_id = gen.draw(id_domain, seen_classes);
    s.test_ood = gen.draw(ood_domains, all_classes);
    s.prototypes = gen.prototypes_;
    s.domain_maps = gen.maps_;
    return s;
}

DatasetSplits generate_identities(const SyntheticSpec& spec) {
    if (spec.samples_per_class_per_domain < 2)
        throw Error(ErrorKind::InvalidSpec, "identities need at least two images per domain");
    DatasetSplits s = generate_classification(spec);
    s.task = Task::Pairwise;
    return s;
}

DatasetSplits generate(const SyntheticSpec& spec, Task task) {
    return task == Task::Classification ? generate_classification(spec) : generate_identities(spec);
}

PairIndex enumerate_pairs(const Dataset& data) {
    PairIndex p;
    for (std::size_t i = 0; i < data.size(); ++i) {
        for (std::size_t j = i + 1; j < data.size(); ++j) {
            if (data.labels[i] == data.labels[j])
                p.genuine.emplace_back(i, j);
            else
                p.impostor.emplace_back(i, j);
        }
    }
    return p;
}

Matrix probe_inputs(const DatasetSplits& splits) { return vstack(splits.test_id.x, splits.test_ood.x); }

}  // namespace simtune
