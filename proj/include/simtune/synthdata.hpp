#pragma once

#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "simtune/dataset.hpp"
#include "simtune/matrix.hpp"

namespace simtune {

enum class Task { Classification, Pairwise };

std::string_view to_string(Task task);
Task task_from_string(std::string_view name);

/// Generator parameters. Classes (or identities) are Gaussian clusters around
/// unit-Gaussian latent prototypes; domain m renders a latent sample through
/// (1 - lambda) I + lambda A_m, with A_0 = I.
struct SyntheticSpec {
    std::size_t num_classes = 10;
    std::vector<int> held_out_classes = {8, 9};
    std::size_t num_domains = 3;
    std::size_t input_dim = 4;
    std::size_t samples_per_class_per_domain = 20;
    double noise_sigma = 0.1;
    double domain_shift_strength = 0.5;
    std::uint64_t seed = 0;

    /// Throws InvalidSpec.
    void validate() const;
    bool operator==(const SyntheticSpec&) const = default;
};

nlohmann::json to_json(const SyntheticSpec& spec);
SyntheticSpec spec_from_json(const nlohmann::json& j);

/// pretrain: every domain and class. finetune_id / test_id: domain 0 without
/// held-out classes, independent draws. test_ood: domains >= 1, every class.
struct DatasetSplits {
    Dataset pretrain;
    Dataset finetune_id;
    Dataset test_id;
    Dataset test_ood;
    Matrix prototypes;
    std::vector<Matrix> domain_maps;  // blended maps, domain_maps[0] == I
    SyntheticSpec spec;
    Task task = Task::Classification;

    const Dataset& split(std::string_view name) const;
    Dataset& split(std::string_view name);
};

DatasetSplits generate_classification(const SyntheticSpec& spec);

/// Identity-labeled variant; requires samples_per_class_per_domain >= 2 so
/// every identity has a positive pair in every split where it appears.
DatasetSplits generate_identities(const SyntheticSpec& spec);

DatasetSplits generate(const SyntheticSpec& spec, Task task);

/// Index pairs (i < j) of same-label rows and of different-label rows.
struct PairIndex {
    std::vector<std::pair<std::size_t, std::size_t>> genuine;
    std::vector<std::pair<std::size_t, std::size_t>> impostor;
};

PairIndex enumerate_pairs(const Dataset& data);

/// Inputs held out from fine-tuning (test_id followed by test_ood), used to
/// measure how far an encoder has drifted.
Matrix probe_inputs(const DatasetSplits& splits);

}  // namespace simtune
