#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "simtune/dataset.hpp"
#include "simtune/encoder.hpp"
#include "simtune/losses.hpp"
#include "simtune/synthdata.hpp"

namespace simtune {

enum class LossVariant { ClipContrastive, ArcMargin };

std::string_view to_string(LossVariant variant);
LossVariant loss_variant_from_string(std::string_view name);

/// Hyperparameters of the large-scale reference runs. The desk-scale
/// lr0 default below is larger because the encoder here is tiny.
inline constexpr double kReferenceClassificationLr = 5e-5;
inline constexpr double kReferencePairwiseLr = 1e-5;
inline constexpr double kReferenceClassificationAlpha = 100.0;
inline constexpr double kReferencePairwiseAlpha = 1.0;
inline constexpr double kReferencePairwiseTau = 0.1;
inline constexpr double kOriginalClipTau = 0.01;
inline constexpr double kReferenceAlphaSweep[] = {0.1, 1.0, 100.0, 1000.0};

struct TrainConfig {
    double alpha = 0.0;
    double tau = kOriginalClipTau;
    double lr0 = 1e-3;
    std::size_t steps = 200;
    std::size_t batch_size = 32;
    double weight_decay = 0.01;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
    Task task = Task::Classification;
    LossVariant loss_variant = LossVariant::ClipContrastive;
    double arc_scale = 64.0;
    double arc_margin = 0.5;

    LossHyper hyper() const;
    /// Throws InvalidConfig.
    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

nlohmann::json to_json(const TrainConfig& c);
/// Missing keys keep their defaults, except that tau defaults to 0.1 when the
/// task is pairwise. Throws ConfigParse / InvalidConfig.
TrainConfig train_config_from_json(const nlohmann::json& j);

/// lr0 * (1 - k/K). Throws StepOutOfRange unless 0 <= k <= K.
double lr_at(std::size_t k, const TrainConfig& config);

struct OptimizerState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    std::uint64_t t = 0;
};

/// One decoupled-weight-decay Adam update over parallel parameter and
/// gradient groups. Moments are allocated on the first call.
void adamw_step(std::span<const std::span<double>> params,
                std::span<const std::span<const double>> grads, OptimizerState& state, double lr,
                const TrainConfig& config);

struct StepRecord {
    std::size_t step = 0;
    double lr = 0.0;
    double total_loss = 0.0;
    double contrastive_loss = 0.0;  // task term (CLIP or angular margin)
    double mean_drift = 0.0;        // unweighted similarity term
};

struct RunRecord {
    TrainConfig config;
    std::vector<StepRecord> steps;
    Model final_model;
    std::uint64_t snapshot_hash_before = 0;
    std::uint64_t snapshot_hash_after = 0;
    bool diverged = false;
    std::string failure;
};

/// Fine-tunes a copy of `pretrained` on `data`; the pretrained encoder is
/// frozen as the similarity-loss reference. A non-finite loss stops the run
/// and sets `diverged`; the steps completed so far are kept.
RunRecord run_training(const Model& pretrained, const Dataset& data, const TrainConfig& config);

/// 2000 steps at lr 3e-3, tau 0.1, batch 64 (capped at the class count).
TrainConfig default_pretrain_schedule();

struct PretrainConfig {
    std::size_t hidden_dim = 32;
    std::size_t embed_dim = 16;
    std::string activation = "tanh";
    TrainConfig train = default_pretrain_schedule();  // task and alpha are forced to pairwise / 0

    bool operator==(const PretrainConfig&) const = default;
};

nlohmann::json to_json(const PretrainConfig& c);
PretrainConfig pretrain_config_from_json(const nlohmann::json& j);

/// Produces the reference model: a randomly initialized encoder trained with
/// the CLIP loss on positive pairs drawn from every domain of `broad`, and a
/// caption table whose row for each class is the normalized mean embedding of
/// that class. `record`, if given, receives the pretraining run. Throws
/// DivergenceDetected.
Model pretrain(const Dataset& broad, const PretrainConfig& config, RunRecord* record = nullptr);

/// Caption row per class of `data` from the normalized mean embedding.
CaptionTable prototype_captions(const EncoderParams& vision, const Dataset& data);

}  // namespace simtune
