#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "simtune/dataset.hpp"
#include "simtune/encoder.hpp"
#include "simtune/matrix.hpp"

namespace simtune {

/// Similarity scores of same-identity (genuine) and cross-identity
/// (impostor) pairs.
struct ScoreSet {
    std::vector<double> genuine;
    std::vector<double> impostor;
};

struct TarPoint {
    double far_target = 0.0;
    double threshold = 0.0;  // +inf when no impostor score qualifies
    double tar = 0.0;
};

/// Fraction of queries whose true column ranks within the top k. Ties in
/// similarity rank the lower column index first. Throws KOutOfRange unless
/// 1 <= k <= columns.
std::map<std::size_t, double> retrieval_at_k(const Matrix& sim, std::span<const std::size_t> truth,
                                             std::span<const std::size_t> ks);

/// Argmax-cosine prediction against the class embeddings; ties go to the
/// lowest class index.
std::vector<std::size_t> zero_shot_predict(const Matrix& img_emb, const Matrix& class_emb);
double zero_shot_accuracy(const Matrix& img_emb, const Matrix& class_emb,
                          std::span<const std::size_t> truth);

/// For each target the threshold is the smallest candidate (impostor scores
/// and +inf) whose impostor acceptance rate (score >= threshold) does not
/// exceed the target; TAR is the genuine acceptance rate at that threshold.
std::vector<TarPoint> tar_at_far(const ScoreSet& scores, std::span<const double> far_targets);

/// Mean over classes of the per-dimension variance around the class centroid.
/// Rows are unit-normalized first unless `normalize` is false. When
/// `expected_classes` is given, each of them must have a member (EmptyClass).
double cluster_variance(const Matrix& emb, std::span<const int> labels, bool normalize = true,
                        std::span<const int> expected_classes = {});

/// Cosine scores of every genuine and impostor pair of rows.
ScoreSet verification_scores(const Matrix& emb, std::span<const int> labels);

enum class Protocol { Classification, Verification };

std::string_view to_string(Protocol protocol);
Protocol protocol_from_string(std::string_view name);

inline constexpr std::size_t kRetrievalKs[] = {1, 5, 10};
inline constexpr double kDeskFarTargets[] = {1e-1, 5e-2, 1e-2};

struct MetricsReport {
    std::map<std::string, double> metrics;
    std::string dataset_tag;  // "ID" or "OOD"
    nlohmann::json config = nlohmann::json::object();
};

/// "tar@far=1e-2" style key.
std::string tar_key(double far);

/// Embeds the split once and computes every metric the protocol supports plus
/// mean_drift against `snapshot`.
MetricsReport evaluate(const Model& model, const EncoderSnapshot& snapshot, const Dataset& split,
                       Protocol protocol, std::string dataset_tag);

}  // namespace simtune
