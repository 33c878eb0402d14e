#pragma once

#include <filesystem>
#include <span>
#include <string>

#include <json.hpp>

#include "simtune/eval.hpp"
#include "simtune/synthdata.hpp"
#include "simtune/trainer.hpp"

namespace simtune {

/// 17 significant digits; parses back to the identical double.
std::string format_double(double v);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& doc);
void write_text_file(const std::filesystem::path& path, const std::string& text);

/// dataset.csv (split,domain,class_or_identity,x0..x{d-1}) and spec.json.
void write_dataset(const DatasetSplits& splits, const std::filesystem::path& dir,
                   const nlohmann::json& manifest = nullptr);
DatasetSplits read_dataset(const std::filesystem::path& dir);

std::string dataset_csv(const DatasetSplits& splits);

/// step,lr,total_loss,contrastive_loss,mean_drift
std::string steps_csv(const RunRecord& rec);
nlohmann::json to_json(const RunRecord& rec);

nlohmann::json to_json(const MetricsReport& report);
/// Header row plus one value row; columns in metric-name order after "dataset".
std::string metrics_csv(const MetricsReport& report);

/// id,label,e0..e{d-1}
std::string embeddings_csv(const Matrix& emb, std::span<const int> labels);

}  // namespace simtune
