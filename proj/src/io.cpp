#include "simtune/io.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "simtune/error.hpp"

namespace simtune {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::MissingInput, path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::ConfigParse, path.string() + ": " + e.what());
    }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    out << text;
}

void write_json_file(const std::filesystem::path& path, const nlohmann::json& doc) {
    write_text_file(path, doc.dump(2) + "\n");
}

namespace {

const char* const kSplitNames[] = {"pretrain", "finetune_id", "test_id", "test_ood"};

}  // namespace

std::string dataset_csv(const DatasetSplits& splits) {
    std::ostringstream out;
    const std::size_t d = splits.pretrain.x.cols();
    out << "split,domain,class_or_identity";
    for (std::size_t c = 0; c < d; ++c) out << ",x" << c;
    out << '\n';
    for (const char* name : kSplitNames) {
        const Dataset& ds = splits.split(name);
        for (std::size_t i = 0; i < ds.size(); ++i) {
            out << name << ',' << ds.domains[i] << ',' << ds.labels[i];
            for (double v : ds.x.row(i)) out << ',' << format_double(v);
            out << '\n';
        }
    }
    return out.str();
}

void write_dataset(const DatasetSplits& splits, const std::filesystem::path& dir,
                   const nlohmann::json& manifest) {
    std::filesystem::create_directories(dir);
    write_text_file(dir / "dataset.csv", dataset_csv(splits));
    nlohmann::json spec = {{"task", std::string(to_string(splits.task))}, {"spec", to_json(splits.spec)}};
    if (!manifest.is_null()) spec["manifest"] = manifest;
    write_json_file(dir / "spec.json", spec);
}

DatasetSplits read_dataset(const std::filesystem::path& dir) {
    const nlohmann::json meta = read_json_file(dir / "spec.json");
    DatasetSplits splits;
    try {
        splits.task = task_from_string(meta.at("task").get<std::string>());
        splits.spec = spec_from_json(meta.at("spec"));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::ConfigParse, "spec.json: " + std::string(e.what()));
    }

    std::ifstream in(dir / "dataset.csv");
    if (!in) throw Error(ErrorKind::MissingInput, (dir / "dataset.csv").string());
    std::string line;
    std::getline(in, line);
    std::size_t d = 0;
    for (char ch : line) d += ch == ',' ? 1 : 0;
    if (d < 3) throw Error(ErrorKind::ConfigParse, "dataset.csv header has no feature columns");
    d -= 2;

    std::map<std::string, std::pair<std::vector<double>, Dataset*>> buffers;
    for (const char* name : kSplitNames)
        buffers[name] = {{}, &splits.split(name)};

    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() != d + 3)
            throw Error(ErrorKind::ConfigParse, "dataset.csv line " + std::to_string(line_no));
        auto it = buffers.find(fields[0]);
        if (it == buffers.end())
            throw Error(ErrorKind::ConfigParse, "unknown split '" + fields[0] + "'");
        auto& [values, ds] = it->second;
        ds->domains.push_back(std::stoi(fields[1]));
        ds->labels.push_back(std::stoi(fields[2]));
        for (std::size_t c = 0; c < d; ++c) values.push_back(std::strtod(fields[3 + c].c_str(), nullptr));
    }
    for (auto& [name, buf] : buffers) {
        buf.second->x = Matrix(buf.second->labels.size(), d, std::move(buf.first));
    }
    return splits;
}

std::string steps_csv(const RunRecord& rec) {
    std::ostringstream out;
    out << "step,lr,total_loss,contrastive_loss,mean_drift\n";
    for (const auto& s : rec.steps) {
        out << s.step << ',' << format_double(s.lr) << ',' << format_double(s.total_loss) << ','
            << format_double(s.contrastive_loss) << ',' << format_double(s.mean_drift) << '\n';
    }
    return out.str();
}

nlohmann::json to_json(const RunRecord& rec) {
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& s : rec.steps) {
        steps.push_back({{"step", s.step},
                         {"lr", s.lr},
                         {"total_loss", s.total_loss},
                         {"contrastive_loss", s.contrastive_loss},
                         {"mean_drift", s.mean_drift}});
    }
    return {{"config", to_json(rec.config)},
            {"steps", std::move(steps)},
            {"completed_steps", rec.steps.size()},
            {"snapshot_hash_before", rec.snapshot_hash_before},
            {"snapshot_hash_after", rec.snapshot_hash_after},
            {"diverged", rec.diverged},
            {"failure", rec.failure}};
}

nlohmann::json to_json(const MetricsReport& report) {
    return {{"dataset_tag", report.dataset_tag}, {"metrics", report.metrics}, {"config", report.config}};
}

std::string metrics_csv(const MetricsReport& report) {
    std::ostringstream head, row;
    head << "dataset";
    row << report.dataset_tag;
    for (const auto& [name, value] : report.metrics) {
        head << ',' << name;
        row << ',' << format_double(value);
    }
    return head.str() + "\n" + row.str() + "\n";
}

std::string embeddings_csv(const Matrix& emb, std::span<const int> labels) {
    std::ostringstream out;
    out << "id,label";
    for (std::size_t c = 0; c < emb.cols(); ++c) out << ",e" << c;
    out << '\n';
    for (std::size_t i = 0; i < emb.rows(); ++i) {
        out << i << ',' << labels[i];
        for (double v : emb.row(i)) out << ',' << format_double(v);
        out << '\n';
    }
    return out.str();
}

}  // namespace simtune
