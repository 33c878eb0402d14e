#include "simtune/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>

#include "simtune/error.hpp"
#include "simtune/sampler.hpp"

namespace simtune {

std::map<std::size_t, double> retrieval_at_k(const Matrix& sim, std::span<const std::size_t> truth,
                                             std::span<const std::size_t> ks) {
    if (truth.size() != sim.rows()) throw Error(ErrorKind::DimMismatch, "one truth index per query");
    for (std::size_t k : ks) {
        if (k < 1 || k > sim.cols())
            throw Error(ErrorKind::KOutOfRange, "k=" + std::to_string(k) + " with " +
                                                    std::to_string(sim.cols()) + " columns");
    }
    // rank = columns that beat the true one (higher score, or equal score at a lower index)
    std::vector<std::size_t> ranks(sim.rows());
    for (std::size_t q = 0; q < sim.rows(); ++q) {
        if (truth[q] >= sim.cols()) throw Error(ErrorKind::LabelOutOfRange, "truth index out of range");
        const double target = sim(q, truth[q]);
        std::size_t rank = 0;
        for (std::size_t j = 0; j < sim.cols(); ++j) {
            const double s = sim(q, j);
            if (s > target || (s == target && j < truth[q])) ++rank;
        }
        ranks[q] = rank;
    }
    std::map<std::size_t, double> out;
    for (std::size_t k : ks) {
        std::size_t hits = 0;
        for (std::size_t r : ranks) hits += r < k ? 1 : 0;
        out[k] = sim.rows() == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(sim.rows());
    }
    return out;
}

std::vector<std::size_t> zero_shot_predict(const Matrix& img_emb, const Matrix& class_emb) {
    const Matrix sim = pairwise_cosine(img_emb, class_emb);
    std::vector<std::size_t> pred(sim.rows(), 0);
    for (std::size_t i = 0; i < sim.rows(); ++i) {
        auto row = sim.row(i);
        pred[i] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    }
    return pred;
}

double zero_shot_accuracy(const Matrix& img_emb, const Matrix& class_emb,
                          std::span<const std::size_t> truth) {
    if (truth.size() != img_emb.rows()) throw Error(ErrorKind::DimMismatch, "one truth index per image");
    if (truth.empty()) return 0.0;
    const auto pred = zero_shot_predict(img_emb, class_emb);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == truth[i] ? 1 : 0;
    return static_cast<double>(correct) / static_cast<double>(truth.size());
}

std::vector<TarPoint> tar_at_far(const ScoreSet& scores, std::span<const double> far_targets) {
    if (scores.genuine.empty() || scores.impostor.empty())
        throw Error(ErrorKind::EmptyScores, "genuine and impostor scores are both required");
    std::vector<double> imp(scores.impostor);
    std::vector<double> gen(scores.genuine);
    std::sort(imp.begin(), imp.end());
    std::sort(gen.begin(), gen.end());
    const double n_imp = static_cast<double>(imp.size());
    const double n_gen = static_cast<double>(gen.size());
    auto count_ge = [](const std::vector<double>& sorted, double t) {
        return static_cast<double>(sorted.end() - std::lower_bound(sorted.begin(), sorted.end(), t));
    };

    std::vector<TarPoint> out;
    for (double target : far_targets) {
        if (!(target > 0.0 && target <= 1.0))
            throw Error(ErrorKind::InvalidConfig, "FAR target must lie in (0, 1]");
        // Acceptance falls as the threshold rises, so scan distinct impostor
        // scores upward and stop at the first that satisfies the target.
        double threshold = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < imp.size(); ++i) {
            if (i > 0 && imp[i] == imp[i - 1]) continue;
            if (count_ge(imp, imp[i]) / n_imp <= target) {
                threshold = imp[i];
                break;
            }
        }
        const double tar = std::isinf(threshold) ? 0.0 : count_ge(gen, threshold) / n_gen;
        out.push_back({target, threshold, tar});
    }
    return out;
}

double cluster_variance(const Matrix& emb, std::span<const int> labels, bool normalize,
                        std::span<const int> expected_classes) {
    if (labels.size() != emb.rows()) throw Error(ErrorKind::DimMismatch, "one label per row");
    if (emb.rows() == 0) throw Error(ErrorKind::EmptyClass, "no embeddings");
    const Matrix e = normalize ? row_l2_normalize(emb) : emb;
    std::map<int, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < labels.size(); ++i) members[labels[i]].push_back(i);
    for (int c : expected_classes) {
        if (!members.contains(c)) throw Error(ErrorKind::EmptyClass, "class " + std::to_string(c));
    }
    const double d = static_cast<double>(e.cols());
    double total = 0.0;
    std::vector<double> centroid(e.cols());
    for (const auto& [label, rows] : members) {
        std::fill(centroid.begin(), centroid.end(), 0.0);
        for (std::size_t r : rows) {
            auto x = e.row(r);
            for (std::size_t c = 0; c < x.size(); ++c) centroid[c] += x[c];
        }
        for (double& c : centroid) c /= static_cast<double>(rows.size());
        double ss = 0.0;
        for (std::size_t r : rows) {
            auto x = e.row(r);
            for (std::size_t c = 0; c < x.size(); ++c) ss += (x[c] - centroid[c]) * (x[c] - centroid[c]);
        }
        total += ss / static_cast<double>(rows.size()) / d;
    }
    return total / static_cast<double>(members.size());
}

ScoreSet verification_scores(const Matrix& emb, std::span<const int> labels) {
    if (labels.size() != emb.rows()) throw Error(ErrorKind::DimMismatch, "one label per row");
    const Matrix sim = pairwise_cosine(emb, emb);
    ScoreSet s;
    for (std::size_t i = 0; i < emb.rows(); ++i) {
        for (std::size_t j = i + 1; j < emb.rows(); ++j) {
            (labels[i] == labels[j] ? s.genuine : s.impostor).push_back(sim(i, j));
        }
    }
    return s;
}

std::string_view to_string(Protocol protocol) {
    return protocol == Protocol::Classification ? "classification" : "verification";
}

Protocol protocol_from_string(std::string_view name) {
    if (name == "classification") return Protocol::Classification;
    if (name == "verification") return Protocol::Verification;
    throw Error(ErrorKind::InvalidConfig, "unknown protocol '" + std::string(name) + "'");
}

std::string tar_key(double far) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.0e", far);
    // "1e-02" -> "1e-2"
    std::string s(buf);
    const auto e = s.find('e');
    if (e != std::string::npos && e + 2 < s.size() && (s[e + 1] == '-' || s[e + 1] == '+')) {
        std::size_t p = e + 2;
        while (p + 1 < s.size() && s[p] == '0') s.erase(p, 1);
        if (s[e + 1] == '+') s.erase(e + 1, 1);
    }
    return "tar@far=" + s;
}

MetricsReport evaluate(const Model& model, const EncoderSnapshot& snapshot, const Dataset& split,
                       Protocol protocol, std::string dataset_tag) {
    if (split.empty()) throw Error(ErrorKind::InvalidConfig, "evaluation split is empty");
    MetricsReport report;
    report.dataset_tag = std::move(dataset_tag);
    report.config = {{"protocol", std::string(to_string(protocol))}, {"samples", split.size()}};

    const Matrix emb = forward_vision(model.vision, split.x);
    if (protocol == Protocol::Classification) {
        const auto classes = split.classes();
        std::map<int, std::size_t> column;
        std::vector<std::string> captions;
        for (int c : classes) {
            column[c] = captions.size();
            captions.push_back(caption_for_class(class_name(c)));
        }
        const Matrix class_emb = forward_text(model.captions, captions);
        std::vector<std::size_t> truth;
        for (int l : split.labels) truth.push_back(column.at(l));
        report.metrics["accuracy"] = zero_shot_accuracy(emb, class_emb, truth);

        std::vector<std::size_t> ks;
        for (std::size_t k : kRetrievalKs) {
            if (k <= classes.size()) ks.push_back(k);
        }
        const auto ret = retrieval_at_k(pairwise_cosine(emb, class_emb), truth, ks);
        double sum = 0.0;
        for (const auto& [k, rate] : ret) {
            report.metrics["ret@" + std::to_string(k)] = rate;
            sum += rate;
        }
        if (ret.size() == std::size(kRetrievalKs)) report.metrics["ret_mean"] = sum / static_cast<double>(ret.size());
    } else {
        const ScoreSet scores = verification_scores(emb, split.labels);
        for (const TarPoint& p : tar_at_far(scores, kDeskFarTargets)) report.metrics[tar_key(p.far_target)] = p.tar;
    }
    report.metrics["cluster_variance"] = cluster_variance(emb, split.labels);
    report.metrics["mean_drift"] = mean_drift(model.vision, snapshot, split.x);
    return report;
}

}  // namespace simtune
