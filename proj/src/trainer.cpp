#include "simtune/trainer.hpp"

#include <cmath>
#include <map>

#include "simtune/error.hpp"
#include "simtune/rng.hpp"
#include "simtune/sampler.hpp"

namespace simtune {

std::string_view to_string(LossVariant variant) {
    return variant == LossVariant::ClipContrastive ? "clip_contrastive" : "arc_margin";
}

LossVariant loss_variant_from_string(std::string_view name) {
    if (name == "clip_contrastive") return LossVariant::ClipContrastive;
    if (name == "arc_margin") return LossVariant::ArcMargin;
    throw Error(ErrorKind::InvalidConfig, "unknown loss variant '" + std::string(name) + "'");
}

LossHyper TrainConfig::hyper() const {
    LossHyper h;
    h.tau = tau;
    h.alpha = alpha;
    h.arc_scale = arc_scale;
    h.arc_margin = arc_margin;
    return h;
}

void TrainConfig::validate() const {
    auto fail = [](const std::string& msg) { throw Error(ErrorKind::InvalidConfig, msg); };
    if (steps < 1) fail("steps must be >= 1");
    if (batch_size < 2) fail("batch_size must be >= 2");
    if (!(lr0 >= 0.0)) fail("lr0 must be >= 0");
    if (!(weight_decay >= 0.0)) fail("weight_decay must be >= 0");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) fail("adam_beta1 must lie in [0, 1)");
    if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) fail("adam_beta2 must lie in [0, 1)");
    if (!(adam_eps > 0.0)) fail("adam_eps must be > 0");
    hyper().validate();
}

nlohmann::json to_json(const TrainConfig& c) {
    return {{"alpha", c.alpha},
            {"tau", c.tau},
            {"lr0", c.lr0},
            {"steps", c.steps},
            {"batch_size", c.batch_size},
            {"weight_decay", c.weight_decay},
            {"adam_beta1", c.adam_beta1},
            {"adam_beta2", c.adam_beta2},
            {"adam_eps", c.adam_eps},
            {"seed", c.seed},
            {"task", std::string(to_string(c.task))},
            {"loss_variant", std::string(to_string(c.loss_variant))},
            {"arc_scale", c.arc_scale},
            {"arc_margin", c.arc_margin}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    try {
        c.alpha = j.value("alpha", c.alpha);
        if (j.contains("task")) c.task = task_from_string(j.at("task").get<std::string>());
        c.tau = j.value("tau", c.task == Task::Pairwise ? kReferencePairwiseTau : c.tau);
        c.lr0 = j.value("lr0", c.lr0);
        c.steps = j.value("steps", c.steps);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.weight_decay = j.value("weight_decay", c.weight_decay);
        c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
        c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
        c.adam_eps = j.value("adam_eps", c.adam_eps);
        c.seed = j.value("seed", c.seed);
        if (j.contains("loss_variant"))
            c.loss_variant = loss_variant_from_string(j.at("loss_variant").get<std::string>());
        c.arc_scale = j.value("arc_scale", c.arc_scale);
        c.arc_margin = j.value("arc_margin", c.arc_margin);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::ConfigParse, e.what());
    }
    c.validate();
    return c;
}

double lr_at(std::size_t k, const TrainConfig& config) {
    if (k > config.steps) {
        throw Error(ErrorKind::StepOutOfRange,
                    "step " + std::to_string(k) + " beyond " + std::to_string(config.steps));
    }
    return config.lr0 * (1.0 - static_cast<double>(k) / static_cast<double>(config.steps));
}

void adamw_step(std::span<const std::span<double>> params,
                std::span<const std::span<const double>> grads, OptimizerState& state, double lr,
                const TrainConfig& config) {
    if (params.size() != grads.size())
        throw Error(ErrorKind::ShapeMismatch, "parameter and gradient group counts differ");
    if (!(lr >= 0.0)) throw Error(ErrorKind::InvalidConfig, "learning rate must be >= 0");
    if (state.m.empty()) {
        for (auto p : params) {
            state.m.emplace_back(p.size(), 0.0);
            state.v.emplace_back(p.size(), 0.0);
        }
    }
    if (state.m.size() != params.size())
        throw Error(ErrorKind::ShapeMismatch, "optimizer state has a different group count");
    for (std::size_t g = 0; g < params.size(); ++g) {
        if (params[g].size() != grads[g].size() || state.m[g].size() != params[g].size())
            throw Error(ErrorKind::ShapeMismatch, "group " + std::to_string(g) + " sizes differ");
        for (double x : grads[g]) {
            if (!std::isfinite(x))
                throw Error(ErrorKind::NonFiniteGradient, "group " + std::to_string(g));
        }
    }

    state.t += 1;
    const double b1 = config.adam_beta1;
    const double b2 = config.adam_beta2;
    const double t = static_cast<double>(state.t);
    const double c1 = 1.0 - std::pow(b1, t);
    const double c2 = 1.0 - std::pow(b2, t);
    for (std::size_t g = 0; g < params.size(); ++g) {
        auto p = params[g];
        auto gr = grads[g];
        auto& m = state.m[g];
        auto& v = state.v[g];
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = b1 * m[i] + (1.0 - b1) * gr[i];
            v[i] = b2 * v[i] + (1.0 - b2) * gr[i] * gr[i];
            const double mh = m[i] / c1;
            const double vh = v[i] / c2;
            p[i] -= lr * (mh / (std::sqrt(vh) + config.adam_eps) + config.weight_decay * p[i]);
        }
    }
}

namespace {

// Dense row per identity, in ascending identity order.
std::map<int, int> identity_rows(const Dataset& data) {
    std::map<int, int> rows;
    for (int id : data.classes()) rows.emplace(id, static_cast<int>(rows.size()));
    return rows;
}

}  // namespace

RunRecord run_training(const Model& pretrained, const Dataset& data, const TrainConfig& config) {
    config.validate();
    pretrained.vision.validate();
    if (data.empty()) throw Error(ErrorKind::InvalidConfig, "training dataset is empty");

    RunRecord rec;
    rec.config = config;
    rec.final_model = pretrained;
    const EncoderSnapshot snapshot(pretrained.vision);
    rec.snapshot_hash_before = snapshot.hash();

    Model& model = rec.final_model;
    Rng rng(config.seed);
    const LossHyper hyper = config.hyper();
    const bool arc = config.loss_variant == LossVariant::ArcMargin;

    std::map<int, int> id_rows;
    if (config.task == Task::Pairwise && arc) {
        id_rows = identity_rows(data);
        Rng init_rng = rng.split();
        if (model.class_weights.rows() != id_rows.size() ||
            model.class_weights.cols() != model.vision.embed_dim()) {
            model.class_weights = Matrix(id_rows.size(), model.vision.embed_dim());
            for (double& w : model.class_weights.data()) w = init_rng.normal();
        }
    }

    OptimizerState opt;
    for (std::size_t k = 1; k <= config.steps; ++k) {
        ObjectiveValue obj;
        if (config.task == Task::Classification) {
            const LabeledBatch batch = sample_labeled_batch(data, config.batch_size, rng);
            obj = arc ? margin_classification_objective(model.vision, model.captions, snapshot, batch, hyper)
                      : classification_objective(model.vision, model.captions, snapshot, batch, hyper);
        } else {
            const PairBatch batch = sample_identity_batch(data, config.batch_size, rng);
            require_distinct_identities(batch);
            if (arc) {
                std::vector<int> rows;
                for (int id : batch.identity_ids) rows.push_back(id_rows.at(id));
                obj = margin_pairwise_objective(model.vision, snapshot, batch, rows,
                                                model.class_weights, hyper);
            } else {
                obj = pairwise_objective(model.vision, snapshot, batch, hyper);
            }
        }

        if (!std::isfinite(obj.value)) {
            rec.diverged = true;
            rec.failure = "non-finite loss at step " + std::to_string(k);
            break;
        }

        const double lr = lr_at(k, config);
        std::vector<std::span<double>> params = parameter_views(model.vision);
        std::vector<std::span<const double>> grads;
        for (auto view : parameter_views(obj.vision)) grads.emplace_back(view);
        if (!obj.caption_grad.empty()) {
            params.push_back(model.captions.embeddings().data());
            grads.emplace_back(obj.caption_grad.data());
        }
        if (!obj.class_weight_grad.empty()) {
            params.push_back(model.class_weights.data());
            grads.emplace_back(obj.class_weight_grad.data());
        }
        try {
            adamw_step(params, grads, opt, lr, config);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::NonFiniteGradient) throw;
            rec.diverged = true;
            rec.failure = "non-finite gradient at step " + std::to_string(k);
            break;
        }
        rec.steps.push_back({k, lr, obj.value, obj.task_term, obj.similarity_term});
        bool finite = true;
        for (auto view : params)
            for (double v : view) finite = finite && std::isfinite(v);
        if (!finite) {
            // A non-finite encoder cannot be evaluated again; stop here.
            rec.diverged = true;
            rec.failure = "non-finite parameters after step " + std::to_string(k);
            break;
        }
    }
    rec.snapshot_hash_after = snapshot.hash();
    return rec;
}

TrainConfig default_pretrain_schedule() {
    TrainConfig c;
    c.task = Task::Pairwise;
    c.tau = 0.1;
    c.lr0 = 3e-3;
    c.steps = 2000;
    c.batch_size = 64;
    return c;
}

nlohmann::json to_json(const PretrainConfig& c) {
    return {{"hidden_dim", c.hidden_dim},
            {"embed_dim", c.embed_dim},
            {"activation", c.activation},
            {"train", to_json(c.train)}};
}

PretrainConfig pretrain_config_from_json(const nlohmann::json& j) {
    PretrainConfig c;
    try {
        c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
        c.embed_dim = j.value("embed_dim", c.embed_dim);
        c.activation = j.value("activation", c.activation);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::ConfigParse, e.what());
    }
    activation_from_string(c.activation);
    if (c.embed_dim < 1) throw Error(ErrorKind::InvalidConfig, "embed_dim must be >= 1");
    const nlohmann::json& t = j.contains("train") ? j.at("train") : j;
    nlohmann::json merged = to_json(default_pretrain_schedule());
    for (auto it = t.begin(); it != t.end(); ++it) {
        if (merged.contains(it.key())) merged[it.key()] = it.value();
    }
    c.train = train_config_from_json(merged);
    return c;
}

CaptionTable prototype_captions(const EncoderParams& vision, const Dataset& data) {
    const Matrix emb = row_l2_normalize(forward_vision(vision, data.x));
    const auto classes = data.classes();
    std::map<int, std::size_t> row_of;
    for (std::size_t i = 0; i < classes.size(); ++i) row_of[classes[i]] = i;
    Matrix sums(classes.size(), emb.cols());
    for (std::size_t i = 0; i < data.size(); ++i) {
        auto dst = sums.row(row_of.at(data.labels[i]));
        auto src = emb.row(i);
        for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
    }
    std::vector<std::string> captions;
    for (int c : classes) captions.push_back(caption_for_class(class_name(c)));
    return CaptionTable(std::move(captions), row_l2_normalize(sums));
}

Model pretrain(const Dataset& broad, const PretrainConfig& config, RunRecord* record) {
    if (broad.empty()) throw Error(ErrorKind::InvalidConfig, "pretraining dataset is empty");
    TrainConfig tc = config.train;
    tc.task = Task::Pairwise;
    tc.loss_variant = LossVariant::ClipContrastive;
    tc.alpha = 0.0;
    tc.batch_size = std::min(tc.batch_size, broad.classes().size());
    tc.validate();

    Rng rng(tc.seed ^ 0x5bd1e995ULL);
    std::vector<std::size_t> widths = {broad.x.cols()};
    if (config.hidden_dim > 0) widths.push_back(config.hidden_dim);
    widths.push_back(config.embed_dim);
    Model init;
    init.vision = init_encoder(widths, rng, activation_from_string(config.activation));

    RunRecord rec = run_training(init, broad, tc);
    if (record) *record = rec;
    if (rec.diverged) throw Error(ErrorKind::DivergenceDetected, "pretraining: " + rec.failure);
    Model out;
    out.vision = std::move(rec.final_model.vision);
    out.captions = prototype_captions(out.vision, broad);
    return out;
}

}  // namespace simtune
