#include "simtune/encoder.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "simtune/error.hpp"

namespace simtune {

std::string_view to_string(Activation act) {
    switch (act) {
    case Activation::Tanh: return "tanh";
    case Activation::Relu: return "relu";
    case Activation::Identity: return "identity";
    }
    return "tanh";
}

Activation activation_from_string(std::string_view name) {
    if (name == "tanh") return Activation::Tanh;
    if (name == "relu") return Activation::Relu;
    if (name == "identity") return Activation::Identity;
    throw Error(ErrorKind::InvalidConfig, "unknown activation '" + std::string(name) + "'");
}

std::size_t EncoderParams::input_dim() const { return layers.empty() ? 0 : layers.front().in_dim(); }

std::size_t EncoderParams::embed_dim() const { return layers.empty() ? 0 : layers.back().out_dim(); }

std::size_t EncoderParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    return n;
}

void EncoderParams::validate() const {
    if (layers.empty()) throw Error(ErrorKind::ShapeMismatch, "encoder has no layers");
    for (std::size_t k = 0; k < layers.size(); ++k) {
        if (layers[k].bias.size() != layers[k].out_dim())
            throw Error(ErrorKind::ShapeMismatch, "bias length of layer " + std::to_string(k));
        if (k > 0 && layers[k].in_dim() != layers[k - 1].out_dim())
            throw Error(ErrorKind::ShapeMismatch, "layer " + std::to_string(k) + " does not chain");
    }
}

EncoderGrads zeros_like(const EncoderParams& params) {
    EncoderGrads g;
    g.activation = params.activation;
    for (const auto& l : params.layers)
        g.layers.push_back({Matrix(l.out_dim(), l.in_dim()), std::vector<double>(l.out_dim(), 0.0)});
    return g;
}

void add_in_place(EncoderGrads& acc, const EncoderGrads& other, double scale) {
    if (acc.layers.size() != other.layers.size())
        throw Error(ErrorKind::ShapeMismatch, "gradient layer counts differ");
    for (std::size_t k = 0; k < acc.layers.size(); ++k) {
        add_in_place(acc.layers[k].weight, other.layers[k].weight, scale);
        auto& b = acc.layers[k].bias;
        const auto& ob = other.layers[k].bias;
        for (std::size_t i = 0; i < b.size(); ++i) b[i] += scale * ob[i];
    }
}

EncoderParams init_encoder(std::span<const std::size_t> widths, Rng& rng, Activation act) {
    if (widths.size() < 2) throw Error(ErrorKind::InvalidConfig, "encoder needs at least two widths");
    EncoderParams p;
    p.activation = act;
    for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
        const std::size_t in = widths[k];
        const std::size_t out = widths[k + 1];
        const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
        Matrix w(out, in);
        for (double& v : w.data()) v = (2.0 * rng.uniform() - 1.0) * limit;
        p.layers.push_back({std::move(w), std::vector<double>(out, 0.0)});
    }
    return p;
}

std::vector<std::span<double>> parameter_views(EncoderParams& params) {
    std::vector<std::span<double>> views;
    for (auto& l : params.layers) {
        views.push_back(l.weight.data());
        views.push_back(l.bias);
    }
    return views;
}

std::vector<double> flatten(const EncoderParams& params) {
    std::vector<double> flat;
    flat.reserve(params.parameter_count());
    for (const auto& l : params.layers) {
        flat.insert(flat.end(), l.weight.data().begin(), l.weight.data().end());
        flat.insert(flat.end(), l.bias.begin(), l.bias.end());
    }
    return flat;
}

void unflatten(std::span<const double> flat, EncoderParams& params) {
    if (flat.size() != params.parameter_count())
        throw Error(ErrorKind::ShapeMismatch, "flat parameter vector has wrong length");
    std::size_t pos = 0;
    for (auto view : parameter_views(params)) {
        std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos), view.size(), view.begin());
        pos += view.size();
    }
}

std::uint64_t params_hash(const EncoderParams& params) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const void* p, std::size_t n) {
        const auto* bytes = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= bytes[i];
            h *= 0x100000001b3ULL;
        }
    };
    const int act = static_cast<int>(params.activation);
    mix(&act, sizeof act);
    for (const auto& l : params.layers) {
        const std::size_t shape[2] = {l.weight.rows(), l.weight.cols()};
        mix(shape, sizeof shape);
        mix(l.weight.data().data(), l.weight.size() * sizeof(double));
        mix(l.bias.data(), l.bias.size() * sizeof(double));
    }
    return h;
}

std::uint64_t EncoderSnapshot::hash() const { return params_hash(params_); }

namespace {

double activate(Activation act, double z) {
    switch (act) {
    case Activation::Tanh: return std::tanh(z);
    case Activation::Relu: return z > 0.0 ? z : 0.0;
    case Activation::Identity: return z;
    }
    return z;
}

// Derivative expressed through the activation output h = act(z).
double activate_grad(Activation act, double h) {
    switch (act) {
    case Activation::Tanh: return 1.0 - h * h;
    case Activation::Relu: return h > 0.0 ? 1.0 : 0.0;
    case Activation::Identity: return 1.0;
    }
    return 1.0;
}

Matrix affine(const Layer& layer, const Matrix& x) {
    Matrix z = matmul_bt(x, layer.weight);
    for (std::size_t r = 0; r < z.rows(); ++r) {
        auto row = z.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) row[c] += layer.bias[c];
    }
    return z;
}

}  // namespace

Matrix forward_vision(const EncoderParams& params, const Matrix& x, ForwardCache& cache) {
    if (params.layers.empty()) throw Error(ErrorKind::ShapeMismatch, "encoder has no layers");
    if (x.cols() != params.input_dim()) {
        throw Error(ErrorKind::DimMismatch, "input has " + std::to_string(x.cols()) +
                                                " columns, encoder expects " +
                                                std::to_string(params.input_dim()));
    }
    cache.inputs.clear();
    Matrix h = x;
    for (std::size_t k = 0; k < params.layers.size(); ++k) {
        cache.inputs.push_back(h);
        h = affine(params.layers[k], h);
        if (k + 1 < params.layers.size()) {
            for (double& v : h.data()) v = activate(params.activation, v);
        }
    }
    cache.output = h;
    return h;
}

Matrix forward_vision(const EncoderParams& params, const Matrix& x) {
    ForwardCache cache;
    return forward_vision(params, x, cache);
}

EncoderGrads backward_vision(const EncoderParams& params, const ForwardCache& cache,
                             const Matrix& grad_output) {
    EncoderGrads grads = zeros_like(params);
    Matrix g = grad_output;
    for (std::size_t k = params.layers.size(); k-- > 0;) {
        const Matrix& input = cache.inputs[k];
        grads.layers[k].weight = matmul_at(g, input);
        auto& db = grads.layers[k].bias;
        for (std::size_t r = 0; r < g.rows(); ++r) {
            auto row = g.row(r);
            for (std::size_t c = 0; c < row.size(); ++c) db[c] += row[c];
        }
        if (k == 0) break;
        g = matmul(g, params.layers[k].weight);
        // input of layer k is the activated output of layer k-1
        auto gd = g.data();
        auto hd = input.data();
        for (std::size_t i = 0; i < gd.size(); ++i) gd[i] *= activate_grad(params.activation, hd[i]);
    }
    return grads;
}

std::vector<double> drift(const EncoderParams& params, const EncoderSnapshot& snapshot,
                          const Matrix& x) {
    const Matrix a = forward_vision(params, x);
    const Matrix b = forward_vision(snapshot.params(), x);
    if (a.cols() != b.cols()) throw Error(ErrorKind::DimMismatch, "embedding dims differ from snapshot");
    std::vector<double> out(x.rows());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        double s = 0.0;
        auto ar = a.row(r);
        auto br = b.row(r);
        for (std::size_t c = 0; c < ar.size(); ++c) {
            const double d = ar[c] - br[c];
            s += d * d;
        }
        out[r] = s;
    }
    return out;
}

double mean_drift(const EncoderParams& params, const EncoderSnapshot& snapshot, const Matrix& x) {
    if (x.rows() == 0) return 0.0;
    const auto d = drift(params, snapshot, x);
    double s = 0.0;
    for (double v : d) s += v;
    return s / static_cast<double>(d.size());
}

CaptionTable::CaptionTable(std::vector<std::string> captions, Matrix embeddings)
    : captions_(std::move(captions)), embeddings_(std::move(embeddings)) {
    if (captions_.size() != embeddings_.rows())
        throw Error(ErrorKind::ShapeMismatch, "caption count differs from embedding rows");
    for (std::size_t i = 0; i < captions_.size(); ++i) {
        if (!index_.emplace(captions_[i], i).second)
            throw Error(ErrorKind::InvalidConfig, "duplicate caption '" + captions_[i] + "'");
    }
}

std::size_t CaptionTable::index_of(const std::string& caption) const {
    auto it = index_.find(caption);
    if (it == index_.end()) throw Error(ErrorKind::UnknownCaption, "'" + caption + "'");
    return it->second;
}

std::vector<std::size_t> CaptionTable::indices_of(std::span<const std::string> captions) const {
    std::vector<std::size_t> idx;
    idx.reserve(captions.size());
    for (const auto& c : captions) idx.push_back(index_of(c));
    return idx;
}

Matrix forward_text(const CaptionTable& table, std::span<const std::string> captions) {
    const auto idx = table.indices_of(captions);
    return select_rows(table.embeddings(), idx);
}

namespace {

nlohmann::json matrix_to_json(const Matrix& m) {
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.values()}};
}

Matrix matrix_from_json(const nlohmann::json& j) {
    return Matrix(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                  j.at("data").get<std::vector<double>>());
}

}  // namespace

nlohmann::json model_to_json(const Model& model) {
    nlohmann::json doc;
    doc["format"] = "simtune-checkpoint-v1";
    doc["activation"] = std::string(to_string(model.vision.activation));
    doc["embed_dim"] = model.vision.embed_dim();
    auto& layers = doc["layers"] = nlohmann::json::array();
    for (const auto& l : model.vision.layers) {
        layers.push_back({{"weight", matrix_to_json(l.weight)}, {"bias", l.bias}});
    }
    doc["caption_table"] = {{"captions", model.captions.captions()},
                            {"embeddings", matrix_to_json(model.captions.embeddings())}};
    doc["class_weights"] = matrix_to_json(model.class_weights);
    return doc;
}

Model model_from_json(const nlohmann::json& doc) {
    try {
        if (doc.value("format", std::string()) != "simtune-checkpoint-v1")
            throw Error(ErrorKind::ConfigParse, "not a simtune checkpoint");
        Model m;
        m.vision.activation = activation_from_string(doc.at("activation").get<std::string>());
        for (const auto& l : doc.at("layers")) {
            m.vision.layers.push_back(
                {matrix_from_json(l.at("weight")), l.at("bias").get<std::vector<double>>()});
        }
        m.vision.validate();
        if (m.vision.embed_dim() != doc.at("embed_dim").get<std::size_t>())
            throw Error(ErrorKind::ShapeMismatch, "embed_dim disagrees with final layer");
        const auto& ct = doc.at("caption_table");
        m.captions = CaptionTable(ct.at("captions").get<std::vector<std::string>>(),
                                  matrix_from_json(ct.at("embeddings")));
        if (doc.contains("class_weights")) m.class_weights = matrix_from_json(doc.at("class_weights"));
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::ConfigParse, std::string("checkpoint: ") + e.what());
    }
}

void save_checkpoint(const Model& model, const std::filesystem::path& path,
                     const nlohmann::json& manifest) {
    nlohmann::json doc = model_to_json(model);
    if (!manifest.is_null()) doc["manifest"] = manifest;
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    out << doc.dump(1) << '\n';
}

Model load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::MissingInput, path.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::ConfigParse, path.string() + ": " + e.what());
    }
    return model_from_json(doc);
}

}  // namespace simtune
