#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "simtune/matrix.hpp"
#include "simtune/rng.hpp"

namespace simtune {

enum class Activation { Tanh, Relu, Identity };

std::string_view to_string(Activation act);
Activation activation_from_string(std::string_view name);

struct Layer {
    Matrix weight;               // d_out × d_in
    std::vector<double> bias;    // d_out

    std::size_t in_dim() const noexcept { return weight.cols(); }
    std::size_t out_dim() const noexcept { return weight.rows(); }
    bool operator==(const Layer&) const = default;
};

/// Trainable parameters of the vision encoder. Hidden layers apply the
/// activation; the final layer is affine.
struct EncoderParams {
    std::vector<Layer> layers;
    Activation activation = Activation::Tanh;

    std::size_t input_dim() const;
    std::size_t embed_dim() const;
    std::size_t parameter_count() const;

    /// Throws ShapeMismatch if adjacent layer dimensions do not chain.
    void validate() const;

    bool operator==(const EncoderParams&) const = default;
};

/// Gradients share the parameter layout.
using EncoderGrads = EncoderParams;

EncoderGrads zeros_like(const EncoderParams& params);
void add_in_place(EncoderGrads& acc, const EncoderGrads& other, double scale = 1.0);

/// Glorot-uniform weights and zero biases for the widths
/// {input_dim, hidden..., embed_dim}.
EncoderParams init_encoder(std::span<const std::size_t> widths, Rng& rng,
                           Activation act = Activation::Tanh);

/// Mutable views of every weight and bias buffer, in layer order.
std::vector<std::span<double>> parameter_views(EncoderParams& params);
std::vector<double> flatten(const EncoderParams& params);
void unflatten(std::span<const double> flat, EncoderParams& params);

/// Frozen copy of the pretrained parameters. Construct once; there is no
/// mutable access afterwards.
class EncoderSnapshot {
public:
    explicit EncoderSnapshot(EncoderParams params) : params_(std::move(params)) {}

    const EncoderParams& params() const noexcept { return params_; }
    std::uint64_t hash() const;

private:
    EncoderParams params_;
};

/// FNV-1a over the raw bytes of every parameter and the layer shapes.
std::uint64_t params_hash(const EncoderParams& params);

/// Activations retained by the forward pass for backpropagation.
struct ForwardCache {
    std::vector<Matrix> inputs;  // inputs[k] is the input of layer k
    Matrix output;
};

Matrix forward_vision(const EncoderParams& params, const Matrix& x);
Matrix forward_vision(const EncoderParams& params, const Matrix& x, ForwardCache& cache);

/// Accumulates dL/dθ given dL/d(output) for the batch cached in `cache`.
EncoderGrads backward_vision(const EncoderParams& params, const ForwardCache& cache,
                             const Matrix& grad_output);

/// Per-row squared L2 distance between the trained and frozen encoders'
/// unnormalized outputs.
std::vector<double> drift(const EncoderParams& params, const EncoderSnapshot& snapshot,
                          const Matrix& x);
double mean_drift(const EncoderParams& params, const EncoderSnapshot& snapshot, const Matrix& x);

/// Text side: one trainable embedding row per caption string.
class CaptionTable {
public:
    CaptionTable() = default;
    CaptionTable(std::vector<std::string> captions, Matrix embeddings);

    const Matrix& embeddings() const noexcept { return embeddings_; }
    Matrix& embeddings() noexcept { return embeddings_; }
    const std::vector<std::string>& captions() const noexcept { return captions_; }
    std::size_t size() const noexcept { return captions_.size(); }
    std::size_t embed_dim() const noexcept { return embeddings_.cols(); }

    bool contains(const std::string& caption) const { return index_.contains(caption); }
    /// Throws UnknownCaption.
    std::size_t index_of(const std::string& caption) const;
    std::vector<std::size_t> indices_of(std::span<const std::string> captions) const;

    bool operator==(const CaptionTable& other) const {
        return captions_ == other.captions_ && embeddings_ == other.embeddings_;
    }

private:
    std::vector<std::string> captions_;
    Matrix embeddings_;
    std::map<std::string, std::size_t, std::less<>> index_;
};

Matrix forward_text(const CaptionTable& table, std::span<const std::string> captions);

/// Everything a checkpoint holds: the vision encoder, the caption table and
/// (for the angular-margin variant) per-class weight vectors.
struct Model {
    EncoderParams vision;
    CaptionTable captions;
    Matrix class_weights;

    bool operator==(const Model&) const = default;
};

nlohmann::json model_to_json(const Model& model);
Model model_from_json(const nlohmann::json& doc);

/// JSON checkpoint; doubles round-trip bit-exactly. `manifest` is stored
/// verbatim under the "manifest" key when non-null.
void save_checkpoint(const Model& model, const std::filesystem::path& path,
                     const nlohmann::json& manifest = nullptr);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace simtune
