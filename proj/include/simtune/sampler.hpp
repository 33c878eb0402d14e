#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "simtune/dataset.hpp"
#include "simtune/matrix.hpp"
#include "simtune/rng.hpp"

namespace simtune {

/// Image/caption pairs (I_i, T_i) for the classification objective.
struct LabeledBatch {
    Matrix images;
    std::vector<int> class_ids;
    std::vector<std::string> captions;
};

/// Positive image pairs (U_i, V_i), one per distinct identity.
struct PairBatch {
    Matrix u;
    Matrix v;
    std::vector<int> identity_ids;
};

/// "a photo of a " + class_name, casing preserved. Throws EmptyClassName.
std::string caption_for_class(std::string_view class_name);

/// Uniform sampling without replacement within the batch.
LabeledBatch sample_labeled_batch(const Dataset& data, std::size_t batch_size, Rng& rng);

/// B distinct identities chosen uniformly; two distinct images of each.
/// In strict mode any identity with a single image is an error; otherwise
/// such identities are simply not eligible.
PairBatch sample_identity_batch(const Dataset& data, std::size_t batch_size, Rng& rng,
                                bool strict = true);

/// Throws DuplicateIdentity if any identity id repeats.
void require_distinct_identities(const PairBatch& batch);

}  // namespace simtune
