#include "simtune/sampler.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "simtune/error.hpp"

namespace simtune {

std::string caption_for_class(std::string_view class_name) {
    if (class_name.empty()) throw Error(ErrorKind::EmptyClassName, "caption needs a class name");
    return "a photo of a " + std::string(class_name);
}

LabeledBatch sample_labeled_batch(const Dataset& data, std::size_t batch_size, Rng& rng) {
    if (data.empty()) throw Error(ErrorKind::InvalidConfig, "cannot sample from an empty dataset");
    if (batch_size < 2) throw Error(ErrorKind::InvalidConfig, "batch_size must be >= 2");
    if (batch_size > data.size()) {
        throw Error(ErrorKind::BatchTooLarge, std::to_string(batch_size) + " > dataset size " +
                                                  std::to_string(data.size()));
    }
    const auto idx = rng.sample_without_replacement(data.size(), batch_size);
    LabeledBatch batch;
    batch.images = select_rows(data.x, idx);
    for (std::size_t i : idx) {
        batch.class_ids.push_back(data.labels[i]);
        batch.captions.push_back(caption_for_class(class_name(data.labels[i])));
    }
    return batch;
}

PairBatch sample_identity_batch(const Dataset& data, std::size_t batch_size, Rng& rng, bool strict) {
    // std::map keeps identities in ascending order so draws depend only on the seed.
    std::map<int, std::vector<std::size_t>> images;
    for (std::size_t i = 0; i < data.size(); ++i) images[data.labels[i]].push_back(i);

    std::vector<const std::pair<const int, std::vector<std::size_t>>*> eligible;
    for (const auto& entry : images) {
        if (entry.second.size() >= 2) {
            eligible.push_back(&entry);
        } else if (strict) {
            throw Error(ErrorKind::IdentityHasSingleImage,
                        "identity " + std::to_string(entry.first) + " has one image");
        }
    }
    if (eligible.size() < batch_size) {
        throw Error(ErrorKind::NotEnoughIdentities,
                    std::to_string(eligible.size()) + " eligible identities for a batch of " +
                        std::to_string(batch_size));
    }

    const auto chosen = rng.sample_without_replacement(eligible.size(), batch_size);
    std::vector<std::size_t> u_idx, v_idx;
    PairBatch batch;
    for (std::size_t c : chosen) {
        const auto& [id, rows] = *eligible[c];
        const std::size_t a = rng.uniform_index(rows.size());
        std::size_t b = rng.uniform_index(rows.size() - 1);
        if (b >= a) ++b;
        u_idx.push_back(rows[a]);
        v_idx.push_back(rows[b]);
        batch.identity_ids.push_back(id);
    }
    batch.u = select_rows(data.x, u_idx);
    batch.v = select_rows(data.x, v_idx);
    return batch;
}

void require_distinct_identities(const PairBatch& batch) {
    std::set<int> seen;
    for (int id : batch.identity_ids) {
        if (!seen.insert(id).second)
            throw Error(ErrorKind::DuplicateIdentity, "identity " + std::to_string(id) + " repeats");
    }
}

}  // namespace simtune
