#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "simtune/matrix.hpp"

namespace simtune {

/// Labeled samples. `labels` holds class ids for the classification task and
/// identity ids for the pairwise task.
struct Dataset {
    Matrix x;
    std::vector<int> labels;
    std::vector<int> domains;

    std::size_t size() const noexcept { return labels.size(); }
    bool empty() const noexcept { return labels.empty(); }
    Dataset subset(std::span<const std::size_t> idx) const;
    /// Sorted distinct labels.
    std::vector<int> classes() const;

    bool operator==(const Dataset&) const = default;
};

/// Canonical class name for a label: "class_<id>".
std::string class_name(int label);

}  // namespace simtune
