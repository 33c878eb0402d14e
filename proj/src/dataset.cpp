#include "simtune/dataset.hpp"

#include <algorithm>

namespace simtune {

Dataset Dataset::subset(std::span<const std::size_t> idx) const {
    Dataset out;
    out.x = select_rows(x, idx);
    out.labels.reserve(idx.size());
    out.domains.reserve(idx.size());
    for (std::size_t i : idx) {
        out.labels.push_back(labels[i]);
        out.domains.push_back(domains[i]);
    }
    return out;
}

std::vector<int> Dataset::classes() const {
    std::vector<int> c(labels);
    std::sort(c.begin(), c.end());
    c.erase(std::unique(c.begin(), c.end()), c.end());
    return c;
}

std::string class_name(int label) { return "class_" + std::to_string(label); }

}  // namespace simtune
