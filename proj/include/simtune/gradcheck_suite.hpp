#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "simtune/rng.hpp"

namespace simtune {

inline constexpr double kGradcheckTolerance = 1e-4;

/// One random problem: a flat parameter vector, the loss as a function of it,
/// and the analytic gradient at that point.
struct GradcheckInstance {
    std::vector<double> at;
    std::function<double(std::span<const double>)> loss;
    std::vector<double> analytic;
};

struct GradcheckCase {
    std::string name;
    std::function<GradcheckInstance(Rng&)> make;
};

struct GradcheckResult {
    std::string name;
    std::size_t instances = 0;
    double max_rel_err = 0.0;
    bool passed = false;
};

/// Every loss and objective in the toolkit, each with its random-instance
/// generator.
std::vector<GradcheckCase> default_gradcheck_cases();

/// Runs `instances` seeded problems per case against finite_diff_grad.
/// `corrupt` names a case whose analytic gradient is perturbed (fault
/// injection for testing the checker itself).
std::vector<GradcheckResult> run_gradcheck(const std::vector<GradcheckCase>& cases,
                                           std::size_t instances, std::uint64_t seed,
                                           double h = 1e-5, std::string_view corrupt = {});

}  // namespace simtune
