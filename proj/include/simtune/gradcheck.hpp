#pragma once

#include <functional>
#include <span>
#include <vector>

namespace simtune {

using ScalarFn = std::function<double(std::span<const double>)>;

inline constexpr double kDefaultFdStep = 1e-5;

/// Central-difference gradient: (f(x + h e_i) - f(x - h e_i)) / 2h per coordinate.
/// Throws NonFiniteEvaluation if any evaluation is not finite and
/// InvalidConfig if h lies outside [1e-7, 1e-3].
std::vector<double> finite_diff_grad(const ScalarFn& f, std::span<const double> at,
                                     double h = kDefaultFdStep);

/// Largest entrywise |a - b| / max(|a|, |b|, floor). The floor keeps entries
/// that are zero in both vectors from dividing by zero.
double max_relative_error(std::span<const double> analytic, std::span<const double> numeric,
                          double floor = 1e-6);

/// Denominator floor for comparing gradients of a loss with value `f`.
/// Central-difference roundoff grows like eps * |f| / h, so entries far below
/// 1e-5 * |f| are compared on an absolute scale instead.
double gradcheck_floor(double f);

}  // namespace simtune
