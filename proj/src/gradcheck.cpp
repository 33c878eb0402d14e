#include "simtune/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "simtune/error.hpp"

namespace simtune {

std::vector<double> finite_diff_grad(const ScalarFn& f, std::span<const double> at, double h) {
    if (!(h >= 1e-7 && h <= 1e-3)) {
        throw Error(ErrorKind::InvalidConfig, "finite difference step must lie in [1e-7, 1e-3]");
    }
    std::vector<double> x(at.begin(), at.end());
    std::vector<double> grad(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = x[i];
        x[i] = orig + h;
        const double fp = f(x);
        x[i] = orig - h;
        const double fm = f(x);
        x[i] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            throw Error(ErrorKind::NonFiniteEvaluation, "at coordinate " + std::to_string(i));
        }
        grad[i] = (fp - fm) / (2.0 * h);
    }
    return grad;
}

double max_relative_error(std::span<const double> analytic, std::span<const double> numeric,
                          double floor) {
    if (analytic.size() != numeric.size()) {
        throw Error(ErrorKind::ShapeMismatch, "gradient vectors differ in length");
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double a = analytic[i];
        const double n = numeric[i];
        const double denom = std::max({std::abs(a), std::abs(n), floor});
        worst = std::max(worst, std::abs(a - n) / denom);
    }
    return worst;
}

double gradcheck_floor(double f) { return 1e-5 * std::max(1.0, std::abs(f)); }

}  // namespace simtune
