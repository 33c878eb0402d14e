#include "simtune/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "simtune/error.hpp"

namespace simtune {

namespace {

constexpr double kMinRowNorm = 1e-12;

void require_same_cols(const Matrix& a, const Matrix& b, const char* what) {
    if (a.cols() != b.cols()) {
        throw Error(ErrorKind::DimMismatch, std::string(what) + ": column counts " +
                                                std::to_string(a.cols()) + " vs " +
                                                std::to_string(b.cols()));
    }
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw Error(ErrorKind::ShapeMismatch, "buffer of " + std::to_string(data_.size()) +
                                                  " values for a " + std::to_string(rows_) + "x" +
                                                  std::to_string(cols_) + " matrix");
    }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) throw Error(ErrorKind::ShapeMismatch, "ragged initializer list");
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

Matrix transpose(const Matrix& m) {
    Matrix t(m.cols(), m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c) t(c, r) = m(r, c);
    return t;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw Error(ErrorKind::DimMismatch, "matmul inner dimensions");
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto o = out.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            auto br = b.row(k);
            for (std::size_t j = 0; j < b.cols(); ++j) o[j] += aik * br[j];
        }
    }
    return out;
}

Matrix matmul_bt(const Matrix& a, const Matrix& b) {
    require_same_cols(a, b, "matmul_bt");
    Matrix out(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = dot(a.row(i), b.row(j));
    return out;
}

Matrix matmul_at(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) throw Error(ErrorKind::DimMismatch, "matmul_at row counts");
    Matrix out(a.cols(), b.cols());
    for (std::size_t k = 0; k < a.rows(); ++k) {
        auto ar = a.row(k);
        auto br = b.row(k);
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double aki = ar[i];
            if (aki == 0.0) continue;
            auto o = out.row(i);
            for (std::size_t j = 0; j < b.cols(); ++j) o[j] += aki * br[j];
        }
    }
    return out;
}

Matrix select_rows(const Matrix& m, std::span<const std::size_t> idx) {
    Matrix out(idx.size(), m.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= m.rows()) throw Error(ErrorKind::DimMismatch, "row index out of range");
        std::copy_n(m.row(idx[i]).begin(), m.cols(), out.row(i).begin());
    }
    return out;
}

Matrix vstack(const Matrix& top, const Matrix& bottom) {
    require_same_cols(top, bottom, "vstack");
    std::vector<double> data(top.values());
    data.insert(data.end(), bottom.values().begin(), bottom.values().end());
    return Matrix(top.rows() + bottom.rows(), top.cols(), std::move(data));
}

void add_in_place(Matrix& acc, const Matrix& other, double scale) {
    if (acc.rows() != other.rows() || acc.cols() != other.cols())
        throw Error(ErrorKind::ShapeMismatch, "add_in_place shapes differ");
    auto a = acc.data();
    auto o = other.data();
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += scale * o[i];
}

bool all_finite(const Matrix& m) {
    return std::all_of(m.data().begin(), m.data().end(), [](double x) { return std::isfinite(x); });
}

Matrix row_l2_normalize(const Matrix& m, std::vector<double>& norms) {
    norms.assign(m.rows(), 0.0);
    Matrix out(m.rows(), m.cols());
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const double n = norm2(m.row(r));
        if (!(n > kMinRowNorm)) {
            throw Error(ErrorKind::ZeroRow, "row " + std::to_string(r) + " has norm " + std::to_string(n));
        }
        norms[r] = n;
        auto src = m.row(r);
        auto dst = out.row(r);
        for (std::size_t c = 0; c < m.cols(); ++c) dst[c] = src[c] / n;
    }
    return out;
}

Matrix row_l2_normalize(const Matrix& m) {
    std::vector<double> norms;
    return row_l2_normalize(m, norms);
}

Matrix row_l2_normalize_backward(const Matrix& grad_normalized, const Matrix& normalized,
                                 std::span<const double> norms) {
    // d(x/|x|) = (I - x̂ x̂ᵀ) / |x|
    Matrix out(normalized.rows(), normalized.cols());
    for (std::size_t r = 0; r < normalized.rows(); ++r) {
        auto g = grad_normalized.row(r);
        auto xh = normalized.row(r);
        const double proj = dot(g, xh);
        auto o = out.row(r);
        for (std::size_t c = 0; c < normalized.cols(); ++c) o[c] = (g[c] - proj * xh[c]) / norms[r];
    }
    return out;
}

Matrix pairwise_cosine(const Matrix& a, const Matrix& b) {
    require_same_cols(a, b, "pairwise_cosine");
    Matrix sim = matmul_bt(row_l2_normalize(a), row_l2_normalize(b));
    for (double& s : sim.data()) s = std::clamp(s, -1.0, 1.0);
    return sim;
}

}  // namespace simtune
