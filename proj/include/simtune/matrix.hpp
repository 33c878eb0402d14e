#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace simtune {

/// Dense row-major matrix of doubles. Batches are stored one sample per row.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);

Matrix transpose(const Matrix& m);
/// a (n×k) · b (k×m)
Matrix matmul(const Matrix& a, const Matrix& b);
/// a (n×k) · bᵀ where b is (m×k)
Matrix matmul_bt(const Matrix& a, const Matrix& b);
/// aᵀ · b where a is (k×n) and b is (k×m)
Matrix matmul_at(const Matrix& a, const Matrix& b);

Matrix select_rows(const Matrix& m, std::span<const std::size_t> idx);
Matrix vstack(const Matrix& top, const Matrix& bottom);
void add_in_place(Matrix& acc, const Matrix& other, double scale = 1.0);
bool all_finite(const Matrix& m);

/// Unit-norm copy of every row. Throws ZeroRow when a row norm is <= 1e-12.
Matrix row_l2_normalize(const Matrix& m);
Matrix row_l2_normalize(const Matrix& m, std::vector<double>& norms);

/// Backpropagates a gradient through row normalization.
/// `normalized` and `norms` come from the forward call.
Matrix row_l2_normalize_backward(const Matrix& grad_normalized, const Matrix& normalized,
                                 std::span<const double> norms);

/// Cosine similarity between every row of a (B×d) and every row of b (M×d).
Matrix pairwise_cosine(const Matrix& a, const Matrix& b);

}  // namespace simtune
