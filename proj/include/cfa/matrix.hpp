#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace cfa {

// Dense row-major matrix of doubles. The universal numeric carrier.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
    std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }

    bool empty() const { return rows == 0 || cols == 0; }
    std::size_t size() const { return rows * cols; }

    static Matrix identity(std::size_t n);

    bool operator==(const Matrix&) const = default;
};

Matrix transpose(const Matrix& m);
// a (m×k) * b (k×n)
Matrix matmul(const Matrix& a, const Matrix& b);
// a (m×k) * bᵀ where b is (n×k)
Matrix matmul_bt(const Matrix& a, const Matrix& b);
// aᵀ * b where a is (k×m), b is (k×n)
Matrix matmul_at(const Matrix& a, const Matrix& b);

Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& m);

double frobenius_norm(const Matrix& m);
double max_abs(const Matrix& m);
double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> v);

// Throws std::domain_error if any entry is NaN or Inf.
void check_finite(const Matrix& m, const char* what);

}  // namespace cfa
