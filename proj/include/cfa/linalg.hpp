#pragma once

#include <vector>

#include "cfa/matrix.hpp"
#include "cfa/rng.hpp"

namespace cfa {

struct SoftmaxCEResult {
    double loss = 0.0;
    std::vector<double> grad;  // softmax(logits) - onehot(true_index)
};

// loss = -log softmax(logits)[true_index]. Shift-invariant in the logits.
SoftmaxCEResult softmax_cross_entropy(std::span<const double> logits, std::size_t true_index);

std::vector<double> softmax(std::span<const double> logits);

// Each row rescaled to unit L2 norm; rows with norm < eps are divided by eps
// instead (zero rows stay zero).
Matrix l2_normalize_rows(const Matrix& m, double eps = 1e-12);
void l2_normalize_rows_inplace(Matrix& m, double eps = 1e-12);

// Rows of `a` minus their orthogonal projection onto the row space of `b`.
// Result R satisfies R bᵀ = 0. Rank-deficient b is handled by
// orthonormalizing only its independent rows.
Matrix project_rows_to_nullspace(const Matrix& a, const Matrix& b);

// Orthonormal basis (as rows) of the row space of m, via modified
// Gram-Schmidt with dependent rows dropped.
Matrix orthonormal_row_basis(const Matrix& m, double tol = 1e-10);

struct CompactSvd {
    Matrix u;               // rows(m) × r, orthonormal columns
    std::vector<double> s;  // r positive singular values, nonincreasing
    Matrix v;               // cols(m) × r, orthonormal columns
};

// Compact SVD by one-sided Jacobi rotations. m = U diag(S) Vᵀ.
CompactSvd svd_compact(const Matrix& m);

// Uniform random orthonormal d×d matrix: Householder QR of a Gaussian
// matrix with the sign correction that makes diag(R) positive.
Matrix random_orthonormal(std::size_t d, RngState& rng);

Matrix random_gaussian(std::size_t rows, std::size_t cols, RngState& rng);

// Lower-triangular factor L with m ≈ L Lᵀ for symmetric PSD m. Zero modes
// (pivot below tolerance) produce zero columns rather than failing.
Matrix cholesky_psd(const Matrix& m);

}  // namespace cfa
