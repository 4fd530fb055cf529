#include "cfa/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace cfa {

std::vector<double> softmax(std::span<const double> logits) {
    const double m = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - m);
        z += p[i];
    }
    for (double& x : p) x /= z;
    return p;
}

SoftmaxCEResult softmax_cross_entropy(std::span<const double> logits, std::size_t true_index) {
    if (logits.size() < 2) throw std::invalid_argument("softmax_cross_entropy: need at least 2 logits");
    if (true_index >= logits.size())
        throw std::invalid_argument("softmax_cross_entropy: true_index out of range");
    const double m = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    SoftmaxCEResult r;
    r.grad.resize(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        r.grad[i] = std::exp(logits[i] - m);
        z += r.grad[i];
    }
    r.loss = std::log(z) - (logits[true_index] - m);
    for (double& g : r.grad) g /= z;
    r.grad[true_index] -= 1.0;
    return r;
}

Matrix l2_normalize_rows(const Matrix& m, double eps) {
    Matrix out = m;
    l2_normalize_rows_inplace(out, eps);
    return out;
}

void l2_normalize_rows_inplace(Matrix& m, double eps) {
    if (eps <= 0.0) throw std::invalid_argument("l2_normalize_rows: eps must be positive");
    for (std::size_t i = 0; i < m.rows; ++i) {
        auto r = m.row(i);
        const double n = std::max(norm2(r), eps);
        for (double& x : r) x /= n;
    }
}

Matrix orthonormal_row_basis(const Matrix& m, double tol) {
    double max_norm = 0.0;
    for (std::size_t i = 0; i < m.rows; ++i) max_norm = std::max(max_norm, norm2(m.row(i)));
    Matrix basis(0, m.cols);
    std::vector<double> q(m.cols);
    for (std::size_t i = 0; i < m.rows; ++i) {
        std::copy(m.row(i).begin(), m.row(i).end(), q.begin());
        // two MGS passes for orthogonality at full precision
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t b = 0; b < basis.rows; ++b) {
                const double c = dot(q, basis.row(b));
                for (std::size_t j = 0; j < m.cols; ++j) q[j] -= c * basis.row(b)[j];
            }
        }
        const double n = norm2(q);
        if (n <= tol * std::max(1.0, max_norm)) continue;  // dependent row
        basis.data.insert(basis.data.end(), q.begin(), q.end());
        ++basis.rows;
        for (std::size_t j = 0; j < m.cols; ++j) basis.row(basis.rows - 1)[j] /= n;
    }
    return basis;
}

Matrix project_rows_to_nullspace(const Matrix& a, const Matrix& b) {
    if (a.cols != b.cols)
        throw std::invalid_argument("project_rows_to_nullspace: column counts differ");
    const Matrix basis = orthonormal_row_basis(b);
    Matrix out = a;
    for (std::size_t i = 0; i < out.rows; ++i) {
        auto r = out.row(i);
        for (std::size_t q = 0; q < basis.rows; ++q) {
            const double c = dot(r, basis.row(q));
            for (std::size_t j = 0; j < out.cols; ++j) r[j] -= c * basis.row(q)[j];
        }
    }
    return out;
}

namespace {

// One-sided Jacobi on a matrix with rows >= cols: orthogonalize the columns
// of a working copy, accumulating the rotations into V.
CompactSvd jacobi_svd_tall(const Matrix& m) {
    const std::size_t n = m.cols;
    Matrix a = m;          // rows × n, columns become s_j * u_j
    Matrix v = Matrix::identity(n);
    const double tol = 1e-14;
    const int max_sweeps = 60;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double app = 0.0, aqq = 0.0, apq = 0.0;
                for (std::size_t i = 0; i < a.rows; ++i) {
                    const double x = a(i, p), y = a(i, q);
                    app += x * x;
                    aqq += y * y;
                    apq += x * y;
                }
                if (std::abs(apq) <= tol * std::sqrt(app * aqq) || apq == 0.0) continue;
                rotated = true;
                const double zeta = (aqq - app) / (2.0 * apq);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < a.rows; ++i) {
                    const double x = a(i, p), y = a(i, q);
                    a(i, p) = c * x - s * y;
                    a(i, q) = s * x + c * y;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double x = v(i, p), y = v(i, q);
                    v(i, p) = c * x - s * y;
                    v(i, q) = s * x + c * y;
                }
            }
        }
        if (!rotated) break;
    }
    std::vector<double> s(n);
    double smax = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        double nj = 0.0;
        for (std::size_t i = 0; i < a.rows; ++i) nj += a(i, j) * a(i, j);
        s[j] = std::sqrt(nj);
        smax = std::max(smax, s[j]);
    }
    // compact: keep numerically nonzero singular values, sorted descending
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return s[i] > s[j]; });
    const double cutoff = smax * static_cast<double>(std::max(a.rows, n)) * 1e-15;
    std::size_t r = 0;
    while (r < n && s[order[r]] > cutoff) ++r;
    CompactSvd out;
    out.u = Matrix(a.rows, r);
    out.v = Matrix(n, r);
    out.s.resize(r);
    for (std::size_t k = 0; k < r; ++k) {
        const std::size_t j = order[k];
        out.s[k] = s[j];
        for (std::size_t i = 0; i < a.rows; ++i) out.u(i, k) = a(i, j) / s[j];
        for (std::size_t i = 0; i < n; ++i) out.v(i, k) = v(i, j);
    }
    return out;
}

}  // namespace

CompactSvd svd_compact(const Matrix& m) {
    if (m.empty()) throw std::invalid_argument("svd_compact: empty matrix");
    if (max_abs(m) == 0.0) throw std::invalid_argument("svd_compact: zero matrix");
    if (m.rows >= m.cols) return jacobi_svd_tall(m);
    CompactSvd t = jacobi_svd_tall(transpose(m));
    std::swap(t.u, t.v);
    return t;
}

Matrix random_gaussian(std::size_t rows, std::size_t cols, RngState& rng) {
    Matrix m(rows, cols);
    for (double& x : m.data) x = rng.normal();
    return m;
}

Matrix random_orthonormal(std::size_t d, RngState& rng) {
    if (d == 0) throw std::invalid_argument("random_orthonormal: d must be >= 1");
    Matrix g = random_gaussian(d, d, rng);
    // Householder QR; Q accumulated explicitly.
    Matrix q = Matrix::identity(d);
    std::vector<double> v(d);
    for (std::size_t k = 0; k < d; ++k) {
        double xnorm = 0.0;
        for (std::size_t i = k; i < d; ++i) xnorm += g(i, k) * g(i, k);
        xnorm = std::sqrt(xnorm);
        if (xnorm == 0.0) continue;
        const double alpha = g(k, k) >= 0.0 ? -xnorm : xnorm;
        double vnorm2 = 0.0;
        for (std::size_t i = k; i < d; ++i) {
            v[i] = g(i, k);
            if (i == k) v[i] -= alpha;
            vnorm2 += v[i] * v[i];
        }
        if (vnorm2 == 0.0) continue;
        // apply H = I - 2vvᵀ/|v|² to G (left) and accumulate into Q
        for (std::size_t j = k; j < d; ++j) {
            double c = 0.0;
            for (std::size_t i = k; i < d; ++i) c += v[i] * g(i, j);
            c *= 2.0 / vnorm2;
            for (std::size_t i = k; i < d; ++i) g(i, j) -= c * v[i];
        }
        for (std::size_t j = 0; j < d; ++j) {
            double c = 0.0;
            for (std::size_t i = k; i < d; ++i) c += v[i] * q(i, j);
            c *= 2.0 / vnorm2;
            for (std::size_t i = k; i < d; ++i) q(i, j) -= c * v[i];
        }
    }
    // q currently holds Qᵀ; sign-correct so diag(R) > 0, i.e. flip rows of Qᵀ
    // where the corresponding diagonal of the triangular factor is negative.
    for (std::size_t k = 0; k < d; ++k) {
        if (g(k, k) < 0.0) {
            for (std::size_t j = 0; j < d; ++j) q(k, j) = -q(k, j);
        }
    }
    return transpose(q);
}

Matrix cholesky_psd(const Matrix& m) {
    if (m.rows != m.cols) throw std::invalid_argument("cholesky_psd: matrix must be square");
    const std::size_t n = m.rows;
    double max_diag = 0.0;
    for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, std::abs(m(i, i)));
    const double tol = 1e-12 * std::max(1.0, max_diag);
    Matrix l(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double d = m(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
        if (d <= tol) {
            if (d < -tol) throw std::invalid_argument("cholesky_psd: matrix is not PSD");
            continue;  // zero mode: leave column zero
        }
        l(j, j) = std::sqrt(d);
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = m(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            l(i, j) = s / l(j, j);
        }
    }
    return l;
}

}  // namespace cfa
