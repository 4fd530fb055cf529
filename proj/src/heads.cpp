#include "cfa/heads.hpp"

#include <cmath>
#include <stdexcept>

#include "cfa/linalg.hpp"

namespace cfa {

Matrix build_sel(const std::vector<int>& labels, std::size_t num_categories) {
    Matrix s(num_categories, labels.size());
    const double off = -1.0 / static_cast<double>(num_categories);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int lbl = labels[i];
        if (lbl < 0 || static_cast<std::size_t>(lbl) >= num_categories)
            throw std::invalid_argument("build_sel: label out of range");
        for (std::size_t c = 0; c < num_categories; ++c)
            s(c, i) = off + (static_cast<std::size_t>(lbl) == c ? 1.0 : 0.0);
    }
    return s;
}

OrthoPenaltyResult ortho_penalty(const Matrix& w1, const Matrix& w2) {
    if (w1.cols != w2.cols) throw std::invalid_argument("ortho_penalty: feature dims differ");
    OrthoPenaltyResult r;
    const Matrix cross = matmul_bt(w1, w2);  // K × E
    for (double x : cross.data) r.value += x * x;
    r.grad_w1 = 2.0 * matmul(cross, w2);
    r.grad_w2 = 2.0 * matmul_at(cross, w1);
    return r;
}

CfaLossResult cfa_loss(const HeadPair& heads, const Matrix& z, const std::vector<int>& y,
                       const std::vector<int>& e, const std::vector<std::uint8_t>& present,
                       double lambda, const std::vector<double>* class_weights,
                       const std::vector<double>* domain_weights) {
    const std::size_t n = z.rows, d = z.cols;
    const std::size_t k_count = heads.num_classes(), e_count = heads.num_domains();
    if (heads.w1.cols != d || (e_count > 0 && heads.w2.cols != d))
        throw std::invalid_argument("cfa_loss: feature dim mismatch");
    if (y.size() != n || e.size() != n || present.size() != n)
        throw std::invalid_argument("cfa_loss: label arrays must match batch size");
    if (lambda < 0.0) throw std::invalid_argument("cfa_loss: lambda must be >= 0");
    const bool biased = heads.mode == HeadMode::unconstrained_with_bias;

    CfaLossResult r;
    r.grad_z = Matrix(n, d);
    r.grad_w1 = Matrix(k_count, d);
    r.grad_w2 = Matrix(e_count, d);
    r.grad_b1.assign(biased ? k_count : 0, 0.0);
    r.grad_b2.assign(biased ? e_count : 0, 0.0);

    std::size_t n_present = 0;
    for (auto p : present) n_present += p ? 1 : 0;
    const double cw_default = n > 0 ? 1.0 / static_cast<double>(n) : 0.0;
    const double dw_default = n_present > 0 ? 1.0 / static_cast<double>(n_present) : 0.0;

    std::vector<double> logits(std::max(k_count, std::size_t{2}));
    for (std::size_t i = 0; i < n; ++i) {
        const auto zi = z.row(i);
        const double cw = class_weights ? (*class_weights)[i] : cw_default;
        logits.resize(k_count);
        for (std::size_t c = 0; c < k_count; ++c) {
            double v = dot(heads.w1.row(c), zi);
            if (biased) v += heads.b1[c];
            logits[c] = heads.beta1 * v;
        }
        const auto ce1 = softmax_cross_entropy(logits, static_cast<std::size_t>(y[i]));
        r.class_loss += cw * ce1.loss / static_cast<double>(k_count);
        const double s1 = cw * heads.beta1 / static_cast<double>(k_count);
        for (std::size_t c = 0; c < k_count; ++c) {
            const double g = s1 * ce1.grad[c];
            if (g == 0.0) continue;
            for (std::size_t j = 0; j < d; ++j) {
                r.grad_z(i, j) += g * heads.w1(c, j);
                r.grad_w1(c, j) += g * zi[j];
            }
            if (biased) r.grad_b1[c] += g;
        }

        if (lambda == 0.0 || e_count == 0 || !present[i]) continue;
        const double dw = domain_weights ? (*domain_weights)[i] : dw_default;
        logits.resize(e_count);
        for (std::size_t c = 0; c < e_count; ++c) {
            double v = dot(heads.w2.row(c), zi);
            if (biased) v += heads.b2[c];
            logits[c] = heads.beta2 * v;
        }
        const auto ce2 = softmax_cross_entropy(logits, static_cast<std::size_t>(e[i]));
        r.domain_loss += dw * ce2.loss / static_cast<double>(e_count);
        const double s2 = lambda * dw * heads.beta2 / static_cast<double>(e_count);
        for (std::size_t c = 0; c < e_count; ++c) {
            const double g = s2 * ce2.grad[c];
            if (g == 0.0) continue;
            for (std::size_t j = 0; j < d; ++j) {
                r.grad_z(i, j) += g * heads.w2(c, j);
                r.grad_w2(c, j) += g * zi[j];
            }
            if (biased) r.grad_b2[c] += g;
        }
    }
    r.loss = r.class_loss + lambda * r.domain_loss;
    return r;
}

HeadPair retract_heads(const HeadPair& heads, OrthoMode mode, RngState* rng) {
    if (heads.mode != HeadMode::normalized_no_bias)
        throw std::invalid_argument("retract_heads: requires normalized_no_bias mode");
    HeadPair out = heads;
    l2_normalize_rows_inplace(out.w2);
    if (mode == OrthoMode::projection && out.w2.rows > 0 && out.w1.rows > 0) {
        out.w1 = project_rows_to_nullspace(out.w1, out.w2);
        const Matrix basis = orthonormal_row_basis(out.w2);
        for (std::size_t i = 0; i < out.w1.rows; ++i) {
            if (norm2(out.w1.row(i)) > 1e-8) continue;
            // degenerate row: resample in the orthogonal complement of w2
            if (!rng)
                throw std::runtime_error(
                    "retract_heads: w1 row lies in w2's row space and no rng was provided");
            auto row = out.w1.row(i);
            double n = 0.0;
            do {
                for (std::size_t j = 0; j < out.w1.cols; ++j) row[j] = rng->normal();
                for (std::size_t b = 0; b < basis.rows; ++b) {
                    const double c = dot(row, basis.row(b));
                    for (std::size_t j = 0; j < out.w1.cols; ++j) row[j] -= c * basis.row(b)[j];
                }
                n = norm2(row);
            } while (n <= 1e-8);
        }
    }
    l2_normalize_rows_inplace(out.w1);
    return out;
}

}  // namespace cfa
