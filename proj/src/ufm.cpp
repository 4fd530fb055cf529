#include "cfa/ufm.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "cfa/linalg.hpp"

namespace cfa {

void UFMProblem::validate() const {
    const std::size_t k = heads.num_classes(), ecount = heads.num_domains(), d = heads.dim();
    if (k < 2 || ecount < 1) throw std::invalid_argument("UFMProblem: need K >= 2 and E >= 1");
    if (d < k + ecount) throw std::invalid_argument("UFMProblem: requires d >= K + E");
    if (y.size() != e.size() || y.empty())
        throw std::invalid_argument("UFMProblem: label vectors must be nonempty and equal-length");
    for (std::size_t r = 0; r < heads.w1.rows; ++r)
        if (std::abs(norm2(heads.w1.row(r)) - 1.0) > 1e-8)
            throw std::invalid_argument("UFMProblem: w1 rows must be unit-norm");
    for (std::size_t r = 0; r < heads.w2.rows; ++r)
        if (std::abs(norm2(heads.w2.row(r)) - 1.0) > 1e-8)
            throw std::invalid_argument("UFMProblem: w2 rows must be unit-norm");
    if (lambda > 0.0 && std::sqrt(ortho_penalty(heads.w1, heads.w2).value) > 1e-8)
        throw std::invalid_argument("UFMProblem: heads must satisfy w1 w2ᵀ = 0");
    std::vector<bool> seen_y(k, false), seen_e(ecount, false);
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i] < 0 || static_cast<std::size_t>(y[i]) >= k)
            throw std::invalid_argument("UFMProblem: class label out of range");
        if (e[i] < 0 || static_cast<std::size_t>(e[i]) >= ecount)
            throw std::invalid_argument("UFMProblem: domain label out of range");
        seen_y[static_cast<std::size_t>(y[i])] = true;
        seen_e[static_cast<std::size_t>(e[i])] = true;
    }
    if (!std::all_of(seen_y.begin(), seen_y.end(), [](bool b) { return b; }))
        throw std::invalid_argument("UFMProblem: every class must appear at least once");
    if (lambda > 0.0 && !std::all_of(seen_e.begin(), seen_e.end(), [](bool b) { return b; }))
        throw std::invalid_argument("UFMProblem: every domain must appear at least once");
}

Matrix etf_head(std::size_t count, const Matrix& basis_rows) {
    if (count < 2 || basis_rows.rows < count)
        throw std::invalid_argument("etf_head: need count >= 2 basis rows");
    Matrix m(count, basis_rows.cols);
    const double s = std::sqrt(static_cast<double>(count) / static_cast<double>(count - 1));
    for (std::size_t c = 0; c < count; ++c)
        for (std::size_t j = 0; j < basis_rows.cols; ++j) {
            double v = 0.0;
            for (std::size_t r = 0; r < count; ++r)
                v += s * ((r == c ? 1.0 : 0.0) - 1.0 / static_cast<double>(count)) *
                     basis_rows(r, j);
            m(c, j) = v;
        }
    return m;
}

HeadPair make_feasible_heads(std::size_t num_classes, std::size_t num_domains, std::size_t dim,
                             double beta, RngState& rng) {
    if (dim < num_classes + num_domains)
        throw std::invalid_argument("make_feasible_heads: requires dim >= K + E");
    const Matrix q = random_orthonormal(dim, rng);
    Matrix b1(num_classes, dim), b2(num_domains, dim);
    for (std::size_t r = 0; r < num_classes; ++r)
        std::copy(q.row(r).begin(), q.row(r).end(), b1.row(r).begin());
    for (std::size_t r = 0; r < num_domains; ++r)
        std::copy(q.row(num_classes + r).begin(), q.row(num_classes + r).end(), b2.row(r).begin());
    HeadPair heads;
    heads.w1 = etf_head(num_classes, b1);
    heads.w2 = num_domains >= 2 ? etf_head(num_domains, b2) : b2;
    heads.beta1 = heads.beta2 = beta;
    heads.mode = HeadMode::normalized_no_bias;
    return heads;
}

namespace {

// z_cols is d×N; cfa_loss expects N×d rows.
Matrix cols_to_rows(const Matrix& z_cols) { return transpose(z_cols); }

CfaLossResult eval_loss(const HeadPair& heads, const UFMProblem& p, const Matrix& z_rows) {
    const std::vector<std::uint8_t> present(p.y.size(), 1);
    return cfa_loss(heads, z_rows, p.y, p.e, present, p.lambda);
}

}  // namespace

double ufm_objective(const UFMProblem& problem, const Matrix& z_cols) {
    return eval_loss(problem.heads, problem, cols_to_rows(z_cols)).loss;
}

UFMSolution solve_ufm(const UFMProblem& problem, std::size_t steps, double lr, RngState& rng) {
    problem.validate();
    if (steps < 1) throw std::invalid_argument("solve_ufm: steps must be >= 1");
    const std::size_t n = problem.y.size(), d = problem.dim();
    Matrix z_rows = l2_normalize_rows(random_gaussian(n, d, rng));
    HeadPair heads = problem.heads;

    // Annealing starts the logit scales small (where the sphere-constrained
    // optimum is reached quickly and already lies in the head subspaces) and
    // doubles them every 1000 steps until the problem's own scales are
    // reached; the convergence test only arms once they are.
    const double target1 = heads.beta1, target2 = heads.beta2;
    if (problem.beta_anneal) {
        heads.beta1 = std::min(1.0, target1);
        heads.beta2 = std::min(1.0, target2);
    }

    UFMSolution sol;
    sol.objective_trace.reserve(steps);
    constexpr std::size_t window = 100;
    constexpr double tol = 1e-6;
    std::size_t settled_since = 0;
    for (std::size_t t = 0; t < steps; ++t) {
        if (problem.beta_anneal && t > 0 && t % 1000 == 0 &&
            (heads.beta1 < target1 || heads.beta2 < target2)) {
            heads.beta1 = std::min(target1, heads.beta1 * 2.0);
            heads.beta2 = std::min(target2, heads.beta2 * 2.0);
            settled_since = t;
        }
        const auto loss = eval_loss(heads, problem, z_rows);
        sol.objective_trace.push_back(loss.loss);
        for (std::size_t i = 0; i < z_rows.data.size(); ++i)
            z_rows.data[i] -= lr * loss.grad_z.data[i];
        l2_normalize_rows_inplace(z_rows);
        const bool at_target = heads.beta1 >= target1 && heads.beta2 >= target2;
        if (at_target && t >= settled_since + window &&
            std::abs(sol.objective_trace[t] - sol.objective_trace[t - window]) < tol) {
            sol.z = transpose(z_rows);
            return sol;
        }
    }
    throw ConvergenceError("solve_ufm: objective did not level off within " +
                               std::to_string(steps) + " steps",
                           sol.objective_trace);
}

LemmaFit verify_lemma_alignment(const Matrix& z_star, const HeadPair& heads,
                                const std::vector<int>& y) {
    const Matrix p = matmul(heads.w1, z_star);            // K × N
    const Matrix s1 = build_sel(y, heads.num_classes());  // K × N
    double ps = 0.0, ss = 0.0;
    for (std::size_t i = 0; i < p.data.size(); ++i) {
        ps += p.data[i] * s1.data[i];
        ss += s1.data[i] * s1.data[i];
    }
    LemmaFit fit;
    fit.gamma_hat = ss > 0.0 ? ps / ss : 0.0;
    Matrix resid = p;
    for (std::size_t i = 0; i < resid.data.size(); ++i) resid.data[i] -= fit.gamma_hat * s1.data[i];
    const double denom = std::abs(fit.gamma_hat) * std::sqrt(ss);
    fit.rel_residual = denom > 0.0 ? frobenius_norm(resid) / denom : frobenius_norm(resid);
    return fit;
}

namespace {

// N×r coefficient matrix of least-squares fits of z's columns onto the rows
// of w:  coeff_i = pinv(wᵀ)·z_i  via the compact SVD of wᵀ.
Matrix ls_coefficients(const Matrix& w, const Matrix& z_cols) {
    const auto svd = svd_compact(transpose(w));  // wᵀ = U S Vᵀ, U: d×r
    // pinv(wᵀ)·z = V S⁻¹ Uᵀ z
    Matrix utz = matmul_at(svd.u, z_cols);  // r × N
    for (std::size_t r = 0; r < utz.rows; ++r)
        for (std::size_t j = 0; j < utz.cols; ++j) utz(r, j) /= svd.s[r];
    return transpose(matmul(svd.v, utz));  // N × rows(w)
}

double max_pairwise_spread(const Matrix& coeffs, const std::vector<int>& labels,
                           std::size_t groups) {
    double worst = 0.0;
    for (std::size_t g = 0; g < groups; ++g) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (static_cast<std::size_t>(labels[i]) == g) members.push_back(i);
        for (std::size_t a = 0; a < members.size(); ++a)
            for (std::size_t b = a + 1; b < members.size(); ++b) {
                double d2 = 0.0;
                for (std::size_t j = 0; j < coeffs.cols; ++j) {
                    const double diff = coeffs(members[a], j) - coeffs(members[b], j);
                    d2 += diff * diff;
                }
                worst = std::max(worst, std::sqrt(d2));
            }
    }
    return worst;
}

Matrix group_means(const Matrix& coeffs, const std::vector<int>& labels, std::size_t groups) {
    Matrix means(groups, coeffs.cols);
    std::vector<std::size_t> counts(groups, 0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto g = static_cast<std::size_t>(labels[i]);
        ++counts[g];
        for (std::size_t j = 0; j < coeffs.cols; ++j) means(g, j) += coeffs(i, j);
    }
    for (std::size_t g = 0; g < groups; ++g)
        if (counts[g] > 0)
            for (std::size_t j = 0; j < coeffs.cols; ++j) means(g, j) /= static_cast<double>(counts[g]);
    return means;
}

}  // namespace

DecompositionReport verify_theorem1(const Matrix& z_star, const HeadPair& heads,
                                    const std::vector<int>& y, const std::vector<int>& e) {
    const std::size_t k = heads.num_classes(), ecount = heads.num_domains();
    if (y.size() != z_star.cols || e.size() != z_star.cols)
        throw std::invalid_argument("verify_theorem1: label count must match columns of z");

    const Matrix a = ls_coefficients(heads.w1, z_star);  // N × K
    const Matrix b = ls_coefficients(heads.w2, z_star);  // N × E

    // reconstruction zᵢ ≈ w1ᵀaᵢ + w2ᵀbᵢ; the two terms live in orthogonal
    // row spaces, so separate least squares is the joint fit
    const Matrix rec1 = transpose(matmul(a, heads.w1));  // d × N
    const Matrix rec2 = transpose(matmul(b, heads.w2));  // d × N
    double resid_energy = 0.0, total_energy = 0.0;
    for (std::size_t i = 0; i < z_star.data.size(); ++i) {
        const double r = z_star.data[i] - rec1.data[i] - rec2.data[i];
        resid_energy += r * r;
        total_energy += z_star.data[i] * z_star.data[i];
    }

    DecompositionReport rep;
    rep.a_coeffs = group_means(a, y, k);
    rep.b_coeffs = group_means(b, e, ecount);
    rep.residual_fraction = total_energy > 0.0 ? resid_energy / total_energy : 0.0;
    rep.gamma1_hat = verify_lemma_alignment(z_star, heads, y).gamma_hat;
    HeadPair swapped;
    swapped.w1 = heads.w2;
    rep.gamma2_hat = verify_lemma_alignment(z_star, swapped, e).gamma_hat;
    rep.within_class_spread = max_pairwise_spread(a, y, k);
    rep.within_domain_spread = max_pairwise_spread(b, e, ecount);
    return rep;
}

std::string report_to_json(const DecompositionReport& report) {
    auto matrix_rows = [](const Matrix& m) {
        nlohmann::json rows = nlohmann::json::array();
        for (std::size_t r = 0; r < m.rows; ++r) {
            nlohmann::json row = nlohmann::json::array();
            for (std::size_t c = 0; c < m.cols; ++c) row.push_back(m(r, c));
            rows.push_back(row);
        }
        return rows;
    };
    const nlohmann::json j{
        {"a_coeffs", matrix_rows(report.a_coeffs)},
        {"b_coeffs", matrix_rows(report.b_coeffs)},
        {"residual_fraction", report.residual_fraction},
        {"gamma1_hat", report.gamma1_hat},
        {"gamma2_hat", report.gamma2_hat},
        {"within_class_spread", report.within_class_spread},
        {"within_domain_spread", report.within_domain_spread},
    };
    return j.dump(2);
}

}  // namespace cfa
