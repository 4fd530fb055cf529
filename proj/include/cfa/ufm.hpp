#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cfa/heads.hpp"
#include "cfa/train.hpp"

namespace cfa {

// Unconstrained feature model: every sample's feature is a free unit-norm
// optimization variable; the heads are fixed and feasible (unit rows,
// w1 w2ᵀ = 0).
struct UFMProblem {
    HeadPair heads;
    std::vector<int> y;  // N class labels
    std::vector<int> e;  // N domain labels
    double lambda = 1.0;
    // doubles beta1/beta2 every 1000 solver steps to tighten alignment
    bool beta_anneal = false;

    std::size_t dim() const { return heads.dim(); }
    // Throws invalid_argument on d < K+E, non-feasible heads, or labels that
    // miss a class or domain.
    void validate() const;
};

// Unit-row simplex-ETF head: row c = √(C/(C−1))·(e_c − (1/C)·1) expressed in
// the given orthonormal basis rows (C×d). This is the collapsed-head geometry
// under which the closed-form scaling factors of the feature-alignment
// analysis hold exactly (pairwise row inner products −1/(C−1)).
Matrix etf_head(std::size_t count, const Matrix& basis_rows);

// Feasible oracle heads: two simplex-ETF blocks built on disjoint rows of a
// random orthonormal matrix, so rows are unit-norm and w1 w2ᵀ = 0 exactly.
HeadPair make_feasible_heads(std::size_t num_classes, std::size_t num_domains, std::size_t dim,
                             double beta, RngState& rng);

// (1/(K·N))·Σ ℓ_CE(β1 w1 zᵢ, yᵢ) + λ·(1/(E·N))·Σ ℓ_CE(β2 w2 zᵢ, eᵢ)
// with z given column-wise (d×N).
double ufm_objective(const UFMProblem& problem, const Matrix& z_cols);

struct UFMSolution {
    Matrix z;  // d × N, unit-norm columns
    std::vector<double> objective_trace;  // one entry per completed step
};

// Projected gradient descent: gradient step on the objective, then per-column
// renormalization. Stops once the objective is within 1e-6 of its value 100
// steps earlier; throws ConvergenceError (with the trace) if `steps` runs out
// first.
UFMSolution solve_ufm(const UFMProblem& problem, std::size_t steps, double lr, RngState& rng);

struct LemmaFit {
    double gamma_hat = 0.0;     // argmin_γ ‖w1 z − γ·S1‖_F
    double rel_residual = 0.0;  // ‖w1 z − γ̂·S1‖_F / ‖γ̂·S1‖_F
};

// Least-squares fit of w1 z* against the simplex-encoding label matrix S1.
LemmaFit verify_lemma_alignment(const Matrix& z_star, const HeadPair& heads,
                                const std::vector<int>& y);

struct DecompositionReport {
    Matrix a_coeffs;  // K × K, row y = mean â over samples of class y
    Matrix b_coeffs;  // E × E, row e = mean b̂ over samples of domain e
    double residual_fraction = 0.0;  // energy outside span(w1) ⊕ span(w2)
    double gamma1_hat = 0.0;
    double gamma2_hat = 0.0;
    double within_class_spread = 0.0;   // max_y max pairwise ‖â_i − â_j‖
    double within_domain_spread = 0.0;  // max_e max pairwise ‖b̂_i − b̂_j‖
};

// Per-sample least-squares decomposition z_i ≈ w1ᵀ a_i + w2ᵀ b_i via the SVD
// pseudo-inverses of w1ᵀ and w2ᵀ (rows are unit-norm but not orthogonal
// within a head, so plain transposition is not enough).
DecompositionReport verify_theorem1(const Matrix& z_star, const HeadPair& heads,
                                    const std::vector<int>& y, const std::vector<int>& e);

std::string report_to_json(const DecompositionReport& report);

}  // namespace cfa
