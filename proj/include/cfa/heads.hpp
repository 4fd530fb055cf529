#pragma once

#include <cstdint>
#include <vector>

#include "cfa/matrix.hpp"
#include "cfa/rng.hpp"

namespace cfa {

enum class HeadMode { normalized_no_bias, unconstrained_with_bias };
enum class OrthoMode { penalty, projection };

// Class head W1 (K×d) and domain head W2 (E×d) with logit scales. In
// normalized mode every row has unit L2 norm and biases are absent.
struct HeadPair {
    Matrix w1;  // K × d
    Matrix w2;  // E × d
    std::vector<double> b1;  // class bias, unconstrained mode only
    std::vector<double> b2;  // domain bias, unconstrained mode only
    double beta1 = 20.0;
    double beta2 = 20.0;
    HeadMode mode = HeadMode::normalized_no_bias;

    std::size_t num_classes() const { return w1.rows; }
    std::size_t num_domains() const { return w2.rows; }
    std::size_t dim() const { return w1.cols; }
};

// Simplex-encoding label matrix: column i = onehot(label_i) - (1/C)·1.
Matrix build_sel(const std::vector<int>& labels, std::size_t num_categories);

struct OrthoPenaltyResult {
    double value = 0.0;   // ‖w1 w2ᵀ‖_F²
    Matrix grad_w1;       // 2 (w1 w2ᵀ) w2
    Matrix grad_w2;       // 2 (w2 w1ᵀ) w1
};

OrthoPenaltyResult ortho_penalty(const Matrix& w1, const Matrix& w2);

struct CfaLossResult {
    double loss = 0.0;
    double class_loss = 0.0;   // (1/(K·N)) Σ ℓ_CE(β1 w1 zᵢ, yᵢ)
    double domain_loss = 0.0;  // (1/(E·N_present)) Σ_present ℓ_CE(β2 w2 zᵢ, eᵢ)
    Matrix grad_z;   // N × d
    Matrix grad_w1;  // K × d
    Matrix grad_w2;  // E × d
    std::vector<double> grad_b1;
    std::vector<double> grad_b2;
};

// The two-term CFA objective shared by both training stages and the UFM
// oracle. The domain term averages over samples whose domain label is
// present; lambda = 0 eliminates it entirely. Optional per-sample weights
// (reweighting samplers in full-batch form) must sum to 1 over the batch.
CfaLossResult cfa_loss(const HeadPair& heads, const Matrix& z, const std::vector<int>& y,
                       const std::vector<int>& e, const std::vector<std::uint8_t>& present,
                       double lambda, const std::vector<double>* class_weights = nullptr,
                       const std::vector<double>* domain_weights = nullptr);

// Row renormalization; in projection mode w1 is additionally projected onto
// the null space of w2's rows so w1 w2ᵀ = 0 exactly. A w1 row that lies
// entirely inside w2's row space is reinitialized in the orthogonal
// complement (requires rng).
HeadPair retract_heads(const HeadPair& heads, OrthoMode mode = OrthoMode::penalty,
                       RngState* rng = nullptr);

}  // namespace cfa
