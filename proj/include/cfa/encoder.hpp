#pragma once

#include <vector>

#include "cfa/matrix.hpp"
#include "cfa/rng.hpp"

namespace cfa {

enum class Activation { tanh_act, relu_act };

// Small MLP Φ with an optional unit-norm output layer and hand-written
// exact gradients. Hidden layers apply the activation; the last layer is
// linear, followed by L2 normalization when output_normalize is set.
struct MLPEncoder {
    std::vector<std::size_t> layer_dims;  // input p → hidden … → d
    std::vector<Matrix> weights;          // layer l: dims[l+1] × dims[l]
    std::vector<std::vector<double>> biases;
    Activation activation = Activation::tanh_act;
    bool output_normalize = true;
    static constexpr double norm_eps = 1e-12;

    std::size_t input_dim() const { return layer_dims.front(); }
    std::size_t output_dim() const { return layer_dims.back(); }
    std::size_t num_layers() const { return weights.size(); }

    // Kaiming-style random init.
    static MLPEncoder init(const std::vector<std::size_t>& dims, Activation act,
                           bool output_normalize, RngState& rng);

    std::vector<double> flatten() const;
    void unflatten(std::span<const double> params);
    std::size_t param_count() const;
};

struct ForwardCache {
    Matrix input;
    std::vector<Matrix> activations;  // post-activation output of each layer
    Matrix pre_norm;                  // last linear output before normalization
    std::vector<double> pre_norm_lens;
};

// Rows of the result are Φ(x) for each input row; unit-norm when
// output_normalize. Pass a cache to enable backward().
Matrix encoder_forward(const MLPEncoder& enc, const Matrix& x_batch, ForwardCache* cache = nullptr);

struct EncoderGrads {
    std::vector<Matrix> d_weights;
    std::vector<std::vector<double>> d_biases;

    std::vector<double> flatten() const;
};

// Exact gradients, including through the normalization layer
// (Jacobian (I − zzᵀ)/‖u‖ applied to the pre-normalization activation u).
EncoderGrads encoder_backward(const MLPEncoder& enc, const ForwardCache& cache,
                              const Matrix& upstream_grad);

// θ = (1−α)·θ_a + α·θ_b elementwise over any two identically-shaped
// parameter vectors (WiSE-FT).
std::vector<double> wise_interpolate(std::span<const double> theta_a,
                                     std::span<const double> theta_b, double alpha);

}  // namespace cfa
