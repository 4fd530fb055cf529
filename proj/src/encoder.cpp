#include "cfa/encoder.hpp"

#include <cmath>
#include <stdexcept>

namespace cfa {

MLPEncoder MLPEncoder::init(const std::vector<std::size_t>& dims, Activation act,
                            bool output_normalize, RngState& rng) {
    if (dims.size() < 2) throw std::invalid_argument("MLPEncoder: need at least one layer");
    MLPEncoder enc;
    enc.layer_dims = dims;
    enc.activation = act;
    enc.output_normalize = output_normalize;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        Matrix w(dims[l + 1], dims[l]);
        const double scale = std::sqrt(2.0 / static_cast<double>(dims[l]));
        for (double& x : w.data) x = scale * rng.normal();
        enc.weights.push_back(std::move(w));
        enc.biases.emplace_back(dims[l + 1], 0.0);
    }
    return enc;
}

std::size_t MLPEncoder::param_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
    return n;
}

std::vector<double> MLPEncoder::flatten() const {
    std::vector<double> out;
    out.reserve(param_count());
    for (std::size_t l = 0; l < weights.size(); ++l) {
        out.insert(out.end(), weights[l].data.begin(), weights[l].data.end());
        out.insert(out.end(), biases[l].begin(), biases[l].end());
    }
    return out;
}

void MLPEncoder::unflatten(std::span<const double> params) {
    if (params.size() != param_count())
        throw std::invalid_argument("MLPEncoder::unflatten: parameter count mismatch");
    std::size_t off = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        std::copy(params.begin() + off, params.begin() + off + weights[l].size(),
                  weights[l].data.begin());
        off += weights[l].size();
        std::copy(params.begin() + off, params.begin() + off + biases[l].size(), biases[l].begin());
        off += biases[l].size();
    }
}

namespace {

double act_fn(Activation a, double x) {
    return a == Activation::tanh_act ? std::tanh(x) : (x > 0.0 ? x : 0.0);
}

// derivative given the activation's output value (both tanh and relu allow it)
double act_deriv_from_out(Activation a, double out) {
    return a == Activation::tanh_act ? 1.0 - out * out : (out > 0.0 ? 1.0 : 0.0);
}

}  // namespace

Matrix encoder_forward(const MLPEncoder& enc, const Matrix& x_batch, ForwardCache* cache) {
    if (x_batch.cols != enc.input_dim())
        throw std::invalid_argument("encoder_forward: input dim mismatch");
    if (cache) {
        cache->input = x_batch;
        cache->activations.clear();
        cache->pre_norm_lens.clear();
    }
    Matrix cur = x_batch;
    for (std::size_t l = 0; l < enc.num_layers(); ++l) {
        const Matrix& w = enc.weights[l];
        Matrix next(cur.rows, w.rows);
        for (std::size_t i = 0; i < cur.rows; ++i)
            for (std::size_t r = 0; r < w.rows; ++r)
                next(i, r) = dot(w.row(r), cur.row(i)) + enc.biases[l][r];
        const bool last = (l + 1 == enc.num_layers());
        if (!last)
            for (double& v : next.data) v = act_fn(enc.activation, v);
        cur = std::move(next);
        if (cache && !last) cache->activations.push_back(cur);
    }
    if (cache) cache->pre_norm = cur;
    if (enc.output_normalize) {
        for (std::size_t i = 0; i < cur.rows; ++i) {
            auto r = cur.row(i);
            const double n = std::max(norm2(r), MLPEncoder::norm_eps);
            if (cache) cache->pre_norm_lens.push_back(n);
            for (double& v : r) v /= n;
        }
    }
    return cur;
}

EncoderGrads encoder_backward(const MLPEncoder& enc, const ForwardCache& cache,
                              const Matrix& upstream_grad) {
    const std::size_t n = cache.input.rows;
    if (upstream_grad.rows != n || upstream_grad.cols != enc.output_dim())
        throw std::invalid_argument("encoder_backward: upstream shape mismatch");
    EncoderGrads grads;
    for (std::size_t l = 0; l < enc.num_layers(); ++l) {
        grads.d_weights.emplace_back(enc.weights[l].rows, enc.weights[l].cols);
        grads.d_biases.emplace_back(enc.biases[l].size(), 0.0);
    }

    // delta: gradient w.r.t. the last linear layer's output
    Matrix delta = upstream_grad;
    if (enc.output_normalize) {
        for (std::size_t i = 0; i < n; ++i) {
            const double len = cache.pre_norm_lens[i];
            auto u = cache.pre_norm.row(i);
            auto g = delta.row(i);
            if (len > MLPEncoder::norm_eps) {
                // z = u/len; dL/du = (g − z (z·g)) / len
                const double inv = 1.0 / len;
                double zg = 0.0;
                for (std::size_t j = 0; j < u.size(); ++j) zg += u[j] * inv * g[j];
                for (std::size_t j = 0; j < u.size(); ++j) g[j] = (g[j] - u[j] * inv * zg) * inv;
            } else {
                for (std::size_t j = 0; j < u.size(); ++j) g[j] /= MLPEncoder::norm_eps;
            }
        }
    }

    for (std::size_t l = enc.num_layers(); l-- > 0;) {
        const Matrix& below = l == 0 ? cache.input : cache.activations[l - 1];
        // dW = deltaᵀ · below ; db = column sums of delta
        grads.d_weights[l] = matmul_at(delta, below);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t r = 0; r < delta.cols; ++r) grads.d_biases[l][r] += delta(i, r);
        if (l == 0) break;
        Matrix prev_delta = matmul(delta, enc.weights[l]);  // N × dims[l]
        const Matrix& act_out = cache.activations[l - 1];
        for (std::size_t i = 0; i < prev_delta.data.size(); ++i)
            prev_delta.data[i] *= act_deriv_from_out(enc.activation, act_out.data[i]);
        delta = std::move(prev_delta);
    }
    return grads;
}

std::vector<double> EncoderGrads::flatten() const {
    std::vector<double> out;
    for (std::size_t l = 0; l < d_weights.size(); ++l) {
        out.insert(out.end(), d_weights[l].data.begin(), d_weights[l].data.end());
        out.insert(out.end(), d_biases[l].begin(), d_biases[l].end());
    }
    return out;
}

std::vector<double> wise_interpolate(std::span<const double> theta_a,
                                     std::span<const double> theta_b, double alpha) {
    if (theta_a.size() != theta_b.size())
        throw std::invalid_argument("wise_interpolate: parameter shapes differ");
    std::vector<double> out(theta_a.size());
    if (alpha == 0.0) {
        std::copy(theta_a.begin(), theta_a.end(), out.begin());
    } else if (alpha == 1.0) {
        std::copy(theta_b.begin(), theta_b.end(), out.begin());
    } else {
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = (1.0 - alpha) * theta_a[i] + alpha * theta_b[i];
    }
    return out;
}

}  // namespace cfa
