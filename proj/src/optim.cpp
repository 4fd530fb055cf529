#include "cfa/optim.hpp"

#include <cmath>
#include <map>
#include <numbers>
#include <stdexcept>

namespace cfa {

double cosine_lr(double base_lr, std::size_t step_index, std::size_t total_steps) {
    if (total_steps == 0) throw std::invalid_argument("cosine_lr: total_steps must be >= 1");
    const double frac = static_cast<double>(step_index) / static_cast<double>(total_steps);
    return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

void adamw_cosine_step(std::span<double> params, std::span<const double> grads, AdamWState& state,
                       std::size_t step_index, std::size_t total_steps, const AdamWConfig& cfg) {
    if (params.size() != grads.size())
        throw std::invalid_argument("adamw_cosine_step: gradient shape mismatch");
    if (state.m.size() != params.size()) state.reset(params.size());
    const double lr_t = cosine_lr(cfg.lr, step_index, total_steps);
    ++state.t;
    const double bc1 = 1.0 - std::pow(cfg.moment1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.moment2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = cfg.moment1 * state.m[i] + (1.0 - cfg.moment1) * grads[i];
        state.v[i] = cfg.moment2 * state.v[i] + (1.0 - cfg.moment2) * grads[i] * grads[i];
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        params[i] -= lr_t * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * params[i]);
    }
}

std::size_t BatchSampler::draw(RngState& rng) const {
    if (groups.empty()) throw std::runtime_error("BatchSampler: no nonempty groups");
    const auto& g = groups[rng.uniform_index(groups.size())];
    return g[rng.uniform_index(g.size())];
}

std::vector<double> BatchSampler::sample_weights(std::size_t total_count) const {
    std::vector<double> w(total_count, 0.0);
    const double per_group = 1.0 / static_cast<double>(groups.size());
    for (const auto& g : groups) {
        const double wi = per_group / static_cast<double>(g.size());
        for (std::size_t i : g) w[i] = wi;
    }
    return w;
}

BatchSampler make_sampler(const LabeledDataset& ds, const std::vector<std::size_t>& indices,
                          ReweightMode mode) {
    BatchSampler s;
    std::map<std::size_t, std::vector<std::size_t>> keyed;
    for (std::size_t i : indices) {
        std::size_t key = 0;
        switch (mode) {
            case ReweightMode::none:
                key = 0;
                break;
            case ReweightMode::by_domain:
                if (!ds.domain_label_present[i]) continue;
                key = static_cast<std::size_t>(ds.domain_labels[i]);
                break;
            case ReweightMode::by_domain_class:
                if (!ds.domain_label_present[i]) continue;
                key = static_cast<std::size_t>(ds.domain_labels[i]) * ds.num_classes +
                      static_cast<std::size_t>(ds.class_labels[i]);
                break;
            case ReweightMode::by_class:
                key = static_cast<std::size_t>(ds.class_labels[i]);
                break;
        }
        keyed[key].push_back(i);
    }
    for (auto& [key, members] : keyed) s.groups.push_back(std::move(members));
    if (s.groups.empty()) throw std::runtime_error("make_sampler: all groups empty");
    return s;
}

}  // namespace cfa
