#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cfa/dataset.hpp"
#include "cfa/rng.hpp"

namespace cfa {

struct AdamWConfig {
    double lr = 1e-3;
    double moment1 = 0.9;
    double moment2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

struct AdamWState {
    std::vector<double> m;
    std::vector<double> v;
    std::uint64_t t = 0;

    void reset(std::size_t n) {
        m.assign(n, 0.0);
        v.assign(n, 0.0);
        t = 0;
    }
};

// lr·(1 + cos(π·t/T))/2 — lr at t=0, strictly decreasing, 0 at t=T.
double cosine_lr(double base_lr, std::size_t step_index, std::size_t total_steps);

// Bias-corrected AdamW step with decoupled weight decay at the cosine-annealed
// learning rate for step_index.
void adamw_cosine_step(std::span<double> params, std::span<const double> grads, AdamWState& state,
                       std::size_t step_index, std::size_t total_steps, const AdamWConfig& cfg);

enum class ReweightMode { none, by_domain, by_domain_class, by_class };

// Batch index stream: a draw picks a group uniformly, then a member uniformly
// within it. Groups are domains, occupied (e,k) cells, or all samples.
struct BatchSampler {
    std::vector<std::vector<std::size_t>> groups;

    std::size_t draw(RngState& rng) const;
    // The same reweighting as per-sample weights for full-batch objectives;
    // weights sum to 1 over the covered indices, 0 elsewhere.
    std::vector<double> sample_weights(std::size_t total_count) const;
};

// Groups are built over `indices` (positions into ds). Samples whose domain
// label is absent are excluded from domain-keyed groupings.
BatchSampler make_sampler(const LabeledDataset& ds, const std::vector<std::size_t>& indices,
                          ReweightMode mode);

}  // namespace cfa
