#pragma once

#include <array>
#include <vector>

#include "cfa/dataset.hpp"
#include "cfa/rng.hpp"
#include "cfa/split.hpp"

namespace cfa {

// Parameters of the compositional data generator: Gaussian class features in
// the first block, Gaussian domain features in the second, isotropic noise
// in the remainder, all mixed by an orthonormal rotation.
struct SyntheticSpec {
    std::size_t num_classes = 0;   // K
    std::size_t num_domains = 0;   // E
    std::size_t class_dim = 0;     // d1
    std::size_t domain_dim = 0;    // d2
    std::size_t total_dim = 0;     // d >= d1 + d2
    Matrix class_means;            // K × d1
    std::vector<Matrix> class_covs;   // K PSD d1×d1
    Matrix domain_means;           // E × d2
    std::vector<Matrix> domain_covs;  // E PSD d2×d2
    double noise_scale = 0.1;
    Matrix rotation;               // d × d orthonormal

    void validate() const;
};

// Default experiment spec: unit-norm simplex-vertex means, isotropic
// covariances sigma²·I, and a random rotation (identity when rotate=false).
SyntheticSpec make_default_spec(std::size_t num_classes, std::size_t num_domains,
                                std::size_t class_dim, std::size_t domain_dim,
                                std::size_t total_dim, double sigma, double noise_scale,
                                bool rotate, RngState& rng);

// K unit-norm vectors in R^dim forming a centered simplex (dim >= K-1 for
// exact vertices; falls back to mutually-distinct sphere points otherwise).
Matrix simplex_vertices(std::size_t count, std::size_t dim);

// n_per_cell samples for every ID cell of the mask, z = R·[z1; z2; z_noise].
LabeledDataset gen_structured_features(const SyntheticSpec& spec, const CombinationMask& mask,
                                       std::size_t n_per_cell, RngState& rng);

// 3-channel img_side×img_side toy: class = binary pattern, domain = hue.
// All domain colors share the same grayscale intensity, so class and domain
// are each individually decodable from pixels. pixel_noise is the std of
// additive per-pixel Gaussian noise (0 = deterministic rendering).
LabeledDataset gen_pixel_toy(std::size_t num_classes, std::size_t num_domains,
                             std::size_t img_side, std::size_t n_per_cell,
                             const CombinationMask& mask, double pixel_noise, RngState& rng);

// The deterministic class pattern / domain color the pixel toy renders from;
// exposed for oracle-style tests.
Matrix pixel_toy_pattern(std::size_t class_index, std::size_t img_side);
std::array<double, 3> pixel_toy_color(std::size_t domain_index, std::size_t num_domains);

// Keeps domain_label_present true for ceil(ratio·N) uniformly chosen samples,
// with at least one per domain when ratio > 0.
LabeledDataset subsample_domain_labels(const LabeledDataset& ds, double ratio, RngState& rng);

}  // namespace cfa
