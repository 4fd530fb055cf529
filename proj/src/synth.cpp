#include "cfa/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "cfa/linalg.hpp"

namespace cfa {

void SyntheticSpec::validate() const {
    if (total_dim < class_dim + domain_dim)
        throw std::invalid_argument("SyntheticSpec: total_dim must be >= class_dim + domain_dim");
    if (class_means.rows != num_classes || class_means.cols != class_dim)
        throw std::invalid_argument("SyntheticSpec: class_means shape mismatch");
    if (domain_means.rows != num_domains || domain_means.cols != domain_dim)
        throw std::invalid_argument("SyntheticSpec: domain_means shape mismatch");
    if (class_covs.size() != num_classes || domain_covs.size() != num_domains)
        throw std::invalid_argument("SyntheticSpec: covariance count mismatch");
    if (noise_scale < 0.0) throw std::invalid_argument("SyntheticSpec: noise_scale must be >= 0");
    if (rotation.rows != total_dim || rotation.cols != total_dim)
        throw std::invalid_argument("SyntheticSpec: rotation shape mismatch");
    const Matrix rrt = matmul_bt(rotation, rotation);
    if (max_abs(rrt - Matrix::identity(total_dim)) > 1e-10)
        throw std::invalid_argument("SyntheticSpec: rotation is not orthonormal");
}

Matrix simplex_vertices(std::size_t count, std::size_t dim) {
    if (count == 0 || dim == 0) throw std::invalid_argument("simplex_vertices: empty request");
    if (count == 1) {
        Matrix m(1, dim);
        m(0, 0) = 1.0;
        return m;
    }
    if (dim + 1 >= count) {
        // centered one-hots span a (count-1)-dim subspace; re-express them in
        // an orthonormal basis of that subspace, then embed into R^dim
        Matrix centered(count, count);
        for (std::size_t i = 0; i < count; ++i)
            for (std::size_t j = 0; j < count; ++j)
                centered(i, j) = (i == j ? 1.0 : 0.0) - 1.0 / static_cast<double>(count);
        const Matrix basis = orthonormal_row_basis(centered);  // (count-1) × count
        Matrix coords = matmul_bt(centered, basis);            // count × (count-1)
        Matrix out(count, dim);
        for (std::size_t i = 0; i < count; ++i)
            for (std::size_t j = 0; j < coords.cols && j < dim; ++j) out(i, j) = coords(i, j);
        l2_normalize_rows_inplace(out);
        return out;
    }
    // too few dimensions for equidistant vertices: distinct unit vectors on a circle
    if (dim < 2) throw std::invalid_argument("simplex_vertices: dim too small for requested count");
    Matrix out(count, dim);
    for (std::size_t i = 0; i < count; ++i) {
        const double a = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(count);
        out(i, 0) = std::cos(a);
        out(i, 1) = std::sin(a);
    }
    return out;
}

SyntheticSpec make_default_spec(std::size_t num_classes, std::size_t num_domains,
                                std::size_t class_dim, std::size_t domain_dim,
                                std::size_t total_dim, double sigma, double noise_scale,
                                bool rotate, RngState& rng) {
    SyntheticSpec spec;
    spec.num_classes = num_classes;
    spec.num_domains = num_domains;
    spec.class_dim = class_dim;
    spec.domain_dim = domain_dim;
    spec.total_dim = total_dim;
    spec.class_means = simplex_vertices(num_classes, class_dim);
    spec.domain_means = simplex_vertices(num_domains, domain_dim);
    for (std::size_t k = 0; k < num_classes; ++k)
        spec.class_covs.push_back(sigma * sigma * Matrix::identity(class_dim));
    for (std::size_t e = 0; e < num_domains; ++e)
        spec.domain_covs.push_back(sigma * sigma * Matrix::identity(domain_dim));
    spec.noise_scale = noise_scale;
    spec.rotation = rotate ? random_orthonormal(total_dim, rng) : Matrix::identity(total_dim);
    spec.validate();
    return spec;
}

LabeledDataset gen_structured_features(const SyntheticSpec& spec, const CombinationMask& mask,
                                       std::size_t n_per_cell, RngState& rng) {
    spec.validate();
    if (n_per_cell == 0) throw std::invalid_argument("gen_structured_features: n_per_cell must be >= 1");
    if (mask.num_domains != spec.num_domains || mask.num_classes != spec.num_classes)
        throw std::invalid_argument("gen_structured_features: mask dimensions mismatch");
    if (!validate_mask(mask).empty())
        throw std::runtime_error(
            "gen_structured_features: mask has an all-OOD row or column (curation error)");

    std::vector<Matrix> class_chol, domain_chol;
    for (const auto& c : spec.class_covs) class_chol.push_back(cholesky_psd(c));
    for (const auto& c : spec.domain_covs) domain_chol.push_back(cholesky_psd(c));

    const std::size_t d = spec.total_dim, d1 = spec.class_dim, d2 = spec.domain_dim;
    const std::size_t noise_dim = d - d1 - d2;
    LabeledDataset ds;
    ds.num_classes = spec.num_classes;
    ds.num_domains = spec.num_domains;
    std::vector<double> block(d), rotated(d), g(std::max(d1, std::max(d2, std::size_t{1})));
    std::vector<std::vector<double>> rows;
    for (std::size_t e = 0; e < spec.num_domains; ++e) {
        for (std::size_t k = 0; k < spec.num_classes; ++k) {
            if (!mask.at(e, k)) continue;
            for (std::size_t s = 0; s < n_per_cell; ++s) {
                std::fill(block.begin(), block.end(), 0.0);
                for (std::size_t j = 0; j < d1; ++j) g[j] = rng.normal();
                for (std::size_t i = 0; i < d1; ++i) {
                    block[i] = spec.class_means(k, i);
                    for (std::size_t j = 0; j <= i; ++j) block[i] += class_chol[k](i, j) * g[j];
                }
                for (std::size_t j = 0; j < d2; ++j) g[j] = rng.normal();
                for (std::size_t i = 0; i < d2; ++i) {
                    block[d1 + i] = spec.domain_means(e, i);
                    for (std::size_t j = 0; j <= i; ++j) block[d1 + i] += domain_chol[e](i, j) * g[j];
                }
                for (std::size_t i = 0; i < noise_dim; ++i)
                    block[d1 + d2 + i] = spec.noise_scale * rng.normal();
                for (std::size_t i = 0; i < d; ++i) rotated[i] = dot(spec.rotation.row(i), block);
                rows.push_back(rotated);
                ds.class_labels.push_back(static_cast<int>(k));
                ds.domain_labels.push_back(static_cast<int>(e));
                ds.domain_label_present.push_back(1);
            }
        }
    }
    ds.inputs = Matrix(rows.size(), d);
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy(rows[i].begin(), rows[i].end(), ds.inputs.row(i).begin());
    ds.validate();
    return ds;
}

Matrix pixel_toy_pattern(std::size_t class_index, std::size_t img_side) {
    if (class_index >= 8) throw std::invalid_argument("pixel_toy_pattern: at most 8 class patterns");
    const std::size_t s = img_side;
    Matrix p(s, s);
    for (std::size_t i = 0; i < s; ++i) {
        for (std::size_t j = 0; j < s; ++j) {
            bool on = false;
            switch (class_index) {
                case 0: on = (i % 2 == 0); break;                               // horizontal stripes
                case 1: on = (j % 2 == 0); break;                               // vertical stripes
                case 2: on = ((i + j) % 2 == 0); break;                         // checkerboard
                case 3: on = (i <= j + 1 && j <= i + 1); break;                 // diagonal band
                case 4: on = (i + j + 1 >= s && i + j <= s); break;             // anti-diagonal band
                case 5: on = (i < s / 2); break;                                // top half
                case 6: on = (j < s / 2); break;                                // left half
                case 7: on = (i >= s / 4 && i < 3 * s / 4 && j >= s / 4 && j < 3 * s / 4); break;
            }
            p(i, j) = on ? 1.0 : 0.0;
        }
    }
    return p;
}

std::array<double, 3> pixel_toy_color(std::size_t domain_index, std::size_t num_domains) {
    if (num_domains > 12) throw std::invalid_argument("pixel_toy_color: at most 12 hue domains");
    if (domain_index >= num_domains) throw std::invalid_argument("pixel_toy_color: domain out of range");
    // hues on a constant-grayscale circle: every color sums to 1.5
    static constexpr double inv_sqrt2 = 0.7071067811865475;
    static constexpr double inv_sqrt6 = 0.4082482904638630;
    const double theta =
        2.0 * std::numbers::pi * static_cast<double>(domain_index) / static_cast<double>(num_domains);
    const double amp = 0.45;
    const double cu = amp * std::cos(theta), cv = amp * std::sin(theta);
    return {0.5 + cu * inv_sqrt2 + cv * inv_sqrt6,
            0.5 - cu * inv_sqrt2 + cv * inv_sqrt6,
            0.5 - 2.0 * cv * inv_sqrt6};
}

LabeledDataset gen_pixel_toy(std::size_t num_classes, std::size_t num_domains,
                             std::size_t img_side, std::size_t n_per_cell,
                             const CombinationMask& mask, double pixel_noise, RngState& rng) {
    if (num_classes > 8) throw std::invalid_argument("gen_pixel_toy: at most 8 class patterns");
    if (num_domains > 12) throw std::invalid_argument("gen_pixel_toy: at most 12 hue domains");
    if (mask.num_domains != num_domains || mask.num_classes != num_classes)
        throw std::invalid_argument("gen_pixel_toy: mask dimensions mismatch");
    const std::size_t pix = img_side * img_side;
    std::vector<Matrix> patterns;
    for (std::size_t k = 0; k < num_classes; ++k) patterns.push_back(pixel_toy_pattern(k, img_side));
    LabeledDataset ds;
    ds.num_classes = num_classes;
    ds.num_domains = num_domains;
    std::vector<std::vector<double>> rows;
    for (std::size_t e = 0; e < num_domains; ++e) {
        const auto color = pixel_toy_color(e, num_domains);
        for (std::size_t k = 0; k < num_classes; ++k) {
            if (!mask.at(e, k)) continue;
            for (std::size_t s = 0; s < n_per_cell; ++s) {
                std::vector<double> img(3 * pix);
                for (std::size_t i = 0; i < pix; ++i) {
                    const double on = patterns[k].data[i];
                    for (std::size_t c = 0; c < 3; ++c) {
                        double v = color[c] * on;
                        if (pixel_noise > 0.0) v += pixel_noise * rng.normal();
                        img[c * pix + i] = v;
                    }
                }
                rows.push_back(std::move(img));
                ds.class_labels.push_back(static_cast<int>(k));
                ds.domain_labels.push_back(static_cast<int>(e));
                ds.domain_label_present.push_back(1);
            }
        }
    }
    ds.inputs = Matrix(rows.size(), 3 * pix);
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy(rows[i].begin(), rows[i].end(), ds.inputs.row(i).begin());
    ds.validate();
    return ds;
}

LabeledDataset subsample_domain_labels(const LabeledDataset& ds, double ratio, RngState& rng) {
    if (ratio < 0.0 || ratio > 1.0)
        throw std::invalid_argument("subsample_domain_labels: ratio must be in [0,1]");
    LabeledDataset out = ds;
    const std::size_t n = ds.size();
    std::fill(out.domain_label_present.begin(), out.domain_label_present.end(), 0);
    if (ratio == 0.0 || n == 0) return out;
    const auto n_keep = std::min(
        n, static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(n))));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.uniform_index(i)]);
    for (std::size_t i = 0; i < n_keep; ++i) out.domain_label_present[order[i]] = 1;
    // repair: every domain keeps at least one labeled sample, count unchanged
    std::vector<std::size_t> present_per_domain(ds.num_domains, 0);
    for (std::size_t i = 0; i < n; ++i)
        if (out.domain_label_present[i]) ++present_per_domain[static_cast<std::size_t>(ds.domain_labels[i])];
    for (std::size_t e = 0; e < ds.num_domains; ++e) {
        if (present_per_domain[e] > 0) continue;
        // first unlabeled sample of the starved domain, in shuffled order
        std::size_t grab = SIZE_MAX;
        for (std::size_t i : order)
            if (static_cast<std::size_t>(ds.domain_labels[i]) == e) {
                grab = i;
                break;
            }
        if (grab == SIZE_MAX) continue;  // domain absent from the dataset
        // release one flag from the most-represented donor domain
        std::size_t donor = SIZE_MAX;
        for (std::size_t i : order) {
            const auto de = static_cast<std::size_t>(ds.domain_labels[i]);
            if (out.domain_label_present[i] && present_per_domain[de] > 1) {
                if (donor == SIZE_MAX || present_per_domain[de] >
                                             present_per_domain[static_cast<std::size_t>(
                                                 ds.domain_labels[donor])])
                    donor = i;
            }
        }
        if (donor != SIZE_MAX) {
            out.domain_label_present[donor] = 0;
            --present_per_domain[static_cast<std::size_t>(ds.domain_labels[donor])];
        }
        out.domain_label_present[grab] = 1;
        ++present_per_domain[e];
    }
    return out;
}

}  // namespace cfa
