#include <doctest.h>

#include <array>
#include <cmath>
#include <stdexcept>

#include "cfa/linalg.hpp"
#include "cfa/synth.hpp"

using namespace cfa;

namespace {

CombinationMask full_mask(std::size_t num_domains, std::size_t num_classes) {
    return {num_domains, num_classes,
            std::vector<std::uint8_t>(num_domains * num_classes, 1)};
}

}  // namespace

TEST_CASE("simplex vertices are unit norm and equidistant") {
    const Matrix v = simplex_vertices(4, 3);
    for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(norm2(v.row(i)) - 1.0) < 1e-12);
    const double expected = -1.0 / 3.0;  // pairwise inner product of a K-simplex
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = i + 1; j < 4; ++j)
            CHECK(dot(v.row(i), v.row(j)) == doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("degenerate spec: zero covariance, zero noise, identity rotation") {
    RngState rng(1);
    SyntheticSpec spec = make_default_spec(3, 2, 3, 2, 7, 0.0, 0.0, false, rng);
    const LabeledDataset ds = gen_structured_features(spec, full_mask(2, 3), 4, rng);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto k = static_cast<std::size_t>(ds.class_labels[i]);
        const auto e = static_cast<std::size_t>(ds.domain_labels[i]);
        for (std::size_t j = 0; j < 3; ++j)
            CHECK(ds.inputs(i, j) == doctest::Approx(spec.class_means(k, j)).epsilon(1e-14));
        for (std::size_t j = 0; j < 2; ++j)
            CHECK(ds.inputs(i, 3 + j) == doctest::Approx(spec.domain_means(e, j)).epsilon(1e-14));
        for (std::size_t j = 5; j < 7; ++j) CHECK(ds.inputs(i, j) == 0.0);
    }
}

TEST_CASE("identity rotation with 1-D blocks clusters by coordinate") {
    RngState rng(2);
    SyntheticSpec spec = make_default_spec(2, 2, 1, 1, 3, 0.05, 0.05, false, rng);
    const LabeledDataset ds = gen_structured_features(spec, full_mask(2, 2), 50, rng);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        // coordinate 0 carries the class sign, coordinate 1 the domain sign
        const double class_sign = spec.class_means(static_cast<std::size_t>(ds.class_labels[i]), 0);
        const double domain_sign =
            spec.domain_means(static_cast<std::size_t>(ds.domain_labels[i]), 0);
        CHECK(ds.inputs(i, 0) * class_sign > 0.0);
        CHECK(ds.inputs(i, 1) * domain_sign > 0.0);
    }
}

TEST_CASE("inverse rotation recovers the block structure") {
    RngState rng(3);
    SyntheticSpec spec = make_default_spec(3, 2, 3, 2, 8, 0.05, 0.05, true, rng);
    const LabeledDataset ds = gen_structured_features(spec, full_mask(2, 3), 30, rng);
    const Matrix unrotated = matmul(ds.inputs, spec.rotation);  // rows z Rᵀ → v = z R
    for (std::size_t i = 0; i < ds.size(); ++i) {
        // nearest class mean on the class block recovers the label
        std::size_t best = 0;
        double best_d = 1e300;
        for (std::size_t k = 0; k < 3; ++k) {
            double dist = 0.0;
            for (std::size_t j = 0; j < 3; ++j) {
                const double diff = unrotated(i, j) - spec.class_means(k, j);
                dist += diff * diff;
            }
            if (dist < best_d) {
                best_d = dist;
                best = k;
            }
        }
        CHECK(static_cast<int>(best) == ds.class_labels[i]);
    }
}

TEST_CASE("noise block empirical covariance is close to noise_scale^2 I") {
    RngState rng(4);
    const double noise = 0.05;
    SyntheticSpec spec = make_default_spec(2, 2, 1, 1, 5, 0.05, noise, true, rng);
    const LabeledDataset ds = gen_structured_features(spec, full_mask(2, 2), 2500, rng);
    const Matrix unrotated = matmul(ds.inputs, spec.rotation);
    const std::size_t n = ds.size();
    // noise block = coordinates 2..4
    for (std::size_t a = 2; a < 5; ++a) {
        for (std::size_t b = 2; b < 5; ++b) {
            double cov = 0.0;
            for (std::size_t i = 0; i < n; ++i) cov += unrotated(i, a) * unrotated(i, b);
            cov /= static_cast<double>(n);
            const double expected = a == b ? noise * noise : 0.0;
            CHECK(std::abs(cov - expected) < 5e-4);  // sampling error at N = 10^4
        }
    }
}

TEST_CASE("generation is deterministic given the seed") {
    RngState a(5), b(5);
    SyntheticSpec sa = make_default_spec(2, 2, 2, 2, 6, 0.1, 0.1, true, a);
    SyntheticSpec sb = make_default_spec(2, 2, 2, 2, 6, 0.1, 0.1, true, b);
    const auto da = gen_structured_features(sa, full_mask(2, 2), 10, a);
    const auto db = gen_structured_features(sb, full_mask(2, 2), 10, b);
    CHECK(da.inputs == db.inputs);
    CHECK(da.class_labels == db.class_labels);
}

TEST_CASE("generation rejects masks violating the coverage hypothesis") {
    RngState rng(6);
    SyntheticSpec spec = make_default_spec(2, 2, 2, 2, 6, 0.1, 0.1, false, rng);
    CombinationMask bad{2, 2, {1, 0, 1, 0}};  // class 1 never generated
    CHECK_THROWS(gen_structured_features(spec, bad, 5, rng));
}

TEST_CASE("pixel toy: zero noise renders identical images per cell") {
    RngState rng(7);
    const auto ds = gen_pixel_toy(4, 3, 8, 2, full_mask(3, 4), 0.0, rng);
    for (std::size_t i = 0; i + 1 < ds.size(); i += 2) {
        REQUIRE(ds.class_labels[i] == ds.class_labels[i + 1]);
        REQUIRE(ds.domain_labels[i] == ds.domain_labels[i + 1]);
        for (std::size_t j = 0; j < ds.inputs.cols; ++j)
            CHECK(ds.inputs(i, j) == ds.inputs(i + 1, j));
    }
}

TEST_CASE("pixel toy: grayscale nearest-centroid decodes the class perfectly") {
    RngState rng(8);
    const std::size_t K = 4, E = 3, side = 8, pix = side * side;
    const auto ds = gen_pixel_toy(K, E, side, 5, full_mask(E, K), 0.0, rng);
    // grayscale collapse: mean over the 3 channels per pixel
    auto grayscale = [&](std::size_t i) {
        std::vector<double> g(pix, 0.0);
        for (std::size_t p = 0; p < pix; ++p)
            for (std::size_t c = 0; c < 3; ++c) g[p] += ds.inputs(i, c * pix + p) / 3.0;
        return g;
    };
    // class centroids of the grayscale images
    std::vector<std::vector<double>> centroid(K, std::vector<double>(pix, 0.0));
    std::vector<std::size_t> count(K, 0);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto g = grayscale(i);
        const auto k = static_cast<std::size_t>(ds.class_labels[i]);
        ++count[k];
        for (std::size_t p = 0; p < pix; ++p) centroid[k][p] += g[p];
    }
    for (std::size_t k = 0; k < K; ++k)
        for (auto& v : centroid[k]) v /= static_cast<double>(count[k]);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto g = grayscale(i);
        std::size_t best = 0;
        double best_d = 1e300;
        for (std::size_t k = 0; k < K; ++k) {
            double dist = 0.0;
            for (std::size_t p = 0; p < pix; ++p)
                dist += (g[p] - centroid[k][p]) * (g[p] - centroid[k][p]);
            if (dist < best_d) {
                best_d = dist;
                best = k;
            }
        }
        CHECK(static_cast<int>(best) == ds.class_labels[i]);
    }
}

TEST_CASE("pixel toy: per-channel means decode the domain perfectly") {
    RngState rng(9);
    const std::size_t K = 4, E = 3, side = 8, pix = side * side;
    const auto ds = gen_pixel_toy(K, E, side, 5, full_mask(E, K), 0.0, rng);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        std::array<double, 3> mean{0.0, 0.0, 0.0};
        for (std::size_t c = 0; c < 3; ++c) {
            for (std::size_t p = 0; p < pix; ++p) mean[c] += ds.inputs(i, c * pix + p);
            mean[c] /= static_cast<double>(pix);
        }
        // hue direction is scale-free: compare normalized channel means
        const double len = std::sqrt(mean[0] * mean[0] + mean[1] * mean[1] + mean[2] * mean[2]);
        std::size_t best = 0;
        double best_cos = -2.0;
        for (std::size_t e = 0; e < E; ++e) {
            const auto col = pixel_toy_color(e, E);
            const double clen = std::sqrt(col[0] * col[0] + col[1] * col[1] + col[2] * col[2]);
            const double cosv =
                (mean[0] * col[0] + mean[1] * col[1] + mean[2] * col[2]) / (len * clen);
            if (cosv > best_cos) {
                best_cos = cosv;
                best = e;
            }
        }
        CHECK(static_cast<int>(best) == ds.domain_labels[i]);
    }
}

TEST_CASE("pixel toy rejects class or domain counts beyond the alphabet") {
    RngState rng(10);
    CHECK_THROWS_AS(gen_pixel_toy(9, 2, 8, 1, full_mask(2, 9), 0.0, rng), std::invalid_argument);
    CHECK_THROWS_AS(gen_pixel_toy(2, 13, 8, 1, full_mask(13, 2), 0.0, rng), std::invalid_argument);
}

TEST_CASE("subsample_domain_labels counts and coverage") {
    RngState gen_rng(11);
    const auto ds = gen_pixel_toy(2, 2, 4, 25, full_mask(2, 2), 0.0, gen_rng);  // N = 100
    REQUIRE(ds.size() == 100);

    RngState r1(12);
    const auto all = subsample_domain_labels(ds, 1.0, r1);
    for (auto f : all.domain_label_present) CHECK(f == 1);

    RngState r0(13);
    const auto none = subsample_domain_labels(ds, 0.0, r0);
    for (auto f : none.domain_label_present) CHECK(f == 0);

    RngState rh(14);
    const auto half = subsample_domain_labels(ds, 0.5, rh);
    std::size_t flags = 0;
    std::vector<std::size_t> per_domain(2, 0);
    for (std::size_t i = 0; i < half.size(); ++i)
        if (half.domain_label_present[i]) {
            ++flags;
            ++per_domain[static_cast<std::size_t>(half.domain_labels[i])];
        }
    CHECK(flags == 50);
    CHECK(per_domain[0] >= 1);
    CHECK(per_domain[1] >= 1);
    CHECK(half.class_labels == ds.class_labels);  // class labels untouched

    // tiny ratio still keeps one labeled sample per domain
    RngState rt(15);
    const auto tiny = subsample_domain_labels(ds, 0.01, rt);
    std::vector<std::size_t> pd(2, 0);
    for (std::size_t i = 0; i < tiny.size(); ++i)
        if (tiny.domain_label_present[i]) ++pd[static_cast<std::size_t>(tiny.domain_labels[i])];
    CHECK(pd[0] >= 1);
    CHECK(pd[1] >= 1);
}
