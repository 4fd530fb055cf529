#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "cfa/linalg.hpp"
#include "cfa/matrix.hpp"
#include "test_util.hpp"

using namespace cfa;

TEST_CASE("matrix products agree with explicit transposition") {
    RngState rng(11);
    const Matrix a = random_gaussian(3, 5, rng);
    const Matrix b = random_gaussian(5, 4, rng);
    const Matrix c = random_gaussian(2, 5, rng);
    CHECK(testutil::max_abs_diff(matmul_bt(a, c), matmul(a, transpose(c))) < 1e-14);
    CHECK(testutil::max_abs_diff(matmul_at(a, a), matmul(transpose(a), a)) < 1e-14);
    const Matrix ab = matmul(a, b);
    CHECK(ab.rows == 3);
    CHECK(ab.cols == 4);
    double manual = 0.0;
    for (std::size_t k = 0; k < 5; ++k) manual += a(1, k) * b(k, 2);
    CHECK(ab(1, 2) == doctest::Approx(manual).epsilon(1e-14));
}

TEST_CASE("check_finite rejects NaN and Inf") {
    Matrix m(2, 2, 1.0);
    CHECK_NOTHROW(check_finite(m, "ok"));
    m(0, 1) = std::nan("");
    CHECK_THROWS_AS(check_finite(m, "nan"), std::domain_error);
    m(0, 1) = INFINITY;
    CHECK_THROWS_AS(check_finite(m, "inf"), std::domain_error);
}

TEST_CASE("softmax cross entropy closed forms") {
    const std::vector<double> uniform{0.0, 0.0};
    CHECK(softmax_cross_entropy(uniform, 0).loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    const std::vector<double> margin{1.0, 0.0};
    CHECK(softmax_cross_entropy(margin, 0).loss ==
          doctest::Approx(std::log(1.0 + std::exp(-1.0))).epsilon(1e-12));
    CHECK(softmax_cross_entropy(margin, 1).loss >= 0.0);
    CHECK_THROWS_AS(softmax_cross_entropy(margin, 2), std::invalid_argument);
}

TEST_CASE("softmax cross entropy gradient matches finite differences") {
    const std::vector<double> logits{0.3, -0.7, 1.1};
    const auto res = softmax_cross_entropy(logits, 1);
    const auto fd = testutil::fd_grad(logits, [](const std::vector<double>& p) {
        return softmax_cross_entropy(p, 1).loss;
    });
    CHECK(testutil::rel_err(res.grad, fd) < 1e-6);

    // gradient = softmax - onehot
    const auto p = softmax(logits);
    for (std::size_t c = 0; c < 3; ++c)
        CHECK(res.grad[c] == doctest::Approx(p[c] - (c == 1 ? 1.0 : 0.0)).epsilon(1e-12));
}

TEST_CASE("softmax cross entropy is shift invariant") {
    RngState rng(3);
    for (int t = 0; t < 10; ++t) {
        std::vector<double> logits(4);
        for (auto& v : logits) v = rng.normal();
        const double base = softmax_cross_entropy(logits, 2).loss;
        for (auto& v : logits) v += 7.25;
        CHECK(std::abs(softmax_cross_entropy(logits, 2).loss - base) < 1e-12);
    }
}

TEST_CASE("l2_normalize_rows") {
    Matrix m(1, 2);
    m(0, 0) = 3.0;
    m(0, 1) = 4.0;
    const Matrix n = l2_normalize_rows(m);
    CHECK(n(0, 0) == doctest::Approx(0.6).epsilon(1e-14));
    CHECK(n(0, 1) == doctest::Approx(0.8).epsilon(1e-14));

    Matrix zero(1, 2, 0.0);
    const Matrix zn = l2_normalize_rows(zero, 1e-12);
    CHECK(zn(0, 0) == 0.0);
    CHECK(zn(0, 1) == 0.0);

    RngState rng(5);
    Matrix r = random_gaussian(6, 9, rng);
    l2_normalize_rows_inplace(r);
    for (std::size_t i = 0; i < r.rows; ++i)
        CHECK(std::abs(norm2(r.row(i)) - 1.0) < 1e-12);
}

TEST_CASE("project_rows_to_nullspace") {
    const double s = 1.0 / std::sqrt(2.0);
    Matrix a(1, 2);
    a(0, 0) = s;
    a(0, 1) = s;
    Matrix b(1, 2);
    b(0, 0) = 1.0;
    const Matrix r = project_rows_to_nullspace(a, b);
    CHECK(std::abs(r(0, 0)) < 1e-14);
    CHECK(r(0, 1) == doctest::Approx(s).epsilon(1e-12));

    // a already orthogonal to b is returned unchanged
    Matrix a2(1, 2);
    a2(0, 1) = 0.4;
    const Matrix r2 = project_rows_to_nullspace(a2, b);
    CHECK(testutil::max_abs_diff(r2, a2) < 1e-14);

    RngState rng(7);
    const Matrix ra = random_gaussian(3, 8, rng);
    const Matrix rb = random_gaussian(2, 8, rng);
    CHECK(frobenius_norm(matmul_bt(project_rows_to_nullspace(ra, rb), rb)) < 1e-10);

    // rank-deficient b: duplicated row still handled
    Matrix dup(2, 8);
    for (std::size_t j = 0; j < 8; ++j) dup(0, j) = dup(1, j) = rb(0, j);
    CHECK(frobenius_norm(matmul_bt(project_rows_to_nullspace(ra, dup), dup)) < 1e-10);
}

TEST_CASE("svd_compact examples and reconstruction") {
    Matrix d(2, 2);
    d(0, 0) = 3.0;
    d(1, 1) = 1.0;
    const auto svd = svd_compact(d);
    REQUIRE(svd.s.size() == 2);
    CHECK(svd.s[0] == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(svd.s[1] == doctest::Approx(1.0).epsilon(1e-12));

    // rank-1 outer product
    Matrix outer(3, 2);
    const std::vector<double> u{1.0, 2.0, -2.0}, v{0.6, 0.8};
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 2; ++j) outer(i, j) = u[i] * v[j];
    const auto svd1 = svd_compact(outer);
    REQUIRE(svd1.s.size() == 1);
    CHECK(svd1.s[0] == doctest::Approx(3.0).epsilon(1e-10));  // ||u||·||v|| = 3·1

    RngState rng(13);
    const Matrix m = random_gaussian(5, 7, rng);
    const auto r = svd_compact(m);
    Matrix us(r.u.rows, r.u.cols);
    for (std::size_t i = 0; i < us.rows; ++i)
        for (std::size_t j = 0; j < us.cols; ++j) us(i, j) = r.u(i, j) * r.s[j];
    CHECK(frobenius_norm(matmul_bt(us, r.v) - m) / frobenius_norm(m) < 1e-9);
    CHECK(frobenius_norm(matmul_at(r.u, r.u) - Matrix::identity(r.s.size())) < 1e-10);
    CHECK(frobenius_norm(matmul_at(r.v, r.v) - Matrix::identity(r.s.size())) < 1e-10);
    for (std::size_t i = 1; i < r.s.size(); ++i) {
        CHECK(r.s[i] > 0.0);
        CHECK(r.s[i] <= r.s[i - 1]);
    }
}

TEST_CASE("random_orthonormal") {
    RngState one(42);
    const Matrix r1 = random_orthonormal(1, one);
    CHECK(std::abs(std::abs(r1(0, 0)) - 1.0) < 1e-12);

    RngState rng(42);
    const Matrix r = random_orthonormal(4, rng);
    CHECK(frobenius_norm(matmul_bt(r, r) - Matrix::identity(4)) < 1e-10);

    RngState a(99), b(99);
    CHECK(random_orthonormal(5, a) == random_orthonormal(5, b));
}

TEST_CASE("cholesky_psd factors PSD matrices") {
    RngState rng(21);
    const Matrix g = random_gaussian(4, 4, rng);
    const Matrix psd = matmul_bt(g, g);  // g gᵀ is PSD
    const Matrix l = cholesky_psd(psd);
    CHECK(frobenius_norm(matmul_bt(l, l) - psd) < 1e-9);
    const Matrix zero(3, 3, 0.0);
    CHECK(frobenius_norm(cholesky_psd(zero)) < 1e-14);
}
