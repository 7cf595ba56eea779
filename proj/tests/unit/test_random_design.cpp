#include "doctest.h"

#include "slk/random_design.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <set>

using namespace slk;

TEST_CASE("orthonormal design") {
    const DesignMatrix x = generate_design({DesignKind::orthonormal, 50, 20, std::nullopt, NormalizeMode::check}, 1);
    CHECK((x.gram() - Matrix::Identity(20, 20)).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK_THROWS_AS(generate_design({DesignKind::orthonormal, 10, 20, std::nullopt, NormalizeMode::none}, 1),
                    std::invalid_argument);
}

TEST_CASE("rescale enforces the column norm contract") {
    for (DesignKind kind : {DesignKind::gaussian_isotropic, DesignKind::rademacher, DesignKind::cauchy_rows}) {
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            const DesignMatrix x = generate_design({kind, 37, 23, std::nullopt, NormalizeMode::rescale}, seed);
            CHECK(x.max_column_norm() <= 1.0);
        }
    }
    const DesignMatrix r = generate_design({DesignKind::rademacher, 10, 4, std::nullopt, NormalizeMode::none}, 3);
    CHECK(r.max_column_norm() == doctest::Approx(1.0));
    CHECK((r.data().array().abs() == 1.0).all());
}

TEST_CASE("anisotropic rows lie in the range of a singular covariance") {
    const Index p = 6;
    Matrix basis = generate_design({DesignKind::gaussian_isotropic, p, 2, std::nullopt, NormalizeMode::none}, 5).data();
    const Matrix sigma = basis * basis.transpose() / 10.0;
    const DesignMatrix x = generate_design({DesignKind::gaussian_anisotropic, 200, p, sigma, NormalizeMode::none}, 5);
    // Project rows on the orthogonal complement of the column space of sigma.
    Eigen::HouseholderQR<Matrix> qr(basis);
    const Matrix q = qr.householderQ() * Matrix::Identity(p, 2);
    const Matrix residual = x.data() - x.data() * q * q.transpose();
    CHECK(residual.cwiseAbs().maxCoeff() <= 1e-10);
    Matrix bad = Matrix::Identity(3, 3);
    bad(2, 2) = -0.1;
    CHECK_THROWS_AS(generate_design({DesignKind::gaussian_anisotropic, 5, 3, bad, NormalizeMode::none}, 1),
                    std::invalid_argument);
    bad(2, 2) = -1e-12;
    CHECK_NOTHROW(generate_design({DesignKind::gaussian_anisotropic, 5, 3, bad, NormalizeMode::none}, 1));
    CHECK_THROWS_AS(generate_design({DesignKind::gaussian_anisotropic, 5, 3, std::nullopt, NormalizeMode::none}, 1),
                    std::invalid_argument);
}

TEST_CASE("anisotropic covariance is reproduced") {
    Matrix sigma(2, 2);
    sigma << 0.5, 0.2, 0.2, 0.3;
    const DesignMatrix x = generate_design({DesignKind::gaussian_anisotropic, 40000, 2, sigma, NormalizeMode::none}, 8);
    const Matrix emp = x.gram();
    CHECK((emp - sigma).cwiseAbs().maxCoeff() < 0.02);
}

TEST_CASE("generators are deterministic") {
    const DesignSpec spec{DesignKind::gaussian_isotropic, 8, 5, std::nullopt, NormalizeMode::none};
    CHECK(generate_design(spec, 42).data() == generate_design(spec, 42).data());
    CHECK(generate_design(spec, 42).data() != generate_design(spec, 43).data());
    CHECK(generate_design(spec, 42, 1).data() != generate_design(spec, 42, 2).data());
    const NoiseModel noise{NoiseKind::gaussian, 1.0};
    CHECK(generate_noise(noise, 30, 9) == generate_noise(noise, 30, 9));
    CHECK(generate_sparse_beta(30, 3, 1.0, 9).beta == generate_sparse_beta(30, 3, 1.0, 9).beta);
}

TEST_CASE("noise laws") {
    const Vector r = generate_noise({NoiseKind::rademacher, 2.5}, 1000, 1);
    CHECK((r.array().abs() == 2.5).all());
    double mean_exp = 0.0;
    for (Index i = 0; i < r.size(); ++i)
        mean_exp += std::exp(r[i] * r[i] / (2.5 * 2.5));
    CHECK(mean_exp / 1000.0 == doctest::Approx(std::numbers::e).epsilon(1e-14));

    const Index n = 10000;
    const Vector g = generate_noise({NoiseKind::gaussian, 2.0}, n, 2);
    const double var = g.squaredNorm() / n;
    // Standard error of the sample second moment of N(0, 4) is 4 sqrt(2/n).
    CHECK(std::abs(var - 4.0) <= 3.0 * 4.0 * std::sqrt(2.0 / n));

    const Vector b = generate_noise({NoiseKind::bounded, 1.5}, n, 3);
    CHECK(b.cwiseAbs().maxCoeff() <= 1.5);
    double be = 0.0;
    for (Index i = 0; i < n; ++i)
        be += std::exp(b[i] * b[i] / 2.25);
    // E exp(U^2) for U uniform on [-1, 1] is 1.46265...
    CHECK(be / n == doctest::Approx(1.4626517459071816).epsilon(0.02));
    CHECK(be / n <= std::numbers::e);
    CHECK_THROWS_AS(generate_noise({NoiseKind::gaussian, 0.0}, 3, 1), std::invalid_argument);
}

TEST_CASE("sparse beta") {
    const SparseBeta full = generate_sparse_beta(7, 7, 2.0, 1);
    CHECK((full.beta.array().abs() == 2.0).all());
    CHECK_FALSE(full.degenerate);
    const SparseBeta zero = generate_sparse_beta(7, 3, 0.0, 1);
    CHECK(zero.degenerate);
    CHECK(zero.beta == Vector::Zero(7));
    int same = 0;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const SparseBeta b = generate_sparse_beta(100, 5, 1.0, seed);
        CHECK(l0_count(b.beta) == 5);
        same += b.beta == generate_sparse_beta(100, 5, 1.0, seed + 1000).beta;
    }
    CHECK(same == 0);
    CHECK_THROWS_AS(generate_sparse_beta(5, 6, 1.0, 1), std::invalid_argument);
    CHECK_THROWS_AS(generate_sparse_beta(5, 0, 1.0, 1), std::invalid_argument);
}

TEST_CASE("packing sets") {
    const PackingSet inf = generate_packing(10, 3, std::numeric_limits<double>::infinity(), 50, 1);
    CHECK(verify_packing(inf));
    CHECK(inf.min_distance() == 1.0);
    CHECK(inf.elements.size() == 50);
    const PackingSet l1 = generate_packing(4, 2, 1.0, 10, 2);
    CHECK(verify_packing(l1));
    CHECK(l1.min_distance() == doctest::Approx(0.5));
    const PackingSet big = generate_packing(64, 4, 2.0, 16, 3);
    CHECK(big.complete);
    CHECK(verify_packing(big));
    CHECK(static_cast<double>(big.elements.size()) >= std::exp(0.1 * 4 * std::log(std::numbers::e * 64 / 4)));
    // Unreachable target: only 2^2 * 6 = 24 distinct 2-sparse sign vectors in R^4.
    const PackingSet partial = generate_packing(4, 2, 2.0, 1000, 4, 2000);
    CHECK_FALSE(partial.complete);
    CHECK(verify_packing(partial));
    CHECK(partial.elements.size() <= 24);
    PackingSet broken = big;
    broken.elements.push_back(broken.elements.front());
    CHECK_FALSE(verify_packing(broken));
    CHECK_THROWS_AS(generate_packing(10, 6, 2.0, 4, 1), std::invalid_argument);
    CHECK_THROWS_AS(generate_packing(10, 2, 0.5, 4, 1), std::invalid_argument);
}

TEST_CASE("kind names round trip") {
    for (DesignKind k : {DesignKind::gaussian_isotropic, DesignKind::gaussian_anisotropic, DesignKind::rademacher,
                         DesignKind::cauchy_rows, DesignKind::orthonormal})
        CHECK(design_kind_from_string(to_string(k)) == k);
    CHECK(normalize_mode_from_string("rescale") == NormalizeMode::rescale);
    CHECK_THROWS_AS(design_kind_from_string("uniform"), std::invalid_argument);
}
