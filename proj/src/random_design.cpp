#include "slk/random_design.hpp"

#include "slk/rng.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace slk {

const char *to_string(DesignKind kind) {
    switch (kind) {
    case DesignKind::gaussian_isotropic: return "gaussian-isotropic";
    case DesignKind::gaussian_anisotropic: return "gaussian-anisotropic";
    case DesignKind::rademacher: return "rademacher";
    case DesignKind::cauchy_rows: return "cauchy-rows";
    case DesignKind::orthonormal: return "orthonormal";
    }
    return "unknown";
}

DesignKind design_kind_from_string(const std::string &name) {
    for (auto kind : {DesignKind::gaussian_isotropic, DesignKind::gaussian_anisotropic,
                      DesignKind::rademacher, DesignKind::cauchy_rows, DesignKind::orthonormal})
        if (name == to_string(kind))
            return kind;
    throw std::invalid_argument("unknown design kind '" + name + "'");
}

const char *to_string(NormalizeMode mode) {
    switch (mode) {
    case NormalizeMode::check: return "check";
    case NormalizeMode::rescale: return "rescale";
    case NormalizeMode::none: return "none";
    }
    return "unknown";
}

NormalizeMode normalize_mode_from_string(const std::string &name) {
    for (auto mode : {NormalizeMode::check, NormalizeMode::rescale, NormalizeMode::none})
        if (name == to_string(mode))
            return mode;
    throw std::invalid_argument("unknown normalize mode '" + name + "'");
}

Matrix psd_sqrt(const Matrix &sigma) {
    if (sigma.rows() != sigma.cols())
        throw std::invalid_argument("covariance must be square");
    if (!sigma.allFinite())
        throw std::invalid_argument("covariance has non-finite entries");
    const double asym = (sigma - sigma.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-12 * std::max(1.0, sigma.cwiseAbs().maxCoeff()))
        throw std::invalid_argument("covariance must be symmetric");
    Eigen::SelfAdjointEigenSolver<Matrix> eig(sigma);
    Vector values = eig.eigenvalues();
    // Eigenvalues at rounding level relative to the largest one are zero modes.
    const double floor = 1e-12 * std::max(values.maxCoeff(), 0.0);
    for (Index i = 0; i < values.size(); ++i) {
        if (values[i] < -1e-10)
            throw std::invalid_argument("covariance is not positive semidefinite (eigenvalue " +
                                        std::to_string(values[i]) + ")");
        values[i] = values[i] <= floor ? 0.0 : std::sqrt(values[i]);
    }
    return eig.eigenvectors() * values.asDiagonal() * eig.eigenvectors().transpose();
}

DesignMatrix generate_design(const DesignSpec &spec, std::uint64_t seed, std::uint64_t stream) {
    if (spec.n < 1 || spec.p < 1)
        throw std::invalid_argument("design: n and p must be positive");
    const Index n = spec.n;
    const Index p = spec.p;
    Philox rng(seed, streams::design ^ stream);
    Matrix x(n, p);
    // Row-major fill so a given row does not depend on p.
    auto fill = [&](auto draw) {
        for (Index i = 0; i < n; ++i)
            for (Index j = 0; j < p; ++j)
                x(i, j) = draw();
    };

    switch (spec.kind) {
    case DesignKind::gaussian_isotropic:
        fill([&] { return rng.normal(); });
        break;
    case DesignKind::gaussian_anisotropic: {
        if (!spec.covariance)
            throw std::invalid_argument("gaussian-anisotropic design requires a covariance");
        if (spec.covariance->rows() != p)
            throw std::invalid_argument("covariance must be p x p");
        const Matrix root = psd_sqrt(*spec.covariance);
        fill([&] { return rng.normal(); });
        x = x * root; // rows become root * z since root is symmetric
        break;
    }
    case DesignKind::rademacher:
        fill([&] { return rng.sign(); });
        break;
    case DesignKind::cauchy_rows:
        fill([&] { return std::tan(std::numbers::pi * (rng.uniform() - 0.5)); });
        break;
    case DesignKind::orthonormal: {
        if (n < p)
            throw std::invalid_argument("orthonormal design requires n >= p");
        fill([&] { return rng.normal(); });
        Eigen::HouseholderQR<Matrix> qr(x);
        Matrix q = qr.householderQ() * Matrix::Identity(n, p);
        x = std::sqrt(static_cast<double>(n)) * q;
        break;
    }
    }

    DesignMatrix design(std::move(x));
    switch (spec.normalize) {
    case NormalizeMode::rescale:
        return design.rescaled();
    case NormalizeMode::check:
        if (!design.normalized())
            std::cerr << "warning: design column norm " << design.max_column_norm()
                      << " exceeds 1\n";
        break;
    case NormalizeMode::none:
        break;
    }
    return design;
}

Vector generate_noise(const NoiseModel &model, Index n, std::uint64_t seed, std::uint64_t stream) {
    if (!(model.sigma > 0.0) || !std::isfinite(model.sigma))
        throw std::invalid_argument("noise: sigma must be positive");
    if (n < 0)
        throw std::invalid_argument("noise: n must be nonnegative");
    Philox rng(seed, streams::noise ^ stream);
    Vector xi(n);
    for (Index i = 0; i < n; ++i) {
        switch (model.kind) {
        case NoiseKind::gaussian: xi[i] = model.sigma * rng.normal(); break;
        case NoiseKind::rademacher: xi[i] = model.sigma * rng.sign(); break;
        case NoiseKind::bounded: xi[i] = model.sigma * (2.0 * rng.uniform() - 1.0); break;
        }
    }
    return xi;
}

namespace {

// Partial Fisher-Yates: first s entries of a uniform random permutation of 0..p-1.
std::vector<Index> random_support(Index p, Index s, Philox &rng) {
    std::vector<Index> idx(static_cast<std::size_t>(p));
    std::iota(idx.begin(), idx.end(), Index{0});
    for (Index i = 0; i < s; ++i) {
        const auto j = i + static_cast<Index>(rng.below(static_cast<std::uint64_t>(p - i)));
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
    idx.resize(static_cast<std::size_t>(s));
    return idx;
}

double distance_q(const Vector &a, const Vector &b, double q) { return lq_norm(a - b, q); }

} // namespace

SparseBeta generate_sparse_beta(Index p, Index s, double amplitude, std::uint64_t seed,
                                std::uint64_t stream) {
    if (p < 1 || s < 1 || s > p)
        throw std::invalid_argument("sparse beta: need 1 <= s <= p");
    if (!std::isfinite(amplitude))
        throw std::invalid_argument("sparse beta: amplitude must be finite");
    Philox rng(seed, streams::beta ^ stream);
    SparseBeta out{Vector::Zero(p), amplitude == 0.0};
    for (Index j : random_support(p, s, rng))
        out.beta[j] = amplitude * rng.sign();
    return out;
}

double PackingSet::min_distance() const {
    const double ratio = static_cast<double>(s) / 4.0;
    return std::isinf(q) ? 1.0 : std::pow(ratio, 1.0 / q);
}

bool verify_packing(const PackingSet &set) {
    const double bound = set.min_distance();
    for (std::size_t a = 0; a < set.elements.size(); ++a) {
        const Vector &w = set.elements[a];
        if (l0_count(w, 0.0) != set.s)
            return false;
        for (Index j = 0; j < w.size(); ++j)
            if (w[j] != 0.0 && std::abs(w[j]) != 1.0)
                return false;
        for (std::size_t b = 0; b < a; ++b)
            if (distance_q(w, set.elements[b], set.q) < bound)
                return false;
    }
    return true;
}

PackingSet generate_packing(Index p, Index s, double q, Index target_size, std::uint64_t seed,
                            std::int64_t max_attempts) {
    if (p < 2)
        throw std::invalid_argument("packing: p must be at least 2");
    if (s < 1 || 2 * s > p)
        throw std::invalid_argument("packing: need 1 <= s <= p/2");
    if (!(q >= 1.0))
        throw std::invalid_argument("packing: q must lie in [1, inf]");
    if (target_size < 1 || max_attempts < 1)
        throw std::invalid_argument("packing: target size and attempts must be positive");

    Philox rng(seed, streams::packing);
    PackingSet set;
    set.s = s;
    set.q = q;
    const double bound = set.min_distance();
    while (static_cast<Index>(set.elements.size()) < target_size && set.attempts < max_attempts) {
        ++set.attempts;
        Vector candidate = Vector::Zero(p);
        for (Index j : random_support(p, s, rng))
            candidate[j] = rng.sign();
        bool accept = true;
        for (const Vector &kept : set.elements) {
            if (distance_q(candidate, kept, q) < bound) {
                accept = false;
                break;
            }
        }
        if (accept)
            set.elements.push_back(std::move(candidate));
    }
    set.complete = static_cast<Index>(set.elements.size()) >= target_size;
    if (!set.complete && target_size > 1 && set.elements.size() <= 1)
        throw std::runtime_error("packing: no separated pair found within the attempt budget");
    if (!verify_packing(set))
        throw std::logic_error("packing: verification failed");
    return set;
}

} // namespace slk
