#pragma once

#include "slk/core.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace slk {

enum class DesignKind { gaussian_isotropic, gaussian_anisotropic, rademacher, cauchy_rows, orthonormal };
enum class NormalizeMode { check, rescale, none };

const char *to_string(DesignKind kind);
DesignKind design_kind_from_string(const std::string &name);
const char *to_string(NormalizeMode mode);
NormalizeMode normalize_mode_from_string(const std::string &name);

struct DesignSpec {
    DesignKind kind = DesignKind::gaussian_isotropic;
    Index n = 1;
    Index p = 1;
    /// p x p covariance, required for gaussian_anisotropic.
    std::optional<Matrix> covariance;
    NormalizeMode normalize = NormalizeMode::check;
};

/// Symmetric PSD square root. Eigenvalues in [-1e-10, 0), and positive ones at
/// rounding level relative to the largest, are set to zero;
/// anything more negative is rejected.
Matrix psd_sqrt(const Matrix &sigma);

/// Deterministic in (spec, seed, stream). Under `check` the matrix is returned
/// as drawn and a warning goes to stderr when a column has ||X e_j||_n > 1.
DesignMatrix generate_design(const DesignSpec &spec, std::uint64_t seed, std::uint64_t stream = 0);

Vector generate_noise(const NoiseModel &model, Index n, std::uint64_t seed, std::uint64_t stream = 0);

struct SparseBeta {
    Vector beta;
    /// Set when amplitude is zero, so the vector is not actually s-sparse.
    bool degenerate = false;
};

/// Uniform support of size s, entries +-amplitude with random signs.
SparseBeta generate_sparse_beta(Index p, Index s, double amplitude, std::uint64_t seed,
                                std::uint64_t stream = 0);

struct PackingSet {
    std::vector<Vector> elements;
    Index s = 0;
    double q = 2.0;
    /// Target size reached before the attempt budget ran out.
    bool complete = false;
    std::int64_t attempts = 0;

    /// (s/4)^{1/q}
    double min_distance() const;
};

/// Pairwise separation and support sizes, checked over every pair.
bool verify_packing(const PackingSet &set);

inline constexpr std::int64_t kDefaultPackingAttempts = 100000;

/// Rejection sampling of s-sparse sign vectors with pairwise l_q distance at
/// least (s/4)^{1/q}.
PackingSet generate_packing(Index p, Index s, double q, Index target_size, std::uint64_t seed,
                            std::int64_t max_attempts = kDefaultPackingAttempts);

} // namespace slk
