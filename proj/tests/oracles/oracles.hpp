#pragma once

// Independent reference implementations used only by the tests. None of them
// share code paths with the library routines they check.

#include "slk/core.hpp"

#include <cstdint>
#include <vector>

namespace slk::oracle {

/// Sorted-l1 prox by exhaustive search over orderings of the optimum and over
/// block/zero partitions of each ordering. Dimension at most 8.
Vector prox_sorted_l1(const Vector &v, const Vector &weights, double step);

/// max over permutations phi of sum_j lambda_j |v_phi(j)|, dimension at most 8.
double sorted_norm_by_permutations(const Vector &v, const Vector &weights);

/// Lasso minimiser for a design with X^T X / n = I: soft_threshold(X^T y / n, lambda),
/// computed entrywise in long double.
Vector lasso_orthonormal(const Matrix &x, const Vector &y, double lambda);

/// ||X b - y||_n^2 + 2 sum_j lambda_j b#_j in long double.
double slope_objective(const Matrix &x, const Vector &y, const Vector &b, const Vector &weights);

/// Minimum of the two-dimensional Slope objective over a grid refined around the
/// best point until the cell is below `resolution`.
double slope_grid_minimum_2d(const Matrix &x, const Vector &y, const Vector &weights,
                             double resolution);

/// min over unit directions d in the cone of ||X d||_n, by a spherical grid in p = 3
/// refined around the best cell. `inside` is a membership predicate.
template <class Inside>
double cone_minimum_sphere3(const Matrix &gram, Inside inside, int resolution);

/// Philox4x32-10 reference vectors (counter, key) -> output.
struct PhiloxVector {
    std::uint32_t ctr[4];
    std::uint32_t key[2];
    std::uint32_t out[4];
};
const std::vector<PhiloxVector> &philox_known_answers();

} // namespace slk::oracle

#include "oracles_impl.hpp"
