#pragma once

#include "slk/core.hpp"

#include <vector>

namespace slk {

/// Componentwise sign(v_j) * max(|v_j| - t, 0).
Vector soft_threshold(const Vector &v, double t);

struct ProxRequest {
    Vector point;
    WeightVector weights;
    double step = 1.0;
};

/// argmin_x 1/2 ||x - v||^2 + step * ||x||_*.
///
/// Works on |v| sorted nonincreasingly, runs a stack-based pool-adjacent-violators
/// pass over v# - step * lambda (nonincreasing fit, clipped at zero) and then
/// restores the permutation and signs. O(p log p).
Vector prox_sorted_l1(const ProxRequest &req);

/// Reusable workspace variant used inside the solvers. `scaled_weights` holds
/// step * lambda and must be nonincreasing and nonnegative.
class SortedL1Prox {
public:
    explicit SortedL1Prox(Index p = 0);

    void apply(const Vector &v, const Vector &scaled_weights, Vector &out);

private:
    std::vector<Index> order_;
    std::vector<double> sums_;
    std::vector<double> means_;
    std::vector<Index> starts_;
};

/// Nonincreasing isotonic least-squares fit (pool adjacent violators).
Vector isotonic_nonincreasing(const Vector &y);

} // namespace slk
