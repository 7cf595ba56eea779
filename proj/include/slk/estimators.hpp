#pragma once

#include "slk/core.hpp"

#include <optional>
#include <variant>
#include <vector>

namespace slk {

// Both estimators minimise the objective in the scaling used by the tuning
// rules in tuning.hpp:
//
//     ||X b - y||_n^2 + 2 * penalty(b),   ||u||_n^2 = (1/n) sum u_i^2,
//
// with penalty = lambda * ||b||_1 (Lasso) or ||b||_* (Slope). Note the factor 2
// and the 1/n; most packages use (1/2n)||.||^2 + lambda ||.||_1 instead, which
// corresponds to half this objective.

enum class LassoSolver { accelerated_proximal, coordinate_descent };

struct LassoConfig {
    double lambda = 0.0;
    int max_iters = 100000;
    /// Defaults to 1e-8 * (1 + ||y||_n^2).
    std::optional<double> gap_tol;
    LassoSolver solver = LassoSolver::accelerated_proximal;
    /// Starting point; zero when empty.
    std::optional<Vector> warm_start;
    bool record_objective = false;
};

struct SlopeConfig {
    WeightVector weights;
    int max_iters = 100000;
    std::optional<double> gap_tol;
    std::optional<Vector> warm_start;
    bool record_objective = false;
};

struct FitResult {
    Vector coefficients;
    double objective = 0.0;
    double duality_gap = 0.0;
    double gap_tol = 0.0;
    double kkt_residual = 0.0;
    int iterations = 0;
    bool converged = false;
    /// Objective after every iteration, filled when record_objective is set.
    std::vector<double> objective_history;
};

struct L1Penalty {
    double lambda;
};

struct SortedL1Penalty {
    WeightVector weights;
};

using Penalty = std::variant<L1Penalty, SortedL1Penalty>;

double default_gap_tol(const Vector &y);

/// ||X b - y||_n^2 + 2 * penalty(b)
double objective_value(const DesignMatrix &x, const Vector &y, const Vector &beta,
                       const Penalty &penalty);

/// Fenchel duality gap at beta, using the residual correlation X^T r / n rescaled
/// into the dual ball (cumulative-sum test for the sorted-l1 norm).
double duality_gap(const DesignMatrix &x, const Vector &y, const Vector &beta,
                   const Penalty &penalty);

FitResult fit_lasso(const DesignMatrix &x, const Vector &y, const LassoConfig &cfg);
FitResult fit_slope(const DesignMatrix &x, const Vector &y, const SlopeConfig &cfg);

/// Euclidean distance from -grad ||X b - y||_n^2 to the subdifferential of
/// 2 * penalty at b. Zero exactly at minimisers.
double kkt_residual(const DesignMatrix &x, const Vector &y, const Vector &beta,
                    const Penalty &penalty);

} // namespace slk
