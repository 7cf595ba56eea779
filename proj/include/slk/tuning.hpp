#pragma once

#include "slk/core.hpp"

#include <optional>

namespace slk {

/// Parameters of the sparsity-aware Lasso rule. Requires gamma in (0,1),
/// tau in [0, 1 - gamma), 1 <= s <= p and delta0 in (0,1).
struct TuningContext {
    double gamma = 0.5;
    double tau = 0.25;
    Index s = 1;
    double sigma = 1.0;
    Index n = 1;
    Index p = 1;
    double delta0 = 0.5;

    void validate() const;
};

/// (1 + gamma + tau) / (1 - gamma - tau)
double cone_constant_c0(const TuningContext &ctx);

/// multiplier * ((4+sqrt2) sigma / gamma) sqrt(log(2ep/s) / n)
double lasso_tuning_lambda(const TuningContext &ctx, double multiplier = 1.0);

/// 2 (4+sqrt2) sigma sqrt(log(2ep/s) / n); the gamma = 1/2 case used on the dyadic grid.
double adaptive_lambda(double s, double sigma, Index n, Index p);

/// (1+eps) sigma sqrt(2 log p / n), or (1+eps) sigma sqrt(2 log(p/delta) / n)
/// when delta is given.
double universal_lambda(Index n, Index p, double sigma, double eps,
                        std::optional<double> delta = std::nullopt);

/// exp(-(gamma lambda sqrt(n) / ((4+sqrt2) sigma))^2)
double delta_of_lambda(double lambda, const TuningContext &ctx);

/// (1+gamma+tau)^2 max(log(1/delta0) / (s log(1/delta(lambda))), 1/theta^2)
double lasso_bound_constant(const TuningContext &ctx, double lambda, double theta);

/// Remainder of the oracle inequality for the delta-free universal lambda,
/// valid at every confidence level delta:
/// sigma^2/n ((1+eps) sqrt(2 s log p)/kappa + sqrt s + sqrt(2 log(1/delta)) + 2.8)^2
double universal_lambda_remainder(Index n, Index p, Index s, double sigma, double eps,
                                  double kappa, double delta);

/// Remainder for the lambda tied to delta:
/// sigma^2/n ((1+eps) sqrt(2 s log(p/delta))/kappa + sqrt s + sqrt(2 log(1/delta)))^2
double tied_lambda_remainder(Index n, Index p, Index s, double sigma, double eps,
                             double kappa, double delta);

} // namespace slk
