#include "slk/tuning.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace slk {

namespace {

void require(bool ok, const char *message) {
    if (!ok)
        throw std::invalid_argument(message);
}

double log_2ep_over(double s, Index p) {
    return std::log(2.0 * std::numbers::e * static_cast<double>(p) / s);
}

} // namespace

void TuningContext::validate() const {
    require(gamma > 0.0 && gamma < 1.0, "tuning: gamma must lie in (0,1)");
    require(tau >= 0.0 && gamma + tau < 1.0, "tuning: need tau >= 0 and gamma + tau < 1");
    require(n >= 1 && p >= 1, "tuning: n and p must be positive");
    require(s >= 1 && s <= p, "tuning: s must lie in [1, p]");
    require(sigma > 0.0 && std::isfinite(sigma), "tuning: sigma must be positive");
    require(delta0 > 0.0 && delta0 < 1.0, "tuning: delta0 must lie in (0,1)");
}

double cone_constant_c0(const TuningContext &ctx) {
    ctx.validate();
    return (1.0 + ctx.gamma + ctx.tau) / (1.0 - ctx.gamma - ctx.tau);
}

double lasso_tuning_lambda(const TuningContext &ctx, double multiplier) {
    ctx.validate();
    require(multiplier > 0.0, "tuning: multiplier must be positive");
    return multiplier * (kDeviationConstant * ctx.sigma / ctx.gamma) *
           std::sqrt(log_2ep_over(static_cast<double>(ctx.s), ctx.p) / static_cast<double>(ctx.n));
}

double adaptive_lambda(double s, double sigma, Index n, Index p) {
    require(n >= 1 && p >= 1, "adaptive_lambda: n and p must be positive");
    require(s >= 1.0, "adaptive_lambda: s must be at least 1");
    require(sigma > 0.0, "adaptive_lambda: sigma must be positive");
    return 2.0 * kDeviationConstant * sigma *
           std::sqrt(log_2ep_over(s, p) / static_cast<double>(n));
}

double universal_lambda(Index n, Index p, double sigma, double eps, std::optional<double> delta) {
    require(n >= 1, "universal_lambda: n must be positive");
    require(p >= 2, "universal_lambda: p must be at least 2");
    require(sigma > 0.0, "universal_lambda: sigma must be positive");
    require(eps >= 0.0, "universal_lambda: eps must be nonnegative");
    double log_term = std::log(static_cast<double>(p));
    if (delta) {
        require(*delta > 0.0 && *delta <= 1.0, "universal_lambda: delta must lie in (0,1]");
        log_term -= std::log(*delta);
    }
    return (1.0 + eps) * sigma * std::sqrt(2.0 * log_term / static_cast<double>(n));
}

double delta_of_lambda(double lambda, const TuningContext &ctx) {
    ctx.validate();
    require(lambda > 0.0, "delta_of_lambda: lambda must be positive");
    const double z = ctx.gamma * lambda * std::sqrt(static_cast<double>(ctx.n)) /
                     (kDeviationConstant * ctx.sigma);
    return std::exp(-z * z);
}

double lasso_bound_constant(const TuningContext &ctx, double lambda, double theta) {
    require(theta > 0.0, "lasso_bound_constant: theta must be positive");
    ctx.validate();
    const double prefactor = std::pow(1.0 + ctx.gamma + ctx.tau, 2);
    // log(1/delta(lambda)) in closed form keeps precision when delta underflows.
    const double z = ctx.gamma * lambda * std::sqrt(static_cast<double>(ctx.n)) /
                     (kDeviationConstant * ctx.sigma);
    require(lambda > 0.0, "lasso_bound_constant: lambda must be positive");
    const double first = -std::log(ctx.delta0) / (static_cast<double>(ctx.s) * z * z);
    return prefactor * std::max(first, 1.0 / (theta * theta));
}

double universal_lambda_remainder(Index n, Index p, Index s, double sigma, double eps,
                                  double kappa, double delta) {
    require(kappa > 0.0 && delta > 0.0 && delta < 1.0 && p >= 2 && s >= 1,
            "universal_lambda_remainder: invalid arguments");
    const double sd = static_cast<double>(s);
    const double term = (1.0 + eps) * std::sqrt(2.0 * sd * std::log(static_cast<double>(p))) / kappa +
                        std::sqrt(sd) + std::sqrt(-2.0 * std::log(delta)) + 2.8;
    return sigma * sigma / static_cast<double>(n) * term * term;
}

double tied_lambda_remainder(Index n, Index p, Index s, double sigma, double eps, double kappa,
                             double delta) {
    require(kappa > 0.0 && delta > 0.0 && delta < 1.0 && p >= 2 && s >= 1,
            "tied_lambda_remainder: invalid arguments");
    const double sd = static_cast<double>(s);
    const double term =
        (1.0 + eps) * std::sqrt(2.0 * sd * (std::log(static_cast<double>(p)) - std::log(delta))) / kappa +
        std::sqrt(sd) + std::sqrt(-2.0 * std::log(delta));
    return sigma * sigma / static_cast<double>(n) * term * term;
}

} // namespace slk
