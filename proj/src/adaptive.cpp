#include "slk/adaptive.hpp"

#include "slk/tuning.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace slk {

DyadicGrid::DyadicGrid(Index s_star, Index p) : s_star_(s_star), levels_(0) {
    if (s_star < 2)
        throw std::invalid_argument("dyadic grid: s_star must be at least 2");
    while ((Index{1} << levels_) <= s_star)
        ++levels_;
    if ((Index{1} << levels_) > p)
        throw std::invalid_argument("dyadic grid: need 2^M <= p, i.e. s_star below p/2");
}

Index DyadicGrid::b(int m) const {
    if (m < 1)
        throw std::invalid_argument("dyadic grid: level must be positive");
    return Index{1} << (m - 1);
}

void SelectorConfig::validate() const {
    if (!(theta_star > 0.0 && theta_star <= 1.0))
        throw std::invalid_argument("selector: theta_star must lie in (0, 1]");
    if (metric == SelectionMetric::lq && !(q >= 1.0 && q <= 2.0))
        throw std::invalid_argument("selector: q must lie in [1, 2]");
    if (!(sigma > 0.0))
        throw std::invalid_argument("selector: sigma must be positive");
    if (!(c0_constant > 0.0))
        throw std::invalid_argument("selector: C0 must be positive");
}

SelectorConfig prediction_selector(double sigma, double theta_star) {
    SelectorConfig cfg{SelectionMetric::prediction, 2.0,
                       7.0 * kDeviationConstant / (2.0 * theta_star), theta_star, sigma};
    cfg.validate();
    return cfg;
}

SelectorConfig lq_selector(double q, double sigma, double theta_star) {
    SelectorConfig cfg{SelectionMetric::lq, q, 49.0 * kDeviationConstant / (4.0 * theta_star),
                       theta_star, sigma};
    cfg.validate();
    return cfg;
}

double threshold_w(double b, const SelectorConfig &cfg, Index n, Index p) {
    cfg.validate();
    if (n < 1)
        throw std::invalid_argument("threshold_w: n must be positive");
    if (!(b >= 1.0 && b <= static_cast<double>(p)))
        throw std::invalid_argument("threshold_w: b must lie in [1, p]");
    const double log_term = std::log(2.0 * std::numbers::e * static_cast<double>(p) / b);
    const double base = cfg.c0_constant * cfg.sigma;
    if (cfg.metric == SelectionMetric::prediction)
        return base * std::sqrt(b * log_term / static_cast<double>(n));
    return base * std::pow(b, 1.0 / cfg.q) * std::sqrt(log_term / static_cast<double>(n));
}

int select_m_hat(const std::vector<double> &distances, const std::vector<double> &thresholds) {
    if (distances.empty() || distances.size() != thresholds.size())
        throw std::invalid_argument("select_m_hat: need one distance and threshold per level 2..M");
    const int big_m = static_cast<int>(distances.size()) + 1;
    // Walk down from k = M while the condition keeps holding.
    int m_hat = big_m + 1;
    for (int k = big_m; k >= 2; --k) {
        if (distances[static_cast<std::size_t>(k - 2)] <= 2.0 * thresholds[static_cast<std::size_t>(k - 2)])
            m_hat = k;
        else
            break;
    }
    return m_hat > big_m ? big_m : m_hat;
}

double selection_distance(const DesignMatrix &x, const Vector &a, const Vector &b,
                          const SelectorConfig &cfg) {
    if (cfg.metric == SelectionMetric::prediction)
        return empirical_norm(x.data() * (a - b));
    return lq_norm(a - b, cfg.q);
}

SelectionResult run_adaptive(const DesignMatrix &x, const Vector &y, const SelectorConfig &cfg,
                             const DyadicGrid &grid, const AdaptiveOptions &options) {
    cfg.validate();
    const Index n = x.rows();
    const Index p = x.cols();
    if (grid.s_star() > p)
        throw std::invalid_argument("run_adaptive: s_star exceeds p");
    const int big_m = grid.levels();

    auto fit_at = [&](double b, const std::optional<Vector> &start) {
        LassoConfig lc;
        lc.lambda = adaptive_lambda(b, cfg.sigma, n, p);
        lc.max_iters = options.max_iters;
        lc.gap_tol = options.gap_tol;
        lc.warm_start = start;
        return std::pair{lc.lambda, fit_lasso(x, y, lc)};
    };

    SelectionResult out;
    for (int m = 1; m <= big_m; ++m) {
        std::optional<Vector> start;
        if (options.warm_start && !out.per_level_fits.empty())
            start = out.per_level_fits.back().coefficients;
        auto [lambda, fit] = fit_at(static_cast<double>(grid.b(m)), start);
        out.lambdas.push_back(lambda);
        out.per_level_fits.push_back(std::move(fit));
    }
    for (int k = 2; k <= big_m; ++k) {
        out.distances.push_back(selection_distance(
            x, out.per_level_fits[static_cast<std::size_t>(k - 1)].coefficients,
            out.per_level_fits[static_cast<std::size_t>(k - 2)].coefficients, cfg));
        out.thresholds.push_back(threshold_w(static_cast<double>(grid.b(k)), cfg, n, p));
    }
    out.m_hat = select_m_hat(out.distances, out.thresholds);
    out.s_hat = Index{1} << (out.m_hat - 1);

    // beta_tilde sits at sparsity 2 s_hat = b_{m_hat + 1}.
    if (out.m_hat + 1 <= big_m) {
        out.beta_tilde = out.per_level_fits[static_cast<std::size_t>(out.m_hat)].coefficients;
    } else {
        std::optional<Vector> start;
        if (options.warm_start)
            start = out.per_level_fits.back().coefficients;
        out.beta_tilde = fit_at(2.0 * static_cast<double>(out.s_hat), start).second.coefficients;
    }
    return out;
}

} // namespace slk
