#pragma once

#include "slk/core.hpp"
#include "slk/estimators.hpp"

#include <optional>
#include <vector>

namespace slk {

/// Levels b_m = 2^{m-1}, m = 1..M, with M = max{m : b_m <= s_star}.
class DyadicGrid {
public:
    /// Requires s_star >= 2 and 2^M <= p.
    DyadicGrid(Index s_star, Index p);

    Index s_star() const { return s_star_; }
    int levels() const { return levels_; }
    /// b_m for m = 1..levels()
    Index b(int m) const;

private:
    Index s_star_;
    int levels_;
};

enum class SelectionMetric { prediction, lq };

struct SelectorConfig {
    SelectionMetric metric = SelectionMetric::prediction;
    double q = 2.0;
    double c0_constant = 0.0;
    double theta_star = 1.0;
    double sigma = 1.0;

    void validate() const;
};

/// C0 = 7(4+sqrt2)/(2 theta_star) for the prediction metric.
SelectorConfig prediction_selector(double sigma, double theta_star = 1.0);

/// C0 = 49(4+sqrt2)/(4 theta_star) for the l_q metric, 1 <= q <= 2.
SelectorConfig lq_selector(double q, double sigma, double theta_star = 1.0);

/// prediction: C0 sigma sqrt(b log(2ep/b) / n)
/// l_q:        C0 sigma b^{1/q} sqrt(log(2ep/b) / n)
double threshold_w(double b, const SelectorConfig &cfg, Index n, Index p);

/// distances[k-2] = d(beta_{b_k}, beta_{b_{k-1}}) and thresholds[k-2] = w(b_k)
/// for k = 2..M. Returns the smallest m in 2..M such that every k >= m has
/// distance <= 2 w(b_k), or M when no such m exists.
int select_m_hat(const std::vector<double> &distances, const std::vector<double> &thresholds);

struct SelectionResult {
    int m_hat = 0;
    Index s_hat = 0;
    Vector beta_tilde;
    std::vector<FitResult> per_level_fits;
    std::vector<double> lambdas;
    std::vector<double> distances;
    std::vector<double> thresholds;
};

struct AdaptiveOptions {
    /// Start each level from the previous level's solution.
    bool warm_start = false;
    int max_iters = 100000;
    std::optional<double> gap_tol;
};

/// Distance between two fits in the configured metric.
double selection_distance(const DesignMatrix &x, const Vector &a, const Vector &b,
                          const SelectorConfig &cfg);

/// Fits the Lasso at lambda(b_m) for every level, selects m_hat and returns
/// beta_tilde, the Lasso at lambda(2 s_hat).
SelectionResult run_adaptive(const DesignMatrix &x, const Vector &y, const SelectorConfig &cfg,
                             const DyadicGrid &grid, const AdaptiveOptions &options = {});

} // namespace slk
