#pragma once

#include "slk/core.hpp"
#include "slk/random_design.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace slk {

using Json = nlohmann::ordered_json;

inline constexpr int kReportSchemaVersion = 1;

enum class Scenario { event, oracle_lasso, oracle_slope, adaptive, rate, lower_bound, subgaussian_noise };

const char *to_string(Scenario scenario);
Scenario scenario_from_string(const std::string &name);

struct GridPoint {
    Index n = 1;
    Index p = 1;
    Index s = 1;
};

/// Everything a scenario needs. Fields that a scenario does not use are
/// still echoed into the report so a run can be reproduced from its output.
struct ExperimentConfig {
    Scenario scenario = Scenario::event;
    DesignSpec design;
    NoiseModel noise;
    Index s = 1;
    Index s_star = 2;
    double gamma = 0.5;
    double tau = 0.25;
    /// Slope constant A; defaults to 2(4+sqrt2).
    double a_constant = 2.0 * kDeviationConstant;
    double delta0 = 0.5;
    int replicates = 500;
    std::uint64_t seed = 0;

    /// Magnitude of the nonzero entries of beta*.
    double amplitude = 1.0;
    /// Known restricted constant of the design; orthonormal designs use 1 and
    /// other designs fall back to a certified bracket.
    std::optional<double> theta;
    /// Number of sampled directions u per replicate (event, subgaussian-noise).
    int directions = 16;
    /// "lasso", "lasso-universal" or "slope" (rate).
    std::string estimator = "slope";
    /// "prediction", "l1" or "l2" (adaptive).
    std::string metric = "prediction";
    double theta_star = 1.0;
    std::vector<GridPoint> grid;
    /// Lower-bound scenario: l_q index, packing target size and radius constant.
    double q = 2.0;
    Index packing_target = 16;
    double alpha = 0.0395284707521047; // sqrt(0.1) / 8

    void validate() const;
};

ExperimentConfig config_from_json(const Json &j);
Json config_to_json(const ExperimentConfig &cfg);

struct ExperimentReport {
    Json config;
    Json aggregates = Json::object();
    std::vector<Json> records;

    Json to_json() const;
    /// One row per record, columns in the key order of the first record.
    void write_csv(std::ostream &out) const;
};

struct RunOptions {
    /// Worker threads; results do not depend on this value.
    int threads = 1;
};

/// Runs body(i) for i in [0, count) on up to `threads` workers and returns the
/// results in index order.
std::vector<Json> parallel_records(std::int64_t count, int threads,
                                   const std::function<Json(std::int64_t)> &body);

struct Frequency {
    std::int64_t count = 0;
    std::int64_t total = 0;
    double value() const;
    /// sqrt(f (1 - f) / total)
    double standard_error() const;
};

/// Mix of sparse, dense, cone-shaped and g-aligned directions. The last
/// direction is always g itself, the maximiser of g^T u over the l2 sphere.
std::vector<Vector> sample_directions(const Vector &g, Index s, int count, std::uint64_t seed,
                                      std::uint64_t stream);

/// 40 sigma max(sum_j u#_j sqrt(log(2p/j)/n), ||Xu||_n (sqrt(pi/2) + sqrt(2 log(1/delta0))) / sqrt(n))
double subgaussian_rhs(const Vector &u, const DesignMatrix &x, double sigma, double delta0);

/// max_j g#_j / (sigma sqrt(log(2p/j)))
double sorted_deviation_ratio(const Vector &g, double sigma);

ExperimentReport event_probability(const ExperimentConfig &cfg, const RunOptions &opts = {});
ExperimentReport oracle_check_lasso(const ExperimentConfig &cfg, const RunOptions &opts = {});
ExperimentReport oracle_check_slope(const ExperimentConfig &cfg, const RunOptions &opts = {});
ExperimentReport rate_regression(const ExperimentConfig &cfg, const std::vector<GridPoint> &grid,
                                 const RunOptions &opts = {});
ExperimentReport adaptive_check(const ExperimentConfig &cfg, const RunOptions &opts = {});
ExperimentReport lower_bound_sim(const ExperimentConfig &cfg, const PackingSet &packing,
                                 const RunOptions &opts = {});
ExperimentReport subgaussian_noise_check(const ExperimentConfig &cfg, const RunOptions &opts = {});

/// Dispatches on cfg.scenario; the lower-bound scenario generates its packing
/// from (design.p, s, q, packing_target, seed).
ExperimentReport run_experiment(const ExperimentConfig &cfg, const RunOptions &opts = {});

struct RateFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    double slope_se = 0.0;
};

/// Ordinary least squares of ys on xs.
RateFit fit_line(const std::vector<double> &xs, const std::vector<double> &ys);

} // namespace slk
