#include "slk/experiments.hpp"

#include "slk/adaptive.hpp"
#include "slk/conditions.hpp"
#include "slk/estimators.hpp"
#include "slk/rng.hpp"
#include "slk/tuning.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <ostream>
#include <set>
#include <stdexcept>
#include <thread>

namespace slk {

namespace {

constexpr double kSigmaMargin = 3.0;

std::uint64_t replicate_stream(std::uint64_t base, std::int64_t r) {
    return base ^ static_cast<std::uint64_t>(r);
}

double mean_of(const std::vector<double> &v) {
    if (v.empty())
        return 0.0;
    double sum = 0.0;
    for (double x : v)
        sum += x;
    return sum / static_cast<double>(v.size());
}

/// Standard error of the sample mean.
double mean_se(const std::vector<double> &v) {
    if (v.size() < 2)
        return 0.0;
    const double m = mean_of(v);
    double ss = 0.0;
    for (double x : v)
        ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

Json frequency_json(const Frequency &f) {
    return Json{{"count", f.count}, {"total", f.total}, {"frequency", f.value()},
                {"standard_error", f.standard_error()}};
}

/// Violation frequency that must stay below `bound` up to the 3-SE margin.
Json upper_check(const Frequency &f, double bound) {
    Json j = frequency_json(f);
    j["bound"] = bound;
    j["pass"] = f.value() <= bound + kSigmaMargin * f.standard_error();
    return j;
}

/// Success frequency that must reach `level` up to the 3-SE margin.
Json lower_check(const Frequency &f, double level) {
    Json j = frequency_json(f);
    j["level"] = level;
    j["pass"] = f.value() >= level - kSigmaMargin * f.standard_error();
    return j;
}

Json mean_check(const std::vector<double> &values, double bound) {
    const double m = mean_of(values);
    const double se = mean_se(values);
    return Json{{"mean", m}, {"standard_error", se}, {"bound", bound},
                {"pass", m <= bound + kSigmaMargin * se}};
}

Frequency count_flag(const std::vector<Json> &records, const char *key) {
    Frequency f;
    f.total = static_cast<std::int64_t>(records.size());
    for (const auto &r : records)
        if (r.at(key).get<bool>())
            ++f.count;
    return f;
}

std::vector<double> column(const std::vector<Json> &records, const char *key) {
    std::vector<double> out;
    out.reserve(records.size());
    for (const auto &r : records)
        out.push_back(r.at(key).get<double>());
    return out;
}

std::int64_t count_false(const std::vector<Json> &records, const char *key) {
    std::int64_t c = 0;
    for (const auto &r : records)
        if (!r.at(key).get<bool>())
            ++c;
    return c;
}

ExperimentReport start_report(const ExperimentConfig &cfg) {
    cfg.validate();
    ExperimentReport report;
    report.config = config_to_json(cfg);
    return report;
}

struct ProblemDraw {
    Vector beta;
    Vector y;
};

ProblemDraw draw_problem(const DesignMatrix &x, const ExperimentConfig &cfg, std::uint64_t key) {
    ProblemDraw d;
    d.beta = generate_sparse_beta(x.cols(), cfg.s, cfg.amplitude, cfg.seed,
                                  replicate_stream(streams::beta, static_cast<std::int64_t>(key)))
                 .beta;
    d.y = x.data() * d.beta +
          generate_noise(cfg.noise, x.rows(), cfg.seed,
                         replicate_stream(streams::noise, static_cast<std::int64_t>(key)));
    return d;
}

bool is_orthonormal(const ExperimentConfig &cfg) {
    return cfg.design.kind == DesignKind::orthonormal;
}

/// Restricted constant used in a bound: the configured value, 1 for an
/// orthonormal design, or the certified lower end of a bracket.
std::pair<double, std::string> restricted_constant(const ExperimentConfig &cfg,
                                                   const DesignMatrix &x, const ConeSpec &cone) {
    if (cfg.theta)
        return {*cfg.theta, "config"};
    if (is_orthonormal(cfg))
        return {1.0, "orthonormal"};
    const ConstantBracket b = cone_constant_bracket(x, cone, SearchBudget{.seed = cfg.seed});
    if (!(b.lower > 0.0))
        throw std::invalid_argument(std::string("no positive certified lower bound for the ") +
                                    to_string(cone.kind) +
                                    " constant of this design; supply theta in the config");
    return {b.lower, std::string("bracket-") + to_string(b.method)};
}

TuningContext tuning_context(const ExperimentConfig &cfg, Index s, Index n, Index p) {
    TuningContext ctx{.gamma = cfg.gamma, .tau = cfg.tau, .s = s, .sigma = cfg.noise.sigma,
                      .n = n, .p = p, .delta0 = cfg.delta0};
    ctx.validate();
    return ctx;
}

Json lq_errors(const Vector &d) {
    return Json{{"l1_error", lq_norm(d, 1.0)}, {"l1_5_error", lq_norm(d, 1.5)},
                {"l2_error", lq_norm(d, 2.0)}};
}

constexpr double kLqIndices[] = {1.0, 1.5, 2.0};
constexpr const char *kLqNames[] = {"l1", "l1_5", "l2"};

std::uint64_t uint_value(const Json &j, const char *key, std::uint64_t fallback) {
    if (!j.contains(key))
        return fallback;
    const Json &v = j.at(key);
    if (v.is_number_unsigned())
        return v.get<std::uint64_t>();
    if (v.is_number_integer()) {
        const auto s = v.get<std::int64_t>();
        if (s < 0)
            throw std::invalid_argument(std::string(key) + " must be nonnegative");
        return static_cast<std::uint64_t>(s);
    }
    throw std::invalid_argument(std::string(key) + " must be an integer");
}

void reject_unknown(const Json &j, std::initializer_list<const char *> allowed, const char *where) {
    if (!j.is_object())
        throw std::invalid_argument(std::string(where) + " must be a JSON object");
    std::set<std::string> keys(allowed.begin(), allowed.end());
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!keys.count(it.key()))
            throw std::invalid_argument(std::string("unknown key '") + it.key() + "' in " + where);
}

} // namespace

const char *to_string(Scenario scenario) {
    switch (scenario) {
    case Scenario::event: return "event";
    case Scenario::oracle_lasso: return "oracle-lasso";
    case Scenario::oracle_slope: return "oracle-slope";
    case Scenario::adaptive: return "adaptive";
    case Scenario::rate: return "rate";
    case Scenario::lower_bound: return "lower-bound";
    case Scenario::subgaussian_noise: return "subgaussian-noise";
    }
    return "unknown";
}

Scenario scenario_from_string(const std::string &name) {
    for (auto s : {Scenario::event, Scenario::oracle_lasso, Scenario::oracle_slope,
                   Scenario::adaptive, Scenario::rate, Scenario::lower_bound,
                   Scenario::subgaussian_noise})
        if (name == to_string(s))
            return s;
    throw std::invalid_argument("unknown scenario '" + name + "'");
}

void ExperimentConfig::validate() const {
    if (replicates < 1)
        throw std::invalid_argument("replicates must be at least 1");
    if (!(noise.sigma > 0.0) || !std::isfinite(noise.sigma))
        throw std::invalid_argument("noise sigma must be positive");
    if (!(delta0 > 0.0 && delta0 < 1.0))
        throw std::invalid_argument("delta0 must lie in (0, 1)");
    if (!(gamma > 0.0 && gamma < 1.0) || !(tau >= 0.0 && tau < 1.0 - gamma))
        throw std::invalid_argument("need gamma in (0,1) and tau in [0, 1-gamma)");
    if (!std::isfinite(amplitude) || amplitude < 0.0)
        throw std::invalid_argument("amplitude must be finite and nonnegative");
    if (theta && !(*theta > 0.0))
        throw std::invalid_argument("theta must be positive");
    if (scenario == Scenario::rate) {
        if (grid.empty())
            throw std::invalid_argument("rate scenario needs a grid of (n, p, s) points");
        for (const auto &g : grid)
            if (g.n < 1 || g.p < 1 || g.s < 1 || g.s > g.p)
                throw std::invalid_argument("grid points need n, p >= 1 and 1 <= s <= p");
        if (estimator != "lasso" && estimator != "lasso-universal" && estimator != "slope")
            throw std::invalid_argument("estimator must be lasso, lasso-universal or slope");
        return;
    }
    if (design.n < 1 || design.p < 1)
        throw std::invalid_argument("design needs n, p >= 1");
    if (s < 1 || s > design.p)
        throw std::invalid_argument("s must satisfy 1 <= s <= p");
    if ((scenario == Scenario::event || scenario == Scenario::subgaussian_noise) && directions < 1)
        throw std::invalid_argument("directions must be at least 1");
    if (scenario == Scenario::adaptive && metric != "prediction" && metric != "l1" &&
        metric != "l2")
        throw std::invalid_argument("metric must be prediction, l1 or l2");
    if (scenario == Scenario::lower_bound && (!(q >= 1.0) || !(alpha > 0.0) || packing_target < 1))
        throw std::invalid_argument("lower-bound needs q >= 1, alpha > 0, packing_target >= 1");
}

ExperimentConfig config_from_json(const Json &j) {
    reject_unknown(j,
                   {"scenario", "design", "noise", "s", "s_star", "gamma", "tau", "a_constant",
                    "delta0", "replicates", "seed", "amplitude", "theta", "directions",
                    "estimator", "metric", "theta_star", "grid", "q", "packing_target", "alpha"},
                   "config");
    ExperimentConfig cfg;
    try {
        if (j.contains("scenario"))
            cfg.scenario = scenario_from_string(j.at("scenario").get<std::string>());
        if (j.contains("design")) {
            const Json &d = j.at("design");
            reject_unknown(d, {"kind", "n", "p", "normalize", "covariance"}, "design");
            if (d.contains("kind"))
                cfg.design.kind = design_kind_from_string(d.at("kind").get<std::string>());
            cfg.design.n = d.value("n", cfg.design.n);
            cfg.design.p = d.value("p", cfg.design.p);
            if (d.contains("normalize"))
                cfg.design.normalize =
                    normalize_mode_from_string(d.at("normalize").get<std::string>());
            if (d.contains("covariance") && !d.at("covariance").is_null()) {
                const auto rows = d.at("covariance").get<std::vector<std::vector<double>>>();
                Matrix c(static_cast<Index>(rows.size()),
                         rows.empty() ? 0 : static_cast<Index>(rows.front().size()));
                for (std::size_t i = 0; i < rows.size(); ++i) {
                    if (static_cast<Index>(rows[i].size()) != c.cols())
                        throw std::invalid_argument("covariance rows differ in length");
                    for (std::size_t k = 0; k < rows[i].size(); ++k)
                        c(static_cast<Index>(i), static_cast<Index>(k)) = rows[i][k];
                }
                cfg.design.covariance = std::move(c);
            }
        }
        if (j.contains("noise")) {
            const Json &nz = j.at("noise");
            reject_unknown(nz, {"kind", "sigma"}, "noise");
            if (nz.contains("kind"))
                cfg.noise.kind = noise_kind_from_string(nz.at("kind").get<std::string>());
            cfg.noise.sigma = nz.value("sigma", cfg.noise.sigma);
        }
        cfg.s = j.value("s", cfg.s);
        cfg.s_star = j.value("s_star", cfg.s_star);
        cfg.gamma = j.value("gamma", cfg.gamma);
        cfg.tau = j.value("tau", cfg.tau);
        cfg.a_constant = j.value("a_constant", cfg.a_constant);
        cfg.delta0 = j.value("delta0", cfg.delta0);
        cfg.replicates = j.value("replicates", cfg.replicates);
        cfg.seed = uint_value(j, "seed", cfg.seed);
        cfg.amplitude = j.value("amplitude", cfg.amplitude);
        if (j.contains("theta") && !j.at("theta").is_null())
            cfg.theta = j.at("theta").get<double>();
        cfg.directions = j.value("directions", cfg.directions);
        cfg.estimator = j.value("estimator", cfg.estimator);
        cfg.metric = j.value("metric", cfg.metric);
        cfg.theta_star = j.value("theta_star", cfg.theta_star);
        if (j.contains("grid")) {
            for (const auto &g : j.at("grid")) {
                reject_unknown(g, {"n", "p", "s"}, "grid point");
                cfg.grid.push_back(GridPoint{g.at("n").get<Index>(), g.at("p").get<Index>(),
                                             g.at("s").get<Index>()});
            }
        }
        cfg.q = j.value("q", cfg.q);
        cfg.packing_target = j.value("packing_target", cfg.packing_target);
        cfg.alpha = j.value("alpha", cfg.alpha);
    } catch (const nlohmann::json::exception &e) {
        throw std::invalid_argument(std::string("malformed config: ") + e.what());
    }
    return cfg;
}

Json config_to_json(const ExperimentConfig &cfg) {
    Json design{{"kind", to_string(cfg.design.kind)},
                {"n", cfg.design.n},
                {"p", cfg.design.p},
                {"normalize", to_string(cfg.design.normalize)}};
    if (cfg.design.covariance) {
        Json rows = Json::array();
        const Matrix &c = *cfg.design.covariance;
        for (Index i = 0; i < c.rows(); ++i) {
            Json row = Json::array();
            for (Index k = 0; k < c.cols(); ++k)
                row.push_back(c(i, k));
            rows.push_back(std::move(row));
        }
        design["covariance"] = std::move(rows);
    }
    Json grid = Json::array();
    for (const auto &g : cfg.grid)
        grid.push_back(Json{{"n", g.n}, {"p", g.p}, {"s", g.s}});
    return Json{{"scenario", to_string(cfg.scenario)},
                {"design", std::move(design)},
                {"noise", Json{{"kind", to_string(cfg.noise.kind)}, {"sigma", cfg.noise.sigma}}},
                {"s", cfg.s},
                {"s_star", cfg.s_star},
                {"gamma", cfg.gamma},
                {"tau", cfg.tau},
                {"a_constant", cfg.a_constant},
                {"delta0", cfg.delta0},
                {"replicates", cfg.replicates},
                {"seed", cfg.seed},
                {"amplitude", cfg.amplitude},
                {"theta", cfg.theta ? Json(*cfg.theta) : Json(nullptr)},
                {"directions", cfg.directions},
                {"estimator", cfg.estimator},
                {"metric", cfg.metric},
                {"theta_star", cfg.theta_star},
                {"grid", std::move(grid)},
                {"q", cfg.q},
                {"packing_target", cfg.packing_target},
                {"alpha", cfg.alpha}};
}

Json ExperimentReport::to_json() const {
    Json j{{"schema_version", kReportSchemaVersion}, {"config", config},
           {"aggregates", aggregates}};
    j["records"] = Json::array();
    for (const auto &r : records)
        j["records"].push_back(r);
    return j;
}

void ExperimentReport::write_csv(std::ostream &out) const {
    if (records.empty())
        return;
    std::vector<std::string> keys;
    for (auto it = records.front().begin(); it != records.front().end(); ++it)
        keys.push_back(it.key());
    for (std::size_t k = 0; k < keys.size(); ++k)
        out << (k ? "," : "") << keys[k];
    out << '\n';
    for (const auto &r : records) {
        for (std::size_t k = 0; k < keys.size(); ++k) {
            const Json &v = r.contains(keys[k]) ? r.at(keys[k]) : Json(nullptr);
            out << (k ? "," : "") << (v.is_string() ? v.get<std::string>() : v.dump());
        }
        out << '\n';
    }
}

std::vector<Json> parallel_records(std::int64_t count, int threads,
                                   const std::function<Json(std::int64_t)> &body) {
    std::vector<Json> results(static_cast<std::size_t>(std::max<std::int64_t>(count, 0)));
    std::vector<std::exception_ptr> errors(results.size());
    std::atomic<std::int64_t> next{0};
    auto worker = [&] {
        for (std::int64_t i = next++; i < count; i = next++) {
            try {
                results[static_cast<std::size_t>(i)] = body(i);
            } catch (...) {
                errors[static_cast<std::size_t>(i)] = std::current_exception();
            }
        }
    };
    const int workers =
        static_cast<int>(std::clamp<std::int64_t>(threads, 1, std::max<std::int64_t>(count, 1)));
    std::vector<std::thread> pool;
    for (int t = 1; t < workers; ++t)
        pool.emplace_back(worker);
    worker();
    for (auto &t : pool)
        t.join();
    // The lowest failing index wins so the reported error does not depend on scheduling.
    for (auto &e : errors)
        if (e)
            std::rethrow_exception(e);
    return results;
}

double Frequency::value() const {
    return total > 0 ? static_cast<double>(count) / static_cast<double>(total) : 0.0;
}

double Frequency::standard_error() const {
    if (total <= 0)
        return 0.0;
    const double f = value();
    return std::sqrt(f * (1.0 - f) / static_cast<double>(total));
}

std::vector<Vector> sample_directions(const Vector &g, Index s, int count, std::uint64_t seed,
                                      std::uint64_t stream) {
    const Index p = g.size();
    std::vector<Vector> out;
    if (count <= 0 || p == 0)
        return out;
    Philox rng(seed, stream);
    const Index k = std::clamp<Index>(s, 1, p);
    const auto order = descending_order(g);
    int log2p = 0;
    while ((Index{1} << (log2p + 1)) <= p)
        ++log2p;

    auto random_support = [&] {
        std::vector<Index> idx(static_cast<std::size_t>(p));
        std::iota(idx.begin(), idx.end(), Index{0});
        for (Index i = 0; i < k; ++i) {
            const auto j = i + static_cast<Index>(rng.below(static_cast<std::uint64_t>(p - i)));
            std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
        }
        idx.resize(static_cast<std::size_t>(k));
        return idx;
    };

    for (int t = 0; t + 1 < count; ++t) {
        Vector u = Vector::Zero(p);
        switch (t % 4) {
        case 0:
            for (Index j : random_support())
                u[j] = rng.normal();
            break;
        case 1:
            for (Index j = 0; j < p; ++j)
                u[j] = rng.normal();
            break;
        case 2:
            for (Index j = 0; j < p; ++j)
                u[j] = 0.05 * rng.normal();
            for (Index j : random_support())
                u[j] = rng.normal();
            break;
        default: {
            const Index top = std::min<Index>(p, Index{1} << ((t / 4) % (log2p + 1)));
            for (Index i = 0; i < top; ++i) {
                const Index j = order[static_cast<std::size_t>(i)];
                u[j] = g[j] < 0.0 ? -1.0 : 1.0;
            }
            break;
        }
        }
        out.push_back(std::move(u));
    }
    out.push_back(g);
    return out;
}

double subgaussian_rhs(const Vector &u, const DesignMatrix &x, double sigma, double delta0) {
    if (!(delta0 > 0.0 && delta0 < 1.0))
        throw std::invalid_argument("subgaussian_rhs: delta0 must lie in (0, 1)");
    if (u.size() != x.cols())
        throw std::invalid_argument("subgaussian_rhs: length mismatch");
    const double n = static_cast<double>(x.rows());
    const double two_p = 2.0 * static_cast<double>(x.cols());
    const Vector sorted = rearrange_desc(u);
    double head = 0.0;
    for (Index j = 0; j < sorted.size(); ++j)
        head += sorted[j] * std::sqrt(std::log(two_p / static_cast<double>(j + 1)) / n);
    const double tail = empirical_norm(x.data() * u) *
                        (std::sqrt(std::numbers::pi / 2.0) + std::sqrt(2.0 * std::log(1.0 / delta0))) /
                        std::sqrt(n);
    return 40.0 * sigma * std::max(head, tail);
}

double sorted_deviation_ratio(const Vector &g, double sigma) {
    if (!(sigma > 0.0))
        throw std::invalid_argument("sorted_deviation_ratio: sigma must be positive");
    const Vector sorted = rearrange_desc(g);
    const double two_p = 2.0 * static_cast<double>(g.size());
    double worst = 0.0;
    for (Index j = 0; j < sorted.size(); ++j)
        worst = std::max(worst,
                         sorted[j] / (sigma * std::sqrt(std::log(two_p / static_cast<double>(j + 1)))));
    return worst;
}

namespace {

/// Shared body of the two deviation scenarios: per replicate, g = X^T xi / sqrt(n)
/// and the worst sampled ratio of (1/n) xi^T X u to the right-hand side.
template <class Rhs>
std::vector<Json> deviation_records(const ExperimentConfig &cfg, const DesignMatrix &x,
                                    const RunOptions &opts, Rhs rhs, bool with_sorted_event) {
    const double sqrt_n = std::sqrt(static_cast<double>(x.rows()));
    return parallel_records(cfg.replicates, opts.threads, [&](std::int64_t r) {
        const Vector xi = generate_noise(cfg.noise, x.rows(), cfg.seed,
                                         replicate_stream(streams::noise, r));
        const Vector g = x.data().transpose() * xi / sqrt_n;
        double worst = 0.0;
        bool holds = true;
        for (const Vector &u : sample_directions(g, cfg.s, cfg.directions, cfg.seed,
                                                 replicate_stream(streams::directions, r))) {
            const double lhs = g.dot(u) / sqrt_n;
            const double bound = rhs(u);
            if (lhs > bound)
                holds = false;
            if (bound > 0.0)
                worst = std::max(worst, lhs / bound);
        }
        Json rec{{"replicate", r}};
        if (with_sorted_event) {
            const double ratio = sorted_deviation_ratio(g, cfg.noise.sigma);
            rec["max_sorted_ratio"] = ratio;
            rec["sorted_event"] = ratio <= 4.0;
        }
        rec["max_lhs_over_rhs"] = worst;
        rec["inequality_holds"] = holds;
        return rec;
    });
}

} // namespace

ExperimentReport event_probability(const ExperimentConfig &cfg, const RunOptions &opts) {
    ExperimentReport report = start_report(cfg);
    if (cfg.noise.kind != NoiseKind::gaussian)
        throw std::invalid_argument(
            "event scenario needs gaussian noise; use subgaussian-noise for other laws");
    const DesignMatrix x = generate_design(cfg.design, cfg.seed, streams::design);
    report.records = deviation_records(
        cfg, x, opts,
        [&](const Vector &u) {
            const HGValues hg = h_g_values(u, x, cfg.noise.sigma, cfg.delta0);
            return std::max(hg.h, hg.g);
        },
        true);
    auto &agg = report.aggregates;
    agg["design_normalized"] = x.normalized();
    agg["sorted_event"] = lower_check(count_flag(report.records, "sorted_event"), 0.5);
    agg["main_event"] = lower_check(count_flag(report.records, "inequality_holds"),
                                    1.0 - cfg.delta0 / 2.0);
    agg["main_event"]["directions_per_replicate"] = cfg.directions;
    return report;
}

ExperimentReport subgaussian_noise_check(const ExperimentConfig &cfg, const RunOptions &opts) {
    ExperimentReport report = start_report(cfg);
    if (cfg.noise.kind == NoiseKind::gaussian)
        throw std::invalid_argument("subgaussian-noise scenario needs non-gaussian noise; use event");
    const DesignMatrix x = generate_design(cfg.design, cfg.seed, streams::design);
    report.records = deviation_records(
        cfg, x, opts,
        [&](const Vector &u) { return subgaussian_rhs(u, x, cfg.noise.sigma, cfg.delta0); },
        false);
    auto &agg = report.aggregates;
    agg["design_normalized"] = x.normalized();
    agg["subgaussian_event"] =
        lower_check(count_flag(report.records, "inequality_holds"), 1.0 - cfg.delta0);
    agg["subgaussian_event"]["directions_per_replicate"] = cfg.directions;
    return report;
}

ExperimentReport oracle_check_lasso(const ExperimentConfig &cfg, const RunOptions &opts) {
    ExperimentReport report = start_report(cfg);
    if (cfg.tau <= 0.0)
        throw std::invalid_argument("oracle-lasso needs tau > 0 for the l_q bounds");
    const DesignMatrix x = generate_design(cfg.design, cfg.seed, streams::design);
    const Index n = x.rows(), p = x.cols(), s = cfg.s;
    const TuningContext ctx = tuning_context(cfg, s, n, p);
    const double c0 = cone_constant_c0(ctx);
    const auto [theta, theta_source] =
        restricted_constant(cfg, x, ConeSpec{.kind = ConeKind::sre, .s = s, .c0 = c0});
    const double lambda = lasso_tuning_lambda(ctx);
    const double k2 = (1.0 + cfg.gamma + cfg.tau) * (1.0 + cfg.gamma + cfg.tau);
    const double sd = static_cast<double>(s);
    const double pred_rhs = k2 * lambda * lambda * sd / (theta * theta);
    const double lq_constant = k2 / (2.0 * cfg.tau * theta * theta);
    const double two_tau_lambda = 2.0 * cfg.tau * lambda;

    report.records = parallel_records(cfg.replicates, opts.threads, [&](std::int64_t r) {
        const ProblemDraw d = draw_problem(x, cfg, static_cast<std::uint64_t>(r));
        const FitResult fit = fit_lasso(x, d.y, LassoConfig{.lambda = lambda});
        const Vector diff = fit.coefficients - d.beta;
        const double pred = std::pow(empirical_norm(x.data() * diff), 2);
        Json rec{{"replicate", r}, {"converged", fit.converged}, {"pred_error", pred}};
        rec.update(lq_errors(diff));
        rec["soi_lhs"] = two_tau_lambda * lq_norm(diff, 1.0) + pred;
        rec["pred_violation"] = pred > pred_rhs;
        for (int k = 0; k < 3; ++k) {
            const double rhs = lq_constant * lambda * std::pow(sd, 1.0 / kLqIndices[k]);
            rec[std::string(kLqNames[k]) + "_violation"] = lq_norm(diff, kLqIndices[k]) > rhs;
        }
        rec["soi_violation"] = rec["soi_lhs"].get<double>() > pred_rhs;
        return rec;
    });

    const double prob_bound = 0.5 * std::pow(delta_of_lambda(lambda, ctx), sd / (theta * theta));
    auto &agg = report.aggregates;
    agg["lambda"] = lambda;
    agg["theta"] = theta;
    agg["theta_source"] = theta_source;
    agg["c0"] = c0;
    agg["pred_rhs"] = pred_rhs;
    agg["violation_probability_bound"] = prob_bound;
    agg["pred_violation"] = upper_check(count_flag(report.records, "pred_violation"), prob_bound);
    agg["soi_violation"] = upper_check(count_flag(report.records, "soi_violation"), prob_bound);
    for (int k = 0; k < 3; ++k) {
        const std::string key = std::string(kLqNames[k]) + "_violation";
        agg[key] = upper_check(count_flag(report.records, key.c_str()), prob_bound);
        agg[key]["rhs"] = lq_constant * lambda * std::pow(sd, 1.0 / kLqIndices[k]);
    }
    const double log2ep = std::log(2.0 * std::numbers::e * static_cast<double>(p));
    agg["expectation"] = mean_check(column(report.records, "soi_lhs"),
                                    k2 * lambda * lambda * sd * (1.0 / (theta * theta) + 0.5 / log2ep));
    agg["mean_pred_error"] = mean_of(column(report.records, "pred_error"));
    agg["mean_l1_error"] = mean_of(column(report.records, "l1_error"));
    agg["mean_l2_error"] = mean_of(column(report.records, "l2_error"));
    agg["nonconverged"] = count_false(report.records, "converged");
    return report;
}

ExperimentReport oracle_check_slope(const ExperimentConfig &cfg, const RunOptions &opts) {
    ExperimentReport report = start_report(cfg);
    if (cfg.a_constant < kDeviationConstant / cfg.gamma)
        throw std::invalid_argument("oracle-slope needs a_constant >= (4+sqrt2)/gamma");
    if (cfg.tau <= 0.0)
        throw std::invalid_argument("oracle-slope needs tau > 0 for the sorted-l1 bound");
    const DesignMatrix x = generate_design(cfg.design, cfg.seed, streams::design);
    const Index n = x.rows(), p = x.cols(), s = cfg.s;
    const double sigma = cfg.noise.sigma;
    const WeightVector w = slope_weights(n, p, sigma, cfg.a_constant);
    const double c0 = (1.0 + cfg.gamma + cfg.tau) / (1.0 - cfg.gamma - cfg.tau);
    const double c0_l2 = (1.0 + cfg.gamma) / (1.0 - cfg.gamma);
    const auto [vartheta, source] =
        restricted_constant(cfg, x, ConeSpec{.kind = ConeKind::wre, .s = s, .c0 = c0, .weights = w});
    const auto [vartheta_l2, source_l2] = restricted_constant(
        cfg, x, ConeSpec{.kind = ConeKind::wre, .s = s, .c0 = c0_l2, .weights = w});
    const double k2 = (1.0 + cfg.gamma + cfg.tau) * (1.0 + cfg.gamma + cfg.tau);
    const double sd = static_cast<double>(s);
    const double two_p = 2.0 * static_cast<double>(p);

    std::vector<double> head_sq(static_cast<std::size_t>(p) + 1, 0.0);
    for (Index j = 0; j < p; ++j)
        head_sq[static_cast<std::size_t>(j) + 1] = head_sq[static_cast<std::size_t>(j)] + w[j] * w[j];
    const double sum_s = head_sq[static_cast<std::size_t>(s)];
    const double soi_rhs = k2 * sum_s / (vartheta * vartheta);
    const double l2_factor = (1.0 + cfg.gamma) / (vartheta_l2 * vartheta_l2);
    const double l2sq_rhs = l2_factor * l2_factor * sum_s;
    // C'(s', delta0), bounded above using the constant found at s.
    auto c_prime = [&](Index sp) {
        const double spd = static_cast<double>(sp);
        return k2 * std::max(std::log(1.0 / cfg.delta0) / (spd * std::log(two_p / spd)),
                             1.0 / (vartheta * vartheta));
    };
    const double expect_const =
        k2 * (1.0 / (vartheta * vartheta) + 1.0 / (2.0 * std::log(two_p)));

    report.records = parallel_records(cfg.replicates, opts.threads, [&](std::int64_t r) {
        const ProblemDraw d = draw_problem(x, cfg, static_cast<std::uint64_t>(r));
        const FitResult fit = fit_slope(x, d.y, SlopeConfig{.weights = w});
        const Vector diff = fit.coefficients - d.beta;
        const double pred = std::pow(empirical_norm(x.data() * diff), 2);
        const double sorted_err = sorted_l1_norm(diff, w);
        const double l2sq = diff.squaredNorm();
        // Comparison vectors: beta* truncated to its s' largest entries.
        const auto order = descending_order(d.beta);
        bool family_violation = false;
        double balanced = std::numeric_limits<double>::infinity();
        for (Index sp = 1; sp <= s; ++sp) {
            Vector b = Vector::Zero(p);
            for (Index i = 0; i < sp; ++i)
                b[order[static_cast<std::size_t>(i)]] = d.beta[order[static_cast<std::size_t>(i)]];
            const double approx = std::pow(empirical_norm(x.data() * (b - d.beta)), 2);
            const double lhs = 2.0 * cfg.tau * sorted_l1_norm(fit.coefficients - b, w) + pred;
            if (lhs > approx + c_prime(sp) * head_sq[static_cast<std::size_t>(sp)])
                family_violation = true;
            const double spd = static_cast<double>(sp);
            balanced = std::min(balanced,
                                approx + expect_const * cfg.a_constant * cfg.a_constant * sigma *
                                             sigma * spd / static_cast<double>(n) *
                                             std::log(std::numbers::e * two_p / spd));
        }
        Json rec{{"replicate", r}, {"converged", fit.converged}, {"pred_error", pred},
                 {"sorted_l1_error", sorted_err}, {"l2_sq_error", l2sq}};
        rec["soi_lhs"] = 2.0 * cfg.tau * sorted_err + pred;
        rec["balanced_rhs"] = balanced;
        rec["soi_violation"] = rec["soi_lhs"].get<double>() > soi_rhs;
        rec["sorted_l1_violation"] = 2.0 * cfg.tau * sorted_err > soi_rhs;
        rec["l2_violation"] = l2sq > l2sq_rhs;
        rec["family_violation"] = family_violation;
        return rec;
    });

    std::int64_t bracket_failures = 0;
    const double scale = cfg.a_constant * cfg.a_constant * sigma * sigma / static_cast<double>(n);
    for (Index sp = 1; sp <= p; ++sp) {
        const StirlingBracket b = stirling_bracket(sp, p);
        const double sum = head_sq[static_cast<std::size_t>(sp)];
        const double tol = 1e-12 * sum;
        if (scale * b.lower > sum + tol || sum > scale * b.upper + tol)
            ++bracket_failures;
    }

    const double prob = 0.5 * std::pow(sd / two_p, sd / (vartheta * vartheta));
    const double prob_l2 = 0.5 * std::pow(sd / two_p, sd / (vartheta_l2 * vartheta_l2));
    auto &agg = report.aggregates;
    agg["vartheta"] = vartheta;
    agg["vartheta_source"] = source;
    agg["vartheta_l2"] = vartheta_l2;
    agg["vartheta_l2_source"] = source_l2;
    agg["weights_head_sum_sq"] = sum_s;
    agg["soi_rhs"] = soi_rhs;
    agg["l2_sq_rhs"] = l2sq_rhs;
    agg["soi_violation"] = upper_check(count_flag(report.records, "soi_violation"), prob);
    agg["sorted_l1_violation"] = upper_check(count_flag(report.records, "sorted_l1_violation"), prob);
    agg["l2_violation"] = upper_check(count_flag(report.records, "l2_violation"), prob_l2);
    agg["family_violation"] =
        upper_check(count_flag(report.records, "family_violation"), cfg.delta0 / 2.0);
    agg["expectation_soi"] = mean_check(column(report.records, "soi_lhs"), expect_const * sum_s);
    const double lp = std::log(two_p);
    agg["expectation_l2_sq"] =
        mean_check(column(report.records, "l2_sq_error"),
                   (1.0 + cfg.gamma) * (1.0 + cfg.gamma) * sum_s *
                       (1.0 / std::pow(vartheta_l2, 4) + 1.0 / (lp * lp)));
    agg["mean_pred_error"] = mean_of(column(report.records, "pred_error"));
    agg["mean_balanced_rhs"] = mean_of(column(report.records, "balanced_rhs"));
    agg["weight_bracket_failures"] = bracket_failures;
    agg["nonconverged"] = count_false(report.records, "converged");
    return report;
}

RateFit fit_line(const std::vector<double> &xs, const std::vector<double> &ys) {
    if (xs.size() != ys.size() || xs.size() < 2)
        throw std::invalid_argument("fit_line needs at least two paired points");
    const double mx = mean_of(xs), my = mean_of(ys);
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    if (!(sxx > 0.0))
        throw std::invalid_argument("fit_line: abscissae are all equal");
    RateFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double sse = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double e = ys[i] - f.intercept - f.slope * xs[i];
        sse += e * e;
    }
    f.r_squared = syy > 0.0 ? 1.0 - sse / syy : 1.0;
    f.slope_se = xs.size() > 2 ? std::sqrt(sse / static_cast<double>(xs.size() - 2) / sxx) : 0.0;
    return f;
}

ExperimentReport rate_regression(const ExperimentConfig &cfg, const std::vector<GridPoint> &grid,
                                 const RunOptions &opts) {
    ExperimentConfig local = cfg;
    local.scenario = Scenario::rate;
    local.grid = grid;
    ExperimentReport report = start_report(local);
    const double sigma = cfg.noise.sigma;

    std::vector<double> rates;
    for (const auto &g : grid) {
        const double sd = static_cast<double>(g.s);
        rates.push_back(sigma * sigma * sd *
                        std::log(2.0 * std::numbers::e * static_cast<double>(g.p) / sd) /
                        static_cast<double>(g.n));
    }
    std::vector<double> distinct = rates;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (distinct.size() < 4 || distinct.back() < 8.0 * distinct.front())
        throw std::invalid_argument(
            "rate grid needs at least 4 distinct rates spanning a factor of 8");

    std::vector<DesignMatrix> designs;
    for (std::size_t gi = 0; gi < grid.size(); ++gi) {
        DesignSpec spec = cfg.design;
        spec.n = grid[gi].n;
        spec.p = grid[gi].p;
        designs.push_back(generate_design(spec, cfg.seed, replicate_stream(streams::design,
                                                                           static_cast<std::int64_t>(gi))));
    }
    const auto reps = static_cast<std::int64_t>(cfg.replicates);
    report.records = parallel_records(
        static_cast<std::int64_t>(grid.size()) * reps, opts.threads, [&](std::int64_t i) {
            const auto gi = static_cast<std::size_t>(i / reps);
            const std::int64_t r = i % reps;
            const GridPoint &g = grid[gi];
            const DesignMatrix &x = designs[gi];
            ExperimentConfig point = cfg;
            point.s = g.s;
            const ProblemDraw d =
                draw_problem(x, point, (static_cast<std::uint64_t>(gi) << 32) | static_cast<std::uint64_t>(r));
            FitResult fit;
            if (cfg.estimator == "slope") {
                fit = fit_slope(x, d.y,
                                SlopeConfig{.weights = slope_weights(g.n, g.p, sigma, cfg.a_constant)});
            } else {
                const Index s_rule = cfg.estimator == "lasso" ? g.s : 1;
                const double lambda = lasso_tuning_lambda(tuning_context(cfg, s_rule, g.n, g.p));
                fit = fit_lasso(x, d.y, LassoConfig{.lambda = lambda});
            }
            const double pred = std::pow(empirical_norm(x.data() * (fit.coefficients - d.beta)), 2);
            return Json{{"grid_index", gi}, {"n", g.n}, {"p", g.p}, {"s", g.s},
                        {"replicate", r},   {"rate", rates[gi]}, {"pred_error", pred},
                        {"converged", fit.converged}};
        });

    Json points = Json::array();
    std::vector<double> xs, ys;
    for (std::size_t gi = 0; gi < grid.size(); ++gi) {
        std::vector<double> errs;
        for (std::int64_t r = 0; r < reps; ++r)
            errs.push_back(report.records[gi * static_cast<std::size_t>(reps) + static_cast<std::size_t>(r)]
                               .at("pred_error")
                               .get<double>());
        const double m = mean_of(errs);
        points.push_back(Json{{"n", grid[gi].n}, {"p", grid[gi].p}, {"s", grid[gi].s},
                              {"rate", rates[gi]}, {"mean_pred_error", m},
                              {"standard_error", mean_se(errs)}});
        if (!(m > 0.0))
            throw std::runtime_error("rate regression: zero mean error at a grid point");
        xs.push_back(std::log(rates[gi]));
        ys.push_back(std::log(m));
    }
    const RateFit f = fit_line(xs, ys);
    auto &agg = report.aggregates;
    agg["estimator"] = cfg.estimator;
    agg["points"] = std::move(points);
    agg["slope"] = f.slope;
    agg["slope_standard_error"] = f.slope_se;
    agg["intercept"] = f.intercept;
    agg["r_squared"] = f.r_squared;
    agg["nonconverged"] = count_false(report.records, "converged");
    return report;
}

ExperimentReport adaptive_check(const ExperimentConfig &cfg, const RunOptions &opts) {
    ExperimentReport report = start_report(cfg);
    const DesignMatrix x = generate_design(cfg.design, cfg.seed, streams::design);
    const Index n = x.rows(), p = x.cols();
    if (cfg.s > cfg.s_star ||
        static_cast<double>(cfg.s_star) > static_cast<double>(p) / (2.0 * std::numbers::e))
        throw std::invalid_argument("adaptive scenario needs s <= s_star <= p/(2e)");
    const DyadicGrid grid(cfg.s_star, p);
    const double sigma = cfg.noise.sigma;
    SelectorConfig sel;
    double q = 2.0;
    if (cfg.metric == "prediction") {
        sel = prediction_selector(sigma, cfg.theta_star);
    } else {
        q = cfg.metric == "l1" ? 1.0 : 2.0;
        sel = lq_selector(q, sigma, cfg.theta_star);
    }
    const double sd = static_cast<double>(cfg.s);
    const double rate = std::sqrt(std::log(2.0 * std::numbers::e * static_cast<double>(p) / sd) /
                                  static_cast<double>(n));
    const double scale = sel.metric == SelectionMetric::prediction
                             ? sel.c0_constant * sigma * std::sqrt(sd) * rate
                             : sel.c0_constant * sigma * std::pow(sd, 1.0 / q) * rate;

    report.records = parallel_records(cfg.replicates, opts.threads, [&](std::int64_t r) {
        const ProblemDraw d = draw_problem(x, cfg, static_cast<std::uint64_t>(r));
        const SelectionResult res = run_adaptive(x, d.y, sel, grid);
        const Vector diff = res.beta_tilde - d.beta;
        const double err = sel.metric == SelectionMetric::prediction ? empirical_norm(x.data() * diff)
                                                                     : lq_norm(diff, q);
        bool converged = true;
        for (const auto &f : res.per_level_fits)
            converged = converged && f.converged;
        return Json{{"replicate", r},
                    {"m_hat", res.m_hat},
                    {"s_hat", res.s_hat},
                    {"s_hat_le_s", res.s_hat <= cfg.s},
                    {"error", err},
                    {"ratio", err / scale},
                    {"converged", converged}};
    });

    const double pd = static_cast<double>(p);
    const double bound = 1.0 - 2.0 * std::pow(std::log2(pd), 2) * std::pow(2.0 * sd / pd, 2.0 * sd);
    auto &agg = report.aggregates;
    agg["metric"] = cfg.metric;
    agg["c0_constant"] = sel.c0_constant;
    agg["levels"] = grid.levels();
    agg["s_hat_le_s"] = lower_check(count_flag(report.records, "s_hat_le_s"), std::max(0.0, bound));
    Json hist = Json::array();
    for (int m = 1; m <= grid.levels(); ++m) {
        std::int64_t c = 0;
        for (const auto &rec : report.records)
            if (rec.at("m_hat").get<int>() == m)
                ++c;
        hist.push_back(Json{{"m", m}, {"count", c}});
    }
    agg["m_hat_counts"] = std::move(hist);
    std::vector<double> ratios = column(report.records, "ratio");
    std::sort(ratios.begin(), ratios.end());
    const auto q95 = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(ratios.size()))) - 1;
    agg["ratio_quantile_95"] = ratios[q95];
    agg["ratio_max"] = ratios.back();
    agg["mean_error"] = mean_of(column(report.records, "error"));
    agg["nonconverged"] = count_false(report.records, "converged");
    return report;
}

ExperimentReport lower_bound_sim(const ExperimentConfig &cfg, const PackingSet &packing,
                                 const RunOptions &opts) {
    ExperimentReport report = start_report(cfg);
    if (packing.elements.empty())
        throw std::invalid_argument("lower-bound scenario needs a nonempty packing");
    const DesignMatrix x = generate_design(cfg.design, cfg.seed, streams::design);
    const Index n = x.rows(), p = x.cols();
    const Index s = packing.s;
    for (const auto &w : packing.elements)
        if (w.size() != p)
            throw std::invalid_argument("packing elements do not match the design width");
    const double q = packing.q;
    const double sd = static_cast<double>(s);
    const double sigma = cfg.noise.sigma;
    const double theta_max1 = x.max_column_norm();
    const double log_eps = std::log(std::numbers::e * static_cast<double>(p) / sd);
    const double psi = sigma * std::pow(sd, 1.0 / q) * std::sqrt(log_eps / static_cast<double>(n));
    const double a = cfg.alpha * psi * std::pow(sd, -1.0 / q) / theta_max1;
    const double required = std::pow(4.0, -1.0 / q) * cfg.alpha * psi / theta_max1;

    const std::size_t k = packing.elements.size();
    std::vector<Vector> fitted(k);
    std::vector<double> fitted_norm(k);
    for (std::size_t i = 0; i < k; ++i) {
        fitted[i] = a * (x.data() * packing.elements[i]);
        fitted_norm[i] = empirical_norm(fitted[i]);
    }
    bool exact_ok = true, float_ok = true, rigorous_ok = true;
    double sep_min = std::numeric_limits<double>::infinity(), kl_max = 0.0;
    std::int64_t over_nominal = 0;
    const double nominal = cfg.alpha * cfg.alpha * sd * log_eps;
    const double two_q = std::pow(2.0, q);
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = i + 1; j < k; ++j) {
            // Coordinates of a difference of sign vectors are 0, 1 or 2 in absolute value.
            std::int64_t ones = 0, twos = 0;
            for (Index c = 0; c < p; ++c) {
                const double dv = std::abs(packing.elements[i][c] - packing.elements[j][c]);
                if (dv == 1.0)
                    ++ones;
                else if (dv == 2.0)
                    ++twos;
            }
            if (static_cast<double>(ones) + static_cast<double>(twos) * two_q < sd / 4.0)
                exact_ok = false;
            const double sep = lq_norm(a * (packing.elements[i] - packing.elements[j]), q);
            sep_min = std::min(sep_min, sep);
            if (sep < required * (1.0 - 1e-12))
                float_ok = false;
            const double kl = static_cast<double>(n) *
                              std::pow(empirical_norm(fitted[i] - fitted[j]), 2) / (2.0 * sigma * sigma);
            kl_max = std::max(kl_max, kl);
            if (kl > nominal)
                ++over_nominal;
            const double ceiling = static_cast<double>(n) *
                                   std::pow(fitted_norm[i] + fitted_norm[j], 2) / (2.0 * sigma * sigma);
            if (kl > ceiling * (1.0 + 1e-12))
                rigorous_ok = false;
        }
    }

    report.records = parallel_records(cfg.replicates, opts.threads, [&](std::int64_t r) {
        Philox pick(cfg.seed, replicate_stream(streams::beta, r));
        const auto truth = static_cast<std::size_t>(pick.below(k));
        const Vector y = fitted[truth] + generate_noise(cfg.noise, n, cfg.seed,
                                                        replicate_stream(streams::noise, r));
        std::size_t best = 0;
        double best_dist = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < k; ++i) {
            const double dist = (y - fitted[i]).squaredNorm();
            if (dist < best_dist) {
                best_dist = dist;
                best = i;
            }
        }
        return Json{{"replicate", r}, {"true_index", truth}, {"decoded_index", best},
                    {"error", best != truth}};
    });

    auto &agg = report.aggregates;
    agg["packing_size"] = k;
    agg["packing_complete"] = packing.complete;
    agg["packing_valid"] = verify_packing(packing);
    agg["log_cardinality_ratio"] = k > 1 ? std::log(static_cast<double>(k)) / (sd * log_eps) : 0.0;
    agg["alpha"] = cfg.alpha;
    agg["radius"] = a;
    agg["theta_max_1"] = theta_max1;
    agg["psi"] = psi;
    agg["separation_required"] = required;
    agg["separation_min"] = k > 1 ? Json(sep_min) : Json(nullptr);
    agg["separation_exact_ok"] = exact_ok;
    agg["separation_ok"] = float_ok;
    agg["kl_max"] = kl_max;
    agg["kl_nominal_ceiling"] = nominal;
    agg["pairs_over_nominal"] = over_nominal;
    agg["kl_rigorous_ok"] = rigorous_ok;
    agg["decoder_error"] = frequency_json(count_flag(report.records, "error"));
    return report;
}

ExperimentReport run_experiment(const ExperimentConfig &cfg, const RunOptions &opts) {
    switch (cfg.scenario) {
    case Scenario::event: return event_probability(cfg, opts);
    case Scenario::oracle_lasso: return oracle_check_lasso(cfg, opts);
    case Scenario::oracle_slope: return oracle_check_slope(cfg, opts);
    case Scenario::adaptive: return adaptive_check(cfg, opts);
    case Scenario::rate: return rate_regression(cfg, cfg.grid, opts);
    case Scenario::subgaussian_noise: return subgaussian_noise_check(cfg, opts);
    case Scenario::lower_bound: {
        cfg.validate();
        const PackingSet packing =
            generate_packing(cfg.design.p, cfg.s, cfg.q, cfg.packing_target, cfg.seed);
        return lower_bound_sim(cfg, packing, opts);
    }
    }
    throw std::invalid_argument("unknown scenario");
}

} // namespace slk
