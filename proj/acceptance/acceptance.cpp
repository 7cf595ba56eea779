// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include "cli.hpp"
#include "oracles.hpp"

#include "slk/conditions.hpp"
#include "slk/core.hpp"
#include "slk/estimators.hpp"
#include "slk/experiments.hpp"
#include "slk/prox.hpp"
#include "slk/random_design.hpp"
#include "slk/rng.hpp"
#include "slk/tuning.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

using namespace slk;

namespace {

struct Outcome {
    bool pass;
    std::string detail;
};

int worker_count() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

std::string fmt(double v) {
    std::ostringstream s;
    s.precision(4);
    s << v;
    return s.str();
}

double freq(const Json &check) { return check.at("frequency").get<double>(); }

Vector random_weights(Philox &rng, Index p) {
    std::vector<double> w(static_cast<std::size_t>(p));
    for (auto &x : w)
        x = 3.0 * rng.uniform();
    std::sort(w.begin(), w.end(), std::greater<>());
    return Eigen::Map<Vector>(w.data(), p);
}

// 1
Outcome prox_oracle_equivalence() {
    const auto start = std::chrono::steady_clock::now();
    Philox rng(2024, streams::search);
    double worst = 0.0;
    for (int t = 0; t < 1000; ++t) {
        const Index p = 2 + static_cast<Index>(rng.below(7));
        Vector v(p);
        for (Index j = 0; j < p; ++j)
            v[j] = 4.0 * rng.normal();
        // Some ties in |v| exercise the pooling path.
        if (p > 2 && rng.below(3) == 0)
            v[1] = -v[0];
        const Vector w = random_weights(rng, p);
        const double step = 0.1 + 2.0 * rng.uniform();
        const Vector fast = prox_sorted_l1({v, WeightVector(w), step});
        const Vector ref = oracle::prox_sorted_l1(v, w, step);
        worst = std::max(worst, (fast - ref).lpNorm<Eigen::Infinity>());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return {worst <= 1e-6 && secs < 60.0,
            "max l_inf gap " + fmt(worst) + " over 1000 instances in " + fmt(secs) + " s"};
}

// 2
Outcome solver_correctness() {
    double worst_lasso = 0.0, worst_slope = 0.0;
    bool all_converged = true;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const DesignMatrix x = generate_design({DesignKind::orthonormal, 64, 32, std::nullopt,
                                                NormalizeMode::none},
                                               seed);
        Philox rng(seed, streams::search);
        const Vector beta = generate_sparse_beta(32, 1 + static_cast<Index>(rng.below(6)),
                                                 0.2 + rng.uniform(), seed)
                                .beta;
        const Vector y = x.data() * beta + generate_noise({NoiseKind::gaussian, 0.3}, 64, seed);
        const double lambda = 0.02 + 0.3 * rng.uniform();
        const FitResult lasso = fit_lasso(x, y, LassoConfig{.lambda = lambda});
        const FitResult slope = fit_slope(x, y, SlopeConfig{.weights = WeightVector::constant(32, lambda)});
        all_converged = all_converged && lasso.converged && slope.converged;
        worst_lasso = std::max(worst_lasso, (lasso.coefficients -
                                             oracle::lasso_orthonormal(x.data(), y, lambda))
                                                .lpNorm<Eigen::Infinity>());
        worst_slope = std::max(worst_slope,
                               (slope.coefficients - lasso.coefficients).lpNorm<Eigen::Infinity>());
    }
    return {all_converged && worst_lasso <= 1e-8 && worst_slope <= 1e-6,
            "lasso vs closed form " + fmt(worst_lasso) + ", constant-weight slope vs lasso " +
                fmt(worst_slope)};
}

ExperimentConfig oracle_config(Scenario scenario) {
    ExperimentConfig c;
    c.scenario = scenario;
    // n = p: an orthonormal design needs n >= p (n = 300 < p = 500 admits none).
    c.design = DesignSpec{DesignKind::orthonormal, 500, 500, std::nullopt, NormalizeMode::check};
    c.noise = {NoiseKind::gaussian, 1.0};
    c.s = 3;
    c.replicates = 500;
    c.amplitude = 3.0;
    c.seed = 31;
    return c;
}

struct LassoRun {
    ExperimentReport report;
    double seconds;
};

const LassoRun &lasso_run() {
    static const LassoRun run = [] {
        const auto start = std::chrono::steady_clock::now();
        ExperimentReport r = oracle_check_lasso(oracle_config(Scenario::oracle_lasso), {worker_count()});
        return LassoRun{std::move(r),
                        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()};
    }();
    return run;
}

// 3
Outcome lasso_prediction_bound() {
    const auto &run = lasso_run();
    const Json &agg = run.report.aggregates;
    const Json &check = agg.at("pred_violation");
    const bool ok = freq(check) <= 0.01 && check.at("pass").get<bool>() && run.seconds < 300.0 &&
                    agg.at("nonconverged").get<int>() == 0;
    return {ok, "violation frequency " + fmt(freq(check)) + " (bound " +
                    fmt(agg.at("violation_probability_bound").get<double>()) + "), lambda " +
                    fmt(agg.at("lambda").get<double>()) + ", " + fmt(run.seconds) + " s"};
}

// 4
Outcome lasso_lq_bound() {
    const Json &agg = lasso_run().report.aggregates;
    const double f1 = freq(agg.at("l1_violation"));
    const double f2 = freq(agg.at("l2_violation"));
    const bool ok = f1 <= 0.01 && f2 <= 0.01 && agg.at("l1_violation").at("pass").get<bool>() &&
                    agg.at("l2_violation").at("pass").get<bool>();
    return {ok, "l1 violation frequency " + fmt(f1) + ", l2 violation frequency " + fmt(f2)};
}

// 5
Outcome slope_l2_bound() {
    ExperimentConfig c = oracle_config(Scenario::oracle_slope);
    c.a_constant = 2.0 * kDeviationConstant;
    const ExperimentReport r = oracle_check_slope(c, {worker_count()});
    const Json &agg = r.aggregates;
    const double f = freq(agg.at("l2_violation"));
    // Bracket over every s <= p for several (n, p, sigma, A).
    std::int64_t failures = agg.at("weight_bracket_failures").get<std::int64_t>();
    std::int64_t checked = 500;
    for (Index p : {1, 2, 7, 100, 1000, 2000}) {
        for (double a : {2.0 * kDeviationConstant, 25.0}) {
            const double sigma = 0.7, n = 123.0;
            const WeightVector w = slope_weights(123, p, sigma, a);
            double sum = 0.0;
            for (Index s = 1; s <= p; ++s) {
                sum += w[s - 1] * w[s - 1];
                const StirlingBracket b = stirling_bracket(s, p);
                const double scale = a * a * sigma * sigma / n;
                if (scale * b.lower > sum * (1 + 1e-12) || sum > scale * b.upper * (1 + 1e-12))
                    ++failures;
                ++checked;
            }
        }
    }
    const bool ok = f <= 0.01 && agg.at("l2_violation").at("pass").get<bool>() && failures == 0 &&
                    agg.at("nonconverged").get<int>() == 0;
    return {ok, "l2^2 violation frequency " + fmt(f) + ", weight bracket failures " +
                    std::to_string(failures) + " of " + std::to_string(checked)};
}

// 6
Outcome adaptive_sparsity_control() {
    ExperimentConfig c;
    c.scenario = Scenario::adaptive;
    c.design = DesignSpec{DesignKind::gaussian_isotropic, 400, 512, std::nullopt, NormalizeMode::rescale};
    c.s = 4;
    c.s_star = 16;
    c.theta_star = 1.0;
    c.amplitude = 3.0;
    c.replicates = 200;
    c.seed = 6;
    const ExperimentReport r = adaptive_check(c, {worker_count()});
    const double f = freq(r.aggregates.at("s_hat_le_s"));
    return {f >= 0.99, "frequency of s_hat <= s is " + fmt(f) + " over 200 replicates"};
}

// 7
Outcome sorted_event() {
    const auto start = std::chrono::steady_clock::now();
    bool ok = true;
    std::string detail;
    for (Index p : {10, 100, 1000}) {
        ExperimentConfig c;
        c.scenario = Scenario::event;
        c.design = DesignSpec{DesignKind::gaussian_isotropic, 100, p, std::nullopt, NormalizeMode::rescale};
        c.replicates = 10000;
        c.directions = 1;
        c.seed = 70 + static_cast<std::uint64_t>(p);
        const ExperimentReport r = event_probability(c, {worker_count()});
        const Json &e = r.aggregates.at("sorted_event");
        ok = ok && e.at("pass").get<bool>();
        detail += "p=" + std::to_string(p) + ": " + fmt(freq(e)) + "  ";
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return {ok && secs < 120.0, detail + "(" + fmt(secs) + " s)"};
}

// 8
Outcome rate_optimality() {
    ExperimentConfig c;
    c.design = DesignSpec{DesignKind::orthonormal, 1, 1, std::nullopt, NormalizeMode::check};
    c.replicates = 100;
    c.amplitude = 5.0;
    c.seed = 8;
    const std::vector<GridPoint> grid{{4096, 1024, 2}, {2048, 1024, 4}, {1024, 1024, 8}, {1024, 1024, 16}};
    bool ok = true;
    std::string detail;
    for (const char *est : {"slope", "lasso"}) {
        c.estimator = est;
        const ExperimentReport r = rate_regression(c, grid, {worker_count()});
        const double slope = r.aggregates.at("slope").get<double>();
        ok = ok && slope >= 0.8 && slope <= 1.2 && r.aggregates.at("nonconverged").get<int>() == 0;
        detail += std::string(est) + " slope " + fmt(slope) + " (R^2 " +
                  fmt(r.aggregates.at("r_squared").get<double>()) + ")  ";
    }
    return {ok, detail};
}

// 9
Outcome stirling_exhaustive() {
    std::int64_t failures = 0, checked = 0;
    double worst_mid = 0.0;
    for (Index p = 1; p <= 2000; ++p) {
        long double direct = 0.0L;
        for (Index s = 1; s <= p; ++s) {
            direct += std::log(2.0L * static_cast<long double>(p) / static_cast<long double>(s));
            const StirlingBracket b = stirling_bracket(s, p);
            if (!(b.lower <= b.mid && b.mid <= b.upper))
                ++failures;
            worst_mid = std::max(worst_mid, static_cast<double>(std::abs(b.mid - direct) / direct));
            ++checked;
        }
    }
    return {failures == 0 && worst_mid <= 1e-12,
            std::to_string(checked) + " pairs, " + std::to_string(failures) +
                " failures, middle term relative error " + fmt(worst_mid)};
}

// 10
Outcome cone_chain() {
    int chain_failures = 0;
    double tightest = std::numeric_limits<double>::infinity();
    for (int d = 0; d < 50; ++d) {
        const Index p = 3 + d % 8;
        const Index s = 1 + d % 3;
        const DesignMatrix x = generate_design({DesignKind::gaussian_isotropic, p + 5, p, std::nullopt,
                                                NormalizeMode::rescale},
                                               static_cast<std::uint64_t>(d));
        const double c0 = 1.0;
        const double theta_bar = sparse_eigenvalues(x, s).theta_min;
        const SearchBudget budget{.restarts = 400, .iterations = 600, .seed = static_cast<std::uint64_t>(d)};
        const ConstantBracket kappa = cone_constant_bracket(x, ConeSpec{.kind = ConeKind::re, .s = s, .c0 = c0}, budget);
        const ConstantBracket theta = cone_constant_bracket(x, ConeSpec{.kind = ConeKind::sre, .s = s, .c0 = c0}, budget);
        // upper ends are attained values on each cone, resolved to the search tolerance
        if (theta_bar + 1e-3 < kappa.upper || kappa.upper + 1e-3 < theta.upper)
            ++chain_failures;
        tightest = std::min({tightest, theta_bar - kappa.upper, kappa.upper - theta.upper});
    }

    Philox rng(10, streams::directions);
    std::int64_t re_members = 0, sre_members = 0, counterexamples = 0;
    for (int t = 0; t < 100000; ++t) {
        const Index p = 3 + static_cast<Index>(rng.below(8));
        const Index s = 1 + static_cast<Index>(rng.below(3));
        const double c0 = 0.1 + 4.0 * rng.uniform();
        Vector v(p);
        const double tail = std::pow(10.0, -2.0 + 2.5 * rng.uniform());
        for (Index j = 0; j < p; ++j)
            v[j] = (j < s ? 1.0 : tail) * rng.normal();
        const ConeSpec re{.kind = ConeKind::re, .s = s, .c0 = c0};
        const ConeSpec sre{.kind = ConeKind::sre, .s = s, .c0 = c0};
        const ConeSpec wre{.kind = ConeKind::wre, .s = s, .c0 = 1.0 + c0,
                           .weights = slope_weights(100, p, 1.0, 2.0 * kDeviationConstant)};
        const bool in_re = cone_contains(v, re), in_sre = cone_contains(v, sre);
        re_members += in_re;
        sre_members += in_sre;
        if ((in_re && !in_sre) || (in_sre && !cone_contains(v, wre)))
            ++counterexamples;
    }
    return {chain_failures == 0 && counterexamples == 0,
            "chain failures " + std::to_string(chain_failures) + "/50 (min slack " + fmt(tightest) +
                "), inclusion counterexamples " + std::to_string(counterexamples) + " (RE members " +
                std::to_string(re_members) + ", SRE members " + std::to_string(sre_members) + ")"};
}

// 11
Outcome packing_validity() {
    bool all_valid = true;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        for (Index s : {1, 2, 4}) {
            const PackingSet set = generate_packing(32, s, seed % 2 ? 1.0 : 2.0, 8, seed);
            all_valid = all_valid && verify_packing(set);
        }
    }
    const PackingSet main = generate_packing(64, 4, 2.0, 16, 11);
    const bool ok = all_valid && verify_packing(main) && main.elements.size() >= 16 && main.complete;
    return {ok, "p=64 s=4 q=2 packing of size " + std::to_string(main.elements.size()) + " after " +
                    std::to_string(main.attempts) + " attempts; 30 other packings " +
                    (all_valid ? "valid" : "INVALID")};
}

// 12
Outcome sorted_norm_inequality() {
    Philox rng(12, streams::search);
    std::int64_t violations = 0;
    double worst = -std::numeric_limits<double>::infinity();
    for (int t = 0; t < 10000; ++t) {
        const Index p = 1 + static_cast<Index>(rng.below(50));
        const Index s = 1 + static_cast<Index>(rng.below(static_cast<std::uint64_t>(p)));
        const WeightVector w(random_weights(rng, p));
        const double tau = rng.uniform();
        Vector beta = Vector::Zero(p);
        for (Index j = 0; j < s; ++j)
            beta[static_cast<Index>(rng.below(static_cast<std::uint64_t>(p)))] = 3.0 * rng.normal();
        Vector hat(p);
        const double spread = std::pow(10.0, -3.0 + 4.0 * rng.uniform());
        for (Index j = 0; j < p; ++j)
            hat[j] = (rng.below(2) ? beta[j] : 0.0) + spread * rng.normal();
        const Vector u = hat - beta;
        const Vector us = rearrange_desc(u);
        double tail = 0.0;
        for (Index j = s; j < p; ++j)
            tail += w[j] * us[j];
        const double lhs = tau * sorted_l1_norm(u, w) + sorted_l1_norm(beta, w) - sorted_l1_norm(hat, w);
        const double rhs = (1.0 + tau) * w.head_l2(s) * u.norm() - (1.0 - tau) * tail;
        worst = std::max(worst, lhs - rhs);
        if (lhs > rhs + 1e-10)
            ++violations;
    }
    return {violations == 0, std::to_string(violations) + " violations in 10000 instances (max lhs-rhs " +
                                 fmt(worst) + ")"};
}

// 13
Outcome determinism() {
    const std::vector<Json> configs{
        {{"scenario", "event"}, {"design", {{"kind", "gaussian-isotropic"}, {"n", 40}, {"p", 30}, {"normalize", "rescale"}}}, {"s", 2}, {"directions", 4}},
        {{"scenario", "oracle-lasso"}, {"design", {{"kind", "orthonormal"}, {"n", 60}, {"p", 40}}}, {"s", 3}, {"amplitude", 2.0}},
        {{"scenario", "oracle-slope"}, {"design", {{"kind", "orthonormal"}, {"n", 60}, {"p", 40}}}, {"s", 3}, {"amplitude", 2.0}},
        {{"scenario", "adaptive"}, {"design", {{"kind", "rademacher"}, {"n", 80}, {"p", 64}}}, {"s", 2}, {"s_star", 8}, {"amplitude", 2.0}},
        {{"scenario", "rate"}, {"design", {{"kind", "orthonormal"}}}, {"estimator", "slope"}, {"amplitude", 4.0},
         {"grid", {{{"n", 256}, {"p", 64}, {"s", 1}}, {{"n", 128}, {"p", 64}, {"s", 2}}, {{"n", 64}, {"p", 64}, {"s", 4}}, {{"n", 64}, {"p", 64}, {"s", 8}}}}},
        {{"scenario", "lower-bound"}, {"design", {{"kind", "gaussian-isotropic"}, {"n", 50}, {"p", 32}, {"normalize", "rescale"}}}, {"s", 4}, {"packing_target", 8}},
        {{"scenario", "subgaussian-noise"}, {"design", {{"kind", "gaussian-isotropic"}, {"n", 50}, {"p", 20}, {"normalize", "rescale"}}}, {"noise", {{"kind", "rademacher"}, {"sigma", 1.0}}}, {"s", 2}, {"directions", 4}},
    };
    const std::string dir = std::filesystem::temp_directory_path().string();
    int identical = 0;
    std::string mismatched;
    for (std::size_t i = 0; i < configs.size(); ++i) {
        const std::string path = dir + "/slk_acceptance_cfg_" + std::to_string(i) + ".json";
        std::ofstream(path) << configs[i].dump();
        std::string first;
        bool same = true;
        for (const char *threads : {"1", "2", "5"}) {
            std::ostringstream out, err;
            const int code = cli::run_cli({"simulate", "--config", path, "--seed", "13", "--replicates",
                                           "12", "--threads", threads},
                                          out, err);
            if (code != 0) {
                same = false;
                break;
            }
            if (first.empty())
                first = out.str();
            else if (out.str() != first)
                same = false;
        }
        std::filesystem::remove(path);
        if (same)
            ++identical;
        else
            mismatched += configs[i].at("scenario").get<std::string>() + " ";
    }
    return {identical == static_cast<int>(configs.size()),
            std::to_string(identical) + "/" + std::to_string(configs.size()) +
                " scenarios byte-identical across 1, 2 and 5 threads" +
                (mismatched.empty() ? "" : "; differing: " + mismatched)};
}

} // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"prox oracle equivalence", prox_oracle_equivalence},
        {"solver correctness", solver_correctness},
        {"lasso prediction bound", lasso_prediction_bound},
        {"lasso l_q bounds", lasso_lq_bound},
        {"slope l2 bound and weight bracket", slope_l2_bound},
        {"adaptive sparsity control", adaptive_sparsity_control},
        {"sorted deviation event", sorted_event},
        {"rate exponent", rate_optimality},
        {"stirling bracket", stirling_exhaustive},
        {"cone constant chain and inclusions", cone_chain},
        {"packing validity", packing_validity},
        {"sorted-l1 inequality", sorted_norm_inequality},
        {"determinism across thread counts", determinism},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception &e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        failed += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << "  " << (i + 1) << ". " << criteria[i].first << ": "
                  << o.detail << std::endl;
    }
    std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size()
              << " criteria passed" << std::endl;
    return failed == 0 ? 0 : 1;
}
