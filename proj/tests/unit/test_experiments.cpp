#include "doctest.h"

#include "slk/estimators.hpp"
#include "slk/experiments.hpp"
#include "slk/tuning.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

using namespace slk;

namespace {

/// P(|z| <= 4 sqrt(log 2)) for standard normal z, evaluated with mpmath.
constexpr double kSingleCoordinateEvent = 0.999132221241302409;

ExperimentConfig base(Scenario scenario, DesignKind kind, Index n, Index p, Index s, int reps) {
    ExperimentConfig c;
    c.scenario = scenario;
    c.design = DesignSpec{kind, n, p, std::nullopt, NormalizeMode::rescale};
    c.s = s;
    c.replicates = reps;
    c.seed = 7;
    return c;
}

} // namespace

TEST_CASE("frequency and line fit helpers") {
    Frequency f{3, 12};
    CHECK(f.value() == doctest::Approx(0.25));
    CHECK(f.standard_error() == doctest::Approx(std::sqrt(0.25 * 0.75 / 12)));
    CHECK(Frequency{0, 0}.value() == 0.0);

    const RateFit line = fit_line({0, 1, 2, 3}, {1, 3, 5, 7});
    CHECK(line.slope == doctest::Approx(2.0));
    CHECK(line.intercept == doctest::Approx(1.0));
    CHECK(line.r_squared == doctest::Approx(1.0));
    CHECK(line.slope_se == doctest::Approx(0.0).epsilon(1e-12));
    CHECK_THROWS_AS(fit_line({1, 1}, {2, 3}), std::invalid_argument);
}

TEST_CASE("parallel records keep index order and surface the first error") {
    for (int threads : {1, 3, 8}) {
        const auto out = parallel_records(50, threads, [](std::int64_t i) { return Json(i * i); });
        REQUIRE(out.size() == 50);
        for (std::int64_t i = 0; i < 50; ++i)
            CHECK(out[static_cast<std::size_t>(i)].get<std::int64_t>() == i * i);
    }
    CHECK_THROWS_WITH(parallel_records(20, 4,
                                       [](std::int64_t i) -> Json {
                                           if (i % 7 == 3)
                                               throw std::runtime_error("bad " + std::to_string(i));
                                           return Json(i);
                                       }),
                      "bad 3");
}

TEST_CASE("config json round trip and validation") {
    ExperimentConfig c = base(Scenario::rate, DesignKind::orthonormal, 10, 5, 2, 3);
    c.grid = {{64, 32, 1}, {64, 32, 2}};
    c.theta = 0.8;
    c.seed = 123456789012345ull;
    const Json j = config_to_json(c);
    const ExperimentConfig back = config_from_json(j);
    CHECK(config_to_json(back).dump() == j.dump());
    CHECK(back.grid.size() == 2);
    CHECK(back.seed == c.seed);

    CHECK_THROWS_AS(config_from_json(Json{{"scenario", "event"}, {"replicate", 3}}),
                    std::invalid_argument);
    CHECK_THROWS_AS(config_from_json(Json{{"scenario", "nope"}}), std::invalid_argument);
    CHECK_THROWS_AS(config_from_json(Json{{"design", {{"n", "ten"}}}}), std::invalid_argument);

    ExperimentConfig bad = base(Scenario::event, DesignKind::gaussian_isotropic, 10, 5, 2, 0);
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad.replicates = 1;
    bad.s = 6;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("event scenario: single coordinate probability") {
    ExperimentConfig c = base(Scenario::event, DesignKind::orthonormal, 4, 1, 1, 20000);
    c.directions = 1;
    const ExperimentReport r = event_probability(c);
    const Json &e = r.aggregates.at("sorted_event");
    const double freq = e.at("frequency").get<double>();
    const double se = std::sqrt(kSingleCoordinateEvent * (1 - kSingleCoordinateEvent) / 20000.0);
    CHECK(std::abs(freq - kSingleCoordinateEvent) <= 4 * se + 1.0 / 20000);
    CHECK(r.records.size() == 20000);
}

TEST_CASE("event scenario: sorted event frequency above one half") {
    for (Index p : {10, 100}) {
        ExperimentConfig c = base(Scenario::event, DesignKind::gaussian_isotropic, 60, p, 3, 1000);
        c.directions = 6;
        const ExperimentReport r = event_probability(c);
        const Json &e = r.aggregates.at("sorted_event");
        CHECK(e.at("pass").get<bool>());
        CHECK(e.at("frequency").get<double>() >= 0.5);
        CHECK(r.aggregates.at("main_event").at("pass").get<bool>());
        CHECK(r.aggregates.at("design_normalized").get<bool>());
    }
}

TEST_CASE("event scenario: indicator invariant under sigma scaling") {
    ExperimentConfig c = base(Scenario::event, DesignKind::gaussian_isotropic, 40, 30, 2, 200);
    c.directions = 4;
    const ExperimentReport a = event_probability(c);
    c.noise.sigma = 3.5;
    const ExperimentReport b = event_probability(c);
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        CHECK(a.records[i].at("sorted_event") == b.records[i].at("sorted_event"));
        CHECK(a.records[i].at("max_sorted_ratio").get<double>() ==
              doctest::Approx(b.records[i].at("max_sorted_ratio").get<double>()).epsilon(1e-12));
    }
}

TEST_CASE("event scenario rejects non-gaussian noise") {
    ExperimentConfig c = base(Scenario::event, DesignKind::gaussian_isotropic, 20, 5, 1, 5);
    c.noise.kind = NoiseKind::rademacher;
    CHECK_THROWS_AS(event_probability(c), std::invalid_argument);
}

TEST_CASE("sampled directions") {
    Vector g(6);
    g << 0.1, -3.0, 2.0, 0.0, -0.5, 1.0;
    const auto dirs = sample_directions(g, 2, 9, 1, 2);
    REQUIRE(dirs.size() == 9);
    CHECK((dirs.back() - g).norm() == 0.0);
    // Sparse draws have at most s nonzeros; top-|g| draws align with sign(g).
    CHECK(l0_count(dirs[0]) <= 2);
    CHECK(dirs[3][1] == -1.0);
    CHECK(l0_count(dirs[3]) == 1);
    CHECK(l0_count(dirs[7]) == 2);
    CHECK(dirs[7][2] == 1.0);
    const auto again = sample_directions(g, 2, 9, 1, 2);
    for (std::size_t i = 0; i < dirs.size(); ++i)
        CHECK((dirs[i] - again[i]).norm() == 0.0);
}

TEST_CASE("subgaussian right-hand side") {
    const DesignMatrix x = generate_design({DesignKind::gaussian_isotropic, 30, 8, std::nullopt,
                                            NormalizeMode::rescale},
                                           3);
    CHECK(subgaussian_rhs(Vector::Zero(8), x, 1.0, 0.1) == 0.0);
    Vector u = Vector::LinSpaced(8, -1.0, 2.0);
    CHECK(subgaussian_rhs(u, x, 2.5, 0.1) == doctest::Approx(2.5 * subgaussian_rhs(u, x, 1.0, 0.1)));
    CHECK(subgaussian_rhs(u, x, 1.0, 0.01) >= subgaussian_rhs(u, x, 1.0, 0.1));
}

TEST_CASE("subgaussian noise scenario") {
    ExperimentConfig c = base(Scenario::subgaussian_noise, DesignKind::gaussian_isotropic, 200, 50,
                              3, 1000);
    c.delta0 = 0.1;
    c.directions = 4;
    c.noise.kind = NoiseKind::rademacher;
    const ExperimentReport r = subgaussian_noise_check(c);
    CHECK(r.aggregates.at("subgaussian_event").at("pass").get<bool>());
    CHECK(r.aggregates.at("subgaussian_event").at("level").get<double>() == doctest::Approx(0.9));

    c.replicates = 50;
    c.noise.kind = NoiseKind::bounded;
    const ExperimentReport a = subgaussian_noise_check(c);
    c.noise.sigma = 4.0;
    const ExperimentReport b = subgaussian_noise_check(c);
    for (std::size_t i = 0; i < a.records.size(); ++i)
        CHECK(a.records[i].at("inequality_holds") == b.records[i].at("inequality_holds"));

    c.noise.kind = NoiseKind::gaussian;
    CHECK_THROWS_AS(subgaussian_noise_check(c), std::invalid_argument);
}

TEST_CASE("noiseless orthonormal lasso stays within the prediction bound") {
    const Index n = 80, p = 40, s = 3;
    const DesignMatrix x = generate_design({DesignKind::orthonormal, n, p, std::nullopt,
                                            NormalizeMode::check},
                                           11);
    for (double amp : {0.01, 0.5, 2.0, 30.0}) {
        const Vector beta = generate_sparse_beta(p, s, amp, 5).beta;
        TuningContext ctx{.s = s, .sigma = 1.0, .n = n, .p = p};
        const double lambda = lasso_tuning_lambda(ctx);
        const FitResult fit = fit_lasso(x, x.data() * beta, LassoConfig{.lambda = lambda, .gap_tol = 1e-14});
        const double pred = std::pow(empirical_norm(x.data() * (fit.coefficients - beta)), 2);
        CHECK(pred <= 49.0 / 16.0 * lambda * lambda * s);
    }
}

TEST_CASE("oracle lasso scenario") {
    ExperimentConfig c = base(Scenario::oracle_lasso, DesignKind::orthonormal, 200, 120, 3, 40);
    c.amplitude = 2.0;
    c.design.normalize = NormalizeMode::check;
    const ExperimentReport r = oracle_check_lasso(c);
    const Json &agg = r.aggregates;
    CHECK(agg.at("theta").get<double>() == 1.0);
    CHECK(agg.at("theta_source") == "orthonormal");
    for (const char *key : {"pred_violation", "l1_violation", "l1_5_violation", "l2_violation",
                            "soi_violation", "expectation"})
        CHECK(agg.at(key).at("pass").get<bool>());
    CHECK(agg.at("nonconverged").get<int>() == 0);
    const double lambda = agg.at("lambda").get<double>();
    CHECK(agg.at("pred_rhs").get<double>() == doctest::Approx(49.0 / 16.0 * lambda * lambda * 3));
    CHECK(agg.at("l1_violation").at("rhs").get<double>() == doctest::Approx(49.0 / 8.0 * lambda * 3));
    CHECK(agg.at("violation_probability_bound").get<double>() ==
          doctest::Approx(0.5 * std::pow(3.0 / (2 * std::numbers::e * 120), 3)));

    ExperimentConfig given = c;
    given.design.kind = DesignKind::gaussian_isotropic;
    given.design.normalize = NormalizeMode::rescale;
    given.theta = 0.5;
    given.replicates = 3;
    CHECK(oracle_check_lasso(given).aggregates.at("theta_source") == "config");
}

TEST_CASE("oracle slope scenario") {
    ExperimentConfig c = base(Scenario::oracle_slope, DesignKind::orthonormal, 150, 100, 3, 40);
    c.amplitude = 2.0;
    c.design.normalize = NormalizeMode::check;
    const ExperimentReport r = oracle_check_slope(c);
    const Json &agg = r.aggregates;
    CHECK(agg.at("weight_bracket_failures").get<int>() == 0);
    for (const char *key : {"soi_violation", "sorted_l1_violation", "l2_violation",
                            "family_violation", "expectation_soi", "expectation_l2_sq"})
        CHECK(agg.at(key).at("pass").get<bool>());
    const double sum = agg.at("weights_head_sum_sq").get<double>();
    CHECK(agg.at("l2_sq_rhs").get<double>() == doctest::Approx(9.0 / 4.0 * sum));
    CHECK(agg.at("soi_rhs").get<double>() == doctest::Approx(49.0 / 16.0 * sum));
    // The balanced bound is an infimum over s' <= s and so never exceeds its s' = s term.
    for (const auto &rec : r.records)
        CHECK(rec.at("balanced_rhs").get<double>() > 0.0);

    c.a_constant = 6.0;
    CHECK_THROWS_AS(oracle_check_slope(c), std::invalid_argument);
}

TEST_CASE("rate regression") {
    ExperimentConfig c = base(Scenario::rate, DesignKind::orthonormal, 1, 1, 1, 10);
    c.design.normalize = NormalizeMode::check;
    c.amplitude = 5.0;
    const std::vector<GridPoint> grid{{512, 128, 1}, {256, 128, 2}, {256, 128, 4}, {128, 128, 8}};
    for (const char *est : {"slope", "lasso"}) {
        c.estimator = est;
        const ExperimentReport r = rate_regression(c, grid);
        const double slope = r.aggregates.at("slope").get<double>();
        CHECK(slope > 0.8);
        CHECK(slope < 1.2);
        CHECK(r.records.size() == 40);
        CHECK(r.aggregates.at("points").size() == 4);
    }
    CHECK_THROWS_AS(rate_regression(c, {{128, 128, 1}, {128, 128, 2}}), std::invalid_argument);
    CHECK_THROWS_AS(rate_regression(c, {{512, 64, 1}, {500, 64, 1}, {490, 64, 1}, {480, 64, 1}}),
                    std::invalid_argument);
}

TEST_CASE("universal lambda pays a log factor over the sparsity-aware rule") {
    ExperimentConfig c = base(Scenario::rate, DesignKind::orthonormal, 1, 1, 1, 8);
    c.design.normalize = NormalizeMode::check;
    c.amplitude = 5.0;
    const std::vector<GridPoint> grid{{1024, 256, 4}, {512, 256, 8}, {256, 256, 16}, {256, 256, 32}};
    c.estimator = "lasso";
    const double aware = rate_regression(c, grid).aggregates.at("intercept").get<double>();
    c.estimator = "lasso-universal";
    const double universal = rate_regression(c, grid).aggregates.at("intercept").get<double>();
    CHECK(universal > aware);
}

TEST_CASE("adaptive scenario") {
    ExperimentConfig c = base(Scenario::adaptive, DesignKind::orthonormal, 128, 128, 2, 10);
    c.design.normalize = NormalizeMode::check;
    c.s_star = 8;
    c.amplitude = 3.0;
    const ExperimentReport r = adaptive_check(c);
    CHECK(r.aggregates.at("s_hat_le_s").at("pass").get<bool>());
    std::int64_t total = 0;
    for (const auto &h : r.aggregates.at("m_hat_counts"))
        total += h.at("count").get<std::int64_t>();
    CHECK(total == 10);

    c.metric = "l2";
    const ExperimentReport l2 = adaptive_check(c);
    CHECK(l2.aggregates.at("c0_constant").get<double>() == doctest::Approx(49 * kDeviationConstant / 4));

    c.s_star = 2;
    c.metric = "prediction";
    for (const auto &rec : adaptive_check(c).records)
        CHECK(rec.at("s_hat").get<int>() == 2);

    c.s_star = 30;
    CHECK_THROWS_AS(adaptive_check(c), std::invalid_argument);
}

TEST_CASE("lower bound simulation") {
    ExperimentConfig c = base(Scenario::lower_bound, DesignKind::gaussian_isotropic, 50, 32, 4, 30);
    const PackingSet packing = generate_packing(32, 4, 2.0, 12, 3);
    const ExperimentReport r = lower_bound_sim(c, packing);
    const Json &agg = r.aggregates;
    CHECK(agg.at("separation_exact_ok").get<bool>());
    CHECK(agg.at("separation_ok").get<bool>());
    CHECK(agg.at("kl_rigorous_ok").get<bool>());
    CHECK(agg.at("packing_valid").get<bool>());
    CHECK(agg.at("separation_min").get<double>() >= agg.at("separation_required").get<double>() * (1 - 1e-12));
    const double psi = std::sqrt(4.0) * std::sqrt(std::log(std::numbers::e * 32 / 4) / 50);
    CHECK(agg.at("psi").get<double>() == doctest::Approx(psi));

    PackingSet single;
    single.s = 4;
    single.q = 2.0;
    single.elements = {packing.elements.front()};
    const ExperimentReport one = lower_bound_sim(c, single);
    CHECK(one.aggregates.at("decoder_error").at("count").get<int>() == 0);

    PackingSet empty;
    CHECK_THROWS_AS(lower_bound_sim(c, empty), std::invalid_argument);
}

TEST_CASE("reports are identical across thread counts") {
    std::vector<ExperimentConfig> configs;
    {
        ExperimentConfig c = base(Scenario::event, DesignKind::gaussian_isotropic, 30, 20, 2, 40);
        c.directions = 5;
        configs.push_back(c);
    }
    {
        ExperimentConfig c = base(Scenario::oracle_slope, DesignKind::orthonormal, 60, 40, 2, 12);
        c.design.normalize = NormalizeMode::check;
        configs.push_back(c);
    }
    {
        ExperimentConfig c = base(Scenario::lower_bound, DesignKind::rademacher, 40, 24, 3, 25);
        c.packing_target = 6;
        configs.push_back(c);
    }
    for (const auto &c : configs) {
        const std::string one = run_experiment(c, {.threads = 1}).to_json().dump();
        const std::string four = run_experiment(c, {.threads = 4}).to_json().dump();
        CHECK(one == four);
    }
}

TEST_CASE("csv output") {
    ExperimentConfig c = base(Scenario::event, DesignKind::gaussian_isotropic, 20, 6, 1, 3);
    c.directions = 2;
    const ExperimentReport r = event_probability(c);
    std::ostringstream out;
    r.write_csv(out);
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    CHECK(line == "replicate,max_sorted_ratio,sorted_event,max_lhs_over_rhs,inequality_holds");
    int rows = 0;
    while (std::getline(in, line))
        ++rows;
    CHECK(rows == 3);
    const Json j = r.to_json();
    CHECK(j.at("schema_version") == 1);
    CHECK(j.at("records").size() == 3);
}
