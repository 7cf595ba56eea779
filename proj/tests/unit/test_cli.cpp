#include "doctest.h"

#include "cli.hpp"

#include "slk/csv.hpp"
#include "slk/estimators.hpp"
#include "slk/experiments.hpp"
#include "slk/random_design.hpp"
#include "slk/tuning.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

using namespace slk;
namespace fs = std::filesystem;

namespace {

struct Invocation {
    int code;
    std::string out;
    std::string err;
};

Invocation run(const std::vector<std::string> &args) {
    std::ostringstream out, err;
    const int code = cli::run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Fresh scratch directory per test case.
struct Scratch {
    fs::path dir;
    explicit Scratch(const std::string &name) {
        dir = fs::temp_directory_path() / ("slk_cli_" + name + "_" + std::to_string(::getpid()));
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    ~Scratch() { fs::remove_all(dir); }
    std::string operator/(const std::string &f) const { return (dir / f).string(); }
};

struct Problem {
    DesignMatrix x;
    Vector beta;
    Vector y;
};

Problem orthonormal_problem(Index n, Index p, Index s, double amp, double noise) {
    DesignMatrix x = generate_design({DesignKind::orthonormal, n, p, std::nullopt, NormalizeMode::none}, 4);
    Vector beta = generate_sparse_beta(p, s, amp, 4).beta;
    Vector y = x.data() * beta;
    if (noise > 0)
        y += generate_noise({NoiseKind::gaussian, noise}, n, 4);
    return {std::move(x), std::move(beta), std::move(y)};
}

} // namespace

TEST_CASE("weights subcommand") {
    const Invocation r = run({"weights", "--n", "100", "--p", "5", "--sigma", "1", "--a", "10.83"});
    REQUIRE(r.code == 0);
    std::istringstream in(r.out);
    const Matrix printed = parse_matrix_csv(in);
    REQUIRE(printed.rows() == 5);
    const WeightVector lib = slope_weights(100, 5, 1.0, 10.83);
    for (Index j = 0; j < 5; ++j) {
        CHECK(printed(j, 0) == lib[j]);
        if (j > 0)
            CHECK(printed(j, 0) <= printed(j - 1, 0));
    }
    CHECK(printed(4, 0) == doctest::Approx(10.83 * std::sqrt(std::log(2.0) / 100)).epsilon(1e-15));

    const Vector golden = read_vector_csv(std::string(SLK_GOLDEN_DIR) + "/weights_n100_p5_sigma1_a10.83.csv");
    for (Index j = 0; j < 5; ++j)
        CHECK(std::abs(printed(j, 0) - golden[j]) <= 4e-16 * golden[j]);

    CHECK(run({"weights", "--n", "0", "--p", "5", "--sigma", "1", "--a", "10"}).code == 1);
    CHECK(run({"weights", "--n", "10", "--p", "5", "--sigma", "nan", "--a", "10"}).code == 1);
    CHECK(run({"weights", "--n", "10", "--p", "5", "--sigma", "1"}).code == 1);
    CHECK(run({"weights", "--n", "10", "--p", "5", "--sigma", "1", "--a", "x"}).code == 1);
}

TEST_CASE("fit subcommand") {
    Scratch tmp("fit");
    const Problem pr = orthonormal_problem(40, 20, 3, 2.0, 0.3);
    write_matrix_csv(tmp / "X.csv", pr.x.data());
    write_vector_csv(tmp / "y.csv", pr.y);

    const Invocation ok = run({"fit", "--estimator", "lasso", "--design", tmp / "X.csv", "--response",
                               tmp / "y.csv", "--lambda", "0.5", "--out", tmp / "r.json"});
    REQUIRE(ok.code == 0);
    const Json j = Json::parse(slurp(tmp / "r.json"));
    CHECK(j.at("schema_version") == 1);
    CHECK(j.at("converged").get<bool>());
    CHECK(j.at("tuning").at("lambda").get<double>() == 0.5);
    const FitResult lib = fit_lasso(pr.x, pr.y, LassoConfig{.lambda = 0.5});
    const auto coef = j.at("coefficients").get<std::vector<double>>();
    REQUIRE(coef.size() == 20);
    for (Index k = 0; k < 20; ++k)
        CHECK(coef[static_cast<std::size_t>(k)] == lib.coefficients[k]);

    SUBCASE("sparsity-aware lambda is echoed") {
        const Invocation r = run({"fit", "--estimator", "lasso", "--design", tmp / "X.csv", "--response",
                                  tmp / "y.csv", "--sigma", "0.3", "--sparsity", "3"});
        REQUIRE(r.code == 0);
        const Json o = Json::parse(r.out);
        TuningContext ctx{.s = 3, .sigma = 0.3, .n = 40, .p = 20};
        CHECK(o.at("tuning").at("lambda").get<double>() == lasso_tuning_lambda(ctx));
        CHECK(o.at("tuning").at("source") == "sparsity-aware");
    }

    SUBCASE("slope weights come from the library rule") {
        const Invocation r = run({"fit", "--estimator", "slope", "--design", tmp / "X.csv", "--response",
                                  tmp / "y.csv", "--sigma", "1", "--a", "10.83"});
        REQUIRE(r.code == 0);
        const auto w = Json::parse(r.out).at("tuning").at("weights").get<std::vector<double>>();
        const WeightVector lib_w = slope_weights(40, 20, 1.0, 10.83);
        REQUIRE(w.size() == 20);
        for (Index k = 0; k < 20; ++k)
            CHECK(w[static_cast<std::size_t>(k)] == lib_w[k]);
    }

    SUBCASE("slope weights file") {
        write_vector_csv(tmp / "w.csv", Vector::LinSpaced(20, 1.0, 0.1));
        CHECK(run({"fit", "--estimator", "slope", "--design", tmp / "X.csv", "--response", tmp / "y.csv",
                   "--weights", tmp / "w.csv"})
                  .code == 0);
        write_vector_csv(tmp / "bad_w.csv", Vector::LinSpaced(20, 0.1, 1.0));
        CHECK(run({"fit", "--estimator", "slope", "--design", tmp / "X.csv", "--response", tmp / "y.csv",
                   "--weights", tmp / "bad_w.csv"})
                  .code == 2);
    }

    SUBCASE("exit code matrix") {
        write_vector_csv(tmp / "short.csv", pr.y.head(39));
        CHECK(run({"fit", "--estimator", "lasso", "--design", tmp / "X.csv", "--response",
                   tmp / "short.csv", "--lambda", "0.5"})
                  .code == 2);
        CHECK(run({"fit", "--estimator", "lasso", "--design", tmp / "missing.csv", "--response",
                   tmp / "y.csv", "--lambda", "0.5"})
                  .code == 2);
        std::ofstream(tmp / "nan.csv") << "1,2\nnan,4\n";
        CHECK(run({"fit", "--estimator", "lasso", "--design", tmp / "nan.csv", "--response",
                   tmp / "y.csv", "--lambda", "0.5"})
                  .code == 2);
        std::ofstream(tmp / "ragged.csv") << "1,2\n3\n";
        CHECK(run({"fit", "--estimator", "lasso", "--design", tmp / "ragged.csv", "--response",
                   tmp / "y.csv", "--lambda", "0.5"})
                  .code == 2);
        CHECK(run({"fit", "--estimator", "lasso", "--design", tmp / "X.csv", "--response", tmp / "y.csv"})
                  .code == 1);
        CHECK(run({"fit", "--estimator", "slope", "--design", tmp / "X.csv", "--response", tmp / "y.csv",
                   "--sigma", "1"})
                  .code == 1);
        CHECK(run({"fit", "--estimator", "ridge", "--design", tmp / "X.csv", "--response", tmp / "y.csv",
                   "--lambda", "1"})
                  .code == 1);
        CHECK(run({"fit", "--estimator", "lasso", "--design", tmp / "X.csv", "--response", tmp / "y.csv",
                   "--lambda", "1", "--frobnicate"})
                  .code == 1);
        CHECK(run({"fit", "--estimator", "lasso", "--design", tmp / "X.csv", "--response", tmp / "y.csv",
                   "--lambda", "-1"})
                  .code == 1);
        CHECK(run({"fit", "--estimator", "lasso", "--design", tmp / "X.csv", "--response", tmp / "y.csv",
                   "--sigma", "1", "--sparsity", "3", "--gamma", "1.5"})
                  .code == 1);
        CHECK(run({}).code == 1);
        CHECK(run({"--help"}).code == 0);
    }

    SUBCASE("non-convergence writes a partial result") {
        const Invocation r = run({"fit", "--estimator", "lasso", "--design", tmp / "X.csv", "--response",
                                  tmp / "y.csv", "--lambda", "0.01", "--max-iters", "1", "--gap-tol",
                                  "1e-300", "--out", tmp / "partial.json"});
        CHECK(r.code == 3);
        const Json o = Json::parse(slurp(tmp / "partial.json"));
        CHECK_FALSE(o.at("converged").get<bool>());
        CHECK(o.at("iterations").get<int>() == 1);
    }
}

TEST_CASE("fit output is byte-identical across runs") {
    Scratch tmp("repeat");
    const Problem pr = orthonormal_problem(30, 10, 2, 1.0, 0.5);
    write_matrix_csv(tmp / "X.csv", pr.x.data());
    write_vector_csv(tmp / "y.csv", pr.y);
    for (const char *est : {"lasso", "slope"}) {
        std::vector<std::string> args{"fit", "--estimator", est, "--design", tmp / "X.csv", "--response",
                                      tmp / "y.csv", "--sigma", "0.5", "--sparsity", "2", "--a", "11"};
        const Invocation a = run(args), b = run(args);
        CHECK(a.code == 0);
        CHECK(a.out == b.out);
    }
}

TEST_CASE("adapt subcommand") {
    Scratch tmp("adapt");
    const Index n = 128, p = 64;
    const Problem pr = orthonormal_problem(n, p, 4, 10.0 * adaptive_lambda(1, 1.0, n, p), 0.0);
    write_matrix_csv(tmp / "X.csv", pr.x.data());
    write_vector_csv(tmp / "y.csv", pr.y);
    const std::vector<std::string> base{"adapt", "--design", tmp / "X.csv", "--response", tmp / "y.csv",
                                        "--sigma", "1", "--s-star", "8"};

    auto args = base;
    args.insert(args.end(), {"--theta-star", "1"});
    const Invocation r = run(args);
    REQUIRE(r.code == 0);
    const Json j = Json::parse(r.out);
    CHECK(j.at("s_hat") == 2);
    CHECK(j.at("m_hat") == 2);
    CHECK(j.at("metric") == "prediction");
    CHECK(r.err.find("theta-star") == std::string::npos);

    const Invocation warned = run(base);
    CHECK(warned.code == 0);
    CHECK(warned.err.find("--theta-star not given") != std::string::npos);
    CHECK(Json::parse(warned.out).at("theta_star").get<double>() == 1.0);

    args = base;
    args.insert(args.end(), {"--metric", "l2", "--theta-star", "1"});
    const Json l2 = Json::parse(run(args).out);
    CHECK(l2.at("metric") == "l2");
    CHECK(l2.at("q").get<double>() == 2.0);
    CHECK(l2.at("c0_constant").get<double>() == doctest::Approx(49 * kDeviationConstant / 4));

    args = base;
    args[8] = "1";
    CHECK(run(args).code == 1);
    args = base;
    args.insert(args.end(), {"--metric", "linf"});
    CHECK(run(args).code == 1);
}

TEST_CASE("certify subcommand") {
    Scratch tmp("certify");
    const DesignMatrix x = generate_design({DesignKind::gaussian_isotropic, 30, 6, std::nullopt,
                                            NormalizeMode::rescale},
                                           9);
    write_matrix_csv(tmp / "X.csv", x.data());
    for (const char *cond : {"re", "sre", "wre"}) {
        const Invocation r = run({"certify", "--design", tmp / "X.csv", "--condition", cond, "--s", "2",
                                  "--c0", "1", "--budget", "20", "--seed", "3"});
        REQUIRE(r.code == 0);
        const Json j = Json::parse(r.out);
        CHECK(j.at("lower").get<double>() <= j.at("upper").get<double>());
        CHECK(j.at("lower").get<double>() >= 0.0);
        CHECK(j.at("witness").size() == 6);
        const Invocation again = run({"certify", "--design", tmp / "X.csv", "--condition", cond, "--s",
                                      "2", "--c0", "1", "--budget", "20", "--seed", "3"});
        CHECK(again.out == r.out);
    }
    const Invocation ev = run({"certify", "--design", tmp / "X.csv", "--condition", "sparse-eig", "--s", "2"});
    REQUIRE(ev.code == 0);
    const Json j = Json::parse(ev.out);
    CHECK(j.at("theta_min").get<double>() <= j.at("theta_max").get<double>());
    CHECK(run({"certify", "--design", tmp / "X.csv", "--condition", "sparse-eig", "--s", "3", "--budget",
               "5"})
              .code == 1);
    CHECK(run({"certify", "--design", tmp / "X.csv", "--condition", "ore", "--s", "2"}).code == 1);
    CHECK(run({"certify", "--design", tmp / "X.csv", "--condition", "sre", "--s", "9"}).code == 1);
}

TEST_CASE("simulate subcommand") {
    Scratch tmp("simulate");
    {
        std::ofstream cfg(tmp / "event.json");
        cfg << R"({"design": {"kind": "gaussian-isotropic", "n": 30, "p": 12, "normalize": "rescale"},
                   "s": 2, "directions": 3})";
    }
    const std::vector<std::string> base{"simulate", "--scenario", "event", "--config", tmp / "event.json",
                                        "--replicates", "40", "--seed", "5"};
    auto one = base;
    one.insert(one.end(), {"--threads", "1", "--out", tmp / "a.json", "--csv", tmp / "a.csv"});
    auto four = base;
    four.insert(four.end(), {"--threads", "4", "--out", tmp / "b.json", "--csv", tmp / "b.csv"});
    REQUIRE(run(one).code == 0);
    REQUIRE(run(four).code == 0);
    CHECK(slurp(tmp / "a.json") == slurp(tmp / "b.json"));
    CHECK(slurp(tmp / "a.csv") == slurp(tmp / "b.csv"));
    const Json j = Json::parse(slurp(tmp / "a.json"));
    CHECK(j.at("schema_version") == 1);
    CHECK(j.at("config").at("seed") == 5);
    CHECK(j.at("records").size() == 40);

    ::setenv("SLK_SEED", "99", 1);
    const Invocation env = run(base);
    ::unsetenv("SLK_SEED");
    REQUIRE(env.code == 0);
    CHECK(Json::parse(env.out).at("config").at("seed") == 99);
    ::setenv("SLK_SEED", "abc", 1);
    CHECK(run(base).code == 1);
    ::unsetenv("SLK_SEED");

    auto emit = base;
    emit.insert(emit.end(), {"--emit-design", tmp / "design.csv"});
    REQUIRE(run(emit).code == 0);
    CHECK(read_matrix_csv(tmp / "design.csv").cols() == 12);

    std::ofstream(tmp / "broken.json") << "{ not json";
    CHECK(run({"simulate", "--config", tmp / "broken.json"}).code == 2);
    CHECK(run({"simulate", "--config", tmp / "absent.json"}).code == 2);
    std::ofstream(tmp / "typo.json") << R"({"replicatez": 3})";
    CHECK(run({"simulate", "--config", tmp / "typo.json"}).code == 1);
    CHECK(run({"simulate", "--scenario", "magic"}).code == 1);
    CHECK(run({"simulate", "--scenario", "event", "--replicates", "0"}).code == 1);
    CHECK(run({"simulate", "--scenario", "event", "--threads", "0"}).code == 1);
}
