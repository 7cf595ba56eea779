#include "cli.hpp"

#include "slk/adaptive.hpp"
#include "slk/conditions.hpp"
#include "slk/csv.hpp"
#include "slk/estimators.hpp"
#include "slk/experiments.hpp"
#include "slk/random_design.hpp"
#include "slk/rng.hpp"
#include "slk/tuning.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

namespace slk::cli {

namespace {

/// Raised for flag combinations CLI11 cannot express; maps to exit 1.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

Json vector_json(const Vector &v) {
    Json a = Json::array();
    for (Index i = 0; i < v.size(); ++i)
        a.push_back(v[i]);
    return a;
}

void emit(const std::string &path, const std::string &text, std::ostream &out) {
    if (path.empty() || path == "-") {
        out << text;
        return;
    }
    std::ofstream f(path, std::ios::binary);
    if (!f)
        throw DataError("cannot write " + path);
    f << text;
    if (!f)
        throw DataError("failed writing " + path);
}

std::string json_text(const Json &j) { return j.dump(2) + "\n"; }

DesignMatrix load_design(const std::string &path, std::ostream &err) {
    DesignMatrix x(read_matrix_csv(path));
    if (!x.normalized())
        err << "warning: design columns exceed unit empirical norm (max "
            << format_double(x.max_column_norm()) << "); the theoretical bounds assume <= 1\n";
    return x;
}

Json fit_json(const FitResult &fit) {
    return Json{{"coefficients", vector_json(fit.coefficients)},
                {"objective", fit.objective},
                {"duality_gap", fit.duality_gap},
                {"gap_tol", fit.gap_tol},
                {"kkt_residual", fit.kkt_residual},
                {"iterations", fit.iterations},
                {"converged", fit.converged}};
}

struct FitFlags {
    std::string estimator, design, response, weights, out, solver = "fista";
    std::optional<double> lambda, sigma, gamma, a, gap_tol;
    std::optional<Index> sparsity;
    int max_iters = 100000;
};

int run_fit(const FitFlags &f, std::ostream &out, std::ostream &err) {
    const DesignMatrix x = load_design(f.design, err);
    const Vector y = read_vector_csv(f.response);
    if (y.size() != x.rows())
        throw DataError("response length " + std::to_string(y.size()) + " does not match design rows " +
                        std::to_string(x.rows()));
    Json result{{"schema_version", kReportSchemaVersion}, {"estimator", f.estimator}};
    Json tuning = Json::object();
    FitResult fit;
    if (f.estimator == "lasso") {
        double lambda;
        if (f.lambda) {
            lambda = *f.lambda;
            tuning["source"] = "lambda";
        } else if (f.sigma && f.sparsity) {
            const double gamma = f.gamma.value_or(0.5);
            TuningContext ctx{.gamma = gamma, .tau = 0.0, .s = *f.sparsity, .sigma = *f.sigma,
                              .n = x.rows(), .p = x.cols()};
            ctx.validate();
            lambda = lasso_tuning_lambda(ctx);
            tuning["source"] = "sparsity-aware";
            tuning["sigma"] = *f.sigma;
            tuning["sparsity"] = *f.sparsity;
            tuning["gamma"] = gamma;
        } else {
            throw UsageError("lasso needs --lambda or --sigma with --sparsity");
        }
        tuning["lambda"] = lambda;
        fit = fit_lasso(x, y,
                        LassoConfig{.lambda = lambda,
                                    .max_iters = f.max_iters,
                                    .gap_tol = f.gap_tol,
                                    .solver = f.solver == "cd" ? LassoSolver::coordinate_descent
                                                               : LassoSolver::accelerated_proximal});
    } else {
        std::optional<WeightVector> w;
        if (!f.weights.empty()) {
            const Vector v = read_vector_csv(f.weights);
            if (v.size() != x.cols())
                throw DataError("weights length does not match design columns");
            try {
                w = WeightVector(v);
            } catch (const std::invalid_argument &e) {
                throw DataError(std::string("weights file: ") + e.what());
            }
            tuning["source"] = "weights-file";
        } else if (f.sigma && f.a) {
            w = slope_weights(x.rows(), x.cols(), *f.sigma, *f.a);
            tuning["source"] = "slope-weights";
            tuning["sigma"] = *f.sigma;
            tuning["a"] = *f.a;
        } else {
            throw UsageError("slope needs --weights or --sigma with --a");
        }
        tuning["weights"] = vector_json(w->values());
        fit = fit_slope(x, y, SlopeConfig{.weights = *w, .max_iters = f.max_iters, .gap_tol = f.gap_tol});
    }
    result["tuning"] = std::move(tuning);
    result.update(fit_json(fit));
    emit(f.out, json_text(result), out);
    if (!fit.converged) {
        err << "error: solver did not reach the duality-gap tolerance in " << fit.iterations
            << " iterations; partial result written\n";
        return kNonConvergence;
    }
    return kSuccess;
}

struct WeightFlags {
    Index n = 0, p = 0;
    double sigma = 0.0, a = 0.0;
    std::string out;
};

int run_weights(const WeightFlags &f, std::ostream &out, std::ostream &) {
    if (f.n < 1 || f.p < 1 || !(f.sigma > 0.0) || !(f.a > 0.0) || !std::isfinite(f.sigma) ||
        !std::isfinite(f.a))
        throw UsageError("weights needs n, p >= 1 and positive finite sigma, a");
    const WeightVector w = slope_weights(f.n, f.p, f.sigma, f.a);
    std::ostringstream text;
    write_matrix_csv(text, Matrix(w.values()));
    emit(f.out, text.str(), out);
    return kSuccess;
}

struct CertifyFlags {
    std::string design, condition, out;
    Index s = 1;
    double c0 = 1.0, a = 2.0 * kDeviationConstant;
    std::int64_t budget = 200;
    std::uint64_t seed = 0;
};

int run_certify(const CertifyFlags &f, std::ostream &out, std::ostream &err) {
    const DesignMatrix x = load_design(f.design, err);
    Json result{{"schema_version", kReportSchemaVersion}, {"condition", f.condition}, {"s", f.s}};
    if (f.condition == "sparse-eig") {
        const SparseEigenvalues ev = sparse_eigenvalues(x, f.s, f.budget);
        result["support_budget"] = f.budget;
        result["theta_min"] = ev.theta_min;
        result["theta_max"] = ev.theta_max;
    } else {
        ConeSpec cone{.s = f.s, .c0 = f.c0};
        cone.kind = f.condition == "re" ? ConeKind::re
                    : f.condition == "sre" ? ConeKind::sre
                                           : ConeKind::wre;
        if (cone.kind == ConeKind::wre) {
            // The cone is invariant under rescaling the weights, so sigma = 1 here.
            cone.weights = slope_weights(x.rows(), x.cols(), 1.0, f.a);
            result["a"] = f.a;
        }
        cone.validate(x.cols());
        if (f.budget < 1 || f.budget > 1000000)
            throw UsageError("--budget must lie in [1, 1e6] restarts");
        const ConstantBracket b = cone_constant_bracket(
            x, cone, SearchBudget{.restarts = static_cast<int>(f.budget), .seed = f.seed});
        result["c0"] = f.c0;
        result["restarts"] = f.budget;
        result["seed"] = f.seed;
        result["lower"] = b.lower;
        result["upper"] = b.upper;
        result["method"] = to_string(b.method);
        result["witness"] = vector_json(b.witness);
    }
    emit(f.out, json_text(result), out);
    return kSuccess;
}

struct AdaptFlags {
    std::string design, response, metric = "prediction", out;
    double sigma = 0.0;
    std::optional<double> theta_star;
    Index s_star = 0;
};

int run_adapt(const AdaptFlags &f, std::ostream &out, std::ostream &err) {
    if (f.s_star < 2)
        throw UsageError("--s-star must be at least 2");
    if (!(f.sigma > 0.0))
        throw UsageError("--sigma must be positive");
    const DesignMatrix x = load_design(f.design, err);
    const Vector y = read_vector_csv(f.response);
    if (y.size() != x.rows())
        throw DataError("response length does not match design rows");
    if (!f.theta_star)
        err << "warning: --theta-star not given, using 1\n";
    const double theta = f.theta_star.value_or(1.0);
    SelectorConfig cfg;
    double q = 2.0;
    if (f.metric == "prediction") {
        cfg = prediction_selector(f.sigma, theta);
    } else {
        q = f.metric == "l1" ? 1.0 : 2.0;
        cfg = lq_selector(q, f.sigma, theta);
    }
    const DyadicGrid grid(f.s_star, x.cols());
    const SelectionResult res = run_adaptive(x, y, cfg, grid);
    Json levels = Json::array();
    bool converged = true;
    for (std::size_t i = 0; i < res.per_level_fits.size(); ++i) {
        converged = converged && res.per_level_fits[i].converged;
        levels.push_back(Json{{"lambda", res.lambdas[i]},
                              {"converged", res.per_level_fits[i].converged},
                              {"duality_gap", res.per_level_fits[i].duality_gap}});
    }
    Json result{{"schema_version", kReportSchemaVersion},
                {"metric", f.metric},
                {"q", f.metric == "prediction" ? Json(nullptr) : Json(q)},
                {"c0_constant", cfg.c0_constant},
                {"theta_star", theta},
                {"sigma", f.sigma},
                {"s_star", f.s_star},
                {"m_hat", res.m_hat},
                {"s_hat", res.s_hat},
                {"beta_tilde", vector_json(res.beta_tilde)},
                {"distances", res.distances},
                {"thresholds", res.thresholds},
                {"levels", std::move(levels)}};
    emit(f.out, json_text(result), out);
    if (!converged) {
        err << "error: at least one level fit did not converge; partial result written\n";
        return kNonConvergence;
    }
    return kSuccess;
}

struct SimulateFlags {
    std::string scenario, config, out, csv, emit_design;
    std::optional<std::uint64_t> seed;
    std::optional<int> replicates;
    int threads = 1;
};

std::uint64_t parse_seed_env(const char *text) {
    std::string s(text);
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
        throw UsageError("SLK_SEED must be a nonnegative integer");
    try {
        return std::stoull(s);
    } catch (const std::exception &) {
        throw UsageError("SLK_SEED is out of range");
    }
}

int run_simulate(const SimulateFlags &f, std::ostream &out, std::ostream &err) {
    Json j = Json::object();
    if (!f.config.empty()) {
        std::ifstream in(f.config);
        if (!in)
            throw DataError("cannot open " + f.config);
        try {
            j = Json::parse(in);
        } catch (const nlohmann::json::parse_error &e) {
            throw DataError(f.config + ": " + e.what());
        }
    }
    if (!f.scenario.empty())
        j["scenario"] = f.scenario;
    if (f.replicates)
        j["replicates"] = *f.replicates;
    if (f.seed)
        j["seed"] = *f.seed;
    if (const char *env = std::getenv("SLK_SEED"))
        j["seed"] = parse_seed_env(env);
    const ExperimentConfig cfg = config_from_json(j);
    if (f.threads < 1)
        throw UsageError("--threads must be at least 1");
    if (!f.emit_design.empty())
        write_matrix_csv(f.emit_design, generate_design(cfg.design, cfg.seed, streams::design).data());

    const auto start = std::chrono::steady_clock::now();
    const ExperimentReport report = run_experiment(cfg, RunOptions{.threads = f.threads});
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    err << "simulate: " << to_string(cfg.scenario) << " finished in " << seconds << " s\n";

    if (!f.csv.empty()) {
        std::ostringstream text;
        report.write_csv(text);
        emit(f.csv, text.str(), out);
    }
    emit(f.out, json_text(report.to_json()), out);
    return kSuccess;
}

} // namespace

int run_cli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err) {
    CLI::App app{"Sparse linear regression with Lasso and Slope estimators"};
    app.name("slk");
    app.require_subcommand(1);

    FitFlags fit;
    auto *fit_cmd = app.add_subcommand("fit", "Fit a Lasso or Slope estimator");
    fit_cmd->add_option("--estimator", fit.estimator, "lasso or slope")
        ->required()
        ->check(CLI::IsMember({"lasso", "slope"}));
    fit_cmd->add_option("--design", fit.design, "design matrix CSV (n rows, p columns)")->required();
    fit_cmd->add_option("--response", fit.response, "response vector CSV (n rows)")->required();
    fit_cmd->add_option("--lambda", fit.lambda, "Lasso tuning parameter")->check(CLI::PositiveNumber);
    fit_cmd->add_option("--sigma", fit.sigma, "noise level")->check(CLI::PositiveNumber);
    fit_cmd->add_option("--sparsity", fit.sparsity, "sparsity s for the Lasso rule")
        ->check(CLI::PositiveNumber);
    fit_cmd->add_option("--gamma", fit.gamma, "gamma in (0,1) for the Lasso rule (default 0.5)");
    fit_cmd->add_option("--a", fit.a, "Slope weight constant A")->check(CLI::PositiveNumber);
    fit_cmd->add_option("--weights", fit.weights, "Slope weights CSV (p rows, nonincreasing)");
    fit_cmd->add_option("--solver", fit.solver, "Lasso solver: fista or cd")
        ->check(CLI::IsMember({"fista", "cd"}));
    fit_cmd->add_option("--max-iters", fit.max_iters, "iteration cap")->check(CLI::PositiveNumber);
    fit_cmd->add_option("--gap-tol", fit.gap_tol, "duality-gap tolerance")->check(CLI::PositiveNumber);
    fit_cmd->add_option("--out", fit.out, "output JSON path (default stdout)");

    WeightFlags weights;
    auto *weights_cmd = app.add_subcommand("weights", "Print the Slope weight sequence");
    weights_cmd->add_option("--n", weights.n, "sample size")->required();
    weights_cmd->add_option("--p", weights.p, "dimension")->required();
    weights_cmd->add_option("--sigma", weights.sigma, "noise level")->required();
    weights_cmd->add_option("--a", weights.a, "constant A")->required();
    weights_cmd->add_option("--out", weights.out, "output CSV path (default stdout)");

    CertifyFlags certify;
    auto *certify_cmd = app.add_subcommand("certify", "Bracket a restricted-eigenvalue constant");
    certify_cmd->add_option("--design", certify.design, "design matrix CSV")->required();
    certify_cmd->add_option("--condition", certify.condition, "re, sre, wre or sparse-eig")
        ->required()
        ->check(CLI::IsMember({"re", "sre", "wre", "sparse-eig"}));
    certify_cmd->add_option("--s", certify.s, "sparsity")->required();
    certify_cmd->add_option("--c0", certify.c0, "cone constant (default 1)");
    certify_cmd->add_option("--a", certify.a, "Slope constant for the wre cone");
    certify_cmd->add_option("--budget", certify.budget,
                            "random restarts, or the support budget for sparse-eig");
    certify_cmd->add_option("--seed", certify.seed, "random seed");
    certify_cmd->add_option("--out", certify.out, "output JSON path (default stdout)");

    AdaptFlags adapt;
    auto *adapt_cmd = app.add_subcommand("adapt", "Sparsity-adaptive Lasso over a dyadic grid");
    adapt_cmd->add_option("--design", adapt.design, "design matrix CSV")->required();
    adapt_cmd->add_option("--response", adapt.response, "response vector CSV")->required();
    adapt_cmd->add_option("--sigma", adapt.sigma, "noise level")->required();
    adapt_cmd->add_option("--s-star", adapt.s_star, "largest sparsity considered")->required();
    adapt_cmd->add_option("--metric", adapt.metric, "prediction, l1 or l2")
        ->check(CLI::IsMember({"prediction", "l1", "l2"}));
    adapt_cmd->add_option("--theta-star", adapt.theta_star, "restricted constant (default 1)");
    adapt_cmd->add_option("--out", adapt.out, "output JSON path (default stdout)");

    SimulateFlags sim;
    auto *sim_cmd = app.add_subcommand("simulate", "Run a Monte-Carlo scenario");
    sim_cmd->add_option("--scenario", sim.scenario,
                        "event, oracle-lasso, oracle-slope, adaptive, rate, lower-bound or "
                        "subgaussian-noise");
    sim_cmd->add_option("--config", sim.config, "scenario config JSON");
    sim_cmd->add_option("--seed", sim.seed, "seed (SLK_SEED overrides)");
    sim_cmd->add_option("--replicates", sim.replicates, "replicate count");
    sim_cmd->add_option("--threads", sim.threads, "worker threads");
    sim_cmd->add_option("--out", sim.out, "report JSON path (default stdout)");
    sim_cmd->add_option("--csv", sim.csv, "per-replicate CSV path");
    sim_cmd->add_option("--emit-design", sim.emit_design, "write the scenario design as CSV");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp &) {
        out << app.help();
        return kSuccess;
    } catch (const CLI::CallForAllHelp &) {
        out << app.help("", CLI::AppFormatMode::All);
        return kSuccess;
    } catch (const CLI::ParseError &e) {
        err << "error: " << e.what() << "\n" << app.help();
        return kUsage;
    }

    try {
        if (fit_cmd->parsed())
            return run_fit(fit, out, err);
        if (weights_cmd->parsed())
            return run_weights(weights, out, err);
        if (certify_cmd->parsed())
            return run_certify(certify, out, err);
        if (adapt_cmd->parsed())
            return run_adapt(adapt, out, err);
        return run_simulate(sim, out, err);
    } catch (const UsageError &e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const DataError &e) {
        err << "error: " << e.what() << "\n";
        return kDataError;
    } catch (const std::invalid_argument &e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::exception &e) {
        err << "error: " << e.what() << "\n";
        return kDataError;
    }
}

} // namespace slk::cli
