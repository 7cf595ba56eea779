#include "slk/estimators.hpp"

#include "slk/prox.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace slk {

namespace {

// Uniform access to the two penalties inside the solver loop.
class PenaltyOps {
public:
    explicit PenaltyOps(const Penalty &penalty) {
        if (const auto *l1 = std::get_if<L1Penalty>(&penalty)) {
            if (!(l1->lambda > 0.0) || !std::isfinite(l1->lambda))
                throw std::invalid_argument("Lasso: lambda must be positive and finite");
            lambda_ = l1->lambda;
        } else {
            weights_ = std::get<SortedL1Penalty>(penalty).weights.values();
            cumulative_.resize(weights_.size());
            double acc = 0.0;
            for (Index j = 0; j < weights_.size(); ++j)
                cumulative_[j] = acc += weights_[j];
        }
    }

    bool is_l1() const { return weights_.size() == 0; }

    Index expected_size() const { return weights_.size(); }

    /// penalty(b), without the factor 2.
    double value(const Vector &b) const {
        if (is_l1())
            return lambda_ * b.lpNorm<1>();
        return weights_.dot(rearrange_desc(b));
    }

    /// out = argmin_u 1/2 ||u - v||^2 + step * 2 * penalty(u)
    void prox(const Vector &v, double step, Vector &out) {
        if (is_l1()) {
            const double t = 2.0 * step * lambda_;
            out = v.unaryExpr([t](double a) {
                const double m = std::abs(a) - t;
                return m > 0.0 ? std::copysign(m, a) : 0.0;
            });
            return;
        }
        sorted_.apply(v, (2.0 * step) * weights_, out);
    }

    /// Dual norm of c: the smallest t with c / t inside the unit dual ball.
    double dual_norm(const Vector &c) const {
        if (is_l1())
            return c.lpNorm<Eigen::Infinity>() / lambda_;
        const Vector sorted = rearrange_desc(c);
        double acc = 0.0;
        double ratio = 0.0;
        for (Index k = 0; k < sorted.size(); ++k) {
            acc += sorted[k];
            ratio = std::max(ratio, acc / cumulative_[k]);
        }
        return ratio;
    }

private:
    double lambda_ = 0.0;
    Vector weights_;
    Vector cumulative_;
    SortedL1Prox sorted_;
};

void check_inputs(const DesignMatrix &x, const Vector &y, Index penalty_size) {
    if (y.size() != x.rows())
        throw DataError("response length " + std::to_string(y.size()) +
                        " does not match design rows " + std::to_string(x.rows()));
    if (!y.allFinite())
        throw DataError("response contains non-finite entries");
    if (penalty_size != 0 && penalty_size != x.cols())
        throw DataError("weights length " + std::to_string(penalty_size) +
                        " does not match design columns " + std::to_string(x.cols()));
}

struct GapTerms {
    double primal;
    double gap;
};

// r = y - X b is passed in to avoid recomputing X b.
GapTerms gap_from_residual(const DesignMatrix &x, const Vector &y, const Vector &b,
                           const Vector &r, const PenaltyOps &ops) {
    const double n = static_cast<double>(x.rows());
    const double rr = r.squaredNorm();
    const double primal = rr / n + 2.0 * ops.value(b);
    const Vector corr = x.data().transpose() * r / n;
    const double dn = ops.dual_norm(corr);
    const double scale = dn > 1.0 ? 1.0 / dn : 1.0;
    const double dual = 2.0 * scale * r.dot(y) / n - scale * scale * rr / n;
    return {primal, std::max(primal - dual, 0.0)};
}

// Largest eigenvalue of X^T X / n by power iteration; converges from below.
double gram_top_eigenvalue(const Matrix &x) {
    const Index p = x.cols();
    Vector v(p);
    for (Index j = 0; j < p; ++j)
        v[j] = 1.0 + 1e-3 * static_cast<double>(j % 7);
    v.normalize();
    double estimate = 0.0;
    const double n = static_cast<double>(x.rows());
    for (int it = 0; it < 100; ++it) {
        Vector w = x.transpose() * (x * v) / n;
        const double next = v.dot(w);
        const double norm = w.norm();
        if (norm == 0.0)
            return 0.0;
        v = w / norm;
        if (std::abs(next - estimate) <= 1e-10 * std::abs(next)) {
            estimate = next;
            break;
        }
        estimate = next;
    }
    return estimate;
}

struct SolveOptions {
    int max_iters;
    double gap_tol;
    const std::optional<Vector> *warm_start;
    bool record;
};

// Monotone FISTA (Beck & Teboulle) with backtracking on the Lipschitz estimate
// and a function-value momentum restart.
FitResult solve_accelerated(const DesignMatrix &design, const Vector &y, PenaltyOps &ops,
                            const SolveOptions &opt) {
    const Matrix &x = design.data();
    const Index p = x.cols();
    const double n = static_cast<double>(x.rows());

    Vector beta = Vector::Zero(p);
    if (opt.warm_start->has_value()) {
        if ((*opt.warm_start)->size() != p)
            throw std::invalid_argument("warm start has wrong length");
        beta = **opt.warm_start;
    }

    FitResult result;
    result.gap_tol = opt.gap_tol;

    double lipschitz = 2.0 * gram_top_eigenvalue(x);
    if (!(lipschitz > 0.0)) {
        // X = 0: the penalty alone is minimised at zero.
        result.coefficients = Vector::Zero(p);
        Vector r = y;
        auto terms = gap_from_residual(design, y, result.coefficients, r, ops);
        result.objective = terms.primal;
        result.duality_gap = terms.gap;
        result.converged = true;
        return result;
    }

    Vector x_beta = x * beta;
    Vector residual = y - x_beta;
    GapTerms terms = gap_from_residual(design, y, beta, residual, ops);
    double f_beta = terms.primal;
    result.duality_gap = terms.gap;

    Vector momentum_point = beta;
    Vector x_momentum = x_beta;
    Vector candidate(p), x_candidate(x.rows()), grad(p), step_point(p);
    double t = 1.0;
    int iter = 0;

    while (result.duality_gap > opt.gap_tol && iter < opt.max_iters) {
        ++iter;
        const Vector r_momentum = x_momentum - y;
        grad.noalias() = (2.0 / n) * (x.transpose() * r_momentum);

        double smooth_candidate = 0.0;
        while (true) {
            step_point = momentum_point - grad / lipschitz;
            ops.prox(step_point, 1.0 / lipschitz, candidate);
            x_candidate.noalias() = x * candidate;
            // The loss is quadratic, so the majorisation test reduces exactly to
            // ||X d||_n^2 <= (L/2) ||d||^2, which avoids cancellation.
            const double curvature = (x_candidate - x_momentum).squaredNorm() / n;
            const double bound = 0.5 * lipschitz * (candidate - momentum_point).squaredNorm();
            if (curvature <= bound * (1.0 + 1e-12)) {
                smooth_candidate = (x_candidate - y).squaredNorm() / n;
                break;
            }
            lipschitz *= 2.0;
        }

        const double f_candidate = smooth_candidate + 2.0 * ops.value(candidate);
        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        // Values closer than rounding noise count as ties so the iterates keep moving.
        const double slack = 1e-15 * std::max(1.0, std::abs(f_beta));
        if (f_candidate <= f_beta + slack) {
            const Vector previous = beta;
            const Vector x_previous = x_beta;
            // Gradient-based restart when the momentum points uphill.
            const bool uphill = (momentum_point - candidate).dot(candidate - previous) > 0.0;
            beta = candidate;
            x_beta = x_candidate;
            f_beta = std::min(f_beta, f_candidate);
            if (uphill) {
                momentum_point = beta;
                x_momentum = x_beta;
                t = 1.0;
            } else {
                const double c = (t - 1.0) / t_next;
                momentum_point = beta + c * (beta - previous);
                x_momentum = x_beta + c * (x_beta - x_previous);
                t = t_next;
            }
        } else {
            // Restart: drop momentum and step again from the best point.
            momentum_point = beta;
            x_momentum = x_beta;
            t = 1.0;
        }
        if (iter % 200 == 0) {
            x_beta.noalias() = x * beta;
            x_momentum.noalias() = x * momentum_point;
        }

        residual = y - x_beta;
        terms = gap_from_residual(design, y, beta, residual, ops);
        f_beta = terms.primal;
        result.duality_gap = terms.gap;
        if (opt.record)
            result.objective_history.push_back(f_beta);
    }

    result.coefficients = std::move(beta);
    result.objective = f_beta;
    result.iterations = iter;
    result.converged = result.duality_gap <= opt.gap_tol;
    return result;
}

// Cyclic coordinate descent for the Lasso, kept as an independent cross-check.
FitResult solve_coordinate(const DesignMatrix &design, const Vector &y, double lambda,
                           PenaltyOps &ops, const SolveOptions &opt) {
    const Matrix &x = design.data();
    const Index p = x.cols();
    const double n = static_cast<double>(x.rows());

    Vector beta = Vector::Zero(p);
    if (opt.warm_start->has_value()) {
        if ((*opt.warm_start)->size() != p)
            throw std::invalid_argument("warm start has wrong length");
        beta = **opt.warm_start;
    }
    const Vector col_sq = x.colwise().squaredNorm().transpose() / n;
    Vector residual = y - x * beta;

    FitResult result;
    result.gap_tol = opt.gap_tol;
    GapTerms terms = gap_from_residual(design, y, beta, residual, ops);
    result.duality_gap = terms.gap;
    double f_beta = terms.primal;
    int iter = 0;
    while (result.duality_gap > opt.gap_tol && iter < opt.max_iters) {
        ++iter;
        for (Index j = 0; j < p; ++j) {
            if (col_sq[j] == 0.0) {
                beta[j] = 0.0;
                continue;
            }
            const double old = beta[j];
            const double rho = x.col(j).dot(residual) / n + col_sq[j] * old;
            const double mag = std::abs(rho) - lambda;
            const double updated = mag > 0.0 ? std::copysign(mag, rho) / col_sq[j] : 0.0;
            if (updated != old) {
                residual -= (updated - old) * x.col(j);
                beta[j] = updated;
            }
        }
        if (iter % 100 == 0)
            residual = y - x * beta;
        terms = gap_from_residual(design, y, beta, residual, ops);
        f_beta = terms.primal;
        result.duality_gap = terms.gap;
        if (opt.record)
            result.objective_history.push_back(f_beta);
    }
    result.coefficients = std::move(beta);
    result.objective = f_beta;
    result.iterations = iter;
    result.converged = result.duality_gap <= opt.gap_tol;
    return result;
}


} // namespace

double default_gap_tol(const Vector &y) { return 1e-8 * (1.0 + y.squaredNorm() / static_cast<double>(std::max<Index>(y.size(), 1))); }

double objective_value(const DesignMatrix &x, const Vector &y, const Vector &beta,
                       const Penalty &penalty) {
    PenaltyOps ops(penalty);
    check_inputs(x, y, ops.expected_size());
    if (beta.size() != x.cols())
        throw std::invalid_argument("objective_value: coefficient length mismatch");
    return (x.data() * beta - y).squaredNorm() / static_cast<double>(x.rows()) +
           2.0 * ops.value(beta);
}

double duality_gap(const DesignMatrix &x, const Vector &y, const Vector &beta,
                   const Penalty &penalty) {
    PenaltyOps ops(penalty);
    check_inputs(x, y, ops.expected_size());
    if (beta.size() != x.cols())
        throw std::invalid_argument("duality_gap: coefficient length mismatch");
    const Vector r = y - x.data() * beta;
    return gap_from_residual(x, y, beta, r, ops).gap;
}

FitResult fit_lasso(const DesignMatrix &x, const Vector &y, const LassoConfig &cfg) {
    const Penalty penalty = L1Penalty{cfg.lambda};
    PenaltyOps ops(penalty);
    check_inputs(x, y, 0);
    if (cfg.max_iters < 0)
        throw std::invalid_argument("fit_lasso: max_iters must be nonnegative");
    const double tol = cfg.gap_tol.value_or(default_gap_tol(y));
    if (!(tol > 0.0))
        throw std::invalid_argument("fit_lasso: gap_tol must be positive");
    const SolveOptions opt{cfg.max_iters, tol, &cfg.warm_start, cfg.record_objective};
    FitResult result = cfg.solver == LassoSolver::coordinate_descent
                           ? solve_coordinate(x, y, cfg.lambda, ops, opt)
                           : solve_accelerated(x, y, ops, opt);
    result.kkt_residual = kkt_residual(x, y, result.coefficients, penalty);
    return result;
}

FitResult fit_slope(const DesignMatrix &x, const Vector &y, const SlopeConfig &cfg) {
    const Penalty penalty = SortedL1Penalty{cfg.weights};
    PenaltyOps ops(penalty);
    check_inputs(x, y, cfg.weights.size());
    if (cfg.max_iters < 0)
        throw std::invalid_argument("fit_slope: max_iters must be nonnegative");
    const double tol = cfg.gap_tol.value_or(default_gap_tol(y));
    if (!(tol > 0.0))
        throw std::invalid_argument("fit_slope: gap_tol must be positive");
    const SolveOptions opt{cfg.max_iters, tol, &cfg.warm_start, cfg.record_objective};
    FitResult result = solve_accelerated(x, y, ops, opt);
    result.kkt_residual = kkt_residual(x, y, result.coefficients, penalty);
    return result;
}

double kkt_residual(const DesignMatrix &x, const Vector &y, const Vector &beta,
                    const Penalty &penalty) {
    PenaltyOps ops(penalty);
    check_inputs(x, y, ops.expected_size());
    if (beta.size() != x.cols())
        throw std::invalid_argument("kkt_residual: coefficient length mismatch");
    const double n = static_cast<double>(x.rows());
    // Half of -grad: X^T (y - X b) / n must lie in the subdifferential of penalty.
    const Vector corr = x.data().transpose() * (y - x.data() * beta) / n;
    const double scale = std::max(1.0, beta.cwiseAbs().maxCoeff());
    const double tie_tol = 1e-12 * scale;

    if (const auto *l1 = std::get_if<L1Penalty>(&penalty)) {
        double dist_sq = 0.0;
        for (Index j = 0; j < beta.size(); ++j) {
            double d;
            if (std::abs(beta[j]) > tie_tol)
                d = corr[j] - std::copysign(l1->lambda, beta[j]);
            else
                d = std::max(0.0, std::abs(corr[j]) - l1->lambda);
            dist_sq += d * d;
        }
        return 2.0 * std::sqrt(dist_sq);
    }

    const Vector &lambda = std::get<SortedL1Penalty>(penalty).weights.values();
    const auto order = descending_order(beta);
    const Index p = beta.size();
    double dist_sq = 0.0;
    Index start = 0;
    while (start < p) {
        const double level = std::abs(beta[order[static_cast<std::size_t>(start)]]);
        if (level <= tie_tol) {
            // Zero cluster: distance to the dual ball of the tail weights, which by
            // Moreau's identity is the norm of the prox of the tail norm.
            const Index m = p - start;
            Vector tail(m);
            for (Index i = 0; i < m; ++i)
                tail[i] = corr[order[static_cast<std::size_t>(start + i)]];
            SortedL1Prox prox(m);
            Vector shrunk;
            prox.apply(tail, lambda.tail(m), shrunk);
            dist_sq += shrunk.squaredNorm();
            break;
        }
        Index end = start + 1;
        while (end < p && std::abs(std::abs(beta[order[static_cast<std::size_t>(end)]]) - level) <= tie_tol)
            ++end;
        // Nonzero cluster: sign-adjusted correlations must lie in the permutahedron
        // of the weights it occupies. Projection is an isotonic fit on sorted values.
        const Index m = end - start;
        Vector signed_corr(m);
        for (Index i = 0; i < m; ++i) {
            const Index j = order[static_cast<std::size_t>(start + i)];
            signed_corr[i] = beta[j] > 0.0 ? corr[j] : -corr[j];
        }
        std::sort(signed_corr.data(), signed_corr.data() + m, std::greater<>());
        const Vector offset = isotonic_nonincreasing(signed_corr - lambda.segment(start, m));
        dist_sq += offset.squaredNorm();
        start = end;
    }
    return 2.0 * std::sqrt(dist_sq);
}

} // namespace slk
