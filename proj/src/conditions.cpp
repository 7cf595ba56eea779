#include "slk/conditions.hpp"

#include "slk/rng.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace slk {

const char *to_string(ConeKind kind) {
    switch (kind) {
    case ConeKind::re: return "re";
    case ConeKind::sre: return "sre";
    case ConeKind::wre: return "wre";
    }
    return "unknown";
}

const char *to_string(BracketMethod method) {
    switch (method) {
    case BracketMethod::exhaustive: return "exhaustive";
    case BracketMethod::sampled: return "sampled";
    case BracketMethod::certified_chain: return "certified-chain";
    }
    return "unknown";
}

void ConeSpec::validate(Index p) const {
    if (s < 1 || s > p)
        throw std::invalid_argument("cone: s must lie in [1, p]");
    if (!(c0 > 0.0) || !std::isfinite(c0))
        throw std::invalid_argument("cone: c0 must be positive");
    if (kind == ConeKind::wre) {
        if (!weights)
            throw std::invalid_argument("cone: WRE requires weights");
        if (weights->size() != p)
            throw std::invalid_argument("cone: weights length must equal p");
    }
}

namespace {

struct ConeSides {
    double lhs;
    double rhs;
};

ConeSides cone_sides(const Vector &delta, const ConeSpec &cone) {
    switch (cone.kind) {
    case ConeKind::re: {
        const Vector sorted = rearrange_desc(delta);
        return {sorted.sum(), (1.0 + cone.c0) * sorted.head(cone.s).sum()};
    }
    case ConeKind::sre:
        return {delta.lpNorm<1>(),
                (1.0 + cone.c0) * std::sqrt(static_cast<double>(cone.s)) * delta.norm()};
    case ConeKind::wre:
        return {sorted_l1_norm(delta, *cone.weights),
                (1.0 + cone.c0) * delta.norm() * cone.weights->head_l2(cone.s)};
    }
    return {0.0, 0.0};
}

bool sides_ok(const ConeSides &sides) {
    return sides.lhs <= sides.rhs + 1e-12 * std::max(std::abs(sides.lhs), std::abs(sides.rhs));
}

// Strictly feasible test used inside the retraction so rounding never pushes a
// witness outside the tolerance band.
bool strictly_inside(const Vector &delta, const ConeSpec &cone) {
    const ConeSides sides = cone_sides(delta, cone);
    return sides.lhs <= sides.rhs;
}

// Visits every size-s subset of {0..p-1} in lexicographic order.
template <class F>
void for_each_support(Index p, Index s, F &&visit) {
    std::vector<Index> idx(static_cast<std::size_t>(s));
    std::iota(idx.begin(), idx.end(), Index{0});
    while (true) {
        visit(idx);
        Index i = s - 1;
        while (i >= 0 && idx[static_cast<std::size_t>(i)] == p - s + i)
            --i;
        if (i < 0)
            return;
        ++idx[static_cast<std::size_t>(i)];
        for (Index k = i + 1; k < s; ++k)
            idx[static_cast<std::size_t>(k)] = idx[static_cast<std::size_t>(k - 1)] + 1;
    }
}

// choose(p, s), saturating at limit + 1.
std::int64_t binomial_capped(Index p, Index s, std::int64_t limit) {
    s = std::min(s, p - s);
    long double acc = 1.0L;
    for (Index i = 1; i <= s; ++i) {
        acc = acc * static_cast<long double>(p - s + i) / static_cast<long double>(i);
        if (acc > static_cast<long double>(limit))
            return limit + 1;
    }
    return static_cast<std::int64_t>(std::llround(static_cast<double>(acc)));
}

struct SupportExtremes {
    double lambda_min = std::numeric_limits<double>::infinity();
    double lambda_max = 0.0;
    Vector min_vector; // full-length, supported on the minimising support
};

SupportExtremes scan_supports(const Matrix &gram, Index s) {
    const Index p = gram.rows();
    SupportExtremes out;
    Matrix sub(s, s);
    Eigen::SelfAdjointEigenSolver<Matrix> eig;
    for_each_support(p, s, [&](const std::vector<Index> &support) {
        for (Index a = 0; a < s; ++a)
            for (Index b = 0; b < s; ++b)
                sub(a, b) = gram(support[static_cast<std::size_t>(a)], support[static_cast<std::size_t>(b)]);
        eig.compute(sub);
        const double lo = eig.eigenvalues()[0];
        const double hi = eig.eigenvalues()[s - 1];
        out.lambda_max = std::max(out.lambda_max, hi);
        if (lo < out.lambda_min) {
            out.lambda_min = lo;
            out.min_vector = Vector::Zero(p);
            for (Index a = 0; a < s; ++a)
                out.min_vector[support[static_cast<std::size_t>(a)]] = eig.eigenvectors()(a, 0);
        }
    });
    return out;
}

Vector soft(const Vector &v, double t) {
    return v.unaryExpr([t](double a) {
        const double m = std::abs(a) - t;
        return m > 0.0 ? std::copysign(m, a) : 0.0;
    });
}

double quad_ratio(const Matrix &gram, const Vector &d) {
    const double nn = d.squaredNorm();
    if (nn == 0.0)
        return std::numeric_limits<double>::infinity();
    return std::sqrt(std::max(d.dot(gram * d) / nn, 0.0));
}

} // namespace

bool cone_contains(const Vector &delta, const ConeSpec &cone) {
    cone.validate(delta.size());
    if (!delta.allFinite())
        throw std::invalid_argument("cone_contains: non-finite vector");
    return sides_ok(cone_sides(delta, cone));
}

Vector retract_to_cone(const Vector &delta, const ConeSpec &cone) {
    cone.validate(delta.size());
    if (strictly_inside(delta, cone))
        return delta;
    if (cone.kind == ConeKind::re) {
        const auto order = descending_order(delta);
        Vector out = delta;
        double head = 0.0;
        double tail = 0.0;
        for (std::size_t i = 0; i < order.size(); ++i)
            (static_cast<Index>(i) < cone.s ? head : tail) += std::abs(delta[order[i]]);
        const double scale = cone.c0 * head / tail;
        for (std::size_t i = static_cast<std::size_t>(cone.s); i < order.size(); ++i)
            out[order[i]] *= scale * (1.0 - 1e-15);
        if (strictly_inside(out, cone))
            return out;
        for (std::size_t i = static_cast<std::size_t>(cone.s); i < order.size(); ++i)
            out[order[i]] = 0.0;
        return out;
    }
    // The l1/l2-type ratio falls as the threshold rises; bisect for the smallest
    // feasible threshold.
    const double top = delta.cwiseAbs().maxCoeff();
    double lo = 0.0;
    double hi = top;
    Vector best;
    for (int it = 0; it < 80; ++it) {
        const double mid = 0.5 * (lo + hi);
        Vector cand = soft(delta, mid);
        if (cand.squaredNorm() > 0.0 && strictly_inside(cand, cone)) {
            hi = mid;
            best = std::move(cand);
        } else {
            lo = mid;
        }
    }
    if (best.size() == 0) {
        // Every entry tied at the top: keep a single coordinate.
        best = Vector::Zero(delta.size());
        const auto order = descending_order(delta);
        best[order.front()] = delta[order.front()];
    }
    return best;
}

SparseEigenvalues sparse_eigenvalues(const DesignMatrix &x, Index s, std::int64_t budget) {
    const Index p = x.cols();
    if (s < 1 || s > p)
        throw std::invalid_argument("sparse_eigenvalues: s must lie in [1, p]");
    if (binomial_capped(p, s, budget) > budget)
        throw std::invalid_argument("sparse_eigenvalues: choose(p, s) exceeds the enumeration budget; "
                                    "use the sampled bracket instead");
    const double n = static_cast<double>(x.rows());
    if (s == 1) {
        const Vector sq = x.data().colwise().squaredNorm().transpose();
        return {std::sqrt(sq.minCoeff() / n), std::sqrt(sq.maxCoeff() / n)};
    }
    const SupportExtremes ext = scan_supports(x.gram(), s);
    return {std::sqrt(std::max(ext.lambda_min, 0.0)), std::sqrt(std::max(ext.lambda_max, 0.0))};
}

ConstantBracket cone_constant_bracket(const DesignMatrix &x, const ConeSpec &cone,
                                      const SearchBudget &budget) {
    const Index p = x.cols();
    cone.validate(p);
    if (budget.restarts < 0 || budget.iterations < 0)
        throw std::invalid_argument("cone_constant_bracket: negative search budget");
    const Matrix gram = x.gram();
    Eigen::SelfAdjointEigenSolver<Matrix> global(gram);
    const double lambda_min = std::max(global.eigenvalues()[0], 0.0);
    const double lambda_max = std::max(global.eigenvalues()[p - 1], 0.0);

    ConstantBracket out;
    out.upper = std::numeric_limits<double>::infinity();
    auto offer = [&](const Vector &cand) {
        if (cand.squaredNorm() == 0.0 || !cone_contains(cand, cone))
            return;
        const double r = quad_ratio(gram, cand);
        if (r < out.upper) {
            out.upper = r;
            out.witness = cand / cand.norm();
        }
    };

    // Candidates: the global minimiser and the sparse minimisers.
    offer(global.eigenvectors().col(0));
    std::vector<Vector> starts;
    std::int64_t used = 0;
    for (Index k = 1; k <= cone.s; ++k) {
        const std::int64_t count = binomial_capped(p, k, budget.support_budget - used);
        if (used + count > budget.support_budget)
            break;
        used += count;
        SupportExtremes ext = scan_supports(gram, k);
        offer(ext.min_vector);
        starts.push_back(ext.min_vector);
    }
    starts.push_back(retract_to_cone(global.eigenvectors().col(0), cone));

    // Projected gradient on the sphere from random and candidate starts.
    const double step = lambda_max > 0.0 ? 0.5 / lambda_max : 1.0;
    auto descend = [&](Vector d) {
        d = retract_to_cone(d, cone);
        if (d.squaredNorm() == 0.0)
            return;
        d.normalize();
        double current = quad_ratio(gram, d);
        offer(d);
        for (int it = 0; it < budget.iterations; ++it) {
            const Vector g = gram * d;
            Vector next = d - step * 2.0 * (g - d.dot(g) * d);
            next = retract_to_cone(next, cone);
            if (next.squaredNorm() == 0.0)
                break;
            next.normalize();
            const double value = quad_ratio(gram, next);
            if (!(value < current - 1e-15))
                break;
            d = std::move(next);
            current = value;
        }
        offer(d);
    };
    for (const Vector &start : starts)
        descend(start);
    for (int r = 0; r < budget.restarts; ++r) {
        Philox rng(budget.seed, streams::search ^ static_cast<std::uint64_t>(r));
        Vector d(p);
        for (Index j = 0; j < p; ++j)
            d[j] = rng.normal();
        // Half of the starts are concentrated on a few coordinates.
        if (r % 2 == 1) {
            const Index keep = 1 + static_cast<Index>(rng.below(static_cast<std::uint64_t>(std::min<Index>(p, 2 * cone.s))));
            const auto order = descending_order(d);
            for (std::size_t i = static_cast<std::size_t>(keep); i < order.size(); ++i)
                d[order[i]] *= 0.05;
        }
        descend(d);
    }

    // Certified lower bounds.
    double lower = std::sqrt(lambda_min);
    out.method = lower > 0.0 ? BracketMethod::exhaustive : BracketMethod::sampled;
    if (cone.kind != ConeKind::wre && x.normalized()) {
        // ||X d||_n^2 >= theta_min(k)^2 ||d||_2^2 - ||d||_1^2 / (k-1), and on the
        // RE and SRE cones ||d||_1^2 <= (1+c0)^2 s ||d||_2^2.
        std::int64_t spent = 0;
        for (Index k = 2; k <= p; ++k) {
            const std::int64_t count = binomial_capped(p, k, budget.support_budget - spent);
            if (spent + count > budget.support_budget)
                break;
            spent += count;
            const SupportExtremes ext = scan_supports(gram, k);
            const double sq = std::max(ext.lambda_min, 0.0) -
                              std::pow(1.0 + cone.c0, 2) * static_cast<double>(cone.s) /
                                  static_cast<double>(k - 1);
            if (sq > 0.0 && std::sqrt(sq) > lower) {
                lower = std::sqrt(sq);
                out.method = BracketMethod::certified_chain;
            }
        }
    }
    if (!std::isfinite(out.upper)) {
        out.upper = std::sqrt(lambda_max);
        out.witness = Vector::Zero(p);
    }
    out.lower = std::min(lower, out.upper);
    return out;
}

CertifiedSre certified_sre_lower(double theta1, Index s, double c0) {
    if (!(theta1 > 0.0))
        throw std::invalid_argument("certified_sre_lower: theta1 must be positive");
    if (s < 2)
        throw std::invalid_argument("certified_sre_lower: s must be at least 2");
    if (!(c0 > 0.0))
        throw std::invalid_argument("certified_sre_lower: c0 must be positive");
    const double raw = static_cast<double>(s - 1) * theta1 * theta1 / (2.0 * c0 * c0);
    return {static_cast<Index>(std::floor(raw)), theta1 / std::numbers::sqrt2};
}

Index wre_from_sre(Index s, Index p, double c0) {
    if (s < 1 || s > p)
        throw std::invalid_argument("wre_from_sre: need 1 <= s <= p");
    if (!(c0 > 0.0))
        throw std::invalid_argument("wre_from_sre: c0 must be positive");
    const double sd = static_cast<double>(s);
    const double value = sd * std::log(2.0 * std::numbers::e * static_cast<double>(p) / sd) /
                         std::numbers::ln2;
    return static_cast<Index>(std::ceil(value - 1e-12 * value));
}

double small_ball_probe(const Matrix &rows, double u, Index s1, int trials, std::uint64_t seed) {
    if (rows.rows() == 0 || rows.cols() == 0)
        throw std::invalid_argument("small_ball_probe: empty sample");
    if (!(u >= 0.0))
        throw std::invalid_argument("small_ball_probe: u must be nonnegative");
    if (trials < 1)
        throw std::invalid_argument("small_ball_probe: trials must be positive");
    const Index p = rows.cols();
    if (s1 < 1 || s1 > p)
        throw std::invalid_argument("small_ball_probe: s1 must lie in [1, p]");
    double worst = 1.0;
    for (int t = 0; t < trials; ++t) {
        Philox rng(seed, streams::directions ^ static_cast<std::uint64_t>(t));
        std::vector<Index> idx(static_cast<std::size_t>(p));
        std::iota(idx.begin(), idx.end(), Index{0});
        Vector d = Vector::Zero(p);
        for (Index i = 0; i < s1; ++i) {
            const auto j = i + static_cast<Index>(rng.below(static_cast<std::uint64_t>(p - i)));
            std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
            d[idx[static_cast<std::size_t>(i)]] = rng.normal();
        }
        if (d.squaredNorm() == 0.0)
            d[idx[0]] = 1.0;
        d.normalize();
        const Vector proj = rows * d;
        const Index hits = (proj.array().abs() >= u).count();
        worst = std::min(worst, static_cast<double>(hits) / static_cast<double>(rows.rows()));
    }
    return worst;
}

} // namespace slk
