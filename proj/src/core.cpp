#include "slk/core.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>
#include <string>

namespace slk {

namespace {

void require_finite(const Matrix &m, const char *what) {
    if (!m.allFinite())
        throw DataError(std::string(what) + " contains non-finite entries");
}

} // namespace

DesignMatrix::DesignMatrix(Matrix data) : data_(std::move(data)) {
    if (data_.rows() < 1 || data_.cols() < 1)
        throw std::invalid_argument("DesignMatrix: need n >= 1 and p >= 1");
    require_finite(data_, "DesignMatrix");
}

double DesignMatrix::max_column_norm() const {
    const double n = static_cast<double>(rows());
    return std::sqrt(data_.colwise().squaredNorm().maxCoeff() / n);
}

DesignMatrix DesignMatrix::rescaled() const {
    Matrix out = data_;
    const double n = static_cast<double>(rows());
    for (Index j = 0; j < out.cols(); ++j) {
        double norm = std::sqrt(out.col(j).squaredNorm() / n);
        if (norm <= 1.0)
            continue;
        out.col(j) /= norm;
        // Division can land one ulp above 1; shrink until the contract holds.
        while (std::sqrt(out.col(j).squaredNorm() / n) > 1.0)
            out.col(j) *= (1.0 - std::numeric_limits<double>::epsilon());
    }
    return DesignMatrix(std::move(out));
}

Matrix DesignMatrix::gram() const {
    Matrix g = Matrix::Zero(cols(), cols());
    g.selfadjointView<Eigen::Lower>().rankUpdate(data_.transpose());
    g = g.selfadjointView<Eigen::Lower>();
    return g / static_cast<double>(rows());
}

WeightVector::WeightVector(Vector lambdas) : values_(std::move(lambdas)) {
    if (values_.size() < 1)
        throw std::invalid_argument("WeightVector: empty");
    if (!values_.allFinite())
        throw std::invalid_argument("WeightVector: non-finite weight");
    if (values_[values_.size() - 1] < 0.0)
        throw std::invalid_argument("WeightVector: negative weight");
    for (Index j = 1; j < values_.size(); ++j)
        if (values_[j] > values_[j - 1])
            throw std::invalid_argument("WeightVector: weights must be nonincreasing");
    if (values_[0] <= 0.0)
        throw std::invalid_argument("WeightVector: weights are all zero");
}

WeightVector WeightVector::constant(Index p, double lambda) {
    return WeightVector(Vector::Constant(p, lambda));
}

double WeightVector::head_l2(Index s) const {
    if (s < 0 || s > size())
        throw std::invalid_argument("WeightVector::head_l2: s out of range");
    return values_.head(s).norm();
}

WeightVector WeightVector::scaled(double factor) const {
    if (!(factor > 0.0))
        throw std::invalid_argument("WeightVector::scaled: factor must be positive");
    return WeightVector(values_ * factor);
}

const char *to_string(NoiseKind kind) {
    switch (kind) {
    case NoiseKind::gaussian: return "gaussian";
    case NoiseKind::rademacher: return "rademacher";
    case NoiseKind::bounded: return "bounded";
    }
    return "unknown";
}

NoiseKind noise_kind_from_string(const std::string &name) {
    if (name == "gaussian")
        return NoiseKind::gaussian;
    if (name == "rademacher" || name == "rademacher-scaled")
        return NoiseKind::rademacher;
    if (name == "bounded" || name == "bounded-subgaussian")
        return NoiseKind::bounded;
    throw std::invalid_argument("unknown noise kind: " + name);
}

std::vector<Index> descending_order(const Vector &v) {
    std::vector<Index> order(static_cast<std::size_t>(v.size()));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Index a, Index b) { return std::abs(v[a]) > std::abs(v[b]); });
    return order;
}

Vector rearrange_desc(const Vector &v) {
    Vector out = v.cwiseAbs();
    std::sort(out.data(), out.data() + out.size(), std::greater<>());
    return out;
}

double sorted_l1_norm(const Vector &v, const WeightVector &w) {
    if (v.size() != w.size())
        throw std::invalid_argument("sorted_l1_norm: length mismatch");
    return w.values().dot(rearrange_desc(v));
}

double lq_norm(const Vector &v, double q) {
    if (std::isinf(q) && q > 0)
        return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
    if (!(q >= 1.0))
        throw std::invalid_argument("lq_norm: q must be >= 1");
    if (q == 1.0)
        return v.cwiseAbs().sum();
    if (q == 2.0)
        return v.stableNorm();
    // Scale by the max entry so large exponents do not overflow.
    const double scale = v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
    if (scale == 0.0)
        return 0.0;
    return scale * std::pow((v.cwiseAbs() / scale).array().pow(q).sum(), 1.0 / q);
}

Index l0_count(const Vector &v, double threshold) {
    if (threshold < 0.0)
        throw std::invalid_argument("l0_count: negative threshold");
    return (v.array().abs() > threshold).count();
}

double empirical_norm(const Vector &u) {
    if (u.size() == 0)
        return 0.0;
    return std::sqrt(u.squaredNorm() / static_cast<double>(u.size()));
}

WeightVector slope_weights(Index n, Index p, double sigma, double a) {
    if (n < 1 || p < 1)
        throw std::invalid_argument("slope_weights: n and p must be positive");
    if (!(sigma > 0.0))
        throw std::invalid_argument("slope_weights: sigma must be positive");
    if (!(a > 0.0))
        throw std::invalid_argument("slope_weights: a must be positive");
    if (a <= kDeviationConstant)
        std::cerr << "warning: slope_weights: a = " << a
                  << " <= 4 + sqrt(2); oracle bounds do not apply\n";
    Vector lambdas(p);
    const double two_p = 2.0 * static_cast<double>(p);
    for (Index j = 0; j < p; ++j)
        lambdas[j] = a * sigma * std::sqrt(std::log(two_p / static_cast<double>(j + 1)) /
                                           static_cast<double>(n));
    return WeightVector(std::move(lambdas));
}

StirlingBracket stirling_bracket(Index s, Index p) {
    if (p < 1 || s < 1 || s > p)
        throw std::invalid_argument("stirling_bracket: need 1 <= s <= p");
    const double sd = static_cast<double>(s);
    const double two_p = 2.0 * static_cast<double>(p);
    /// sum_{j<=s} log(2p/j) = s log(2p) - log(s!)
    const double mid = sd * std::log(two_p) - std::lgamma(sd + 1.0);
    return {sd * std::log(two_p / sd), mid, sd * std::log(std::numbers::e * two_p / sd)};
}

HGValues h_g_values(const Vector &u, const DesignMatrix &x, double sigma, double delta0) {
    if (!(delta0 > 0.0 && delta0 < 1.0))
        throw std::invalid_argument("h_g_values: delta0 must lie in (0, 1)");
    if (u.size() != x.cols())
        throw std::invalid_argument("h_g_values: length mismatch");
    const double n = static_cast<double>(x.rows());
    const double two_p = 2.0 * static_cast<double>(x.cols());
    const Vector sorted = rearrange_desc(u);
    double h = 0.0;
    for (Index j = 0; j < sorted.size(); ++j)
        h += sorted[j] * std::sqrt(std::log(two_p / static_cast<double>(j + 1)) / n);
    h *= kDeviationConstant * sigma;
    const double g = kDeviationConstant * sigma * std::sqrt(std::log(1.0 / delta0) / n) *
                     empirical_norm(x.data() * u);
    return {h, g};
}

} // namespace slk
