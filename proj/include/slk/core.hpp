#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace slk {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// The constant 4 + sqrt(2) that appears in every deviation bound and tuning rule.
inline constexpr double kDeviationConstant = 4.0 + std::numbers::sqrt2;

/// Raised when input data (files, vectors) is malformed or inconsistent.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Dense n x p design. Columns are expected to satisfy ||X e_j||_n <= 1;
/// `normalized()` reports whether they do.
class DesignMatrix {
public:
    static constexpr double kNormTolerance = 1e-12;

    explicit DesignMatrix(Matrix data);

    Index rows() const { return data_.rows(); }
    Index cols() const { return data_.cols(); }
    const Matrix &data() const { return data_; }

    /// max_j ||X e_j||_n
    double max_column_norm() const;
    bool normalized() const { return max_column_norm() <= 1.0 + kNormTolerance; }

    /// Divides column j by max(1, ||X e_j||_n); the result satisfies
    /// max_j ||X e_j||_n <= 1 exactly in floating point.
    DesignMatrix rescaled() const;

    /// X^T X / n
    Matrix gram() const;

private:
    Matrix data_;
};

/// Nonincreasing, nonnegative, not-all-zero weights lambda_1 >= ... >= lambda_p >= 0.
class WeightVector {
public:
    explicit WeightVector(Vector lambdas);
    static WeightVector constant(Index p, double lambda);

    Index size() const { return values_.size(); }
    double operator[](Index j) const { return values_[j]; }
    const Vector &values() const { return values_; }

    /// (sum_{j<=s} lambda_j^2)^{1/2}
    double head_l2(Index s) const;

    WeightVector scaled(double factor) const;

private:
    Vector values_;
};

enum class NoiseKind { gaussian, rademacher, bounded };

/// Noise law for xi. Every kind satisfies E exp(xi_i^2 / sigma^2) <= e:
/// gaussian is N(0, sigma^2), rademacher is sigma * (+-1) (equality),
/// bounded is uniform on [-sigma, sigma].
struct NoiseModel {
    NoiseKind kind = NoiseKind::gaussian;
    double sigma = 1.0;
};

const char *to_string(NoiseKind kind);
NoiseKind noise_kind_from_string(const std::string &name);

/// Indices ordering |v| nonincreasingly; ties keep their original order.
std::vector<Index> descending_order(const Vector &v);

/// (v#_1, ..., v#_p): absolute values sorted nonincreasingly.
Vector rearrange_desc(const Vector &v);

/// sum_j lambda_j v#_j
double sorted_l1_norm(const Vector &v, const WeightVector &w);

/// l_q norm for q in [1, inf]; pass std::numeric_limits<double>::infinity() for max-norm.
double lq_norm(const Vector &v, double q);

/// Number of entries with |v_j| > threshold.
Index l0_count(const Vector &v, double threshold = 1e-12);

/// sqrt((1/n) sum u_i^2)
double empirical_norm(const Vector &u);

/// lambda_j = a * sigma * sqrt(log(2p/j) / n). Writes a warning to stderr when
/// a <= 4 + sqrt(2), the range where the oracle bounds are not claimed.
WeightVector slope_weights(Index n, Index p, double sigma, double a);

struct StirlingBracket {
    double lower; // s log(2p/s)
    double mid;   // sum_{j<=s} log(2p/j)
    double upper; // s log(2ep/s)
};

StirlingBracket stirling_bracket(Index s, Index p);

struct HGValues {
    double h;
    double g;
};

/// H(u) = (4+sqrt2) sum_j u#_j sigma sqrt(log(2p/j)/n),
/// G(u) = (4+sqrt2) sigma sqrt(log(1/delta0)/n) ||Xu||_n.
HGValues h_g_values(const Vector &u, const DesignMatrix &x, double sigma, double delta0);

} // namespace slk
