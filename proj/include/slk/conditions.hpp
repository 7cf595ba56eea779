#pragma once

#include "slk/core.hpp"

#include <cstdint>
#include <optional>
#include <string>

namespace slk {

enum class ConeKind { re, sre, wre };

const char *to_string(ConeKind kind);

/// RE:  ||d||_1 <= (1+c0) sum_{j<=s} d#_j
/// SRE: ||d||_1 <= (1+c0) sqrt(s) ||d||_2
/// WRE: ||d||_* <= (1+c0) ||d||_2 (sum_{j<=s} lambda_j^2)^{1/2}
struct ConeSpec {
    ConeKind kind = ConeKind::sre;
    Index s = 1;
    double c0 = 1.0;
    std::optional<WeightVector> weights;

    void validate(Index p) const;
};

/// Membership with a 1e-12 relative tolerance on the defining inequality.
bool cone_contains(const Vector &delta, const ConeSpec &cone);

/// Largest feasible point of the form soft_threshold(delta, t) (SRE, WRE) or
/// with a shrunken tail (RE). Returns delta unchanged when it is already inside.
Vector retract_to_cone(const Vector &delta, const ConeSpec &cone);

struct SparseEigenvalues {
    double theta_min;
    double theta_max;
};

inline constexpr std::int64_t kDefaultSupportBudget = 1000000;

/// Extremes of ||X d||_n / ||d||_2 over s-sparse d, by enumerating every support.
/// Throws when choose(p, s) exceeds the budget.
SparseEigenvalues sparse_eigenvalues(const DesignMatrix &x, Index s,
                                     std::int64_t budget = kDefaultSupportBudget);

enum class BracketMethod { exhaustive, sampled, certified_chain };

const char *to_string(BracketMethod method);

/// Bracket for min over the cone of ||X d||_n / ||d||_2. `upper` is attained
/// by `witness`. `lower` is always a valid bound; `method` says where it came
/// from: exhaustive (smallest eigenvalue over all of R^p), certified_chain
/// (sparse-eigenvalue chain) or sampled (no certificate beyond zero).
struct ConstantBracket {
    double lower = 0.0;
    double upper = 0.0;
    Vector witness;
    BracketMethod method = BracketMethod::sampled;
};

struct SearchBudget {
    int restarts = 200;
    int iterations = 400;
    std::uint64_t seed = 0;
    std::int64_t support_budget = kDefaultSupportBudget;
};

ConstantBracket cone_constant_bracket(const DesignMatrix &x, const ConeSpec &cone,
                                      const SearchBudget &budget = {});

struct CertifiedSre {
    Index s1_max;
    double theta_lower;
};

/// s1_max = floor((s-1) theta1^2 / (2 c0^2)) with the bound theta1 / sqrt(2).
CertifiedSre certified_sre_lower(double theta1, Index s, double c0);

/// ceil(s log(2ep/s) / log 2)
Index wre_from_sre(Index s, Index p, double c0);

/// Smallest, over `trials` random s1-sparse unit directions d, of the fraction of
/// rows x with |d^T x| >= u.
double small_ball_probe(const Matrix &rows, double u, Index s1, int trials, std::uint64_t seed);

} // namespace slk
