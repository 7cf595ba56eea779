#include "slk/prox.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace slk {

Vector soft_threshold(const Vector &v, double t) {
    if (!(t >= 0.0))
        throw std::invalid_argument("soft_threshold: threshold must be nonnegative");
    Vector out(v.size());
    for (Index j = 0; j < v.size(); ++j) {
        const double mag = std::abs(v[j]) - t;
        out[j] = mag > 0.0 ? std::copysign(mag, v[j]) : 0.0;
    }
    return out;
}

SortedL1Prox::SortedL1Prox(Index p) {
    const auto n = static_cast<std::size_t>(p);
    order_.reserve(n);
    sums_.reserve(n);
    means_.reserve(n);
    starts_.reserve(n);
}

void SortedL1Prox::apply(const Vector &v, const Vector &scaled_weights, Vector &out) {
    const Index p = v.size();
    if (scaled_weights.size() != p)
        throw std::invalid_argument("prox_sorted_l1: length mismatch");
    out.resize(p);

    order_.resize(static_cast<std::size_t>(p));
    std::iota(order_.begin(), order_.end(), Index{0});
    std::stable_sort(order_.begin(), order_.end(),
                     [&](Index a, Index b) { return std::abs(v[a]) > std::abs(v[b]); });

    // Blocks live on a stack; a new entry is merged while it is not strictly
    // below the block on top, which keeps the block means decreasing.
    sums_.clear();
    means_.clear();
    starts_.clear();
    for (Index i = 0; i < p; ++i) {
        const double w = std::abs(v[order_[static_cast<std::size_t>(i)]]) - scaled_weights[i];
        starts_.push_back(i);
        sums_.push_back(w);
        means_.push_back(w);
        while (means_.size() > 1 && means_[means_.size() - 2] <= means_.back()) {
            const double sum = sums_.back();
            sums_.pop_back();
            means_.pop_back();
            starts_.pop_back();
            sums_.back() += sum;
            means_.back() = sums_.back() / static_cast<double>(i - starts_.back() + 1);
        }
    }

    for (std::size_t b = 0; b < starts_.size(); ++b) {
        const Index begin = starts_[b];
        const Index end = b + 1 < starts_.size() ? starts_[b + 1] : p;
        const double level = std::max(means_[b], 0.0);
        for (Index i = begin; i < end; ++i) {
            const Index j = order_[static_cast<std::size_t>(i)];
            out[j] = level > 0.0 ? std::copysign(level, v[j]) : 0.0;
        }
    }
}

Vector prox_sorted_l1(const ProxRequest &req) {
    if (!(req.step > 0.0))
        throw std::invalid_argument("prox_sorted_l1: step must be positive");
    if (req.point.size() != req.weights.size())
        throw std::invalid_argument("prox_sorted_l1: length mismatch");
    SortedL1Prox prox(req.point.size());
    Vector out;
    prox.apply(req.point, req.weights.values() * req.step, out);
    return out;
}

Vector isotonic_nonincreasing(const Vector &y) {
    std::vector<double> sums;
    std::vector<Index> starts;
    std::vector<double> means;
    for (Index i = 0; i < y.size(); ++i) {
        starts.push_back(i);
        sums.push_back(y[i]);
        means.push_back(y[i]);
        while (means.size() > 1 && means[means.size() - 2] <= means.back()) {
            const double sum = sums.back();
            sums.pop_back();
            means.pop_back();
            starts.pop_back();
            sums.back() += sum;
            means.back() = sums.back() / static_cast<double>(i - starts.back() + 1);
        }
    }
    Vector out(y.size());
    for (std::size_t b = 0; b < starts.size(); ++b) {
        const Index end = b + 1 < starts.size() ? starts[b + 1] : y.size();
        for (Index i = starts[b]; i < end; ++i)
            out[i] = means[b];
    }
    return out;
}

} // namespace slk
