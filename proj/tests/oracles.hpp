#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "anomaly/svdd.hpp"

// Independent reference implementations used to check the library: a
// projected-gradient solver for the SVDD dual and an all-pairs AUROC.

namespace oracles {

using anomaly::FeatureVector;

inline std::vector<double> build_gram(const std::vector<FeatureVector>& xs, double s) {
    const std::size_t n = xs.size();
    std::vector<double> g(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) g[i * n + j] = anomaly::rbf_kernel(xs[i], xs[j], s);
    return g;
}

inline double dual_objective(const std::vector<double>& gram, const std::vector<double>& a) {
    const std::size_t n = a.size();
    double lin = 0.0, quad = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        lin += a[i] * gram[i * n + i];
        for (std::size_t j = 0; j < n; ++j) quad += a[i] * a[j] * gram[i * n + j];
    }
    return lin - quad;
}

// projection onto {a : sum a = 1, 0 <= a_i <= cap} by bisection on the shift
inline std::vector<double> project_capped_simplex(std::vector<double> v, double cap) {
    double lo = -2.0, hi = 2.0;
    for (double x : v) {
        lo = std::min(lo, x - cap - 1.0);
        hi = std::max(hi, x + 1.0);
    }
    for (int it = 0; it < 200; ++it) {
        const double theta = 0.5 * (lo + hi);
        double sum = 0.0;
        for (double x : v) sum += std::min(std::max(x - theta, 0.0), cap);
        if (sum > 1.0)
            lo = theta;
        else
            hi = theta;
    }
    const double theta = 0.5 * (lo + hi);
    for (double& x : v) x = std::min(std::max(x - theta, 0.0), cap);
    return v;
}

// brute-force projected gradient ascent on the SVDD dual
inline std::vector<double> pg_solve(const std::vector<double>& gram, std::size_t n, double cap,
                                    std::size_t max_iters = 1000000) {
    std::vector<double> a(n, 1.0 / static_cast<double>(n));
    a = project_capped_simplex(a, cap);
    const double step = 1.0 / (2.0 * static_cast<double>(n));
    for (std::size_t it = 0; it < max_iters; ++it) {
        std::vector<double> g(n);
        for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += a[j] * gram[i * n + j];
            g[i] = gram[i * n + i] - 2.0 * acc;
        }
        std::vector<double> next(n);
        for (std::size_t i = 0; i < n; ++i) next[i] = a[i] + step * g[i];
        next = project_capped_simplex(next, cap);
        double delta = 0.0;
        for (std::size_t i = 0; i < n; ++i) delta = std::max(delta, std::abs(next[i] - a[i]));
        a = next;
        if (delta < 1e-14) break;
    }
    return a;
}

// O(n^2) reference: P(id > anom) + 0.5 P(id == anom)
inline double auroc_all_pairs(const std::vector<double>& id, const std::vector<double>& anom) {
    double acc = 0.0;
    for (double a : id)
        for (double b : anom) {
            if (a > b) acc += 1.0;
            else if (a == b) acc += 0.5;
        }
    return acc / (static_cast<double>(id.size()) * static_cast<double>(anom.size()));
}

} // namespace oracles
