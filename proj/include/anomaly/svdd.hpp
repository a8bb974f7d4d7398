#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "anomaly/rng.hpp"
#include "anomaly/tensor.hpp"

// Support Vector Domain Description with the Gaussian RBF kernel.
//
// Dual problem solved here, for training vectors x_1..x_n:
//
//   maximize   sum_i a_i K(x_i,x_i) - sum_ij a_i a_j K(x_i,x_j)
//   subject to sum_i a_i = 1,  0 <= a_i <= C,  C = 1/(n*nu)
//
// A test vector z is scored by the signed margin to the sphere boundary,
// R^2 - ||z - a||^2, so positive means inside (normal) and negative means
// outside (anomalous).

namespace anomaly {

using FeatureVector = std::vector<double>;

inline double squared_distance(const FeatureVector& x, const FeatureVector& y) {
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - y[i];
        acc += d * d;
    }
    return acc;
}

// K(x,y) = exp(-||x-y||^2 / s^2)
inline double rbf_kernel(const FeatureVector& x, const FeatureVector& y, double s) {
    if (x.size() != y.size())
        throw ValidationError("rbf_kernel: dimension mismatch " + std::to_string(x.size()) +
                              " vs " + std::to_string(y.size()));
    if (!(s > 0.0)) throw ValidationError("rbf_kernel: width must be positive");
    return std::exp(-squared_distance(x, y) / (s * s));
}

// Median of pairwise Euclidean distances, subsampled to at most 2000 pairs
// with a fixed seed. Falls back to 1.0 when the median distance is zero
// (all features identical).
inline double median_heuristic_width(const std::vector<FeatureVector>& features) {
    const std::size_t n = features.size();
    if (n < 2) throw ValidationError("median_heuristic_width needs at least 2 vectors");
    const std::size_t total_pairs = n * (n - 1) / 2;
    std::vector<double> dists;
    if (total_pairs <= 2000) {
        dists.reserve(total_pairs);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                dists.push_back(std::sqrt(squared_distance(features[i], features[j])));
    } else {
        Rng rng(0x6d656469616eull); // fixed: width must not depend on caller state
        dists.reserve(2000);
        for (int k = 0; k < 2000; ++k) {
            std::size_t i = rng.below(n);
            std::size_t j = rng.below(n - 1);
            if (j >= i) ++j;
            dists.push_back(std::sqrt(squared_distance(features[i], features[j])));
        }
    }
    std::sort(dists.begin(), dists.end());
    const std::size_t m = dists.size();
    const double median = (m % 2 == 1) ? dists[m / 2] : 0.5 * (dists[m / 2 - 1] + dists[m / 2]);
    return median > 0.0 ? median : 1.0;
}

struct SvddConfig {
    double nu = 0.1;
    double kernel_width_s = 0.0; // <= 0 means "auto": median heuristic
    double solver_tolerance = 1e-9;
    std::size_t max_iterations = 200000;

    void validate() const {
        if (!(nu > 0.0 && nu <= 1.0)) throw ValidationError("svdd: nu must be in (0,1]");
        if (!(solver_tolerance > 0.0)) throw ValidationError("svdd: tolerance must be positive");
        if (max_iterations == 0) throw ValidationError("svdd: max_iterations must be positive");
    }
};

struct SvddModel {
    std::vector<FeatureVector> support_vectors;
    std::vector<double> alphas;
    double kernel_width_s = 1.0;
    double r_squared = 0.0;
    double self_term = 0.0; // sum_ij a_i a_j K(x_i, x_j) over support vectors
    bool converged = true;

    std::size_t dimension() const {
        return support_vectors.empty() ? 0 : support_vectors[0].size();
    }
};

// R^2 - ||z - a||^2 = r_squared - (K(z,z) - 2 sum_i a_i K(z,x_i) + self_term).
// Higher is more normal; negative means outside the sphere.
inline double svdd_raw_score(const SvddModel& model, const FeatureVector& z) {
    double cross = 0.0;
    for (std::size_t i = 0; i < model.support_vectors.size(); ++i) {
        if (model.support_vectors[i].size() != z.size())
            throw ValidationError("svdd_raw_score: dimension mismatch");
        cross += model.alphas[i] * rbf_kernel(z, model.support_vectors[i], model.kernel_width_s);
    }
    const double dist_sq = 1.0 - 2.0 * cross + model.self_term; // K(z,z) = 1 for RBF
    return model.r_squared - dist_sq;
}

namespace detail {

// SMO on the SVDD dual: repeatedly pick the pair with the largest KKT
// violation and transfer mass between its coordinates, which keeps
// sum(alpha) = 1 invariant. Gradient of the dual wrt a_k is
// K_kk - 2 sum_j a_j K_kj, maintained incrementally.
struct SmoResult {
    std::vector<double> alpha;
    bool converged = false;
};

inline SmoResult solve_svdd_dual(const std::vector<double>& gram, std::size_t n, double box_c,
                                 double tol, std::size_t max_iterations) {
    SmoResult res;
    res.alpha.assign(n, 1.0 / static_cast<double>(n));
    std::vector<double> grad(n);
    for (std::size_t k = 0; k < n; ++k) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += res.alpha[j] * gram[k * n + j];
        grad[k] = gram[k * n + k] - 2.0 * acc;
    }

    for (std::size_t iter = 0; iter < max_iterations; ++iter) {
        // i: best coordinate that can grow; j: worst that can shrink
        int up = -1, down = -1;
        for (std::size_t k = 0; k < n; ++k) {
            if (res.alpha[k] < box_c - tol && (up < 0 || grad[k] > grad[static_cast<std::size_t>(up)]))
                up = static_cast<int>(k);
            if (res.alpha[k] > tol && (down < 0 || grad[k] < grad[static_cast<std::size_t>(down)]))
                down = static_cast<int>(k);
        }
        if (up < 0 || down < 0) { res.converged = true; break; }
        const std::size_t i = static_cast<std::size_t>(up), j = static_cast<std::size_t>(down);
        const double violation = grad[i] - grad[j];
        if (violation < tol) { res.converged = true; break; }

        const double curvature = gram[i * n + i] + gram[j * n + j] - 2.0 * gram[i * n + j];
        double step = curvature > 0.0 ? violation / (2.0 * curvature)
                                      : std::numeric_limits<double>::infinity();
        step = std::min(step, std::min(box_c - res.alpha[i], res.alpha[j]));
        if (!(step > 0.0)) { res.converged = true; break; }

        res.alpha[i] += step;
        res.alpha[j] -= step;
        for (std::size_t k = 0; k < n; ++k)
            grad[k] -= 2.0 * step * (gram[k * n + i] - gram[k * n + j]);
    }
    return res;
}

} // namespace detail

inline SvddModel svdd_train(const std::vector<FeatureVector>& features, const SvddConfig& config) {
    config.validate();
    const std::size_t n = features.size();
    if (n == 0) throw ValidationError("svdd_train: empty feature list");
    const std::size_t dim = features[0].size();
    for (const auto& f : features)
        if (f.size() != dim) throw ValidationError("svdd_train: inconsistent feature dimensions");

    SvddModel model;
    model.kernel_width_s = config.kernel_width_s > 0.0
                               ? config.kernel_width_s
                               : (n >= 2 ? median_heuristic_width(features) : 1.0);

    if (n == 1) {
        model.support_vectors = features;
        model.alphas = {1.0};
        model.self_term = 1.0;
        model.r_squared = 0.0;
        return model;
    }

    // box constraint; clamped to 1 so sum(alpha)=1 stays feasible for any nu
    const double box_c = std::min(1.0, 1.0 / (static_cast<double>(n) * config.nu));
    const double tol = config.solver_tolerance;

    std::vector<double> gram(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        gram[i * n + i] = 1.0;
        for (std::size_t j = i + 1; j < n; ++j) {
            const double k = rbf_kernel(features[i], features[j], model.kernel_width_s);
            gram[i * n + j] = k;
            gram[j * n + i] = k;
        }
    }

    detail::SmoResult sol = detail::solve_svdd_dual(gram, n, box_c, tol, config.max_iterations);
    model.converged = sol.converged;

    // squared distance of x_k to the center, via the kernel expansion
    double self_term_full = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (sol.alpha[i] == 0.0) continue;
        for (std::size_t j = 0; j < n; ++j)
            self_term_full += sol.alpha[i] * sol.alpha[j] * gram[i * n + j];
    }
    auto dist_sq_of = [&](std::size_t k) {
        double cross = 0.0;
        for (std::size_t j = 0; j < n; ++j) cross += sol.alpha[j] * gram[k * n + j];
        return gram[k * n + k] - 2.0 * cross + self_term_full;
    };

    // R^2: mean boundary distance over unbounded support vectors; if every
    // support vector sits at the box, fall back to their maximum distance.
    double r2_sum = 0.0, r2_max = 0.0;
    std::size_t unbounded = 0;
    for (std::size_t k = 0; k < n; ++k) {
        if (sol.alpha[k] <= tol) continue;
        const double d2 = dist_sq_of(k);
        r2_max = std::max(r2_max, d2);
        if (sol.alpha[k] < box_c - tol) {
            r2_sum += d2;
            ++unbounded;
        }
    }
    model.r_squared = unbounded > 0 ? r2_sum / static_cast<double>(unbounded) : r2_max;

    std::vector<std::size_t> sv_idx;
    for (std::size_t k = 0; k < n; ++k) {
        if (sol.alpha[k] > tol) {
            sv_idx.push_back(k);
            model.support_vectors.push_back(features[k]);
            model.alphas.push_back(sol.alpha[k]);
        }
    }
    // self_term over the stored expansion (dropped alphas are below tol)
    model.self_term = 0.0;
    for (std::size_t a = 0; a < sv_idx.size(); ++a)
        for (std::size_t b = 0; b < sv_idx.size(); ++b)
            model.self_term += model.alphas[a] * model.alphas[b] * gram[sv_idx[a] * n + sv_idx[b]];
    return model;
}

} // namespace anomaly
