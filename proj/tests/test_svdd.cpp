#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "anomaly/rng.hpp"
#include "anomaly/svdd.hpp"
#include "oracles.hpp"

using namespace anomaly;
using oracles::build_gram;
using oracles::dual_objective;
using oracles::pg_solve;

namespace {

std::vector<FeatureVector> random_cloud(std::size_t n, std::size_t dim, std::uint64_t seed,
                                        double spread = 1.0) {
    Rng rng(seed);
    std::vector<FeatureVector> xs(n, FeatureVector(dim));
    for (auto& x : xs)
        for (double& v : x) v = rng.normal(0.0, spread);
    return xs;
}

// smallest eigenvalue of a symmetric matrix by cyclic Jacobi rotations
double smallest_eigenvalue(std::vector<double> m, std::size_t n) {
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += m[p * n + q] * m[p * n + q];
        if (off < 1e-24) break;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = m[p * n + q];
                if (std::abs(apq) < 1e-18) continue;
                const double app = m[p * n + p], aqq = m[q * n + q];
                const double phi = 0.5 * std::atan2(2.0 * apq, aqq - app);
                const double c = std::cos(phi), s = std::sin(phi);
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = m[k * n + p], akq = m[k * n + q];
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = m[p * n + k], aqk = m[q * n + k];
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
            }
    }
    double lo = m[0];
    for (std::size_t i = 1; i < n; ++i) lo = std::min(lo, m[i * n + i]);
    return lo;
}

} // namespace

TEST(RbfKernel, SelfIsOne) {
    EXPECT_DOUBLE_EQ(rbf_kernel({1.5, -2.0}, {1.5, -2.0}, 0.7), 1.0);
}

TEST(RbfKernel, DistanceEqualsWidth) {
    const double s = 3.0;
    EXPECT_NEAR(rbf_kernel({0, 0}, {s, 0}, s), std::exp(-1.0), 1e-15); // ~0.367879
}

TEST(RbfKernel, HandComputedDistance) {
    // ||(1,2,3)-(4,6,3)||^2 = 9+16 = 25, s^2 = 25
    EXPECT_NEAR(rbf_kernel({1, 2, 3}, {4, 6, 3}, 5.0), std::exp(-1.0), 1e-15);
}

TEST(RbfKernel, Errors) {
    EXPECT_THROW(rbf_kernel({1, 2}, {1, 2, 3}, 1.0), ValidationError);
    EXPECT_THROW(rbf_kernel({1}, {2}, 0.0), ValidationError);
    EXPECT_THROW(rbf_kernel({1}, {2}, -1.0), ValidationError);
}

TEST(RbfKernel, SymmetricAndBounded) {
    Rng rng(5);
    for (int k = 0; k < 50; ++k) {
        FeatureVector x(4), y(4);
        for (double& v : x) v = rng.normal(0, 2);
        for (double& v : y) v = rng.normal(0, 2);
        const double a = rbf_kernel(x, y, 1.3), b = rbf_kernel(y, x, 1.3);
        EXPECT_DOUBLE_EQ(a, b);
        EXPECT_GT(a, 0.0);
        EXPECT_LE(a, 1.0);
    }
}

TEST(MedianWidth, SinglePair) {
    EXPECT_DOUBLE_EQ(median_heuristic_width({{0.0, 0.0}, {0.0, 4.0}}), 4.0);
}

TEST(MedianWidth, DegenerateIdentical) {
    EXPECT_DOUBLE_EQ(median_heuristic_width({{1, 1}, {1, 1}, {1, 1}}), 1.0);
}

TEST(MedianWidth, TooFewVectors) {
    EXPECT_THROW(median_heuristic_width({{1.0}}), ValidationError);
}

TEST(MedianWidth, SubsampleNearExactMedian) {
    const auto xs = random_cloud(100, 10, 404);
    std::vector<double> all;
    for (std::size_t i = 0; i < xs.size(); ++i)
        for (std::size_t j = i + 1; j < xs.size(); ++j)
            all.push_back(std::sqrt(squared_distance(xs[i], xs[j])));
    std::sort(all.begin(), all.end());
    const double exact = 0.5 * (all[all.size() / 2 - 1] + all[all.size() / 2]);
    const double est = median_heuristic_width(xs);
    EXPECT_NEAR(est, exact, 0.1 * exact);
}

TEST(SvddTrain, SinglePoint) {
    SvddConfig cfg;
    const SvddModel m = svdd_train({{2.0, -1.0}}, cfg);
    ASSERT_EQ(m.alphas.size(), 1u);
    EXPECT_DOUBLE_EQ(m.alphas[0], 1.0);
    EXPECT_DOUBLE_EQ(m.r_squared, 0.0);
    EXPECT_NEAR(svdd_raw_score(m, {2.0, -1.0}), 0.0, 1e-9);
}

TEST(SvddTrain, TwoPointsNuOneIsSymmetric) {
    SvddConfig cfg;
    cfg.nu = 1.0;
    const SvddModel m = svdd_train({{0.0, 0.0}, {1.0, 0.0}}, cfg);
    ASSERT_EQ(m.alphas.size(), 2u);
    EXPECT_NEAR(m.alphas[0], 0.5, 1e-9);
    EXPECT_NEAR(m.alphas[1], 0.5, 1e-9);
}

TEST(SvddTrain, FeasibilityInvariants) {
    for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
        const auto xs = random_cloud(40, 3, seed);
        SvddConfig cfg;
        cfg.nu = 0.1;
        const SvddModel m = svdd_train(xs, cfg);
        EXPECT_TRUE(m.converged);
        const double box = 1.0 / (40.0 * cfg.nu);
        double sum = 0.0;
        for (double a : m.alphas) {
            EXPECT_GE(a, 0.0);
            EXPECT_LE(a, box + cfg.solver_tolerance);
            sum += a;
        }
        EXPECT_NEAR(sum, 1.0, 1e-6);
        EXPECT_GE(m.r_squared, 0.0);
    }
}

TEST(SvddTrain, MatchesProjectedGradientOracle) {
    Rng rng(2024);
    for (int inst = 0; inst < 25; ++inst) {
        const std::size_t n = 2 + rng.below(7); // 2..8
        const auto xs = random_cloud(n, 2, 9000 + static_cast<std::uint64_t>(inst), 1.5);
        SvddConfig cfg;
        cfg.nu = (inst % 3 == 0) ? 0.5 : 0.15;
        cfg.kernel_width_s = 1.0 + 0.3 * static_cast<double>(inst % 4);
        const SvddModel m = svdd_train(xs, cfg);

        const double cap = std::min(1.0, 1.0 / (static_cast<double>(n) * cfg.nu));
        const auto gram = build_gram(xs, cfg.kernel_width_s);
        const auto ref = pg_solve(gram, n, cap);

        // recover full alpha from the stored support vectors
        std::vector<double> full(n, 0.0);
        std::size_t sv = 0;
        for (std::size_t i = 0; i < n && sv < m.support_vectors.size(); ++i)
            if (xs[i] == m.support_vectors[sv]) full[i] = m.alphas[sv++];
        EXPECT_EQ(sv, m.support_vectors.size());

        EXPECT_NEAR(dual_objective(gram, full), dual_objective(gram, ref), 1e-6)
            << "instance " << inst << " n=" << n;
    }
}

TEST(SvddRawScore, UnboundedSupportVectorsOnBoundary) {
    const auto xs = random_cloud(50, 2, 606);
    SvddConfig cfg;
    cfg.nu = 0.2;
    const SvddModel m = svdd_train(xs, cfg);
    const double box = 1.0 / (50.0 * cfg.nu);
    std::size_t checked = 0;
    for (std::size_t i = 0; i < m.alphas.size(); ++i) {
        if (m.alphas[i] > cfg.solver_tolerance && m.alphas[i] < box - cfg.solver_tolerance) {
            EXPECT_LT(std::abs(svdd_raw_score(m, m.support_vectors[i])), 10.0 * 1e-6);
            ++checked;
        }
    }
    EXPECT_GT(checked, 0u);
}

TEST(SvddRawScore, DimensionMismatch) {
    const SvddModel m = svdd_train({{0.0, 0.0}, {1.0, 1.0}}, SvddConfig{});
    EXPECT_THROW(svdd_raw_score(m, {1.0, 2.0, 3.0}), ValidationError);
}

TEST(SvddRawScore, DecaysAlongRays) {
    const auto xs = random_cloud(30, 2, 707, 0.5);
    SvddConfig cfg;
    const SvddModel m = svdd_train(xs, cfg);
    FeatureVector centroid(2, 0.0);
    for (const auto& x : xs)
        for (std::size_t d = 0; d < 2; ++d) centroid[d] += x[d] / 30.0;
    double rmax = 0.0;
    for (const auto& x : xs) rmax = std::max(rmax, std::sqrt(squared_distance(x, centroid)));

    const double pi = 3.14159265358979323846;
    for (int ray = 0; ray < 10; ++ray) {
        const double ang = 2.0 * pi * ray / 10.0;
        double prev = 1e300, first = 0.0, last = 0.0;
        for (double t = rmax; t < rmax + 6.0; t += 0.5) {
            const FeatureVector z{centroid[0] + t * std::cos(ang), centroid[1] + t * std::sin(ang)};
            const double s = svdd_raw_score(m, z);
            if (t == rmax) first = s;
            EXPECT_LE(s, prev) << "ray " << ray << " t " << t; // equality only at kernel underflow
            prev = s;
            last = s;
        }
        EXPECT_LT(last, first) << "ray " << ray;
    }
}

TEST(SvddRawScore, SignMatchesOracleVerdict) {
    Rng rng(515);
    for (int inst = 0; inst < 6; ++inst) {
        const std::size_t n = 3 + rng.below(6);
        const auto xs = random_cloud(n, 2, 11000 + static_cast<std::uint64_t>(inst), 1.2);
        SvddConfig cfg;
        cfg.nu = 0.3;
        cfg.kernel_width_s = 1.5;
        const SvddModel m = svdd_train(xs, cfg);

        const double cap = std::min(1.0, 1.0 / (static_cast<double>(n) * cfg.nu));
        const auto gram = build_gram(xs, cfg.kernel_width_s);
        const auto ref = pg_solve(gram, n, cap);

        // oracle r^2 via the same unbounded-support-vector rule
        double self = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) self += ref[i] * ref[j] * gram[i * n + j];
        auto d2 = [&](const FeatureVector& z) {
            double cross = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                cross += ref[i] * rbf_kernel(z, xs[i], cfg.kernel_width_s);
            return 1.0 - 2.0 * cross + self;
        };
        double r2_sum = 0.0, r2_max = 0.0;
        std::size_t unb = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (ref[i] <= 1e-9) continue;
            const double di = d2(xs[i]);
            r2_max = std::max(r2_max, di);
            if (ref[i] < cap - 1e-9) { r2_sum += di; ++unb; }
        }
        const double r2 = unb ? r2_sum / static_cast<double>(unb) : r2_max;

        for (int probe = 0; probe < 50; ++probe) {
            FeatureVector z{rng.normal(0, 2), rng.normal(0, 2)};
            const double ours = svdd_raw_score(m, z);
            const double oracle = r2 - d2(z);
            if (std::abs(oracle) > 1e-4) // skip razor-edge probes
                EXPECT_EQ(ours > 0.0, oracle > 0.0) << "inst " << inst << " probe " << probe;
        }
    }
}

TEST(SvddInvariants, TranslationInvariance) {
    const auto xs = random_cloud(25, 3, 808);
    auto shifted = xs;
    const FeatureVector off{12.5, -3.25, 100.0};
    for (auto& x : shifted)
        for (std::size_t d = 0; d < 3; ++d) x[d] += off[d];

    SvddConfig cfg;
    cfg.kernel_width_s = 2.0;
    const SvddModel a = svdd_train(xs, cfg);
    const SvddModel b = svdd_train(shifted, cfg);
    Rng rng(909);
    for (int k = 0; k < 20; ++k) {
        FeatureVector z{rng.normal(0, 2), rng.normal(0, 2), rng.normal(0, 2)};
        FeatureVector zs = z;
        for (std::size_t d = 0; d < 3; ++d) zs[d] += off[d];
        EXPECT_NEAR(svdd_raw_score(a, z), svdd_raw_score(b, zs), 1e-8);
    }
}

TEST(SvddInvariants, NuMonotonicity) {
    const auto xs = random_cloud(60, 2, 1212);
    SvddConfig cfg;
    cfg.kernel_width_s = median_heuristic_width(xs);
    std::size_t prev_outside = 0;
    for (double nu : {0.01, 0.05, 0.1, 0.2, 0.35, 0.5}) {
        cfg.nu = nu;
        const SvddModel m = svdd_train(xs, cfg);
        std::size_t outside = 0;
        for (const auto& x : xs)
            if (svdd_raw_score(m, x) < 0.0) ++outside;
        EXPECT_GE(outside, prev_outside) << "nu " << nu;
        prev_outside = outside;
    }
}

TEST(SvddInvariants, GramIsPositiveSemidefinite) {
    for (std::uint64_t seed : {21u, 22u, 23u}) {
        const auto xs = random_cloud(50, 4, seed);
        const auto gram = build_gram(xs, 1.7);
        EXPECT_GT(smallest_eigenvalue(gram, 50), -1e-8);
    }
}

TEST(SvddTrain, NonConvergenceIsFlaggedNotFatal) {
    const auto xs = random_cloud(40, 3, 31);
    SvddConfig cfg;
    cfg.nu = 0.1;
    cfg.max_iterations = 1; // cannot possibly satisfy the KKT gap
    const SvddModel m = svdd_train(xs, cfg);
    EXPECT_FALSE(m.converged);
    // the best iterate is still usable and feasible
    double sum = 0.0;
    for (double a : m.alphas) sum += a;
    EXPECT_NEAR(sum, 1.0, 1e-9);
}

TEST(SvddConfigValidation, RejectsBadValues) {
    SvddConfig bad;
    bad.nu = 0.0;
    EXPECT_THROW(svdd_train({{1.0}}, bad), ValidationError);
    bad.nu = 1.5;
    EXPECT_THROW(svdd_train({{1.0}}, bad), ValidationError);
    bad.nu = 0.5;
    bad.solver_tolerance = 0.0;
    EXPECT_THROW(svdd_train({{1.0}}, bad), ValidationError);
    EXPECT_THROW(svdd_train({}, SvddConfig{}), ValidationError);
    EXPECT_THROW(svdd_train({{1.0, 2.0}, {1.0}}, SvddConfig{}), ValidationError);
}
