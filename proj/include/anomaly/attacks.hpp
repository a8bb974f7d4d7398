#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "anomaly/network.hpp"
#include "anomaly/tensor.hpp"

// White-box adversarial sample generators: FGSM, BIM (a/b), JSMA and a
// fixed-c Carlini-Wagner L2. All outputs are clipped to [clip_min, clip_max]
// and, for the epsilon-ball family, projected back to the L-inf ball around
// the original input.

namespace anomaly {

struct AttackConfig {
    double epsilon = 0.2;
    double step_size = 0.02;
    std::size_t max_iterations = 20;
    double jsma_theta = 1.0;
    double jsma_gamma = 0.1;
    double cw_c = 1.0;
    double cw_kappa = 0.0;
    double cw_learning_rate = 0.01;
    std::size_t cw_iterations = 200;
    double clip_min = 0.0;
    double clip_max = 1.0;

    void validate() const {
        // zero epsilon is the documented identity attack; only negatives are invalid
        if (!(epsilon >= 0.0)) throw ValidationError("attack: epsilon must be non-negative");
        if (!(jsma_gamma > 0.0 && jsma_gamma <= 1.0))
            throw ValidationError("attack: jsma_gamma must be in (0,1]");
        if (!(clip_min < clip_max)) throw ValidationError("attack: clip_min must be < clip_max");
        if (!(cw_learning_rate > 0.0)) throw ValidationError("attack: cw_learning_rate must be positive");
    }
};

struct AttackResult {
    Tensor image;
    bool success = false;
    std::size_t iterations = 0;
};

namespace detail {

inline double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

inline void clip_range(Tensor& t, double lo, double hi) {
    for (double& v : t.data) v = std::min(std::max(v, lo), hi);
}

inline void clip_ball(Tensor& t, const Tensor& center, double eps) {
    for (std::size_t i = 0; i < t.numel(); ++i) {
        const double lo = center.data[i] - eps, hi = center.data[i] + eps;
        t.data[i] = std::min(std::max(t.data[i], lo), hi);
    }
}

} // namespace detail

// x' = clip(x + eps * sign(dCE/dx))
inline AttackResult fgsm(const NetworkModel& model, const Tensor& x, std::size_t true_label,
                         const AttackConfig& cfg) {
    cfg.validate();
    const Tensor g = input_gradient(model, x, LossKind::cross_entropy_true_label, true_label);
    AttackResult res;
    res.image = x;
    for (std::size_t i = 0; i < x.numel(); ++i)
        res.image.data[i] = x.data[i] + cfg.epsilon * detail::sign(g.data[i]);
    detail::clip_range(res.image, cfg.clip_min, cfg.clip_max);
    res.iterations = 1;
    res.success = predict_class(model, res.image) != true_label;
    return res;
}

enum class BimVariant { a, b };

// Iterated FGSM inside the epsilon ball. Variant a stops at the first
// misclassified iterate, variant b always runs the full budget.
inline AttackResult bim(const NetworkModel& model, const Tensor& x, std::size_t true_label,
                        const AttackConfig& cfg, BimVariant variant) {
    cfg.validate();
    AttackResult res;
    res.image = x;
    for (std::size_t it = 0; it < cfg.max_iterations; ++it) {
        if (variant == BimVariant::a && predict_class(model, res.image) != true_label) {
            res.success = true;
            return res;
        }
        const Tensor g = input_gradient(model, res.image, LossKind::cross_entropy_true_label, true_label);
        for (std::size_t i = 0; i < res.image.numel(); ++i)
            res.image.data[i] += cfg.step_size * detail::sign(g.data[i]);
        detail::clip_ball(res.image, x, cfg.epsilon);
        detail::clip_range(res.image, cfg.clip_min, cfg.clip_max);
        res.iterations = it + 1;
    }
    res.success = predict_class(model, res.image) != true_label;
    return res;
}

// Greedy saliency-map attack on increasing pixel pairs. Each round adds
// jsma_theta to the pair (p,q) maximizing target-gradient gain against the
// summed gradient of the other logits; stops at the target class or when
// ceil(gamma * n) modified pixels would be exceeded.
inline AttackResult jsma(const NetworkModel& model, const Tensor& x, std::size_t target_label,
                         const AttackConfig& cfg) {
    cfg.validate();
    if (target_label >= model.class_count) throw ValidationError("jsma: target out of range");
    if (predict_class(model, x) == target_label)
        throw ValidationError("jsma: input already classified as target");

    const std::size_t n = x.numel();
    const std::size_t budget =
        static_cast<std::size_t>(std::ceil(cfg.jsma_gamma * static_cast<double>(n)));

    AttackResult res;
    res.image = x;
    std::vector<bool> modified(n, false);
    std::size_t modified_count = 0;

    std::vector<double> ones(model.class_count, 1.0);
    std::vector<double> target_seed(model.class_count, 0.0);
    target_seed[target_label] = 1.0;

    while (modified_count + 2 <= budget) {
        if (predict_class(model, res.image) == target_label) {
            res.success = true;
            return res;
        }
        const ForwardTrace tr = run_forward(model, res.image);
        const Tensor g_target = logit_gradient(model, tr, target_seed);
        const Tensor g_all = logit_gradient(model, tr, ones);

        // candidates: pixels not yet saturated at clip_max
        std::vector<std::size_t> cand;
        for (std::size_t i = 0; i < n; ++i)
            if (res.image.data[i] < cfg.clip_max) cand.push_back(i);

        double best = 0.0;
        std::size_t bp = n, bq = n;
        for (std::size_t a = 0; a < cand.size(); ++a) {
            for (std::size_t b = a + 1; b < cand.size(); ++b) {
                const std::size_t p = cand[a], q = cand[b];
                const double alpha = g_target.data[p] + g_target.data[q];
                const double beta = (g_all.data[p] - g_target.data[p]) +
                                    (g_all.data[q] - g_target.data[q]);
                if (alpha > 0.0 && beta < 0.0) {
                    const double saliency = -alpha * beta;
                    if (saliency > best) { best = saliency; bp = p; bq = q; }
                }
            }
        }
        if (bp == n) break; // no admissible pair left

        for (std::size_t p : {bp, bq}) {
            res.image.data[p] = std::min(res.image.data[p] + cfg.jsma_theta, cfg.clip_max);
            res.image.data[p] = std::max(res.image.data[p], cfg.clip_min);
            if (!modified[p]) { modified[p] = true; ++modified_count; }
        }
        res.iterations += 1;
    }
    res.success = predict_class(model, res.image) == target_label;
    return res;
}

// Fixed-c L2 Carlini-Wagner in the tanh change-of-variable space:
// minimize ||x'-x||^2 + c * max(Z_true - max_{j!=true} Z_j + kappa, 0).
// Returns the successful iterate with the smallest distortion, or the last
// iterate flagged unsuccessful.
inline AttackResult cw_l2(const NetworkModel& model, const Tensor& x, std::size_t true_label,
                          const AttackConfig& cfg) {
    cfg.validate();
    const double lo = cfg.clip_min, hi = cfg.clip_max;
    const double span = hi - lo;

    // inward nudge keeps atanh finite
    Tensor w(x.shape);
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const double xi = std::min(std::max(x.data[i], lo + 1e-6), hi - 1e-6);
        w.data[i] = std::atanh(2.0 * (xi - lo) / span - 1.0);
    }

    auto to_image = [&](const Tensor& wt) {
        Tensor img(wt.shape);
        for (std::size_t i = 0; i < wt.numel(); ++i)
            img.data[i] = lo + span * (std::tanh(wt.data[i]) + 1.0) / 2.0;
        return img;
    };
    auto distortion = [&](const Tensor& img) {
        double acc = 0.0;
        for (std::size_t i = 0; i < img.numel(); ++i) {
            const double d = img.data[i] - x.data[i];
            acc += d * d;
        }
        return acc;
    };

    AttackResult res;
    double best_dist = std::numeric_limits<double>::infinity();
    Tensor last = to_image(w);

    for (std::size_t it = 0; it < cfg.cw_iterations; ++it) {
        const Tensor img = to_image(w);
        last = img;

        const ForwardTrace tr = run_forward(model, img);
        const Tensor& z = tr.logits(model);
        std::size_t rival = true_label == 0 ? 1 : 0;
        for (std::size_t j = 0; j < z.numel(); ++j)
            if (j != true_label && z.data[j] > z.data[rival]) rival = j;
        const double margin = z.data[true_label] - z.data[rival];

        if (argmax_index(tr.outputs.back().data) != true_label) {
            const double d = distortion(img);
            if (d < best_dist) {
                best_dist = d;
                res.image = img;
                res.success = true;
            }
        }

        // dL/dimg
        Tensor grad(img.shape);
        for (std::size_t i = 0; i < img.numel(); ++i)
            grad.data[i] = 2.0 * (img.data[i] - x.data[i]);
        if (margin + cfg.cw_kappa > 0.0) {
            std::vector<double> seed(model.class_count, 0.0);
            seed[true_label] = 1.0;
            seed[rival] = -1.0;
            const Tensor mg = logit_gradient(model, tr, seed);
            for (std::size_t i = 0; i < img.numel(); ++i)
                grad.data[i] += cfg.cw_c * mg.data[i];
        }
        // chain through the change of variable and step
        for (std::size_t i = 0; i < w.numel(); ++i) {
            const double th = std::tanh(w.data[i]);
            w.data[i] -= cfg.cw_learning_rate * grad.data[i] * span * 0.5 * (1.0 - th * th);
        }
        res.iterations = it + 1;
    }
    if (!res.success) res.image = last;
    return res;
}

} // namespace anomaly
