#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "anomaly/dataset.hpp"
#include "anomaly/network.hpp"
#include "anomaly/rng.hpp"
#include "anomaly/tensor.hpp"

// Noise-family anomaly generators: pixel noise (Gaussian / uniform) and
// fooling images evolved until the classifier assigns a chosen class with
// high confidence.

namespace anomaly {

// i.i.d. Normal(0.5, 1) per pixel, clipped to [0,1]
inline Dataset gaussian_noise(std::size_t count, const Shape& shape, std::uint64_t seed) {
    Dataset ds;
    ds.source = "gaussian_noise(seed=" + std::to_string(seed) + ")";
    ds.images.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        Rng rng(mix_seed(seed, i));
        Tensor t(shape);
        for (double& v : t.data) v = std::min(std::max(rng.normal(0.5, 1.0), 0.0), 1.0);
        ds.images.push_back(std::move(t));
    }
    return ds;
}

// i.i.d. Uniform[0,1) per pixel
inline Dataset uniform_noise(std::size_t count, const Shape& shape, std::uint64_t seed) {
    Dataset ds;
    ds.source = "uniform_noise(seed=" + std::to_string(seed) + ")";
    ds.images.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        Rng rng(mix_seed(seed, i));
        Tensor t(shape);
        for (double& v : t.data) v = rng.uniform01();
        ds.images.push_back(std::move(t));
    }
    return ds;
}

struct FoolingConfig {
    double target_confidence = 0.999;
    std::size_t population_size = 16; // offspring per generation
    double mutation_rate = 0.1;
    double mutation_scale = 0.25;
    std::size_t max_generations = 5000;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(target_confidence < 1.0))
            throw ValidationError("fooling: target_confidence must be < 1");
        if (population_size == 0) throw ValidationError("fooling: population_size must be positive");
        if (!(mutation_rate > 0.0 && mutation_rate < 1.0))
            throw ValidationError("fooling: mutation_rate must be in (0,1)");
        if (!(mutation_scale > 0.0)) throw ValidationError("fooling: mutation_scale must be positive");
    }
};

struct FoolingResult {
    Tensor image;
    double confidence = 0.0;
    std::size_t generations = 0;
    std::vector<double> confidence_trace; // elite confidence after each generation
};

// (1 + lambda) evolution strategy on raw pixels. The elite survives every
// generation, so the best confidence is non-decreasing.
inline FoolingResult evolve_fooling_image(const NetworkModel& model, std::size_t target_class,
                                          const FoolingConfig& cfg) {
    cfg.validate();
    if (!model.ends_in_softmax())
        throw ValidationError("evolve_fooling_image: model does not end in softmax");
    if (target_class >= model.class_count)
        throw ValidationError("evolve_fooling_image: target class out of range");

    Rng rng(cfg.seed ? cfg.seed : 1);
    auto confidence_of = [&](const Tensor& img) {
        return forward(model, img).data[target_class];
    };

    FoolingResult best;
    best.confidence = -1.0;
    for (std::size_t i = 0; i < cfg.population_size; ++i) {
        Tensor img(model.input_shape);
        for (double& v : img.data) v = rng.uniform01();
        const double c = confidence_of(img);
        if (c > best.confidence) {
            best.image = std::move(img);
            best.confidence = c;
        }
    }

    for (std::size_t gen = 0; gen < cfg.max_generations; ++gen) {
        if (best.confidence >= cfg.target_confidence) break;
        for (std::size_t k = 0; k < cfg.population_size; ++k) {
            Tensor child = best.image;
            for (double& v : child.data) {
                if (rng.uniform01() < cfg.mutation_rate) {
                    v += rng.normal(0.0, cfg.mutation_scale);
                    v = std::min(std::max(v, 0.0), 1.0);
                }
            }
            const double c = confidence_of(child);
            if (c > best.confidence) {
                best.image = std::move(child);
                best.confidence = c;
            }
        }
        best.generations = gen + 1;
        best.confidence_trace.push_back(best.confidence);
    }
    return best;
}

} // namespace anomaly
