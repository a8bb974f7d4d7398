#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <unistd.h>
#include <vector>

#include "anomaly/network.hpp"
#include "anomaly/rng.hpp"
#include "anomaly/tensor.hpp"

// Shared fixtures and independent oracles for the test suites.

namespace testutil {

using namespace anomaly;

// dense(2->2, identity weights, zero bias) + softmax
inline NetworkModel identity_dense_softmax() {
    NetworkModel m;
    m.input_shape = {2};
    m.class_count = 2;
    Layer d;
    d.name = "fc";
    d.kind = LayerKind::dense;
    d.in_features = 2;
    d.out_features = 2;
    d.weights = {1.0, 0.0, 0.0, 1.0};
    d.bias = {0.0, 0.0};
    m.layers.push_back(d);
    Layer s;
    s.name = "softmax";
    s.kind = LayerKind::softmax;
    m.layers.push_back(s);
    m.shape_chain();
    m.fingerprint = "test-identity-dense";
    return m;
}

// the desk-scale CNN wired with random (untrained) weights
inline NetworkModel random_desk_cnn(std::uint64_t seed, std::size_t filters = 8,
                                    std::size_t side = 28) {
    NetworkModel m;
    m.input_shape = {1, side, side};
    m.class_count = 10;
    Rng rng(seed);

    Layer conv;
    conv.name = "conv1";
    conv.kind = LayerKind::conv2d;
    conv.in_channels = 1;
    conv.out_channels = filters;
    conv.kernel_h = conv.kernel_w = 3;
    conv.weights.resize(conv.weight_count());
    conv.bias.resize(conv.bias_count());
    for (double& v : conv.weights) v = rng.normal(0.0, 0.3);
    for (double& v : conv.bias) v = rng.normal(0.0, 0.1);
    m.layers.push_back(std::move(conv));

    Layer relu;
    relu.name = "relu1";
    relu.kind = LayerKind::relu;
    m.layers.push_back(relu);

    Layer pool;
    pool.name = "pool1";
    pool.kind = LayerKind::maxpool2d;
    pool.pool_h = pool.pool_w = 2;
    pool.pool_stride = 2;
    m.layers.push_back(pool);

    Layer flat;
    flat.name = "flatten";
    flat.kind = LayerKind::flatten;
    m.layers.push_back(flat);

    Layer fc;
    fc.name = "fc1";
    fc.kind = LayerKind::dense;
    fc.in_features = filters * ((side - 2) / 2) * ((side - 2) / 2);
    fc.out_features = 10;
    fc.weights.resize(fc.weight_count());
    fc.bias.resize(fc.bias_count());
    for (double& v : fc.weights) v = rng.normal(0.0, 0.05);
    for (double& v : fc.bias) v = rng.normal(0.0, 0.05);
    m.layers.push_back(std::move(fc));

    Layer sm;
    sm.name = "softmax";
    sm.kind = LayerKind::softmax;
    m.layers.push_back(sm);

    m.shape_chain();
    m.fingerprint = "test-desk-cnn";
    return m;
}

inline Tensor random_tensor(const Shape& shape, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
    Rng rng(seed);
    Tensor t(shape);
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

// scalar loss value matching anomaly::input_gradient's loss kinds
inline double loss_value(const NetworkModel& m, const Tensor& x, LossKind kind, std::size_t label) {
    const ForwardTrace tr = run_forward(m, x);
    const Tensor& z = tr.logits(m);
    switch (kind) {
        case LossKind::cross_entropy_true_label: {
            double mx = z.data[0];
            for (double v : z.data) mx = std::max(mx, v);
            double sum = 0.0;
            for (double v : z.data) sum += std::exp(v - mx);
            return -(z.data[label] - mx - std::log(sum));
        }
        case LossKind::logit_margin: {
            double rival = -1e300;
            for (std::size_t j = 0; j < z.numel(); ++j)
                if (j != label) rival = std::max(rival, z.data[j]);
            return z.data[label] - rival;
        }
        case LossKind::target_logit:
            return z.data[label];
    }
    return 0.0;
}

// central finite difference of the loss wrt one input coordinate
inline double finite_difference(const NetworkModel& m, const Tensor& x, LossKind kind,
                                std::size_t label, std::size_t coord, double h = 1e-5) {
    Tensor xp = x, xm = x;
    xp.data[coord] += h;
    xm.data[coord] -= h;
    return (loss_value(m, xp, kind, label) - loss_value(m, xm, kind, label)) / (2.0 * h);
}

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        dir_ = std::filesystem::temp_directory_path() /
               ("anomaly_test_" + tag + "_" + std::to_string(::getpid()));
        std::filesystem::create_directories(dir_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(dir_, ec);
    }
    std::string path(const std::string& name) const { return (dir_ / name).string(); }
    std::string str() const { return dir_.string(); }

private:
    std::filesystem::path dir_;
};

} // namespace testutil
