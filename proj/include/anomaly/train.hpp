#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "anomaly/dataset.hpp"
#include "anomaly/network.hpp"
#include "anomaly/rng.hpp"
#include "anomaly/tensor.hpp"

// Desk-scale classifier trainer: mini-batch SGD with momentum on
// cross-entropy, deterministic under a fixed seed. Two architecture
// families, selected by a spec string:
//   "cnn<k>"          conv2d(k filters, 3x3) relu maxpool2 flatten dense softmax
//   "dense:<h1>,..."  flatten (if needed), dense/relu chain, dense, softmax

namespace anomaly {

struct TrainConfig {
    std::size_t epochs = 12;
    std::size_t batch_size = 64;
    double learning_rate = 0.1;
    double momentum = 0.9;
    double holdout_fraction = 0.1;
    double target_accuracy = 0.95;
    std::uint64_t seed = 42;
};

struct TrainResult {
    NetworkModel model;
    double holdout_accuracy = 0.0;
    bool reached_target = false;
    std::size_t epochs_run = 0;
};

namespace detail {

inline void he_init(std::vector<double>& w, std::size_t fan_in, Rng& rng) {
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (double& v : w) v = rng.normal(0.0, stddev);
}

} // namespace detail

inline NetworkModel build_architecture(const std::string& spec, const Shape& input_shape,
                                       std::size_t class_count, std::uint64_t seed) {
    NetworkModel m;
    m.input_shape = input_shape;
    m.class_count = class_count;
    Rng rng(mix_seed(seed, 0xa2c4));

    auto add_dense = [&](const std::string& name, std::size_t in, std::size_t out) {
        Layer l;
        l.name = name;
        l.kind = LayerKind::dense;
        l.in_features = in;
        l.out_features = out;
        l.weights.resize(l.weight_count());
        l.bias.assign(l.bias_count(), 0.0);
        detail::he_init(l.weights, in, rng);
        m.layers.push_back(std::move(l));
    };

    if (spec.rfind("cnn", 0) == 0) {
        if (input_shape.size() != 3)
            throw ValidationError("architecture '" + spec + "' needs a rank-3 input");
        const std::size_t filters = spec.size() > 3 ? std::stoul(spec.substr(3)) : 8;
        if (filters == 0) throw ValidationError("cnn architecture needs at least 1 filter");
        Layer conv;
        conv.name = "conv1";
        conv.kind = LayerKind::conv2d;
        conv.in_channels = input_shape[0];
        conv.out_channels = filters;
        conv.kernel_h = conv.kernel_w = 3;
        conv.stride = 1;
        conv.padding = 0;
        conv.weights.resize(conv.weight_count());
        conv.bias.assign(conv.bias_count(), 0.0);
        detail::he_init(conv.weights, conv.in_channels * 9, rng);
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

        const std::size_t conv_h = input_shape[1] - 2, conv_w = input_shape[2] - 2;
        const std::size_t flat_n = filters * (conv_h / 2) * (conv_w / 2);
        add_dense("fc1", flat_n, class_count);
    } else if (spec.rfind("dense:", 0) == 0) {
        std::vector<std::size_t> hidden;
        std::string rest = spec.substr(6);
        std::size_t pos = 0;
        while (pos < rest.size()) {
            std::size_t comma = rest.find(',', pos);
            if (comma == std::string::npos) comma = rest.size();
            hidden.push_back(std::stoul(rest.substr(pos, comma - pos)));
            pos = comma + 1;
        }
        if (hidden.empty()) throw ValidationError("dense architecture needs hidden sizes");
        std::size_t in = shape_numel(input_shape);
        if (input_shape.size() > 1) {
            Layer flat;
            flat.name = "flatten";
            flat.kind = LayerKind::flatten;
            m.layers.push_back(flat);
        }
        for (std::size_t i = 0; i < hidden.size(); ++i) {
            add_dense("fc" + std::to_string(i + 1), in, hidden[i]);
            Layer relu;
            relu.name = "relu" + std::to_string(i + 1);
            relu.kind = LayerKind::relu;
            m.layers.push_back(relu);
            in = hidden[i];
        }
        add_dense("fc" + std::to_string(hidden.size() + 1), in, class_count);
    } else {
        throw ValidationError("unknown architecture spec '" + spec + "'");
    }

    Layer sm;
    sm.name = "softmax";
    sm.kind = LayerKind::softmax;
    m.layers.push_back(sm);
    m.shape_chain();
    return m;
}

inline double evaluate_accuracy(const NetworkModel& model, const Dataset& ds,
                                const std::vector<std::size_t>& indices) {
    if (indices.empty()) return 0.0;
    std::size_t correct = 0;
    for (std::size_t i : indices)
        if (predict_class(model, ds.images[i]) == (*ds.labels)[i]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(indices.size());
}

inline double evaluate_accuracy(const NetworkModel& model, const Dataset& ds) {
    std::vector<std::size_t> idx(ds.size());
    std::iota(idx.begin(), idx.end(), 0);
    return evaluate_accuracy(model, ds, idx);
}

inline TrainResult train_fixture_classifier(const Dataset& id_train, const std::string& architecture,
                                            std::size_t class_count, const TrainConfig& cfg) {
    if (!id_train.labels) throw ValidationError("train_fixture_classifier: dataset has no labels");
    if (id_train.size() < 2) throw ValidationError("train_fixture_classifier: dataset too small");
    id_train.validate_labels(class_count);

    TrainResult res;
    res.model = build_architecture(architecture, id_train.images[0].shape, class_count, cfg.seed);

    Rng rng(mix_seed(cfg.seed, 0x7261696e));
    std::vector<std::size_t> order(id_train.size());
    std::iota(order.begin(), order.end(), 0);
    // deterministic Fisher-Yates
    for (std::size_t i = order.size() - 1; i > 0; --i)
        std::swap(order[i], order[rng.below(i + 1)]);

    const std::size_t holdout_n = std::max<std::size_t>(
        1, static_cast<std::size_t>(cfg.holdout_fraction * static_cast<double>(order.size())));
    std::vector<std::size_t> holdout(order.end() - static_cast<long>(holdout_n), order.end());
    std::vector<std::size_t> train(order.begin(), order.end() - static_cast<long>(holdout_n));

    NetworkModel& model = res.model;
    std::vector<std::vector<double>> vel_w(model.layers.size()), vel_b(model.layers.size());
    for (std::size_t k = 0; k < model.layers.size(); ++k) {
        vel_w[k].assign(model.layers[k].weight_count(), 0.0);
        vel_b[k].assign(model.layers[k].bias_count(), 0.0);
    }

    NetworkModel best_model = model;
    double best_acc = -1.0;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = train.size() - 1; i > 0; --i)
            std::swap(train[i], train[rng.below(i + 1)]);

        for (std::size_t start = 0; start < train.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(start + cfg.batch_size, train.size());
            ParamGrads grads(model);
            for (std::size_t bi = start; bi < end; ++bi) {
                const std::size_t idx = train[bi];
                const ForwardTrace tr = run_forward(model, id_train.images[idx]);
                const Tensor& z = tr.logits(model);
                Tensor p(z.shape);
                detail::softmax_forward(z, p);
                Tensor seed_grad(z.shape);
                for (std::size_t c = 0; c < z.numel(); ++c) seed_grad.data[c] = p.data[c];
                seed_grad.data[(*id_train.labels)[idx]] -= 1.0;
                const double inv_batch = 1.0 / static_cast<double>(end - start);
                for (double& g : seed_grad.data) g *= inv_batch;
                backward_from(model, tr, model.logit_layer_index(), seed_grad, &grads);
            }
            for (std::size_t k = 0; k < model.layers.size(); ++k) {
                Layer& l = model.layers[k];
                for (std::size_t j = 0; j < l.weights.size(); ++j) {
                    vel_w[k][j] = cfg.momentum * vel_w[k][j] - cfg.learning_rate * grads.weights[k][j];
                    l.weights[j] += vel_w[k][j];
                }
                for (std::size_t j = 0; j < l.bias.size(); ++j) {
                    vel_b[k][j] = cfg.momentum * vel_b[k][j] - cfg.learning_rate * grads.bias[k][j];
                    l.bias[j] += vel_b[k][j];
                }
            }
        }

        res.epochs_run = epoch + 1;
        const double acc = evaluate_accuracy(model, id_train, holdout);
        if (acc > best_acc) {
            best_acc = acc;
            best_model = model;
        }
        if (acc >= cfg.target_accuracy) break;
    }

    res.model = best_model;
    res.holdout_accuracy = best_acc;
    res.reached_target = best_acc >= cfg.target_accuracy;
    return res;
}

} // namespace anomaly
