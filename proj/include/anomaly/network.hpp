#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "anomaly/sha256.hpp"
#include "anomaly/tensor.hpp"

// Minimal deterministic inference engine for small feedforward/convolutional
// classifiers. Weights are stored on disk as little-endian float32 and widened
// to double on load; all arithmetic is double so results do not depend on
// accumulation tricks. Forward, activation taps and input-gradient backward
// are pure functions of (model, input).

namespace anomaly {

enum class LayerKind { dense, conv2d, relu, maxpool2d, flatten, softmax };

inline std::string layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::dense: return "dense";
        case LayerKind::conv2d: return "conv2d";
        case LayerKind::relu: return "relu";
        case LayerKind::maxpool2d: return "maxpool2d";
        case LayerKind::flatten: return "flatten";
        case LayerKind::softmax: return "softmax";
    }
    return "?";
}

inline LayerKind layer_kind_from_name(const std::string& s) {
    if (s == "dense") return LayerKind::dense;
    if (s == "conv2d") return LayerKind::conv2d;
    if (s == "relu") return LayerKind::relu;
    if (s == "maxpool2d") return LayerKind::maxpool2d;
    if (s == "flatten") return LayerKind::flatten;
    if (s == "softmax") return LayerKind::softmax;
    throw ValidationError("unsupported layer kind '" + s + "'");
}

struct Layer {
    std::string name;
    LayerKind kind = LayerKind::relu;

    // dense
    std::size_t in_features = 0, out_features = 0;
    // conv2d
    std::size_t in_channels = 0, out_channels = 0;
    std::size_t kernel_h = 0, kernel_w = 0;
    std::size_t stride = 1, padding = 0;
    // maxpool2d (stride defaults to the kernel size)
    std::size_t pool_h = 0, pool_w = 0, pool_stride = 0;

    std::vector<double> weights;
    std::vector<double> bias;

    std::size_t weight_count() const {
        switch (kind) {
            case LayerKind::dense: return in_features * out_features;
            case LayerKind::conv2d: return out_channels * in_channels * kernel_h * kernel_w;
            default: return 0;
        }
    }
    std::size_t bias_count() const {
        switch (kind) {
            case LayerKind::dense: return out_features;
            case LayerKind::conv2d: return out_channels;
            default: return 0;
        }
    }
    std::size_t param_count() const { return weight_count() + bias_count(); }
};

inline Shape layer_output_shape(const Layer& l, const Shape& in) {
    switch (l.kind) {
        case LayerKind::dense:
            if (in.size() != 1 || in[0] != l.in_features)
                throw ValidationError("layer '" + l.name + "': dense expects rank-1 input of " +
                                      std::to_string(l.in_features) + ", got " + shape_str(in));
            return {l.out_features};
        case LayerKind::conv2d: {
            if (in.size() != 3 || in[0] != l.in_channels)
                throw ValidationError("layer '" + l.name + "': conv2d expects rank-3 input with " +
                                      std::to_string(l.in_channels) + " channels, got " + shape_str(in));
            const std::size_t h = in[1] + 2 * l.padding, w = in[2] + 2 * l.padding;
            if (h < l.kernel_h || w < l.kernel_w)
                throw ValidationError("layer '" + l.name + "': kernel larger than input");
            return {l.out_channels, (h - l.kernel_h) / l.stride + 1, (w - l.kernel_w) / l.stride + 1};
        }
        case LayerKind::relu:
            return in;
        case LayerKind::maxpool2d: {
            if (in.size() != 3)
                throw ValidationError("layer '" + l.name + "': maxpool2d expects rank-3 input");
            const std::size_t s = l.pool_stride ? l.pool_stride : l.pool_h;
            if (in[1] < l.pool_h || in[2] < l.pool_w)
                throw ValidationError("layer '" + l.name + "': pool window larger than input");
            return {in[0], (in[1] - l.pool_h) / s + 1, (in[2] - l.pool_w) / s + 1};
        }
        case LayerKind::flatten:
            return {shape_numel(in)};
        case LayerKind::softmax:
            if (in.size() != 1)
                throw ValidationError("layer '" + l.name + "': softmax expects rank-1 input");
            return in;
    }
    throw ValidationError("unreachable layer kind");
}

struct NetworkModel {
    std::vector<Layer> layers;
    Shape input_shape;
    std::size_t class_count = 0;
    // sha256 of the manifest file bytes; empty for models built in memory
    std::string fingerprint;

    int index_of(const std::string& name) const {
        for (std::size_t i = 0; i < layers.size(); ++i)
            if (layers[i].name == name) return static_cast<int>(i);
        return -1;
    }

    bool ends_in_softmax() const {
        return !layers.empty() && layers.back().kind == LayerKind::softmax;
    }

    // the layer feeding softmax; the last layer when there is no softmax
    int logit_layer_index() const {
        if (layers.empty()) throw ValidationError("model has no layers");
        return static_cast<int>(layers.size()) - (ends_in_softmax() ? 2 : 1);
    }
    const std::string& logit_layer_name() const { return layers[logit_layer_index()].name; }

    // validates the layer chain and returns every intermediate shape
    std::vector<Shape> shape_chain() const {
        std::vector<Shape> shapes;
        Shape cur = input_shape;
        for (std::size_t i = 0; i < layers.size(); ++i) {
            if (layers[i].kind == LayerKind::softmax && i + 1 != layers.size())
                throw ValidationError("softmax may appear only as the final layer");
            cur = layer_output_shape(layers[i], cur);
            shapes.push_back(cur);
        }
        if (shapes.empty() || shape_numel(shapes.back()) != class_count)
            throw ValidationError("final layer output length " +
                                  (shapes.empty() ? std::string("0") : std::to_string(shape_numel(shapes.back()))) +
                                  " != class_count " + std::to_string(class_count));
        if (logit_layer_index() < 0) throw ValidationError("model needs a layer before softmax");
        return shapes;
    }
};

// ---------------------------------------------------------------- forward

namespace detail {

inline void dense_forward(const Layer& l, const Tensor& in, Tensor& out) {
    for (std::size_t o = 0; o < l.out_features; ++o) {
        double acc = l.bias[o];
        const double* w = &l.weights[o * l.in_features];
        for (std::size_t i = 0; i < l.in_features; ++i) acc += w[i] * in.data[i];
        out.data[o] = acc;
    }
}

inline void conv2d_forward(const Layer& l, const Tensor& in, Tensor& out) {
    const std::size_t ih = in.shape[1], iw = in.shape[2];
    const std::size_t oh = out.shape[1], ow = out.shape[2];
    const long p = static_cast<long>(l.padding);
    for (std::size_t oc = 0; oc < l.out_channels; ++oc) {
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
                double acc = l.bias[oc];
                const long base_y = static_cast<long>(oy * l.stride) - p;
                const long base_x = static_cast<long>(ox * l.stride) - p;
                for (std::size_t ic = 0; ic < l.in_channels; ++ic) {
                    const double* wk = &l.weights[((oc * l.in_channels + ic) * l.kernel_h) * l.kernel_w];
                    for (std::size_t ky = 0; ky < l.kernel_h; ++ky) {
                        const long y = base_y + static_cast<long>(ky);
                        if (y < 0 || y >= static_cast<long>(ih)) continue;
                        for (std::size_t kx = 0; kx < l.kernel_w; ++kx) {
                            const long x = base_x + static_cast<long>(kx);
                            if (x < 0 || x >= static_cast<long>(iw)) continue;
                            acc += wk[ky * l.kernel_w + kx] * in.at(ic, static_cast<std::size_t>(y), static_cast<std::size_t>(x));
                        }
                    }
                }
                out.at(oc, oy, ox) = acc;
            }
        }
    }
}

inline void maxpool_forward(const Layer& l, const Tensor& in, Tensor& out) {
    const std::size_t s = l.pool_stride ? l.pool_stride : l.pool_h;
    for (std::size_t c = 0; c < in.shape[0]; ++c)
        for (std::size_t oy = 0; oy < out.shape[1]; ++oy)
            for (std::size_t ox = 0; ox < out.shape[2]; ++ox) {
                double best = -std::numeric_limits<double>::infinity();
                for (std::size_t ky = 0; ky < l.pool_h; ++ky)
                    for (std::size_t kx = 0; kx < l.pool_w; ++kx) {
                        // strict > keeps the first maximal element in row-major order
                        const double v = in.at(c, oy * s + ky, ox * s + kx);
                        if (v > best) best = v;
                    }
                out.at(c, oy, ox) = best;
            }
}

inline void softmax_forward(const Tensor& in, Tensor& out) {
    double mx = in.data[0];
    for (double v : in.data) mx = std::max(mx, v);
    double sum = 0.0;
    for (std::size_t i = 0; i < in.numel(); ++i) {
        out.data[i] = std::exp(in.data[i] - mx);
        sum += out.data[i];
    }
    for (double& v : out.data) v /= sum;
}

} // namespace detail

// Per-layer outputs of one forward pass. outputs[k] is the post-activation
// tensor of layer k; input lives separately in x.
struct ForwardTrace {
    Tensor x;
    std::vector<Tensor> outputs;
    const Tensor& final_output() const { return outputs.back(); }
    const Tensor& logits(const NetworkModel& m) const { return outputs[m.logit_layer_index()]; }
};

inline ForwardTrace run_forward(const NetworkModel& model, const Tensor& x) {
    require_same_shape(x, model.input_shape, "forward input");
    ForwardTrace tr;
    tr.x = x;
    tr.outputs.reserve(model.layers.size());
    const Tensor* cur = &tr.x;
    for (const Layer& l : model.layers) {
        Tensor out(layer_output_shape(l, cur->shape));
        switch (l.kind) {
            case LayerKind::dense: detail::dense_forward(l, *cur, out); break;
            case LayerKind::conv2d: detail::conv2d_forward(l, *cur, out); break;
            case LayerKind::relu:
                for (std::size_t i = 0; i < cur->numel(); ++i)
                    out.data[i] = cur->data[i] > 0.0 ? cur->data[i] : 0.0;
                break;
            case LayerKind::maxpool2d: detail::maxpool_forward(l, *cur, out); break;
            case LayerKind::flatten: out.data = cur->data; break;
            case LayerKind::softmax: detail::softmax_forward(*cur, out); break;
        }
        tr.outputs.push_back(std::move(out));
        cur = &tr.outputs.back();
    }
    return tr;
}

inline Tensor forward(const NetworkModel& model, const Tensor& x) {
    return run_forward(model, x).outputs.back();
}

inline std::pair<Tensor, std::map<std::string, Tensor>>
forward_with_taps(const NetworkModel& model, const Tensor& x, const std::set<std::string>& tap_names) {
    for (const std::string& n : tap_names)
        if (model.index_of(n) < 0) throw ValidationError("unknown tap layer '" + n + "'");
    ForwardTrace tr = run_forward(model, x);
    std::map<std::string, Tensor> taps;
    for (const std::string& n : tap_names)
        taps.emplace(n, tr.outputs[static_cast<std::size_t>(model.index_of(n))]);
    return {tr.outputs.back(), std::move(taps)};
}

// argmax of the final output, ties broken by lowest index
inline std::size_t predict_class(const NetworkModel& model, const Tensor& x) {
    const Tensor out = forward(model, x);
    std::size_t best = 0;
    for (std::size_t i = 1; i < out.numel(); ++i)
        if (out.data[i] > out.data[best]) best = i;
    return best;
}

inline std::size_t argmax_index(const std::vector<double>& v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

// ---------------------------------------------------------------- backward

// Accumulated parameter gradients, one slot per layer (empty for layers
// without parameters). Only the trainer uses these.
struct ParamGrads {
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> bias;

    explicit ParamGrads(const NetworkModel& m) {
        weights.resize(m.layers.size());
        bias.resize(m.layers.size());
        for (std::size_t i = 0; i < m.layers.size(); ++i) {
            weights[i].assign(m.layers[i].weight_count(), 0.0);
            bias[i].assign(m.layers[i].bias_count(), 0.0);
        }
    }
};

namespace detail {

inline void dense_backward(const Layer& l, const Tensor& in, const Tensor& gout, Tensor& gin,
                           std::vector<double>* gw, std::vector<double>* gb) {
    for (std::size_t i = 0; i < l.in_features; ++i) gin.data[i] = 0.0;
    for (std::size_t o = 0; o < l.out_features; ++o) {
        const double g = gout.data[o];
        const double* w = &l.weights[o * l.in_features];
        for (std::size_t i = 0; i < l.in_features; ++i) gin.data[i] += w[i] * g;
        if (gw) {
            double* gwr = &(*gw)[o * l.in_features];
            for (std::size_t i = 0; i < l.in_features; ++i) gwr[i] += g * in.data[i];
        }
        if (gb) (*gb)[o] += g;
    }
}

inline void conv2d_backward(const Layer& l, const Tensor& in, const Tensor& gout, Tensor& gin,
                            std::vector<double>* gw, std::vector<double>* gb) {
    std::fill(gin.data.begin(), gin.data.end(), 0.0);
    const std::size_t ih = in.shape[1], iw = in.shape[2];
    const std::size_t oh = gout.shape[1], ow = gout.shape[2];
    const long p = static_cast<long>(l.padding);
    for (std::size_t oc = 0; oc < l.out_channels; ++oc) {
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
                const double g = gout.at(oc, oy, ox);
                if (g == 0.0) continue;
                if (gb) (*gb)[oc] += g;
                const long base_y = static_cast<long>(oy * l.stride) - p;
                const long base_x = static_cast<long>(ox * l.stride) - p;
                for (std::size_t ic = 0; ic < l.in_channels; ++ic) {
                    const std::size_t wbase = ((oc * l.in_channels + ic) * l.kernel_h) * l.kernel_w;
                    for (std::size_t ky = 0; ky < l.kernel_h; ++ky) {
                        const long y = base_y + static_cast<long>(ky);
                        if (y < 0 || y >= static_cast<long>(ih)) continue;
                        for (std::size_t kx = 0; kx < l.kernel_w; ++kx) {
                            const long x = base_x + static_cast<long>(kx);
                            if (x < 0 || x >= static_cast<long>(iw)) continue;
                            gin.at(ic, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) +=
                                l.weights[wbase + ky * l.kernel_w + kx] * g;
                            if (gw)
                                (*gw)[wbase + ky * l.kernel_w + kx] +=
                                    in.at(ic, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) * g;
                        }
                    }
                }
            }
        }
    }
}

inline void maxpool_backward(const Layer& l, const Tensor& in, const Tensor& gout, Tensor& gin) {
    std::fill(gin.data.begin(), gin.data.end(), 0.0);
    const std::size_t s = l.pool_stride ? l.pool_stride : l.pool_h;
    for (std::size_t c = 0; c < in.shape[0]; ++c)
        for (std::size_t oy = 0; oy < gout.shape[1]; ++oy)
            for (std::size_t ox = 0; ox < gout.shape[2]; ++ox) {
                // gradient goes only to the first maximal element in row-major order
                double best = -std::numeric_limits<double>::infinity();
                std::size_t by = 0, bx = 0;
                for (std::size_t ky = 0; ky < l.pool_h; ++ky)
                    for (std::size_t kx = 0; kx < l.pool_w; ++kx) {
                        const double v = in.at(c, oy * s + ky, ox * s + kx);
                        if (v > best) { best = v; by = oy * s + ky; bx = ox * s + kx; }
                    }
                gin.at(c, by, bx) += gout.at(c, oy, ox);
            }
}

} // namespace detail

// Reverse traversal from layer `start_index` down to the input. `seed` is
// dL/d(output of start_index). Parameter gradients accumulate into pg
// when given.
inline Tensor backward_from(const NetworkModel& model, const ForwardTrace& tr,
                            int start_index, const Tensor& seed, ParamGrads* pg = nullptr) {
    Tensor grad = seed;
    for (int k = start_index; k >= 0; --k) {
        const Layer& l = model.layers[static_cast<std::size_t>(k)];
        const Tensor& in = (k == 0) ? tr.x : tr.outputs[static_cast<std::size_t>(k - 1)];
        Tensor gin(in.shape);
        std::vector<double>* gw = pg ? &pg->weights[static_cast<std::size_t>(k)] : nullptr;
        std::vector<double>* gb = pg ? &pg->bias[static_cast<std::size_t>(k)] : nullptr;
        switch (l.kind) {
            case LayerKind::dense: detail::dense_backward(l, in, grad, gin, gw, gb); break;
            case LayerKind::conv2d: detail::conv2d_backward(l, in, grad, gin, gw, gb); break;
            case LayerKind::relu:
                for (std::size_t i = 0; i < in.numel(); ++i)
                    gin.data[i] = in.data[i] > 0.0 ? grad.data[i] : 0.0;
                break;
            case LayerKind::maxpool2d: detail::maxpool_backward(l, in, grad, gin); break;
            case LayerKind::flatten: gin.data = grad.data; break;
            case LayerKind::softmax: {
                // J^T g = p .* (g - <g,p>)
                const Tensor& p = tr.outputs[static_cast<std::size_t>(k)];
                double dot = 0.0;
                for (std::size_t i = 0; i < p.numel(); ++i) dot += grad.data[i] * p.data[i];
                for (std::size_t i = 0; i < p.numel(); ++i)
                    gin.data[i] = p.data[i] * (grad.data[i] - dot);
                break;
            }
        }
        grad = std::move(gin);
    }
    return grad;
}

// dL/dx for a seed on the logit layer. Shared by the attacks, which need
// gradients of arbitrary logit combinations.
inline Tensor logit_gradient(const NetworkModel& model, const ForwardTrace& tr,
                             const std::vector<double>& logit_seed) {
    const int li = model.logit_layer_index();
    const Tensor& z = tr.outputs[static_cast<std::size_t>(li)];
    if (logit_seed.size() != z.numel())
        throw ValidationError("logit seed length mismatch");
    Tensor seed(z.shape);
    seed.data = logit_seed;
    return backward_from(model, tr, li, seed);
}

enum class LossKind { cross_entropy_true_label, logit_margin, target_logit };

// dLoss/dx. cross_entropy_true_label: -log softmax(z)[label];
// logit_margin: z[label] - max_{j != label} z[j]; target_logit: z[label].
inline Tensor input_gradient(const NetworkModel& model, const Tensor& x,
                             LossKind loss, std::size_t label_or_target) {
    if (label_or_target >= model.class_count)
        throw ValidationError("class index " + std::to_string(label_or_target) +
                              " out of range (d=" + std::to_string(model.class_count) + ")");
    ForwardTrace tr = run_forward(model, x);
    const Tensor& z = tr.logits(model);
    std::vector<double> seed(z.numel(), 0.0);
    switch (loss) {
        case LossKind::cross_entropy_true_label: {
            // seed at logits is softmax(z) - onehot(label)
            Tensor p(z.shape);
            detail::softmax_forward(z, p);
            seed = p.data;
            seed[label_or_target] -= 1.0;
            break;
        }
        case LossKind::logit_margin: {
            std::size_t rival = label_or_target == 0 ? 1 : 0;
            for (std::size_t j = 0; j < z.numel(); ++j)
                if (j != label_or_target && z.data[j] > z.data[rival]) rival = j;
            seed[label_or_target] = 1.0;
            seed[rival] = -1.0;
            break;
        }
        case LossKind::target_logit:
            seed[label_or_target] = 1.0;
            break;
    }
    return logit_gradient(model, tr, seed);
}

// ------------------------------------------------------------ persistence

// Manifest: UTF-8 JSON with input_shape, class_count, weights_blob (relative
// path) and the ordered layer list. Blob: raw little-endian float32, weights
// before biases per layer, concatenated in manifest order.

namespace detail {

inline std::vector<unsigned char> read_file_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ValidationError("cannot open file: " + path);
    return std::vector<unsigned char>((std::istreambuf_iterator<char>(f)),
                                      std::istreambuf_iterator<char>());
}

inline float load_f32_le(const unsigned char* p) {
    std::uint32_t u = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                      (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
    float f;
    std::memcpy(&f, &u, 4);
    return f;
}

inline void store_f32_le(float f, unsigned char* p) {
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    p[0] = static_cast<unsigned char>(u & 0xff);
    p[1] = static_cast<unsigned char>((u >> 8) & 0xff);
    p[2] = static_cast<unsigned char>((u >> 16) & 0xff);
    p[3] = static_cast<unsigned char>((u >> 24) & 0xff);
}

inline Layer layer_from_json(const nlohmann::json& j) {
    Layer l;
    l.name = j.at("name").get<std::string>();
    l.kind = layer_kind_from_name(j.at("kind").get<std::string>());
    switch (l.kind) {
        case LayerKind::dense:
            l.in_features = j.at("in_features").get<std::size_t>();
            l.out_features = j.at("out_features").get<std::size_t>();
            break;
        case LayerKind::conv2d: {
            l.in_channels = j.at("in_channels").get<std::size_t>();
            l.out_channels = j.at("out_channels").get<std::size_t>();
            const auto& k = j.at("kernel");
            l.kernel_h = k.at(0).get<std::size_t>();
            l.kernel_w = k.at(1).get<std::size_t>();
            l.stride = j.value("stride", std::size_t{1});
            l.padding = j.value("padding", std::size_t{0});
            if (l.stride == 0) throw ValidationError("conv2d stride must be positive");
            break;
        }
        case LayerKind::maxpool2d: {
            const auto& k = j.at("kernel");
            l.pool_h = k.at(0).get<std::size_t>();
            l.pool_w = k.at(1).get<std::size_t>();
            l.pool_stride = j.value("stride", l.pool_h);
            if (l.pool_stride == 0) throw ValidationError("maxpool2d stride must be positive");
            break;
        }
        default:
            break;
    }
    return l;
}

inline nlohmann::json layer_to_json(const Layer& l, std::size_t blob_offset) {
    nlohmann::json j;
    j["name"] = l.name;
    j["kind"] = layer_kind_name(l.kind);
    switch (l.kind) {
        case LayerKind::dense:
            j["in_features"] = l.in_features;
            j["out_features"] = l.out_features;
            j["blob_offset"] = blob_offset;
            break;
        case LayerKind::conv2d:
            j["in_channels"] = l.in_channels;
            j["out_channels"] = l.out_channels;
            j["kernel"] = {l.kernel_h, l.kernel_w};
            j["stride"] = l.stride;
            j["padding"] = l.padding;
            j["blob_offset"] = blob_offset;
            break;
        case LayerKind::maxpool2d:
            j["kernel"] = {l.pool_h, l.pool_w};
            j["stride"] = l.pool_stride ? l.pool_stride : l.pool_h;
            break;
        default:
            break;
    }
    return j;
}

} // namespace detail

inline NetworkModel load_model(const std::string& manifest_path) {
    const std::vector<unsigned char> manifest_bytes = detail::read_file_bytes(manifest_path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(manifest_bytes.begin(), manifest_bytes.end());
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("malformed manifest " + manifest_path + ": " + e.what());
    }

    NetworkModel m;
    try {
        for (const auto& d : j.at("input_shape")) m.input_shape.push_back(d.get<std::size_t>());
        m.class_count = j.at("class_count").get<std::size_t>();
        std::set<std::string> names;
        std::vector<std::size_t> offsets;
        for (const auto& lj : j.at("layers")) {
            Layer l = detail::layer_from_json(lj);
            if (!names.insert(l.name).second)
                throw ValidationError("duplicate layer name '" + l.name + "'");
            offsets.push_back(l.param_count() ? lj.at("blob_offset").get<std::size_t>() : 0);
            m.layers.push_back(std::move(l));
        }

        const std::string blob_rel = j.at("weights_blob").get<std::string>();
        const std::filesystem::path blob_path =
            std::filesystem::path(manifest_path).parent_path() / blob_rel;
        const std::vector<unsigned char> blob = detail::read_file_bytes(blob_path.string());

        std::size_t expected = 0;
        for (const Layer& l : m.layers) expected += l.param_count() * 4;
        if (blob.size() != expected)
            throw ValidationError("weight blob " + blob_path.string() + " has " +
                                  std::to_string(blob.size()) + " bytes, manifest declares " +
                                  std::to_string(expected));

        for (std::size_t i = 0; i < m.layers.size(); ++i) {
            Layer& l = m.layers[i];
            const std::size_t n = l.param_count();
            if (!n) continue;
            if (offsets[i] + n * 4 > blob.size())
                throw ValidationError("layer '" + l.name + "': blob_offset past end of blob");
            const unsigned char* p = blob.data() + offsets[i];
            l.weights.resize(l.weight_count());
            l.bias.resize(l.bias_count());
            for (std::size_t k = 0; k < l.weight_count(); ++k, p += 4)
                l.weights[k] = static_cast<double>(detail::load_f32_le(p));
            for (std::size_t k = 0; k < l.bias_count(); ++k, p += 4)
                l.bias[k] = static_cast<double>(detail::load_f32_le(p));
            for (double v : l.weights)
                if (!std::isfinite(v)) throw ValidationError("layer '" + l.name + "': non-finite weight");
            for (double v : l.bias)
                if (!std::isfinite(v)) throw ValidationError("layer '" + l.name + "': non-finite bias");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("malformed manifest " + manifest_path + ": " + e.what());
    }

    m.shape_chain(); // validates
    m.fingerprint = sha256_hex(manifest_bytes);
    return m;
}

// Writes manifest + float32 blob next to it; returns the manifest path.
// The model's fingerprint is refreshed to match the written manifest.
inline std::string save_model(NetworkModel& model, const std::string& manifest_path,
                              const std::string& blob_name) {
    model.shape_chain();
    std::vector<unsigned char> blob;
    nlohmann::json layers = nlohmann::json::array();
    for (const Layer& l : model.layers) {
        layers.push_back(detail::layer_to_json(l, blob.size()));
        const std::size_t base = blob.size();
        blob.resize(base + l.param_count() * 4);
        unsigned char* p = blob.data() + base;
        for (double v : l.weights) { detail::store_f32_le(static_cast<float>(v), p); p += 4; }
        for (double v : l.bias) { detail::store_f32_le(static_cast<float>(v), p); p += 4; }
    }
    nlohmann::json j;
    j["input_shape"] = model.input_shape;
    j["class_count"] = model.class_count;
    j["weights_blob"] = blob_name;
    j["layers"] = layers;

    const std::filesystem::path mpath(manifest_path);
    if (mpath.has_parent_path()) std::filesystem::create_directories(mpath.parent_path());
    const std::string text = j.dump(2);
    {
        std::ofstream f(manifest_path, std::ios::binary);
        if (!f) throw ValidationError("cannot write manifest: " + manifest_path);
        f << text;
    }
    {
        const std::filesystem::path bpath = mpath.parent_path() / blob_name;
        std::ofstream f(bpath, std::ios::binary);
        if (!f) throw ValidationError("cannot write blob: " + bpath.string());
        f.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
    }
    model.fingerprint = sha256_hex(text);
    return manifest_path;
}

} // namespace anomaly
