#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace anomaly {

// Thrown for malformed inputs: bad files, bad shapes, bad configs.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

// Dense n-d array of doubles, row-major.
struct Tensor {
    Shape shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(Shape s) : shape(std::move(s)), data(shape_numel(shape), 0.0) {}
    Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        if (shape_numel(shape) != data.size())
            throw ValidationError("tensor shape " + shape_str(shape) + " does not match " +
                                  std::to_string(data.size()) + " elements");
        for (std::size_t dim : shape)
            if (dim == 0) throw ValidationError("tensor shape has a zero dimension");
    }

    std::size_t numel() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }

    double& at(std::size_t i) { return data[i]; }
    double at(std::size_t i) const { return data[i]; }

    // rank-3 accessors (channel, row, col)
    double& at(std::size_t c, std::size_t y, std::size_t x) {
        return data[(c * shape[1] + y) * shape[2] + x];
    }
    double at(std::size_t c, std::size_t y, std::size_t x) const {
        return data[(c * shape[1] + y) * shape[2] + x];
    }

    bool same_shape(const Shape& other) const { return shape == other; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    void require_finite(const std::string& what) const {
        if (!all_finite()) throw ValidationError(what + ": non-finite element");
    }
};

inline void require_same_shape(const Tensor& t, const Shape& want, const std::string& what) {
    if (!t.same_shape(want))
        throw ValidationError(what + ": shape mismatch, got " + shape_str(t.shape) +
                              " want " + shape_str(want));
}

} // namespace anomaly
