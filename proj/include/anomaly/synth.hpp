#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "anomaly/dataset.hpp"
#include "anomaly/rng.hpp"
#include "anomaly/tensor.hpp"

// Procedural 28x28 image corpora for desk-scale experiments, plus the
// two-moons point fixture. Three families:
//   digits  - stroke-rendered 0..9 with random affine jitter (labeled)
//   letters - stroke-rendered A..J, a disjoint glyph family for mix data
//   fashion - filled garment silhouettes with speckle texture, OOD stand-in
// Rendering is fully deterministic given (seed, index).

namespace anomaly {

enum class SynthFamily { digits, letters, fashion };

inline SynthFamily synth_family_from_name(const std::string& s) {
    if (s == "digits") return SynthFamily::digits;
    if (s == "letters") return SynthFamily::letters;
    if (s == "fashion") return SynthFamily::fashion;
    throw ValidationError("unknown synth family '" + s + "'");
}

namespace synth_detail {

using Point = std::array<double, 2>; // x, y in [0,1], y down
using Stroke = std::vector<Point>;
using Glyph = std::vector<Stroke>;

inline Stroke ellipse_arc(double cx, double cy, double rx, double ry, double a0, double a1,
                          int segments) {
    Stroke s;
    for (int i = 0; i <= segments; ++i) {
        const double a = a0 + (a1 - a0) * static_cast<double>(i) / segments;
        s.push_back({cx + rx * std::cos(a), cy + ry * std::sin(a)});
    }
    return s;
}

inline const std::vector<Glyph>& digit_glyphs() {
    static const std::vector<Glyph> glyphs = [] {
        const double pi = 3.14159265358979323846;
        std::vector<Glyph> g(10);
        g[0] = {ellipse_arc(0.5, 0.5, 0.26, 0.38, 0.0, 2.0 * pi, 18)};
        g[1] = {{{0.36, 0.26}, {0.56, 0.12}}, {{0.56, 0.12}, {0.56, 0.9}}};
        g[2] = {{{0.24, 0.3}, {0.3, 0.16}, {0.5, 0.1}, {0.7, 0.16}, {0.76, 0.32},
                 {0.6, 0.55}, {0.26, 0.88}, {0.78, 0.88}}};
        g[3] = {{{0.26, 0.16}, {0.5, 0.1}, {0.72, 0.2}, {0.66, 0.4}, {0.46, 0.48}},
                {{0.46, 0.48}, {0.7, 0.56}, {0.74, 0.75}, {0.52, 0.9}, {0.26, 0.82}}};
        g[4] = {{{0.6, 0.08}, {0.22, 0.6}, {0.8, 0.6}}, {{0.62, 0.34}, {0.62, 0.92}}};
        g[5] = {{{0.72, 0.12}, {0.3, 0.12}, {0.28, 0.46}, {0.56, 0.42}, {0.74, 0.56},
                 {0.72, 0.78}, {0.5, 0.9}, {0.26, 0.8}}};
        g[6] = {{{0.66, 0.1}, {0.42, 0.28}, {0.3, 0.52}, {0.3, 0.74}, {0.46, 0.9},
                 {0.66, 0.82}, {0.72, 0.62}, {0.54, 0.5}, {0.34, 0.6}}};
        g[7] = {{{0.22, 0.12}, {0.78, 0.12}, {0.44, 0.9}}};
        g[8] = {ellipse_arc(0.5, 0.3, 0.2, 0.19, 0.0, 2.0 * pi, 14),
                ellipse_arc(0.5, 0.69, 0.24, 0.21, 0.0, 2.0 * pi, 14)};
        g[9] = {ellipse_arc(0.52, 0.32, 0.2, 0.2, 0.0, 2.0 * pi, 14),
                {{0.71, 0.36}, {0.68, 0.9}}};
        return g;
    }();
    return glyphs;
}

inline const std::vector<Glyph>& letter_glyphs() {
    static const std::vector<Glyph> glyphs = [] {
        const double pi = 3.14159265358979323846;
        std::vector<Glyph> g(10);
        g[0] = {{{0.2, 0.9}, {0.5, 0.1}, {0.8, 0.9}}, {{0.32, 0.62}, {0.68, 0.62}}}; // A
        g[1] = {{{0.26, 0.1}, {0.26, 0.9}},
                {{0.26, 0.1}, {0.62, 0.12}, {0.7, 0.28}, {0.6, 0.46}, {0.26, 0.48}},
                {{0.26, 0.48}, {0.66, 0.52}, {0.74, 0.7}, {0.62, 0.88}, {0.26, 0.9}}}; // B
        g[2] = {ellipse_arc(0.52, 0.5, 0.27, 0.38, 0.25 * pi, 1.75 * pi, 14)};         // C
        g[3] = {{{0.26, 0.1}, {0.26, 0.9}},
                {{0.26, 0.1}, {0.56, 0.12}, {0.75, 0.35}, {0.75, 0.65}, {0.56, 0.88}, {0.26, 0.9}}}; // D
        g[4] = {{{0.74, 0.1}, {0.26, 0.1}, {0.26, 0.9}, {0.74, 0.9}}, {{0.26, 0.5}, {0.64, 0.5}}};   // E
        g[5] = {{{0.74, 0.1}, {0.26, 0.1}, {0.26, 0.9}}, {{0.26, 0.5}, {0.64, 0.5}}};                // F
        g[6] = {ellipse_arc(0.5, 0.5, 0.27, 0.38, 0.3 * pi, 1.8 * pi, 14),
                {{0.77, 0.56}, {0.77, 0.78}}, {{0.54, 0.56}, {0.77, 0.56}}};                         // G
        g[7] = {{{0.26, 0.1}, {0.26, 0.9}}, {{0.74, 0.1}, {0.74, 0.9}}, {{0.26, 0.5}, {0.74, 0.5}}}; // H
        g[8] = {{{0.5, 0.1}, {0.5, 0.9}}, {{0.34, 0.1}, {0.66, 0.1}}, {{0.34, 0.9}, {0.66, 0.9}}};   // I
        g[9] = {{{0.66, 0.1}, {0.66, 0.74}, {0.52, 0.9}, {0.32, 0.8}}};                              // J
        return g;
    }();
    return glyphs;
}

// filled silhouettes (garments); last stroke of bag is an open handle arc
struct Silhouette {
    std::vector<Point> outline;
    Glyph extra_strokes;
};

inline const std::vector<Silhouette>& fashion_shapes() {
    static const std::vector<Silhouette> shapes = [] {
        const double pi = 3.14159265358979323846;
        std::vector<Silhouette> s(5);
        s[0].outline = {{0.2, 0.25}, {0.35, 0.16}, {0.65, 0.16}, {0.8, 0.25}, {0.86, 0.42},
                        {0.68, 0.47}, {0.68, 0.86}, {0.32, 0.86}, {0.32, 0.47}, {0.14, 0.42}}; // tee
        s[1].outline = {{0.3, 0.1}, {0.7, 0.1}, {0.74, 0.9}, {0.56, 0.9},
                        {0.5, 0.42}, {0.44, 0.9}, {0.26, 0.9}}; // trousers
        s[2].outline = {{0.42, 0.08}, {0.58, 0.08}, {0.62, 0.3}, {0.8, 0.88}, {0.2, 0.88}, {0.38, 0.3}}; // dress
        s[3].outline = {{0.18, 0.42}, {0.82, 0.42}, {0.85, 0.88}, {0.15, 0.88}}; // bag
        s[3].extra_strokes = {ellipse_arc(0.5, 0.42, 0.2, 0.24, pi, 2.0 * pi, 10)};
        s[4].outline = {{0.1, 0.32}, {0.3, 0.14}, {0.7, 0.14}, {0.9, 0.32}, {0.84, 0.74},
                        {0.7, 0.7}, {0.7, 0.9}, {0.3, 0.9}, {0.3, 0.7}, {0.16, 0.74}}; // pullover
        return s;
    }();
    return shapes;
}

struct Placement {
    double rot, scale_x, scale_y, shear, tx, ty;
};

inline Point apply_placement(const Placement& pl, const Point& p, double size_px) {
    // glyph coords centered, sheared, rotated, scaled to pixels, recentered
    const double gx = p[0] - 0.5, gy = p[1] - 0.5;
    const double sx = gx + pl.shear * gy, sy = gy;
    const double c = std::cos(pl.rot), s = std::sin(pl.rot);
    const double rx = c * sx - s * sy, ry = s * sx + c * sy;
    return {14.0 + pl.tx + rx * size_px * pl.scale_x, 14.0 + pl.ty + ry * size_px * pl.scale_y};
}

inline double segment_distance(double px, double py, const Point& a, const Point& b) {
    const double vx = b[0] - a[0], vy = b[1] - a[1];
    const double wx = px - a[0], wy = py - a[1];
    const double vv = vx * vx + vy * vy;
    double t = vv > 0.0 ? (wx * vx + wy * vy) / vv : 0.0;
    t = std::min(std::max(t, 0.0), 1.0);
    const double dx = px - (a[0] + t * vx), dy = py - (a[1] + t * vy);
    return std::sqrt(dx * dx + dy * dy);
}

inline void gaussian_blur_inplace(Tensor& img, double sigma) {
    const int radius = 2;
    double kernel[2 * radius + 1];
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
        sum += kernel[i + radius];
    }
    for (double& k : kernel) k /= sum;

    const int h = static_cast<int>(img.shape[1]), w = static_cast<int>(img.shape[2]);
    std::vector<double> tmp(static_cast<std::size_t>(h) * w, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                const int xx = std::min(std::max(x + i, 0), w - 1);
                acc += kernel[i + radius] * img.at(0, y, xx);
            }
            tmp[static_cast<std::size_t>(y) * w + x] = acc;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                const int yy = std::min(std::max(y + i, 0), h - 1);
                acc += kernel[i + radius] * tmp[static_cast<std::size_t>(yy) * w + x];
            }
            img.at(0, y, x) = acc;
        }
}

inline Tensor render_strokes(const Glyph& glyph, Rng& rng) {
    Placement pl;
    pl.rot = rng.uniform(-0.2, 0.2);
    pl.scale_x = rng.uniform(0.85, 1.1);
    pl.scale_y = rng.uniform(0.85, 1.1);
    pl.shear = rng.uniform(-0.15, 0.15);
    pl.tx = rng.uniform(-2.0, 2.0);
    pl.ty = rng.uniform(-2.0, 2.0);
    const double thickness = rng.uniform(1.1, 2.0);
    const double intensity = rng.uniform(0.8, 1.0);
    const double jitter = 0.018;
    const double blur_sigma = rng.uniform(0.45, 0.75);

    std::vector<Stroke> placed;
    for (const Stroke& st : glyph) {
        Stroke out;
        for (const Point& p : st) {
            Point q = {p[0] + rng.normal(0.0, jitter), p[1] + rng.normal(0.0, jitter)};
            out.push_back(apply_placement(pl, q, 20.0));
        }
        placed.push_back(std::move(out));
    }

    Tensor img({1, 28, 28});
    for (int y = 0; y < 28; ++y)
        for (int x = 0; x < 28; ++x) {
            double dist = 1e9;
            for (const Stroke& st : placed)
                for (std::size_t k = 0; k + 1 < st.size(); ++k)
                    dist = std::min(dist, segment_distance(x + 0.5, y + 0.5, st[k], st[k + 1]));
            const double coverage =
                std::min(std::max((thickness * 0.5 + 0.5 - dist), 0.0), 1.0);
            img.at(0, y, x) = intensity * coverage;
        }
    gaussian_blur_inplace(img, blur_sigma);
    for (double& v : img.data) v = std::min(std::max(v, 0.0), 1.0);
    return img;
}

inline bool point_in_polygon(double px, double py, const std::vector<Point>& poly) {
    bool inside = false;
    for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
        if ((poly[i][1] > py) != (poly[j][1] > py)) {
            const double xcross = poly[j][0] + (py - poly[j][1]) / (poly[i][1] - poly[j][1]) *
                                                   (poly[i][0] - poly[j][0]);
            if (px < xcross) inside = !inside;
        }
    }
    return inside;
}

inline Tensor render_silhouette(const Silhouette& sil, Rng& rng) {
    Placement pl;
    pl.rot = rng.uniform(-0.15, 0.15);
    pl.scale_x = rng.uniform(0.85, 1.1);
    pl.scale_y = rng.uniform(0.85, 1.1);
    pl.shear = rng.uniform(-0.1, 0.1);
    pl.tx = rng.uniform(-1.5, 1.5);
    pl.ty = rng.uniform(-1.5, 1.5);
    const double intensity = rng.uniform(0.65, 0.95);
    const double blur_sigma = rng.uniform(0.45, 0.7);

    std::vector<Point> poly;
    for (const Point& p : sil.outline) {
        Point q = {p[0] + rng.normal(0.0, 0.012), p[1] + rng.normal(0.0, 0.012)};
        poly.push_back(apply_placement(pl, q, 22.0));
    }
    std::vector<Stroke> strokes;
    for (const Stroke& st : sil.extra_strokes) {
        Stroke out;
        for (const Point& p : st) out.push_back(apply_placement(pl, p, 22.0));
        strokes.push_back(std::move(out));
    }

    Tensor img({1, 28, 28});
    for (int y = 0; y < 28; ++y)
        for (int x = 0; x < 28; ++x) {
            // 2x2 supersample for soft edges
            double cov = 0.0;
            for (double oy : {0.25, 0.75})
                for (double ox : {0.25, 0.75})
                    if (point_in_polygon(x + ox, y + oy, poly)) cov += 0.25;
            double v = cov * intensity * (0.8 + 0.2 * rng.uniform01()); // fabric speckle
            double dist = 1e9;
            for (const Stroke& st : strokes)
                for (std::size_t k = 0; k + 1 < st.size(); ++k)
                    dist = std::min(dist, segment_distance(x + 0.5, y + 0.5, st[k], st[k + 1]));
            v = std::max(v, intensity * std::min(std::max(1.3 - dist, 0.0), 1.0));
            img.at(0, y, x) = v;
        }
    gaussian_blur_inplace(img, blur_sigma);
    for (double& v : img.data) v = std::min(std::max(v, 0.0), 1.0);
    return img;
}

} // namespace synth_detail

inline Dataset synth_dataset(SynthFamily family, std::size_t count, std::uint64_t seed) {
    Dataset ds;
    ds.images.reserve(count);
    switch (family) {
        case SynthFamily::digits: {
            ds.source = "synth:digits(seed=" + std::to_string(seed) + ")";
            std::vector<std::size_t> labels;
            for (std::size_t i = 0; i < count; ++i) {
                Rng rng(mix_seed(seed, i));
                const std::size_t cls = rng.below(10);
                labels.push_back(cls);
                ds.images.push_back(synth_detail::render_strokes(synth_detail::digit_glyphs()[cls], rng));
            }
            ds.labels = std::move(labels);
            break;
        }
        case SynthFamily::letters: {
            ds.source = "synth:letters(seed=" + std::to_string(seed) + ")";
            for (std::size_t i = 0; i < count; ++i) {
                Rng rng(mix_seed(seed ^ 0x4c45545445525355ull, i));
                const std::size_t cls = rng.below(10);
                ds.images.push_back(synth_detail::render_strokes(synth_detail::letter_glyphs()[cls], rng));
            }
            break;
        }
        case SynthFamily::fashion: {
            ds.source = "synth:fashion(seed=" + std::to_string(seed) + ")";
            for (std::size_t i = 0; i < count; ++i) {
                Rng rng(mix_seed(seed ^ 0x46415348494f4eull, i));
                const std::size_t cls = rng.below(synth_detail::fashion_shapes().size());
                ds.images.push_back(
                    synth_detail::render_silhouette(synth_detail::fashion_shapes()[cls], rng));
            }
            break;
        }
    }
    return ds;
}

// Two interleaved half-circles in R^2 with Gaussian jitter; labels 0/1.
inline Dataset make_two_moons(std::size_t count, double noise_sigma, std::uint64_t seed) {
    Dataset ds;
    ds.source = "synth:two_moons(seed=" + std::to_string(seed) + ")";
    std::vector<std::size_t> labels;
    const double pi = 3.14159265358979323846;
    for (std::size_t i = 0; i < count; ++i) {
        Rng rng(mix_seed(seed ^ 0x4d4f4f4e53ull, i));
        const std::size_t cls = i % 2;
        const double t = rng.uniform01() * pi;
        double x, y;
        if (cls == 0) {
            x = std::cos(t);
            y = std::sin(t);
        } else {
            x = 1.0 - std::cos(t);
            y = 0.5 - std::sin(t);
        }
        x += rng.normal(0.0, noise_sigma);
        y += rng.normal(0.0, noise_sigma);
        ds.images.push_back(Tensor({2}, {x, y}));
        labels.push_back(cls);
    }
    ds.labels = std::move(labels);
    return ds;
}

} // namespace anomaly
