#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "magspike/dataio.hpp"
#include "magspike/rng.hpp"

// Procedurally rendered digit images in the IDX layout. A stand-in corpus
// for exercising the full pipeline when the real MNIST files are not on
// disk; stroke skeletons with randomized affine jitter and pixel noise.
namespace magspike::synth {

struct Point {
    double x, y;
};
using Stroke = std::vector<Point>;

inline const std::vector<Stroke>& digit_strokes(int digit) {
    auto arc = [](double cx, double cy, double rx, double ry, double a0, double a1, int n) {
        Stroke s;
        for (int i = 0; i <= n; ++i) {
            const double a = a0 + (a1 - a0) * i / n;
            s.push_back({cx + rx * std::cos(a), cy + ry * std::sin(a)});
        }
        return s;
    };
    const double pi = 3.14159265358979323846;
    static const std::array<std::vector<Stroke>, 10> strokes = {{
        /*0*/ {arc(0.5, 0.5, 0.28, 0.38, 0.0, 2 * pi, 24)},
        /*1*/ {{{0.35, 0.25}, {0.55, 0.1}, {0.55, 0.9}}},
        /*2*/ {arc(0.5, 0.3, 0.25, 0.2, -pi, 0.35 * pi, 12),
               {{0.68, 0.45}, {0.3, 0.9}, {0.75, 0.9}}},
        /*3*/ {arc(0.47, 0.3, 0.24, 0.2, -0.9 * pi, 0.5 * pi, 12),
               arc(0.47, 0.7, 0.26, 0.2, -0.5 * pi, 0.9 * pi, 12)},
        /*4*/ {{{0.62, 0.9}, {0.62, 0.1}, {0.25, 0.62}, {0.8, 0.62}}},
        /*5*/ {{{0.7, 0.1}, {0.35, 0.1}, {0.32, 0.48}},
               arc(0.48, 0.66, 0.26, 0.24, -0.6 * pi, 0.75 * pi, 14)},
        /*6*/ {{{0.62, 0.1}, {0.38, 0.45}, {0.33, 0.62}},
               arc(0.5, 0.68, 0.2, 0.22, 0.0, 2 * pi, 18)},
        /*7*/ {{{0.28, 0.12}, {0.74, 0.12}, {0.45, 0.9}}},
        /*8*/ {arc(0.5, 0.3, 0.2, 0.19, 0.0, 2 * pi, 18),
               arc(0.5, 0.7, 0.24, 0.21, 0.0, 2 * pi, 18)},
        /*9*/ {arc(0.5, 0.32, 0.2, 0.22, 0.0, 2 * pi, 18),
               {{0.68, 0.35}, {0.62, 0.9}}},
    }};
    return strokes[digit];
}

inline double segment_distance(double px, double py, const Point& a, const Point& b) {
    const double dx = b.x - a.x, dy = b.y - a.y;
    const double len2 = dx * dx + dy * dy;
    double t = len2 > 0.0 ? ((px - a.x) * dx + (py - a.y) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double qx = a.x + t * dx - px, qy = a.y + t * dy - py;
    return std::sqrt(qx * qx + qy * qy);
}

inline void render_digit(int digit, rng::RandomStream& rs, std::uint8_t* out,
                         std::size_t rows = 28, std::size_t cols = 28) {
    const double rot = (rs.uniform() - 0.5) * 0.36;
    const double scale = 0.85 + rs.uniform() * 0.3;
    const double shift_x = (rs.uniform() - 0.5) * 0.14;
    const double shift_y = (rs.uniform() - 0.5) * 0.14;
    const double shear = (rs.uniform() - 0.5) * 0.2;
    const double width = 0.035 + rs.uniform() * 0.02; // stroke half-width
    const double noise = 6.0 + rs.uniform() * 8.0;

    const double c = std::cos(rot), s = std::sin(rot);
    std::vector<Stroke> shape;
    for (const auto& stroke : digit_strokes(digit)) {
        Stroke t;
        t.reserve(stroke.size());
        for (const auto& p : stroke) {
            double x = (p.x - 0.5) * scale, y = (p.y - 0.5) * scale;
            x += shear * y;
            const double xr = c * x - s * y + 0.5 + shift_x;
            const double yr = s * x + c * y + 0.5 + shift_y;
            t.push_back({xr, yr});
        }
        shape.push_back(std::move(t));
    }

    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t col = 0; col < cols; ++col) {
            const double px = (static_cast<double>(col) + 0.5) / static_cast<double>(cols);
            const double py = (static_cast<double>(r) + 0.5) / static_cast<double>(rows);
            double d = 1e9;
            for (const auto& stroke : shape)
                for (std::size_t i = 0; i + 1 < stroke.size(); ++i)
                    d = std::min(d, segment_distance(px, py, stroke[i], stroke[i + 1]));
            double v = 255.0 * std::exp(-(d * d) / (2.0 * width * width));
            v += noise * rs.gaussian();
            out[r * cols + col] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
        }
    }
}

// Balanced random-order dataset of n images.
inline Dataset make_dataset(std::size_t n, std::uint64_t seed, const std::string& split) {
    Dataset ds;
    ds.n = n;
    ds.rows = 28;
    ds.cols = 28;
    ds.split = split;
    ds.images.resize(n * 784);
    ds.labels.resize(n);
    rng::RandomStream label_rs(rng::derive_seed(seed, "synth-labels"));
    for (std::size_t i = 0; i < n; ++i)
        ds.labels[i] = static_cast<std::uint8_t>(label_rs.next_u64() % 10);
    for (std::size_t i = 0; i < n; ++i) {
        rng::RandomStream rs(rng::derive_seed(seed, "synth-image", i));
        render_digit(ds.labels[i], rs, ds.images.data() + i * 784);
    }
    return ds;
}

} // namespace magspike::synth
