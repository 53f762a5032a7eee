#pragma once

// Deliberately naive reference implementations used only by tests. They share
// no code with the library kernels.

#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "lla/tensor.hpp"

namespace oracle {

using lla::Shape;
using lla::Tensor;

inline Tensor random_tensor(Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    Tensor t(s);
    for (double& v : t.data()) v = d(rng);
    return t;
}

// Direct convolution: six loops over (n, oc, oy, ox, ic, ky, kx) with explicit zero padding.
inline Tensor conv2d(const Tensor& x, const Tensor& w, const std::vector<double>& bias, std::size_t stride,
                     std::size_t pad) {
    const Shape xs = x.shape();
    const Shape ws = w.shape();
    const long oh = (static_cast<long>(xs.h) + 2 * static_cast<long>(pad) - static_cast<long>(ws.h)) /
                        static_cast<long>(stride) + 1;
    const long ow = (static_cast<long>(xs.w) + 2 * static_cast<long>(pad) - static_cast<long>(ws.w)) /
                        static_cast<long>(stride) + 1;
    Tensor y(Shape{xs.n, ws.n, static_cast<std::size_t>(oh), static_cast<std::size_t>(ow)});
    for (std::size_t n = 0; n < xs.n; ++n)
        for (std::size_t oc = 0; oc < ws.n; ++oc)
            for (long oy = 0; oy < oh; ++oy)
                for (long ox = 0; ox < ow; ++ox) {
                    double acc = bias.empty() ? 0.0 : bias[oc];
                    for (std::size_t ic = 0; ic < ws.c; ++ic)
                        for (std::size_t ky = 0; ky < ws.h; ++ky)
                            for (std::size_t kx = 0; kx < ws.w; ++kx) {
                                const long iy = oy * static_cast<long>(stride) + static_cast<long>(ky) -
                                                static_cast<long>(pad);
                                const long ix = ox * static_cast<long>(stride) + static_cast<long>(kx) -
                                                static_cast<long>(pad);
                                if (iy < 0 || ix < 0 || iy >= static_cast<long>(xs.h) ||
                                    ix >= static_cast<long>(xs.w))
                                    continue;
                                acc += x.at(n, ic, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)) *
                                       w.at(oc, ic, ky, kx);
                            }
                    y.at(n, oc, static_cast<std::size_t>(oy), static_cast<std::size_t>(ox)) = acc;
                }
    return y;
}

// Triple-loop x * w^T + b over rows of x.
inline Tensor matmul_bias(const Tensor& x, const Tensor& w, const std::vector<double>& b) {
    const std::size_t n = x.shape().n;
    const std::size_t d = x.size() / n;
    const std::size_t k = w.shape().n;
    Tensor y(Shape{n, k, 1, 1});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j) {
            double acc = b[j];
            for (std::size_t e = 0; e < d; ++e) acc += x[i * d + e] * w[j * d + e];
            y[i * k + j] = acc;
        }
    return y;
}

inline Tensor max_pool(const Tensor& x, std::size_t window, std::size_t stride) {
    const Shape s = x.shape();
    const std::size_t oh = (s.h - window) / stride + 1;
    const std::size_t ow = (s.w - window) / stride + 1;
    Tensor y(Shape{s.n, s.c, oh, ow});
    for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t c = 0; c < s.c; ++c)
            for (std::size_t oy = 0; oy < oh; ++oy)
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    double m = -INFINITY;
                    for (std::size_t ky = 0; ky < window; ++ky)
                        for (std::size_t kx = 0; kx < window; ++kx)
                            m = std::max(m, x.at(n, c, oy * stride + ky, ox * stride + kx));
                    y.at(n, c, oy, ox) = m;
                }
    return y;
}

inline Tensor global_avg(const Tensor& x) {
    const Shape s = x.shape();
    Tensor y(Shape{s.n, s.c, 1, 1});
    for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t c = 0; c < s.c; ++c) {
            double acc = 0.0;
            for (std::size_t i = 0; i < s.h; ++i)
                for (std::size_t j = 0; j < s.w; ++j) acc += x.at(n, c, i, j);
            y.at(n, c, 0, 0) = acc / static_cast<double>(s.h * s.w);
        }
    return y;
}

// Mean cross-entropy in long double without max subtraction (fine for |logits| <~ 50).
inline long double cross_entropy(const Tensor& logits, std::span<const int> labels) {
    const std::size_t n = logits.shape().n;
    const std::size_t k = logits.size() / n;
    long double total = 0.0L;
    for (std::size_t i = 0; i < n; ++i) {
        long double z = 0.0L;
        for (std::size_t j = 0; j < k; ++j) z += std::exp(static_cast<long double>(logits[i * k + j]));
        total += std::log(z) - static_cast<long double>(logits[i * k + static_cast<std::size_t>(labels[i])]);
    }
    return total / static_cast<long double>(n);
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace oracle
