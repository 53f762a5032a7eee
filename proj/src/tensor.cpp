#include "lla/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace lla {

std::string Shape::str() const {
    std::ostringstream os;
    os << '(' << n << ", " << c << ", " << h << ", " << w << ')';
    return os.str();
}

DimensionError::DimensionError(std::string axis, const std::string& what)
    : std::invalid_argument(what + " [axis " + axis + "]"), axis_(std::move(axis)) {}

Tensor::Tensor(Shape shape, double fill) : shape_(shape), data_(shape.size(), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.size()) {
        throw DimensionError("shape", "tensor data length " + std::to_string(data_.size()) +
                                          " does not match shape " + shape_.str());
    }
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

double Tensor::sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

Tensor Tensor::reshaped(Shape shape) const {
    if (shape.size() != data_.size()) {
        throw DimensionError("shape", "cannot reshape " + shape_.str() + " to " + shape.str());
    }
    return Tensor(shape, data_);
}

void accumulate(Tensor& dst, const Tensor& src) {
    if (dst.shape() != src.shape()) {
        throw DimensionError("shape", "accumulate " + src.shape().str() + " into " + dst.shape().str());
    }
    auto d = dst.data();
    auto s = src.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    const Shape& x = a.shape();
    const Shape& y = b.shape();
    auto fail = [&](const char* axis) {
        throw DimensionError(axis, std::string(op) + ": shapes " + x.str() + " and " + y.str() +
                                       " differ");
    };
    if (x.n != y.n) fail("n");
    if (x.c != y.c) fail("c");
    if (x.h != y.h) fail("h");
    if (x.w != y.w) fail("w");
}

// Unfolds one sample into a (in_c*kh*kw) x (out_h*out_w) column matrix.
void im2col(const double* in, const Shape& s, const ConvSpec& spec, std::size_t out_h,
            std::size_t out_w, std::vector<double>& col) {
    const std::size_t plane = out_h * out_w;
    col.assign(spec.in_channels * spec.kernel_h * spec.kernel_w * plane, 0.0);
    const auto pad = static_cast<std::ptrdiff_t>(spec.padding);
    const auto stride = static_cast<std::ptrdiff_t>(spec.stride);
    const auto ih_max = static_cast<std::ptrdiff_t>(s.h);
    const auto iw_max = static_cast<std::ptrdiff_t>(s.w);
    std::size_t row = 0;
    for (std::size_t ic = 0; ic < spec.in_channels; ++ic) {
        const double* chan = in + ic * s.h * s.w;
        for (std::size_t ki = 0; ki < spec.kernel_h; ++ki) {
            for (std::size_t kj = 0; kj < spec.kernel_w; ++kj, ++row) {
                double* dst = col.data() + row * plane;
                for (std::size_t oh = 0; oh < out_h; ++oh) {
                    const std::ptrdiff_t ih =
                        static_cast<std::ptrdiff_t>(oh) * stride - pad + static_cast<std::ptrdiff_t>(ki);
                    if (ih < 0 || ih >= ih_max) continue;
                    const double* src = chan + ih * iw_max;
                    for (std::size_t ow = 0; ow < out_w; ++ow) {
                        const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow) * stride - pad +
                                                  static_cast<std::ptrdiff_t>(kj);
                        if (iw >= 0 && iw < iw_max) dst[oh * out_w + ow] = src[iw];
                    }
                }
            }
        }
    }
}

void col2im_add(const std::vector<double>& col, const Shape& s, const ConvSpec& spec,
                std::size_t out_h, std::size_t out_w, double* in) {
    const std::size_t plane = out_h * out_w;
    const auto pad = static_cast<std::ptrdiff_t>(spec.padding);
    const auto stride = static_cast<std::ptrdiff_t>(spec.stride);
    const auto ih_max = static_cast<std::ptrdiff_t>(s.h);
    const auto iw_max = static_cast<std::ptrdiff_t>(s.w);
    std::size_t row = 0;
    for (std::size_t ic = 0; ic < spec.in_channels; ++ic) {
        double* chan = in + ic * s.h * s.w;
        for (std::size_t ki = 0; ki < spec.kernel_h; ++ki) {
            for (std::size_t kj = 0; kj < spec.kernel_w; ++kj, ++row) {
                const double* src = col.data() + row * plane;
                for (std::size_t oh = 0; oh < out_h; ++oh) {
                    const std::ptrdiff_t ih =
                        static_cast<std::ptrdiff_t>(oh) * stride - pad + static_cast<std::ptrdiff_t>(ki);
                    if (ih < 0 || ih >= ih_max) continue;
                    double* dst = chan + ih * iw_max;
                    for (std::size_t ow = 0; ow < out_w; ++ow) {
                        const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow) * stride - pad +
                                                  static_cast<std::ptrdiff_t>(kj);
                        if (iw >= 0 && iw < iw_max) dst[iw] += src[oh * out_w + ow];
                    }
                }
            }
        }
    }
}

}  // namespace

// ---------------------------------------------------------------------------

void ConvSpec::validate() const {
    if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
    if (kernel_h < 1 || kernel_w < 1) throw std::invalid_argument("conv2d: kernel dims must be >= 1");
    if (out_channels < 1 || in_channels < 1) {
        throw std::invalid_argument("conv2d: channel counts must be >= 1");
    }
}

Shape ConvSpec::output_shape(const Shape& input) const {
    validate();
    if (input.c != in_channels) {
        throw DimensionError("c", "conv2d: input has " + std::to_string(input.c) +
                                      " channels, spec expects " + std::to_string(in_channels));
    }
    if (input.h + 2 * padding < kernel_h) {
        throw DimensionError("h", "conv2d: kernel height exceeds padded input " + input.str());
    }
    if (input.w + 2 * padding < kernel_w) {
        throw DimensionError("w", "conv2d: kernel width exceeds padded input " + input.str());
    }
    return {input.n, out_channels, (input.h + 2 * padding - kernel_h) / stride + 1,
            (input.w + 2 * padding - kernel_w) / stride + 1};
}

Tensor conv2d(const Tensor& input, const Tensor& weight, std::span<const double> bias,
              const ConvSpec& spec) {
    const Shape out_shape = spec.output_shape(input.shape());
    if (weight.shape() != spec.weight_shape()) {
        throw DimensionError("weight", "conv2d: weight shape " + weight.shape().str() +
                                           " does not match spec " + spec.weight_shape().str());
    }
    if (spec.has_bias ? bias.size() != spec.out_channels : !bias.empty()) {
        throw DimensionError("bias", "conv2d: bias length " + std::to_string(bias.size()) +
                                         " inconsistent with spec");
    }
    Tensor out(out_shape);
    const Shape& s = input.shape();
    const std::size_t plane = out_shape.h * out_shape.w;
    const std::size_t depth = spec.in_channels * spec.kernel_h * spec.kernel_w;
    std::vector<double> col;
    const double* w = weight.data().data();
    for (std::size_t n = 0; n < s.n; ++n) {
        im2col(input.data().data() + n * s.c * s.h * s.w, s, spec, out_shape.h, out_shape.w, col);
        double* o = out.data().data() + n * spec.out_channels * plane;
        for (std::size_t oc = 0; oc < spec.out_channels; ++oc) {
            double* orow = o + oc * plane;
            const double b = spec.has_bias ? bias[oc] : 0.0;
            std::fill(orow, orow + plane, b);
            const double* wrow = w + oc * depth;
            for (std::size_t k = 0; k < depth; ++k) {
                const double wk = wrow[k];
                const double* crow = col.data() + k * plane;
                for (std::size_t p = 0; p < plane; ++p) orow[p] += wk * crow[p];
            }
        }
    }
    return out;
}

ConvGrads conv2d_backward(const Tensor& input, const Tensor& weight, const Tensor& grad_out,
                          const ConvSpec& spec) {
    const Shape out_shape = spec.output_shape(input.shape());
    if (grad_out.shape() != out_shape) {
        throw DimensionError("grad", "conv2d_backward: grad shape " + grad_out.shape().str() +
                                         " expected " + out_shape.str());
    }
    const Shape& s = input.shape();
    const std::size_t plane = out_shape.h * out_shape.w;
    const std::size_t depth = spec.in_channels * spec.kernel_h * spec.kernel_w;
    ConvGrads g{Tensor(s), Tensor(spec.weight_shape()), {}};
    if (spec.has_bias) g.bias.assign(spec.out_channels, 0.0);
    std::vector<double> col;
    std::vector<double> dcol(depth * plane);
    const double* w = weight.data().data();
    double* gw = g.weight.data().data();
    for (std::size_t n = 0; n < s.n; ++n) {
        im2col(input.data().data() + n * s.c * s.h * s.w, s, spec, out_shape.h, out_shape.w, col);
        const double* go = grad_out.data().data() + n * spec.out_channels * plane;
        std::fill(dcol.begin(), dcol.end(), 0.0);
        for (std::size_t oc = 0; oc < spec.out_channels; ++oc) {
            const double* grow = go + oc * plane;
            if (spec.has_bias) {
                double acc = 0.0;
                for (std::size_t p = 0; p < plane; ++p) acc += grow[p];
                g.bias[oc] += acc;
            }
            for (std::size_t k = 0; k < depth; ++k) {
                const double* crow = col.data() + k * plane;
                double acc = 0.0;
                for (std::size_t p = 0; p < plane; ++p) acc += grow[p] * crow[p];
                gw[oc * depth + k] += acc;
                const double wk = w[oc * depth + k];
                double* drow = dcol.data() + k * plane;
                for (std::size_t p = 0; p < plane; ++p) drow[p] += wk * grow[p];
            }
        }
        col2im_add(dcol, s, spec, out_shape.h, out_shape.w,
                   g.input.data().data() + n * s.c * s.h * s.w);
    }
    return g;
}

// ---------------------------------------------------------------------------

namespace {

void check_affine(const Tensor& input, std::span<const double> gamma, std::span<const double> beta) {
    if (gamma.size() != input.shape().c) {
        throw DimensionError("c", "batchnorm2d: gamma length " + std::to_string(gamma.size()) +
                                      " != channels " + std::to_string(input.shape().c));
    }
    if (beta.size() != input.shape().c) {
        throw DimensionError("c", "batchnorm2d: beta length " + std::to_string(beta.size()) +
                                      " != channels " + std::to_string(input.shape().c));
    }
}

Tensor normalize(const Tensor& input, std::span<const double> gamma, std::span<const double> beta,
                 const std::vector<double>& mean, const std::vector<double>& inv_std) {
    const Shape& s = input.shape();
    const std::size_t plane = s.h * s.w;
    Tensor out(s);
    for (std::size_t n = 0; n < s.n; ++n) {
        for (std::size_t c = 0; c < s.c; ++c) {
            const double* x = input.data().data() + (n * s.c + c) * plane;
            double* y = out.data().data() + (n * s.c + c) * plane;
            const double a = gamma[c] * inv_std[c];
            for (std::size_t p = 0; p < plane; ++p) y[p] = a * (x[p] - mean[c]) + beta[c];
        }
    }
    return out;
}

}  // namespace

Tensor batchnorm2d(const Tensor& input, std::span<const double> gamma, std::span<const double> beta,
                   RunningStats stats, Mode mode, const BatchNormOptions& opts,
                   BatchNormCache* cache) {
    check_affine(input, gamma, beta);
    const Shape& s = input.shape();
    if (stats.mean.size() != s.c || stats.var.size() != s.c) {
        throw DimensionError("c", "batchnorm2d: running stats length does not match channels");
    }
    if (mode == Mode::eval) {
        return batchnorm2d_eval(input, gamma, beta, stats.mean, stats.var, opts.eps, cache);
    }
    const std::size_t plane = s.h * s.w;
    const std::size_t count = s.n * plane;
    if (count < 2) {
        throw std::invalid_argument("batchnorm2d: train mode needs n*h*w >= 2, got " +
                                    std::to_string(count));
    }
    std::vector<double> mean(s.c, 0.0);
    std::vector<double> var(s.c, 0.0);
    std::vector<double> inv_std(s.c);
    for (std::size_t c = 0; c < s.c; ++c) {
        double acc = 0.0;
        for (std::size_t n = 0; n < s.n; ++n) {
            const double* x = input.data().data() + (n * s.c + c) * plane;
            for (std::size_t p = 0; p < plane; ++p) acc += x[p];
        }
        mean[c] = acc / static_cast<double>(count);
        double sq = 0.0;
        for (std::size_t n = 0; n < s.n; ++n) {
            const double* x = input.data().data() + (n * s.c + c) * plane;
            for (std::size_t p = 0; p < plane; ++p) {
                const double d = x[p] - mean[c];
                sq += d * d;
            }
        }
        var[c] = sq / static_cast<double>(count);
        inv_std[c] = 1.0 / std::sqrt(var[c] + opts.eps);
        const double unbiased = sq / static_cast<double>(count - 1);
        stats.mean[c] = (1.0 - opts.momentum) * stats.mean[c] + opts.momentum * mean[c];
        stats.var[c] = (1.0 - opts.momentum) * stats.var[c] + opts.momentum * unbiased;
    }
    Tensor out = normalize(input, gamma, beta, mean, inv_std);
    if (cache) {
        cache->mean = std::move(mean);
        cache->inv_std = std::move(inv_std);
        cache->mode = Mode::train;
    }
    return out;
}

Tensor batchnorm2d_eval(const Tensor& input, std::span<const double> gamma,
                        std::span<const double> beta, std::span<const double> running_mean,
                        std::span<const double> running_var, double eps, BatchNormCache* cache) {
    check_affine(input, gamma, beta);
    const Shape& s = input.shape();
    if (running_mean.size() != s.c || running_var.size() != s.c) {
        throw DimensionError("c", "batchnorm2d: running stats length does not match channels");
    }
    std::vector<double> mean(running_mean.begin(), running_mean.end());
    std::vector<double> inv_std(s.c);
    for (std::size_t c = 0; c < s.c; ++c) inv_std[c] = 1.0 / std::sqrt(running_var[c] + eps);
    Tensor out = normalize(input, gamma, beta, mean, inv_std);
    if (cache) {
        cache->mean = std::move(mean);
        cache->inv_std = std::move(inv_std);
        cache->mode = Mode::eval;
    }
    return out;
}

BatchNormGrads batchnorm2d_backward(const Tensor& input, std::span<const double> gamma,
                                    const BatchNormCache& cache, const Tensor& grad_out) {
    require_same_shape(input, grad_out, "batchnorm2d_backward");
    const Shape& s = input.shape();
    const std::size_t plane = s.h * s.w;
    const auto count = static_cast<double>(s.n * plane);
    BatchNormGrads g{Tensor(s), std::vector<double>(s.c, 0.0), std::vector<double>(s.c, 0.0)};
    for (std::size_t c = 0; c < s.c; ++c) {
        const double mu = cache.mean[c];
        const double is = cache.inv_std[c];
        double sum_dy = 0.0;
        double sum_dy_xhat = 0.0;
        for (std::size_t n = 0; n < s.n; ++n) {
            const double* x = input.data().data() + (n * s.c + c) * plane;
            const double* dy = grad_out.data().data() + (n * s.c + c) * plane;
            for (std::size_t p = 0; p < plane; ++p) {
                sum_dy += dy[p];
                sum_dy_xhat += dy[p] * (x[p] - mu) * is;
            }
        }
        g.beta[c] = sum_dy;
        g.gamma[c] = sum_dy_xhat;
        for (std::size_t n = 0; n < s.n; ++n) {
            const double* x = input.data().data() + (n * s.c + c) * plane;
            const double* dy = grad_out.data().data() + (n * s.c + c) * plane;
            double* dx = g.input.data().data() + (n * s.c + c) * plane;
            if (cache.mode == Mode::eval) {
                for (std::size_t p = 0; p < plane; ++p) dx[p] = dy[p] * gamma[c] * is;
            } else {
                const double k = gamma[c] * is / count;
                for (std::size_t p = 0; p < plane; ++p) {
                    const double xhat = (x[p] - mu) * is;
                    dx[p] = k * (count * dy[p] - sum_dy - xhat * sum_dy_xhat);
                }
            }
        }
    }
    return g;
}

// ---------------------------------------------------------------------------

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

Tensor activation(const Tensor& input, Activation kind) {
    Tensor out(input.shape());
    auto x = input.data();
    auto y = out.data();
    if (kind == Activation::relu) {
        for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
    } else {
        for (std::size_t i = 0; i < x.size(); ++i) y[i] = sigmoid(x[i]);
    }
    return out;
}

Tensor activation_backward(const Tensor& output, const Tensor& grad_out, Activation kind) {
    require_same_shape(output, grad_out, "activation_backward");
    Tensor g(output.shape());
    auto y = output.data();
    auto dy = grad_out.data();
    auto dx = g.data();
    if (kind == Activation::relu) {
        for (std::size_t i = 0; i < y.size(); ++i) dx[i] = y[i] > 0.0 ? dy[i] : 0.0;
    } else {
        for (std::size_t i = 0; i < y.size(); ++i) dx[i] = dy[i] * y[i] * (1.0 - y[i]);
    }
    return g;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "hadamard");
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    return out;
}

Tensor scale(const Tensor& a, double alpha) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = alpha * a[i];
    return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    const Shape& x = a.shape();
    const Shape& y = b.shape();
    if (x.n != y.n) throw DimensionError("n", "concat_channels: batch " + x.str() + " vs " + y.str());
    if (x.h != y.h) throw DimensionError("h", "concat_channels: height " + x.str() + " vs " + y.str());
    if (x.w != y.w) throw DimensionError("w", "concat_channels: width " + x.str() + " vs " + y.str());
    Tensor out(Shape{x.n, x.c + y.c, x.h, x.w});
    const std::size_t plane = x.h * x.w;
    for (std::size_t n = 0; n < x.n; ++n) {
        auto dst = out.data().begin() + static_cast<std::ptrdiff_t>(n * (x.c + y.c) * plane);
        auto sa = a.data().begin() + static_cast<std::ptrdiff_t>(n * x.c * plane);
        auto sb = b.data().begin() + static_cast<std::ptrdiff_t>(n * y.c * plane);
        dst = std::copy(sa, sa + static_cast<std::ptrdiff_t>(x.c * plane), dst);
        std::copy(sb, sb + static_cast<std::ptrdiff_t>(y.c * plane), dst);
    }
    return out;
}

Tensor slice_channels(const Tensor& t, std::size_t begin, std::size_t end) {
    const Shape& s = t.shape();
    if (begin > end || end > s.c) {
        throw DimensionError("c", "slice_channels: range [" + std::to_string(begin) + ", " +
                                      std::to_string(end) + ") outside " + s.str());
    }
    Tensor out(Shape{s.n, end - begin, s.h, s.w});
    const std::size_t plane = s.h * s.w;
    for (std::size_t n = 0; n < s.n; ++n) {
        auto src = t.data().begin() + static_cast<std::ptrdiff_t>((n * s.c + begin) * plane);
        std::copy(src, src + static_cast<std::ptrdiff_t>((end - begin) * plane),
                  out.data().begin() + static_cast<std::ptrdiff_t>(n * (end - begin) * plane));
    }
    return out;
}

// ---------------------------------------------------------------------------

namespace {

Shape max_pool_shape(const Shape& s, std::size_t window, std::size_t stride) {
    if (window < 1 || stride < 1) throw std::invalid_argument("pool2d: window and stride must be >= 1");
    if (window > s.h) throw DimensionError("h", "pool2d: window exceeds height of " + s.str());
    if (window > s.w) throw DimensionError("w", "pool2d: window exceeds width of " + s.str());
    return {s.n, s.c, (s.h - window) / stride + 1, (s.w - window) / stride + 1};
}

}  // namespace

Tensor pool2d(const Tensor& input, PoolKind kind, std::size_t window, std::size_t stride) {
    const Shape& s = input.shape();
    if (kind == PoolKind::global_avg) {
        if (s.h * s.w == 0) throw DimensionError("h", "pool2d: empty spatial extent");
        Tensor out(Shape{s.n, s.c, 1, 1});
        const std::size_t plane = s.h * s.w;
        for (std::size_t i = 0; i < s.n * s.c; ++i) {
            const double* x = input.data().data() + i * plane;
            double acc = 0.0;
            for (std::size_t p = 0; p < plane; ++p) acc += x[p];
            out[i] = acc / static_cast<double>(plane);
        }
        return out;
    }
    const Shape os = max_pool_shape(s, window, stride);
    Tensor out(os);
    for (std::size_t n = 0; n < s.n; ++n) {
        for (std::size_t c = 0; c < s.c; ++c) {
            for (std::size_t oh = 0; oh < os.h; ++oh) {
                for (std::size_t ow = 0; ow < os.w; ++ow) {
                    double best = -std::numeric_limits<double>::infinity();
                    for (std::size_t i = 0; i < window; ++i) {
                        for (std::size_t j = 0; j < window; ++j) {
                            best = std::max(best, input.at(n, c, oh * stride + i, ow * stride + j));
                        }
                    }
                    out.at(n, c, oh, ow) = best;
                }
            }
        }
    }
    return out;
}

Tensor pool2d_backward(const Tensor& input, const Tensor& grad_out, PoolKind kind,
                       std::size_t window, std::size_t stride) {
    const Shape& s = input.shape();
    Tensor g(s);
    if (kind == PoolKind::global_avg) {
        if (grad_out.shape() != Shape{s.n, s.c, 1, 1}) {
            throw DimensionError("grad", "pool2d_backward: grad shape " + grad_out.shape().str());
        }
        const std::size_t plane = s.h * s.w;
        for (std::size_t i = 0; i < s.n * s.c; ++i) {
            const double v = grad_out[i] / static_cast<double>(plane);
            std::fill(g.data().begin() + static_cast<std::ptrdiff_t>(i * plane),
                      g.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * plane), v);
        }
        return g;
    }
    const Shape os = max_pool_shape(s, window, stride);
    if (grad_out.shape() != os) {
        throw DimensionError("grad", "pool2d_backward: grad shape " + grad_out.shape().str());
    }
    for (std::size_t n = 0; n < s.n; ++n) {
        for (std::size_t c = 0; c < s.c; ++c) {
            for (std::size_t oh = 0; oh < os.h; ++oh) {
                for (std::size_t ow = 0; ow < os.w; ++ow) {
                    std::size_t bi = oh * stride;
                    std::size_t bj = ow * stride;
                    double best = input.at(n, c, bi, bj);
                    for (std::size_t i = 0; i < window; ++i) {
                        for (std::size_t j = 0; j < window; ++j) {
                            const double v = input.at(n, c, oh * stride + i, ow * stride + j);
                            if (v > best) {
                                best = v;
                                bi = oh * stride + i;
                                bj = ow * stride + j;
                            }
                        }
                    }
                    g.at(n, c, bi, bj) += grad_out.at(n, c, oh, ow);
                }
            }
        }
    }
    return g;
}

// ---------------------------------------------------------------------------

Tensor linear(const Tensor& input, const Tensor& weight, std::span<const double> bias) {
    const std::size_t n = input.rows();
    const std::size_t d = input.cols();
    const std::size_t k = weight.rows();
    if (weight.cols() != d) {
        throw DimensionError("d", "linear: input has " + std::to_string(d) +
                                      " features, weight expects " + std::to_string(weight.cols()));
    }
    if (bias.size() != k) {
        throw DimensionError("k", "linear: bias length " + std::to_string(bias.size()) +
                                      " != outputs " + std::to_string(k));
    }
    Tensor out = Tensor::matrix(n, k);
    const double* x = input.data().data();
    const double* w = weight.data().data();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            double acc = 0.0;
            for (std::size_t t = 0; t < d; ++t) acc += x[i * d + t] * w[j * d + t];
            out[i * k + j] = acc + bias[j];
        }
    }
    return out;
}

LinearGrads linear_backward(const Tensor& input, const Tensor& weight, const Tensor& grad_out) {
    const std::size_t n = input.rows();
    const std::size_t d = input.cols();
    const std::size_t k = weight.rows();
    if (grad_out.rows() != n || grad_out.cols() != k) {
        throw DimensionError("grad", "linear_backward: grad shape " + grad_out.shape().str());
    }
    LinearGrads g{Tensor(input.shape()), Tensor(weight.shape()), std::vector<double>(k, 0.0)};
    const double* x = input.data().data();
    const double* w = weight.data().data();
    const double* dy = grad_out.data().data();
    double* dx = g.input.data().data();
    double* dw = g.weight.data().data();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            const double gy = dy[i * k + j];
            g.bias[j] += gy;
            for (std::size_t t = 0; t < d; ++t) {
                dx[i * d + t] += gy * w[j * d + t];
                dw[j * d + t] += gy * x[i * d + t];
            }
        }
    }
    return g;
}

// ---------------------------------------------------------------------------

Tensor softmax(const Tensor& logits) {
    const std::size_t n = logits.rows();
    const std::size_t k = logits.cols();
    Tensor p = Tensor::matrix(n, k);
    for (std::size_t i = 0; i < n; ++i) {
        const double* z = logits.data().data() + i * k;
        double* q = p.data().data() + i * k;
        const double m = *std::max_element(z, z + k);
        double total = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            q[j] = std::exp(z[j] - m);
            total += q[j];
        }
        for (std::size_t j = 0; j < k; ++j) q[j] /= total;
    }
    return p;
}

CrossEntropy softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
    const std::size_t n = logits.rows();
    const std::size_t k = logits.cols();
    if (k < 2) throw DimensionError("k", "softmax_cross_entropy: need at least 2 classes");
    if (labels.size() != n) {
        throw DimensionError("n", "softmax_cross_entropy: " + std::to_string(labels.size()) +
                                      " labels for " + std::to_string(n) + " rows");
    }
    if (n == 0) throw DimensionError("n", "softmax_cross_entropy: empty batch");
    CrossEntropy ce{0.0, Tensor::matrix(n, k)};
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= k) {
            throw std::out_of_range("softmax_cross_entropy: label " + std::to_string(y) +
                                    " outside [0, " + std::to_string(k) + ")");
        }
        const double* z = logits.data().data() + i * k;
        double* q = ce.probabilities.data().data() + i * k;
        const double m = *std::max_element(z, z + k);
        double denom = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            q[j] = std::exp(z[j] - m);
            denom += q[j];
        }
        for (std::size_t j = 0; j < k; ++j) q[j] /= denom;
        // log p_y = z_y - m - log(denom), stable even when q[y] underflows.
        total += -(z[y] - m - std::log(denom));
    }
    ce.loss = total / static_cast<double>(n);
    return ce;
}

Tensor softmax_cross_entropy_backward(const Tensor& probabilities, std::span<const int> labels) {
    const std::size_t n = probabilities.rows();
    const std::size_t k = probabilities.cols();
    Tensor g = probabilities;
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        g[i * k + static_cast<std::size_t>(labels[i])] -= 1.0;
        for (std::size_t j = 0; j < k; ++j) g[i * k + j] *= inv_n;
    }
    return g;
}

}  // namespace lla
