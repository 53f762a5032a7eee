#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lla {

/// Rank-4 extent in batch x channel x height x width order.
struct Shape {
    std::size_t n = 0;
    std::size_t c = 0;
    std::size_t h = 0;
    std::size_t w = 0;

    std::size_t size() const { return n * c * h * w; }
    bool operator==(const Shape&) const = default;
    std::string str() const;
};

/// Raised when operand extents disagree. `axis()` names the offending axis
/// ("n", "c", "h", "w", "shape", or a kernel-specific label).
class DimensionError : public std::invalid_argument {
public:
    DimensionError(std::string axis, const std::string& what);
    const std::string& axis() const { return axis_; }

private:
    std::string axis_;
};

/// Dense double-precision NCHW tensor. Matrices are stored as (rows, cols, 1, 1)
/// and vectors as (len, 1, 1, 1).
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
        return Tensor(Shape{rows, cols, 1, 1}, fill);
    }
    static Tensor vector(std::size_t len, double fill = 0.0) {
        return Tensor(Shape{len, 1, 1, 1}, fill);
    }
    static Tensor scalar(double v) { return Tensor(Shape{1, 1, 1, 1}, v); }

    const Shape& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    /// Rows and flattened columns when the tensor is viewed as a matrix.
    std::size_t rows() const { return shape_.n; }
    std::size_t cols() const { return shape_.c * shape_.h * shape_.w; }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }
    const std::vector<double>& storage() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    std::size_t offset(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
        return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
    }
    double& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
        return data_[offset(n, c, h, w)];
    }
    double at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
        return data_[offset(n, c, h, w)];
    }

    void fill(double v);
    bool all_finite() const;
    double sum() const;

    /// Same data, new extent; total size must match.
    Tensor reshaped(Shape shape) const;

    bool operator==(const Tensor&) const = default;

private:
    Shape shape_{};
    std::vector<double> data_;
};

/// dst += src, shapes must match.
void accumulate(Tensor& dst, const Tensor& src);

// ---------------------------------------------------------------------------
// Convolution

struct ConvSpec {
    std::size_t out_channels = 0;
    std::size_t in_channels = 0;
    std::size_t kernel_h = 1;
    std::size_t kernel_w = 1;
    std::size_t stride = 1;
    std::size_t padding = 0;
    bool has_bias = false;

    Shape weight_shape() const { return {out_channels, in_channels, kernel_h, kernel_w}; }
    /// Output extent for an input of the given shape; throws on invalid geometry.
    Shape output_shape(const Shape& input) const;
    void validate() const;
};

/// Cross-correlation (no kernel flip). `bias` must be empty unless
/// `spec.has_bias`, in which case it holds `out_channels` values.
Tensor conv2d(const Tensor& input, const Tensor& weight, std::span<const double> bias,
              const ConvSpec& spec);

struct ConvGrads {
    Tensor input;
    Tensor weight;
    std::vector<double> bias;
};

ConvGrads conv2d_backward(const Tensor& input, const Tensor& weight, const Tensor& grad_out,
                          const ConvSpec& spec);

// ---------------------------------------------------------------------------
// Batch normalization

enum class Mode { train, eval };

struct BatchNormOptions {
    double eps = 1e-5;
    double momentum = 0.1;
};

/// Caller-owned running statistics, updated in place in train mode.
struct RunningStats {
    std::span<double> mean;
    std::span<double> var;
};

/// Per-channel values the adjoint needs.
struct BatchNormCache {
    std::vector<double> mean;
    std::vector<double> inv_std;
    Mode mode = Mode::train;
};

/// Train mode normalizes with biased batch statistics and blends the unbiased
/// batch variance into the running variance. Eval mode reads running stats only.
Tensor batchnorm2d(const Tensor& input, std::span<const double> gamma, std::span<const double> beta,
                   RunningStats stats, Mode mode, const BatchNormOptions& opts = {},
                   BatchNormCache* cache = nullptr);

/// Eval-mode normalization over read-only statistics.
Tensor batchnorm2d_eval(const Tensor& input, std::span<const double> gamma,
                        std::span<const double> beta, std::span<const double> running_mean,
                        std::span<const double> running_var, double eps = 1e-5,
                        BatchNormCache* cache = nullptr);

struct BatchNormGrads {
    Tensor input;
    std::vector<double> gamma;
    std::vector<double> beta;
};

BatchNormGrads batchnorm2d_backward(const Tensor& input, std::span<const double> gamma,
                                    const BatchNormCache& cache, const Tensor& grad_out);

// ---------------------------------------------------------------------------
// Elementwise

enum class Activation { relu, sigmoid };

Tensor activation(const Tensor& input, Activation kind);
double sigmoid(double x);

/// Gradient w.r.t. the input given the forward output. relu' (0) = 0.
Tensor activation_backward(const Tensor& output, const Tensor& grad_out, Activation kind);

Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double alpha);

/// Channels of `a` precede channels of `b`.
Tensor concat_channels(const Tensor& a, const Tensor& b);
/// Channels in [begin, end).
Tensor slice_channels(const Tensor& t, std::size_t begin, std::size_t end);

// ---------------------------------------------------------------------------
// Pooling

enum class PoolKind { max, global_avg };

/// Max mode: windowed maximum without padding; ties resolve to the first
/// element in row-major window order. Global-average mode ignores window/stride.
Tensor pool2d(const Tensor& input, PoolKind kind, std::size_t window = 2, std::size_t stride = 2);

Tensor pool2d_backward(const Tensor& input, const Tensor& grad_out, PoolKind kind,
                       std::size_t window = 2, std::size_t stride = 2);

// ---------------------------------------------------------------------------
// Dense head

/// input (n x d), weight (k x d), bias k -> input * weight^T + bias, shape (n, k, 1, 1).
/// Input may be any tensor; it is viewed as n rows of c*h*w features.
Tensor linear(const Tensor& input, const Tensor& weight, std::span<const double> bias);

struct LinearGrads {
    Tensor input;
    Tensor weight;
    std::vector<double> bias;
};

LinearGrads linear_backward(const Tensor& input, const Tensor& weight, const Tensor& grad_out);

// ---------------------------------------------------------------------------
// Loss

/// Row-wise softmax with max subtraction. Output shape (n, K, 1, 1).
Tensor softmax(const Tensor& logits);

struct CrossEntropy {
    double loss = 0.0;
    Tensor probabilities;
};

/// Mean negative log-likelihood of `labels` under the row-wise softmax of `logits`.
CrossEntropy softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

/// d(mean loss)/d(logits) = (p - onehot) / n.
Tensor softmax_cross_entropy_backward(const Tensor& probabilities, std::span<const int> labels);

}  // namespace lla
