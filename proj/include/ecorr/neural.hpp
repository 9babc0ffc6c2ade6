#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ecorr/error.hpp"
#include "ecorr/rng.hpp"

namespace ecorr::nn {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& s);
std::string to_string(const Shape& s);

/// Dense tensor, row-major. The leading axis is the batch axis for every
/// tensor that passes through a Network.
template <class Real>
struct Tensor {
    Shape shape;
    std::vector<Real> data;

    Tensor() = default;
    explicit Tensor(Shape s, Real fill = Real(0)) : shape(std::move(s)), data(shape_size(shape), fill) {}
    Tensor(Shape s, std::vector<Real> d);

    std::size_t size() const noexcept { return data.size(); }
    std::size_t batch() const { return shape.empty() ? 0 : shape[0]; }
    /// Elements per batch item.
    std::size_t stride() const { return shape.empty() || shape[0] == 0 ? 0 : data.size() / shape[0]; }
    Real& operator[](std::size_t i) { return data[i]; }
    Real operator[](std::size_t i) const { return data[i]; }
};

enum class LayerKind {
    Dense,
    Conv2D,
    ConvTranspose2D,
    LeakyReLU,
    ReLU,
    Tanh,
    Sigmoid,
    Flatten,
    Reshape,
    /// [tri + extra] -> [1 + extra, dim, dim]: the lower triangle becomes a
    /// symmetric unit-diagonal image and each extra input fills a constant
    /// channel (label conditioning for convolutional discriminators).
    SymmetricImage,
    /// [1, dim, dim] -> [tri]: strict lower triangle of the symmetrized image.
    LowerTriangle,
};

std::string to_string(LayerKind k);
LayerKind parse_layer_kind(const std::string& name);

struct LayerSpec {
    LayerKind kind = LayerKind::Dense;
    std::size_t in = 0;      ///< Dense inputs, conv input channels
    std::size_t out = 0;     ///< Dense outputs, conv output channels
    std::size_t kernel = 0;
    std::size_t stride = 1;
    std::size_t pad = 0;
    double alpha = 0.2;      ///< LeakyReLU slope
    Shape shape;             ///< Reshape target (per item)
    std::size_t dim = 0;     ///< SymmetricImage / LowerTriangle side
    std::size_t extra = 0;   ///< SymmetricImage constant channels

    static LayerSpec dense(std::size_t in, std::size_t out);
    static LayerSpec conv2d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel, std::size_t stride,
                            std::size_t pad);
    static LayerSpec conv_transpose2d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel,
                                      std::size_t stride, std::size_t pad);
    static LayerSpec leaky_relu(double alpha = 0.2);
    static LayerSpec relu();
    static LayerSpec tanh();
    static LayerSpec sigmoid();
    static LayerSpec flatten();
    static LayerSpec reshape(Shape s);
    static LayerSpec symmetric_image(std::size_t dim, std::size_t extra);
    static LayerSpec lower_triangle(std::size_t dim);

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Activations recorded by forward; valid for backward only while the
/// network parameters are unchanged.
template <class Real>
struct Cache {
    std::vector<Tensor<Real>> activations;  ///< [0] is the input, [l + 1] the output of layer l
    std::uint64_t version = 0;
    const void* owner = nullptr;
};

template <class Real>
struct Gradients {
    std::vector<Real> params;  ///< same layout as Network::parameters()
    Tensor<Real> input;        ///< gradient with respect to the network input
};

/// Feed-forward network over a static layer list. All parameters live in a
/// single flat buffer; each layer owns a contiguous slice (weights then bias).
template <class Real>
class Network {
public:
    Network() = default;
    /// Checks the shape chain; throws ShapeError naming the first bad layer.
    Network(Shape input_shape, std::vector<LayerSpec> layers);

    /// Glorot-uniform weights, zero biases.
    void initialize(Seed seed);

    const Shape& input_shape() const noexcept { return input_shape_; }
    const Shape& output_shape() const noexcept { return shapes_.back(); }
    const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
    /// Per-item output shape of each layer.
    const std::vector<Shape>& shapes() const noexcept { return shapes_; }
    std::size_t parameter_count() const noexcept { return params_.size(); }
    std::size_t layer_offset(std::size_t layer) const { return offsets_[layer]; }
    std::size_t layer_parameter_count(std::size_t layer) const { return offsets_[layer + 1] - offsets_[layer]; }

    std::span<const Real> parameters() const noexcept { return params_; }
    /// Invalidates every outstanding Cache.
    std::span<Real> mutable_parameters() {
        ++version_;
        return params_;
    }

    Tensor<Real> forward(const Tensor<Real>& input, Cache<Real>* cache = nullptr) const;
    /// `grad_output` is the gradient with respect to the output of layer
    /// (layer_count - 1 - skip_last); the trailing `skip_last` layers are not
    /// differentiated. Used to start from logits ahead of a final Sigmoid.
    Gradients<Real> backward(const Cache<Real>& cache, const Tensor<Real>& grad_output,
                             std::size_t skip_last = 0) const;

    template <class Other>
    Network<Other> cast() const {
        Network<Other> n(input_shape_, layers_);
        auto p = n.mutable_parameters();
        for (std::size_t i = 0; i < params_.size(); ++i) p[i] = static_cast<Other>(params_[i]);
        return n;
    }

private:
    Shape input_shape_;
    std::vector<LayerSpec> layers_;
    std::vector<Shape> shapes_;
    std::vector<std::size_t> offsets_;
    std::vector<Real> params_;
    std::uint64_t version_ = 0;
};

struct AdamConfig {
    double lr = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    void check() const;
};

template <class Real>
struct AdamState {
    AdamConfig config;
    std::uint64_t step = 0;
    std::vector<Real> m;
    std::vector<Real> v;

    AdamState() = default;
    AdamState(AdamConfig c, std::size_t n) : config(c), m(n, Real(0)), v(n, Real(0)) { config.check(); }
};

/// Bias-corrected Adam. Throws NumericalFailure on a non-finite gradient,
/// leaving parameters and state untouched.
template <class Real>
void adam_step(AdamState<Real>& state, std::span<Real> params, std::span<const Real> grads);

template <class Real>
void adam_step(AdamState<Real>& state, Network<Real>& net, std::span<const Real> grads) {
    adam_step(state, net.mutable_parameters(), grads);
}

/// Mean binary cross-entropy on logits [N, 1] against a constant target;
/// writes d loss / d logits into `grad` (resized).
template <class Real>
double bce_with_logits(const Tensor<Real>& logits, double target, Tensor<Real>* grad);

/// Mean softmax cross-entropy on logits [N, K].
template <class Real>
double softmax_cross_entropy(const Tensor<Real>& logits, std::span<const std::size_t> labels, Tensor<Real>* grad);

/// Mean over all entries of (y - target)^2.
template <class Real>
double mse(const Tensor<Real>& y, const Tensor<Real>& target, Tensor<Real>* grad);

inline constexpr int kCheckpointVersion = 1;

/// Extra metadata stored alongside a checkpointed network.
struct CheckpointInfo {
    AdamConfig optimizer;
    std::uint64_t seed = 0;
    std::uint64_t step = 0;
};

/// NNCK v1: model.json + weights.f32le.
void save(const Network<float>& net, const CheckpointInfo& info, const std::filesystem::path& dir);
Network<float> load(const std::filesystem::path& dir, CheckpointInfo* info = nullptr);

struct GradientCheck {
    std::size_t probes = 0;
    double max_rel_error = 0.0;
    std::size_t failures = 0;
};

/// Central finite differences of the scalar loss 0.5 * sum(w * y) for a
/// fixed random weighting w, compared with backward on `probes` random
/// parameters and every input entry up to `probes`.
GradientCheck gradient_check(const Network<double>& net, const Tensor<double>& input, std::size_t probes, Seed seed,
                             double h = 1e-5, double tol = 1e-4);

}  // namespace ecorr::nn
