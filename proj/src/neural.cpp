#include "ecorr/neural.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "ecorr/util.hpp"

namespace ecorr::nn {

using nlohmann::json;

std::size_t shape_size(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& s) {
    std::string out = "[";
    for (std::size_t k = 0; k < s.size(); ++k) out += (k ? ", " : "") + std::to_string(s[k]);
    return out + "]";
}

template <class Real>
Tensor<Real>::Tensor(Shape s, std::vector<Real> d) : shape(std::move(s)), data(std::move(d)) {
    require(shape_size(shape) == data.size(), ErrorKind::ShapeError,
            "tensor data length " + std::to_string(data.size()) + " does not match shape " + to_string(shape));
}

namespace {

struct KindName {
    LayerKind kind;
    const char* name;
};

constexpr KindName kKindNames[] = {
    {LayerKind::Dense, "dense"},
    {LayerKind::Conv2D, "conv2d"},
    {LayerKind::ConvTranspose2D, "conv_transpose2d"},
    {LayerKind::LeakyReLU, "leaky_relu"},
    {LayerKind::ReLU, "relu"},
    {LayerKind::Tanh, "tanh"},
    {LayerKind::Sigmoid, "sigmoid"},
    {LayerKind::Flatten, "flatten"},
    {LayerKind::Reshape, "reshape"},
    {LayerKind::SymmetricImage, "symmetric_image"},
    {LayerKind::LowerTriangle, "lower_triangle"},
};

std::size_t tri(std::size_t dim) { return dim * (dim - 1) / 2; }

[[noreturn]] void shape_fail(std::size_t layer, const std::string& what) {
    fail(ErrorKind::ShapeError, "layer " + std::to_string(layer) + ": " + what);
}

Shape infer(const LayerSpec& l, const Shape& in, std::size_t index) {
    switch (l.kind) {
        case LayerKind::Dense:
            if (in.size() != 1 || in[0] != l.in)
                shape_fail(index, "dense expects [" + std::to_string(l.in) + "], got " + to_string(in));
            if (l.out == 0) shape_fail(index, "dense output width must be positive");
            return {l.out};
        case LayerKind::Conv2D: {
            if (in.size() != 3 || in[0] != l.in)
                shape_fail(index, "conv2d expects [" + std::to_string(l.in) + ", H, W], got " + to_string(in));
            if (l.kernel == 0 || l.stride == 0 || l.out == 0) shape_fail(index, "conv2d needs kernel, stride, out > 0");
            if (in[1] + 2 * l.pad < l.kernel || in[2] + 2 * l.pad < l.kernel)
                shape_fail(index, "conv2d kernel larger than padded input " + to_string(in));
            return {l.out, (in[1] + 2 * l.pad - l.kernel) / l.stride + 1, (in[2] + 2 * l.pad - l.kernel) / l.stride + 1};
        }
        case LayerKind::ConvTranspose2D: {
            if (in.size() != 3 || in[0] != l.in)
                shape_fail(index, "conv_transpose2d expects [" + std::to_string(l.in) + ", H, W], got " + to_string(in));
            if (l.kernel == 0 || l.stride == 0 || l.out == 0)
                shape_fail(index, "conv_transpose2d needs kernel, stride, out > 0");
            const auto full_h = (in[1] - 1) * l.stride + l.kernel, full_w = (in[2] - 1) * l.stride + l.kernel;
            if (full_h <= 2 * l.pad || full_w <= 2 * l.pad) shape_fail(index, "conv_transpose2d padding too large");
            return {l.out, full_h - 2 * l.pad, full_w - 2 * l.pad};
        }
        case LayerKind::LeakyReLU:
        case LayerKind::ReLU:
        case LayerKind::Tanh:
        case LayerKind::Sigmoid: return in;
        case LayerKind::Flatten: return {shape_size(in)};
        case LayerKind::Reshape:
            if (shape_size(l.shape) != shape_size(in))
                shape_fail(index, "reshape " + to_string(in) + " to " + to_string(l.shape) + " changes the size");
            return l.shape;
        case LayerKind::SymmetricImage:
            if (l.dim < 2 || in.size() != 1 || in[0] != tri(l.dim) + l.extra)
                shape_fail(index, "symmetric_image expects [" + std::to_string(tri(l.dim) + l.extra) + "], got " +
                                      to_string(in));
            return {1 + l.extra, l.dim, l.dim};
        case LayerKind::LowerTriangle:
            if (l.dim < 2 || in != Shape{1, l.dim, l.dim})
                shape_fail(index, "lower_triangle expects [1, " + std::to_string(l.dim) + ", " + std::to_string(l.dim) +
                                      "], got " + to_string(in));
            return {tri(l.dim)};
    }
    shape_fail(index, "unknown layer kind");
}

std::size_t param_count(const LayerSpec& l) {
    switch (l.kind) {
        case LayerKind::Dense: return l.in * l.out + l.out;
        case LayerKind::Conv2D:
        case LayerKind::ConvTranspose2D: return l.in * l.out * l.kernel * l.kernel + l.out;
        default: return 0;
    }
}

std::size_t weight_count(const LayerSpec& l) { return param_count(l) - (param_count(l) ? l.out : 0); }

template <class Real>
void forward_layer(const LayerSpec& l, const Shape& in_shape, const Shape& out_shape, const Tensor<Real>& x,
                   const Real* p, Tensor<Real>& y) {
    const std::size_t n = x.batch();
    const std::size_t in_size = shape_size(in_shape), out_size = shape_size(out_shape);
    switch (l.kind) {
        case LayerKind::Dense: {
            const Real* w = p;
            const Real* b = p + l.in * l.out;
            for (std::size_t s = 0; s < n; ++s) {
                Real* out = y.data.data() + s * l.out;
                const Real* in = x.data.data() + s * l.in;
                std::copy(b, b + l.out, out);
                for (std::size_t i = 0; i < l.in; ++i) {
                    const Real xi = in[i];
                    const Real* wi = w + i * l.out;
                    for (std::size_t o = 0; o < l.out; ++o) out[o] += xi * wi[o];
                }
            }
            return;
        }
        case LayerKind::Conv2D: {
            const std::size_t c_in = l.in, h = in_shape[1], wd = in_shape[2], oh = out_shape[1], ow = out_shape[2],
                              k = l.kernel;
            const Real* b = p + weight_count(l);
            for (std::size_t s = 0; s < n; ++s) {
                const Real* in = x.data.data() + s * in_size;
                Real* out = y.data.data() + s * out_size;
                for (std::size_t o = 0; o < l.out; ++o) {
                    Real* plane = out + o * oh * ow;
                    std::fill(plane, plane + oh * ow, b[o]);
                    for (std::size_t c = 0; c < c_in; ++c)
                        for (std::size_t ky = 0; ky < k; ++ky)
                            for (std::size_t kx = 0; kx < k; ++kx) {
                                const Real wv = p[((o * c_in + c) * k + ky) * k + kx];
                                for (std::size_t oy = 0; oy < oh; ++oy) {
                                    const auto iy = static_cast<std::ptrdiff_t>(oy * l.stride + ky) -
                                                    static_cast<std::ptrdiff_t>(l.pad);
                                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                                    for (std::size_t ox = 0; ox < ow; ++ox) {
                                        const auto ix = static_cast<std::ptrdiff_t>(ox * l.stride + kx) -
                                                        static_cast<std::ptrdiff_t>(l.pad);
                                        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(wd)) continue;
                                        plane[oy * ow + ox] += wv * in[(c * h + iy) * wd + ix];
                                    }
                                }
                            }
                }
            }
            return;
        }
        case LayerKind::ConvTranspose2D: {
            const std::size_t c_in = l.in, h = in_shape[1], wd = in_shape[2], oh = out_shape[1], ow = out_shape[2],
                              k = l.kernel;
            const Real* b = p + weight_count(l);
            for (std::size_t s = 0; s < n; ++s) {
                const Real* in = x.data.data() + s * in_size;
                Real* out = y.data.data() + s * out_size;
                for (std::size_t o = 0; o < l.out; ++o) std::fill(out + o * oh * ow, out + (o + 1) * oh * ow, b[o]);
                for (std::size_t c = 0; c < c_in; ++c)
                    for (std::size_t o = 0; o < l.out; ++o)
                        for (std::size_t ky = 0; ky < k; ++ky)
                            for (std::size_t kx = 0; kx < k; ++kx) {
                                const Real wv = p[((c * l.out + o) * k + ky) * k + kx];
                                for (std::size_t iy = 0; iy < h; ++iy) {
                                    const auto oy = static_cast<std::ptrdiff_t>(iy * l.stride + ky) -
                                                    static_cast<std::ptrdiff_t>(l.pad);
                                    if (oy < 0 || oy >= static_cast<std::ptrdiff_t>(oh)) continue;
                                    for (std::size_t ix = 0; ix < wd; ++ix) {
                                        const auto ox = static_cast<std::ptrdiff_t>(ix * l.stride + kx) -
                                                        static_cast<std::ptrdiff_t>(l.pad);
                                        if (ox < 0 || ox >= static_cast<std::ptrdiff_t>(ow)) continue;
                                        out[(o * oh + oy) * ow + ox] += wv * in[(c * h + iy) * wd + ix];
                                    }
                                }
                            }
            }
            return;
        }
        case LayerKind::LeakyReLU: {
            const Real a = static_cast<Real>(l.alpha);
            for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0 ? x[i] : a * x[i];
            return;
        }
        case LayerKind::ReLU:
            for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0 ? x[i] : Real(0);
            return;
        case LayerKind::Tanh:
            for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::tanh(x[i]);
            return;
        case LayerKind::Sigmoid:
            for (std::size_t i = 0; i < x.size(); ++i)
                y[i] = x[i] >= 0 ? Real(1) / (Real(1) + std::exp(-x[i])) : std::exp(x[i]) / (Real(1) + std::exp(x[i]));
            return;
        case LayerKind::Flatten:
        case LayerKind::Reshape: y.data = x.data; return;
        case LayerKind::SymmetricImage: {
            const std::size_t d = l.dim, t = tri(d);
            for (std::size_t s = 0; s < n; ++s) {
                const Real* in = x.data.data() + s * in_size;
                Real* out = y.data.data() + s * out_size;
                std::size_t k = 0;
                for (std::size_t i = 0; i < d; ++i) {
                    out[i * d + i] = Real(1);
                    for (std::size_t j = 0; j < i; ++j, ++k) out[i * d + j] = out[j * d + i] = in[k];
                }
                for (std::size_t e = 0; e < l.extra; ++e)
                    std::fill(out + (1 + e) * d * d, out + (2 + e) * d * d, in[t + e]);
            }
            return;
        }
        case LayerKind::LowerTriangle: {
            const std::size_t d = l.dim;
            for (std::size_t s = 0; s < n; ++s) {
                const Real* in = x.data.data() + s * in_size;
                Real* out = y.data.data() + s * out_size;
                std::size_t k = 0;
                for (std::size_t i = 0; i < d; ++i)
                    for (std::size_t j = 0; j < i; ++j, ++k) out[k] = Real(0.5) * (in[i * d + j] + in[j * d + i]);
            }
            return;
        }
    }
}

/// Accumulates parameter gradients into gp and writes the input gradient gx.
template <class Real>
void backward_layer(const LayerSpec& l, const Shape& in_shape, const Shape& out_shape, const Tensor<Real>& x,
                    const Tensor<Real>& y, const Tensor<Real>& g, const Real* p, Real* gp, Tensor<Real>& gx) {
    const std::size_t n = x.batch();
    const std::size_t in_size = shape_size(in_shape), out_size = shape_size(out_shape);
    switch (l.kind) {
        case LayerKind::Dense: {
            const Real* w = p;
            Real* gw = gp;
            Real* gb = gp + l.in * l.out;
            for (std::size_t s = 0; s < n; ++s) {
                const Real* in = x.data.data() + s * l.in;
                const Real* go = g.data.data() + s * l.out;
                Real* gi = gx.data.data() + s * l.in;
                for (std::size_t o = 0; o < l.out; ++o) gb[o] += go[o];
                for (std::size_t i = 0; i < l.in; ++i) {
                    const Real xi = in[i];
                    const Real* wi = w + i * l.out;
                    Real* gwi = gw + i * l.out;
                    Real acc = 0;
                    for (std::size_t o = 0; o < l.out; ++o) {
                        gwi[o] += xi * go[o];
                        acc += wi[o] * go[o];
                    }
                    gi[i] = acc;
                }
            }
            return;
        }
        case LayerKind::Conv2D: {
            const std::size_t c_in = l.in, h = in_shape[1], wd = in_shape[2], oh = out_shape[1], ow = out_shape[2],
                              k = l.kernel;
            Real* gb = gp + weight_count(l);
            std::fill(gx.data.begin(), gx.data.end(), Real(0));
            for (std::size_t s = 0; s < n; ++s) {
                const Real* in = x.data.data() + s * in_size;
                const Real* go = g.data.data() + s * out_size;
                Real* gi = gx.data.data() + s * in_size;
                for (std::size_t o = 0; o < l.out; ++o) {
                    const Real* plane = go + o * oh * ow;
                    for (std::size_t q = 0; q < oh * ow; ++q) gb[o] += plane[q];
                    for (std::size_t c = 0; c < c_in; ++c)
                        for (std::size_t ky = 0; ky < k; ++ky)
                            for (std::size_t kx = 0; kx < k; ++kx) {
                                const std::size_t widx = ((o * c_in + c) * k + ky) * k + kx;
                                const Real wv = p[widx];
                                Real acc = 0;
                                for (std::size_t oy = 0; oy < oh; ++oy) {
                                    const auto iy = static_cast<std::ptrdiff_t>(oy * l.stride + ky) -
                                                    static_cast<std::ptrdiff_t>(l.pad);
                                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                                    for (std::size_t ox = 0; ox < ow; ++ox) {
                                        const auto ix = static_cast<std::ptrdiff_t>(ox * l.stride + kx) -
                                                        static_cast<std::ptrdiff_t>(l.pad);
                                        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(wd)) continue;
                                        const std::size_t xi = (c * h + iy) * wd + ix;
                                        acc += plane[oy * ow + ox] * in[xi];
                                        gi[xi] += plane[oy * ow + ox] * wv;
                                    }
                                }
                                gp[widx] += acc;
                            }
                }
            }
            return;
        }
        case LayerKind::ConvTranspose2D: {
            const std::size_t c_in = l.in, h = in_shape[1], wd = in_shape[2], oh = out_shape[1], ow = out_shape[2],
                              k = l.kernel;
            Real* gb = gp + weight_count(l);
            std::fill(gx.data.begin(), gx.data.end(), Real(0));
            for (std::size_t s = 0; s < n; ++s) {
                const Real* in = x.data.data() + s * in_size;
                const Real* go = g.data.data() + s * out_size;
                Real* gi = gx.data.data() + s * in_size;
                for (std::size_t o = 0; o < l.out; ++o)
                    for (std::size_t q = 0; q < oh * ow; ++q) gb[o] += go[o * oh * ow + q];
                for (std::size_t c = 0; c < c_in; ++c)
                    for (std::size_t o = 0; o < l.out; ++o)
                        for (std::size_t ky = 0; ky < k; ++ky)
                            for (std::size_t kx = 0; kx < k; ++kx) {
                                const std::size_t widx = ((c * l.out + o) * k + ky) * k + kx;
                                const Real wv = p[widx];
                                Real acc = 0;
                                for (std::size_t iy = 0; iy < h; ++iy) {
                                    const auto oy = static_cast<std::ptrdiff_t>(iy * l.stride + ky) -
                                                    static_cast<std::ptrdiff_t>(l.pad);
                                    if (oy < 0 || oy >= static_cast<std::ptrdiff_t>(oh)) continue;
                                    for (std::size_t ix = 0; ix < wd; ++ix) {
                                        const auto ox = static_cast<std::ptrdiff_t>(ix * l.stride + kx) -
                                                        static_cast<std::ptrdiff_t>(l.pad);
                                        if (ox < 0 || ox >= static_cast<std::ptrdiff_t>(ow)) continue;
                                        const Real gv = go[(o * oh + oy) * ow + ox];
                                        const std::size_t xi = (c * h + iy) * wd + ix;
                                        acc += gv * in[xi];
                                        gi[xi] += gv * wv;
                                    }
                                }
                                gp[widx] += acc;
                            }
            }
            return;
        }
        case LayerKind::LeakyReLU: {
            const Real a = static_cast<Real>(l.alpha);
            for (std::size_t i = 0; i < x.size(); ++i) gx[i] = x[i] > 0 ? g[i] : a * g[i];
            return;
        }
        case LayerKind::ReLU:
            for (std::size_t i = 0; i < x.size(); ++i) gx[i] = x[i] > 0 ? g[i] : Real(0);
            return;
        case LayerKind::Tanh:
            for (std::size_t i = 0; i < x.size(); ++i) gx[i] = g[i] * (Real(1) - y[i] * y[i]);
            return;
        case LayerKind::Sigmoid:
            for (std::size_t i = 0; i < x.size(); ++i) gx[i] = g[i] * y[i] * (Real(1) - y[i]);
            return;
        case LayerKind::Flatten:
        case LayerKind::Reshape: gx.data = g.data; return;
        case LayerKind::SymmetricImage: {
            const std::size_t d = l.dim, t = tri(d);
            for (std::size_t s = 0; s < n; ++s) {
                const Real* go = g.data.data() + s * out_size;
                Real* gi = gx.data.data() + s * in_size;
                std::size_t k = 0;
                for (std::size_t i = 0; i < d; ++i)
                    for (std::size_t j = 0; j < i; ++j, ++k) gi[k] = go[i * d + j] + go[j * d + i];
                for (std::size_t e = 0; e < l.extra; ++e) {
                    const Real* plane = go + (1 + e) * d * d;
                    Real acc = 0;
                    for (std::size_t q = 0; q < d * d; ++q) acc += plane[q];
                    gi[t + e] = acc;
                }
            }
            return;
        }
        case LayerKind::LowerTriangle: {
            const std::size_t d = l.dim;
            std::fill(gx.data.begin(), gx.data.end(), Real(0));
            for (std::size_t s = 0; s < n; ++s) {
                const Real* go = g.data.data() + s * out_size;
                Real* gi = gx.data.data() + s * in_size;
                std::size_t k = 0;
                for (std::size_t i = 0; i < d; ++i)
                    for (std::size_t j = 0; j < i; ++j, ++k) {
                        gi[i * d + j] = Real(0.5) * go[k];
                        gi[j * d + i] = Real(0.5) * go[k];
                    }
            }
            return;
        }
    }
}

Shape batched(std::size_t n, const Shape& item) {
    Shape s{n};
    s.insert(s.end(), item.begin(), item.end());
    return s;
}

json spec_json(const LayerSpec& l) {
    json j = {{"kind", to_string(l.kind)}};
    switch (l.kind) {
        case LayerKind::Dense: j["in"] = l.in; j["out"] = l.out; break;
        case LayerKind::Conv2D:
        case LayerKind::ConvTranspose2D:
            j["in"] = l.in;
            j["out"] = l.out;
            j["kernel"] = l.kernel;
            j["stride"] = l.stride;
            j["pad"] = l.pad;
            break;
        case LayerKind::LeakyReLU: j["alpha"] = l.alpha; break;
        case LayerKind::Reshape: j["shape"] = l.shape; break;
        case LayerKind::SymmetricImage: j["dim"] = l.dim; j["extra"] = l.extra; break;
        case LayerKind::LowerTriangle: j["dim"] = l.dim; break;
        default: break;
    }
    return j;
}

LayerSpec spec_from_json(const json& j) {
    LayerSpec l;
    l.kind = parse_layer_kind(j.at("kind").get<std::string>());
    l.in = j.value("in", std::size_t{0});
    l.out = j.value("out", std::size_t{0});
    l.kernel = j.value("kernel", std::size_t{0});
    l.stride = j.value("stride", std::size_t{1});
    l.pad = j.value("pad", std::size_t{0});
    l.alpha = j.value("alpha", 0.2);
    l.shape = j.value("shape", Shape{});
    l.dim = j.value("dim", std::size_t{0});
    l.extra = j.value("extra", std::size_t{0});
    return l;
}

LayerSpec of_kind(LayerKind k) {
    LayerSpec l;
    l.kind = k;
    return l;
}

}  // namespace

std::string to_string(LayerKind k) {
    for (const auto& e : kKindNames)
        if (e.kind == k) return e.name;
    return "unknown";
}

LayerKind parse_layer_kind(const std::string& name) {
    for (const auto& e : kKindNames)
        if (name == e.name) return e.kind;
    fail(ErrorKind::ConfigError, "unknown layer kind '" + name + "'");
}

LayerSpec LayerSpec::dense(std::size_t in, std::size_t out) {
    LayerSpec l;
    l.kind = LayerKind::Dense;
    l.in = in;
    l.out = out;
    return l;
}

LayerSpec LayerSpec::conv2d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel, std::size_t stride,
                            std::size_t pad) {
    LayerSpec l;
    l.kind = LayerKind::Conv2D;
    l.in = in_ch;
    l.out = out_ch;
    l.kernel = kernel;
    l.stride = stride;
    l.pad = pad;
    return l;
}

LayerSpec LayerSpec::conv_transpose2d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel, std::size_t stride,
                                      std::size_t pad) {
    LayerSpec l = conv2d(in_ch, out_ch, kernel, stride, pad);
    l.kind = LayerKind::ConvTranspose2D;
    return l;
}

LayerSpec LayerSpec::leaky_relu(double alpha) {
    LayerSpec l;
    l.kind = LayerKind::LeakyReLU;
    l.alpha = alpha;
    return l;
}

LayerSpec LayerSpec::relu() { return of_kind(LayerKind::ReLU); }
LayerSpec LayerSpec::tanh() { return of_kind(LayerKind::Tanh); }
LayerSpec LayerSpec::sigmoid() { return of_kind(LayerKind::Sigmoid); }
LayerSpec LayerSpec::flatten() { return of_kind(LayerKind::Flatten); }

LayerSpec LayerSpec::reshape(Shape s) {
    LayerSpec l;
    l.kind = LayerKind::Reshape;
    l.shape = std::move(s);
    return l;
}

LayerSpec LayerSpec::symmetric_image(std::size_t dim, std::size_t extra) {
    LayerSpec l;
    l.kind = LayerKind::SymmetricImage;
    l.dim = dim;
    l.extra = extra;
    return l;
}

LayerSpec LayerSpec::lower_triangle(std::size_t dim) {
    LayerSpec l;
    l.kind = LayerKind::LowerTriangle;
    l.dim = dim;
    return l;
}

template <class Real>
Network<Real>::Network(Shape input_shape, std::vector<LayerSpec> layers)
    : input_shape_(std::move(input_shape)), layers_(std::move(layers)) {
    require(!layers_.empty(), ErrorKind::ShapeError, "network has no layers");
    Shape s = input_shape_;
    offsets_.push_back(0);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        s = infer(layers_[i], s, i);
        shapes_.push_back(s);
        offsets_.push_back(offsets_.back() + param_count(layers_[i]));
    }
    params_.assign(offsets_.back(), Real(0));
}

template <class Real>
void Network<Real>::initialize(Seed seed) {
    Rng rng(seed);
    ++version_;
    std::fill(params_.begin(), params_.end(), Real(0));
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const auto& l = layers_[i];
        const std::size_t w = weight_count(l);
        if (w == 0) continue;
        const double k2 = static_cast<double>(l.kernel ? l.kernel * l.kernel : 1);
        const double fan_in = static_cast<double>(l.in) * k2, fan_out = static_cast<double>(l.out) * k2;
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        for (std::size_t k = 0; k < w; ++k) params_[offsets_[i] + k] = static_cast<Real>(rng.uniform(-limit, limit));
    }
}

template <class Real>
Tensor<Real> Network<Real>::forward(const Tensor<Real>& input, Cache<Real>* cache) const {
    if (input.shape.size() != input_shape_.size() + 1 ||
        !std::equal(input_shape_.begin(), input_shape_.end(), input.shape.begin() + 1))
        fail(ErrorKind::ShapeError, "layer 0: input shape " + to_string(input.shape) + " does not match [N, " +
                                        to_string(input_shape_).substr(1));
    const std::size_t n = input.batch();
    if (cache) {
        cache->activations.clear();
        cache->activations.reserve(layers_.size() + 1);
        cache->activations.push_back(input);
        cache->version = version_;
        cache->owner = this;
    }
    Tensor<Real> current = input;
    Shape in_shape = input_shape_;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        Tensor<Real> out(batched(n, shapes_[i]));
        forward_layer(layers_[i], in_shape, shapes_[i], current, params_.data() + offsets_[i], out);
        in_shape = shapes_[i];
        if (cache) cache->activations.push_back(out);
        current = std::move(out);
    }
    return current;
}

template <class Real>
Gradients<Real> Network<Real>::backward(const Cache<Real>& cache, const Tensor<Real>& grad_output,
                                        std::size_t skip_last) const {
    if (cache.owner != this || cache.version != version_ || cache.activations.size() != layers_.size() + 1)
        fail(ErrorKind::CacheError, "activation cache is stale or belongs to another network");
    require(skip_last < layers_.size(), ErrorKind::ShapeError, "backward: cannot skip every layer");
    const std::size_t last = layers_.size() - skip_last;
    if (grad_output.shape != cache.activations[last].shape)
        fail(ErrorKind::ShapeError, "layer " + std::to_string(last - 1) + ": output gradient shape " +
                                        to_string(grad_output.shape) + " does not match " +
                                        to_string(cache.activations[last].shape));
    Gradients<Real> out;
    out.params.assign(params_.size(), Real(0));
    Tensor<Real> g = grad_output;
    for (std::size_t i = last; i-- > 0;) {
        const auto& x = cache.activations[i];
        Tensor<Real> gx(x.shape);
        const Shape& in_shape = i == 0 ? input_shape_ : shapes_[i - 1];
        backward_layer(layers_[i], in_shape, shapes_[i], x, cache.activations[i + 1], g, params_.data() + offsets_[i],
                       out.params.data() + offsets_[i], gx);
        g = std::move(gx);
    }
    out.input = std::move(g);
    return out;
}

void AdamConfig::check() const {
    require(lr > 0.0, ErrorKind::ConfigError, "adam: lr must be positive");
    require(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0, ErrorKind::ConfigError,
            "adam: betas must lie in (0, 1)");
    require(epsilon > 0.0, ErrorKind::ConfigError, "adam: epsilon must be positive");
}

template <class Real>
void adam_step(AdamState<Real>& state, std::span<Real> params, std::span<const Real> grads) {
    require(params.size() == grads.size() && state.m.size() == params.size(), ErrorKind::ShapeError,
            "adam: parameter, gradient and state sizes differ");
    for (std::size_t i = 0; i < grads.size(); ++i)
        if (!std::isfinite(grads[i]))
            fail(ErrorKind::NumericalFailure, "adam: non-finite gradient at parameter " + std::to_string(i));
    ++state.step;
    const auto& c = state.config;
    const double t = static_cast<double>(state.step);
    const Real b1 = static_cast<Real>(c.beta1), b2 = static_cast<Real>(c.beta2);
    const Real corr1 = static_cast<Real>(1.0 - std::pow(c.beta1, t));
    const Real corr2 = static_cast<Real>(1.0 - std::pow(c.beta2, t));
    const Real lr = static_cast<Real>(c.lr), eps = static_cast<Real>(c.epsilon);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Real g = grads[i];
        state.m[i] = b1 * state.m[i] + (Real(1) - b1) * g;
        state.v[i] = b2 * state.v[i] + (Real(1) - b2) * g * g;
        const Real mhat = state.m[i] / corr1;
        const Real vhat = state.v[i] / corr2;
        params[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

template <class Real>
double bce_with_logits(const Tensor<Real>& logits, double target, Tensor<Real>* grad) {
    require(logits.stride() == 1, ErrorKind::ShapeError, "bce: logits must be [N, 1]");
    const std::size_t n = logits.batch();
    if (grad) *grad = Tensor<Real>(logits.shape);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double z = logits[i];
        // log(1 + e^z) - target z, stable for both signs.
        loss += std::max(z, 0.0) - target * z + std::log1p(std::exp(-std::abs(z)));
        if (grad) {
            const double s = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
            (*grad)[i] = static_cast<Real>((s - target) / static_cast<double>(n));
        }
    }
    return loss / static_cast<double>(n);
}

template <class Real>
double softmax_cross_entropy(const Tensor<Real>& logits, std::span<const std::size_t> labels, Tensor<Real>* grad) {
    const std::size_t n = logits.batch(), k = logits.stride();
    require(labels.size() == n, ErrorKind::ShapeError, "softmax: label count does not match batch");
    if (grad) *grad = Tensor<Real>(logits.shape);
    double loss = 0.0;
    std::vector<double> p(k);
    for (std::size_t s = 0; s < n; ++s) {
        require(labels[s] < k, ErrorKind::InvalidInput, "softmax: label out of range");
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < k; ++c) mx = std::max(mx, static_cast<double>(logits[s * k + c]));
        double z = 0.0;
        for (std::size_t c = 0; c < k; ++c) z += p[c] = std::exp(static_cast<double>(logits[s * k + c]) - mx);
        loss -= std::log(p[labels[s]] / z);
        if (grad)
            for (std::size_t c = 0; c < k; ++c)
                (*grad)[s * k + c] = static_cast<Real>((p[c] / z - (c == labels[s] ? 1.0 : 0.0)) / static_cast<double>(n));
    }
    return loss / static_cast<double>(n);
}

template <class Real>
double mse(const Tensor<Real>& y, const Tensor<Real>& target, Tensor<Real>* grad) {
    require(y.shape == target.shape, ErrorKind::ShapeError, "mse: shape mismatch");
    if (grad) *grad = Tensor<Real>(y.shape);
    double loss = 0.0;
    const double n = static_cast<double>(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double d = static_cast<double>(y[i]) - static_cast<double>(target[i]);
        loss += d * d;
        if (grad) (*grad)[i] = static_cast<Real>(2.0 * d / n);
    }
    return loss / n;
}

void save(const Network<float>& net, const CheckpointInfo& info, const std::filesystem::path& dir) {
    std::string weights;
    weights.reserve(net.parameter_count() * 4);
    for (float v : net.parameters()) append_f32le(weights, v);
    json layers = json::array();
    for (const auto& l : net.layers()) layers.push_back(spec_json(l));
    const json m = {
        {"format", "NNCK"},
        {"version", kCheckpointVersion},
        {"input_shape", net.input_shape()},
        {"layers", layers},
        {"parameter_count", net.parameter_count()},
        {"optimizer",
         {{"kind", "adam"},
          {"lr", info.optimizer.lr},
          {"beta1", info.optimizer.beta1},
          {"beta2", info.optimizer.beta2},
          {"epsilon", info.optimizer.epsilon}}},
        {"init", "glorot_uniform"},
        {"seed", info.seed},
        {"step", info.step},
        {"weights_sha256", sha256_hex(std::string_view(weights))},
    };
    std::filesystem::create_directories(dir);
    write_file(dir / "weights.f32le", weights);
    write_file(dir / "model.json", m.dump(2) + "\n");
}

Network<float> load(const std::filesystem::path& dir, CheckpointInfo* info) {
    json m;
    try {
        m = json::parse(read_file(dir / "model.json"));
    } catch (const json::parse_error& e) {
        fail(ErrorKind::CorruptData, std::string("checkpoint model.json: ") + e.what());
    }
    try {
        if (m.at("format") != "NNCK") fail(ErrorKind::UnsupportedVersion, "not an NNCK checkpoint");
        if (m.at("version").get<int>() != kCheckpointVersion)
            fail(ErrorKind::UnsupportedVersion,
                 "NNCK version " + std::to_string(m["version"].get<int>()) + " is not supported");
        std::vector<LayerSpec> layers;
        for (const auto& l : m.at("layers")) layers.push_back(spec_from_json(l));
        Network<float> net(m.at("input_shape").get<Shape>(), std::move(layers));
        const std::string weights = read_file(dir / "weights.f32le");
        if (weights.size() != net.parameter_count() * 4 || sha256_hex(std::string_view(weights)) != m.at("weights_sha256"))
            fail(ErrorKind::CorruptData, "checkpoint weights do not match model.json");
        auto p = net.mutable_parameters();
        const auto* bytes = reinterpret_cast<const unsigned char*>(weights.data());
        for (std::size_t i = 0; i < p.size(); ++i) p[i] = read_f32le(bytes + 4 * i);
        if (info) {
            const auto& o = m.at("optimizer");
            info->optimizer = {o.at("lr").get<double>(), o.at("beta1").get<double>(), o.at("beta2").get<double>(),
                               o.at("epsilon").get<double>()};
            info->seed = m.at("seed").get<std::uint64_t>();
            info->step = m.at("step").get<std::uint64_t>();
        }
        return net;
    } catch (const json::exception& e) {
        fail(ErrorKind::CorruptData, std::string("checkpoint model.json: ") + e.what());
    }
}

GradientCheck gradient_check(const Network<double>& net_in, const Tensor<double>& input, std::size_t probes, Seed seed,
                             double h, double tol) {
    Network<double> net = net_in;
    Rng rng(seed);
    Cache<double> cache;
    const auto y = net.forward(input, &cache);
    Tensor<double> w(y.shape);
    for (auto& v : w.data) v = rng.normal();
    const auto grads = net.backward(cache, w);
    auto loss = [&](const Tensor<double>& x) {
        const auto out = net.forward(x);
        double s = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) s += w[i] * out[i];
        return s;
    };
    GradientCheck r;
    auto record = [&](double analytic, double numeric) {
        const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
        r.max_rel_error = std::max(r.max_rel_error, rel);
        r.failures += rel > tol;
        ++r.probes;
    };
    const std::size_t np = net.parameter_count();
    for (std::size_t k = 0; k < std::min(probes, np); ++k) {
        const std::size_t i = probes >= np ? k : rng.index(np);
        const double orig = net.parameters()[i];
        net.mutable_parameters()[i] = orig + h;
        const double up = loss(input);
        net.mutable_parameters()[i] = orig - h;
        const double down = loss(input);
        net.mutable_parameters()[i] = orig;
        record(grads.params[i], (up - down) / (2 * h));
    }
    Tensor<double> x = input;
    for (std::size_t k = 0; k < std::min(probes, x.size()); ++k) {
        const std::size_t i = probes >= x.size() ? k : rng.index(x.size());
        const double orig = x[i];
        x[i] = orig + h;
        const double up = loss(x);
        x[i] = orig - h;
        const double down = loss(x);
        x[i] = orig;
        record(grads.input[i], (up - down) / (2 * h));
    }
    return r;
}

template struct Tensor<float>;
template struct Tensor<double>;
template class Network<float>;
template class Network<double>;
template void adam_step(AdamState<float>&, std::span<float>, std::span<const float>);
template void adam_step(AdamState<double>&, std::span<double>, std::span<const double>);
template double bce_with_logits(const Tensor<float>&, double, Tensor<float>*);
template double bce_with_logits(const Tensor<double>&, double, Tensor<double>*);
template double softmax_cross_entropy(const Tensor<float>&, std::span<const std::size_t>, Tensor<float>*);
template double softmax_cross_entropy(const Tensor<double>&, std::span<const std::size_t>, Tensor<double>*);
template double mse(const Tensor<float>&, const Tensor<float>&, Tensor<float>*);
template double mse(const Tensor<double>&, const Tensor<double>&, Tensor<double>*);

}  // namespace ecorr::nn
