// Dense float32 tensor and the differentiable primitives used by the
// encoder-decoder model: same-padded convolution, 2x2 max pooling,
// nearest-neighbour upsampling, elementwise activations, channel concat.
// All operations are pure functions; gradients are exact analytic forms.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace pruneseg {

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Tensor {
    std::vector<int> shape;
    std::vector<float> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)), data(count(shape), 0.0f) {}
    Tensor(std::vector<int> s, std::vector<float> v) : shape(std::move(s)), data(std::move(v)) {
        if (data.size() != static_cast<size_t>(count(shape)))
            throw ShapeError("tensor data length " + std::to_string(data.size()) +
                             " does not match shape product " + std::to_string(count(shape)));
    }

    static int count(const std::vector<int>& s) {
        int n = 1;
        for (int d : s) {
            if (d <= 0) throw ShapeError("non-positive dimension " + std::to_string(d));
            n *= d;
        }
        return n;
    }

    int size() const { return static_cast<int>(data.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }

    // [C,H,W] indexing
    float& at(int c, int y, int x) { return data[(c * dim(1) + y) * dim(2) + x]; }
    float at(int c, int y, int x) const { return data[(c * dim(1) + y) * dim(2) + x]; }
    // [H,W] indexing
    float& at(int y, int x) { return data[y * dim(1) + x]; }
    float at(int y, int x) const { return data[y * dim(1) + x]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

inline void require_shape(const Tensor& t, const std::vector<int>& s, const char* what) {
    if (t.shape != s) {
        std::string msg = std::string(what) + ": expected shape [";
        for (size_t i = 0; i < s.size(); ++i) msg += (i ? "," : "") + std::to_string(s[i]);
        msg += "], got [";
        for (size_t i = 0; i < t.shape.size(); ++i) msg += (i ? "," : "") + std::to_string(t.shape[i]);
        msg += "]";
        throw ShapeError(msg);
    }
}

// --- convolution -----------------------------------------------------------

// Same-padded cross-correlation. input [Cin,H,W], kernel [Cout,Cin,k,k] with
// k odd, bias [Cout] -> output [Cout,H,W]. Zero padding of (k-1)/2 per side.
// Accumulation runs in double so outputs are correctly rounded float32.
inline Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias) {
    if (input.shape.size() != 3) throw ShapeError("conv2d: input must be [C,H,W]");
    if (kernel.shape.size() != 4) throw ShapeError("conv2d: kernel must be [Cout,Cin,k,k]");
    const int cout = kernel.dim(0), cin = kernel.dim(1), k = kernel.dim(2);
    if (kernel.dim(3) != k) throw ShapeError("conv2d: kernel not square, dims " +
                                             std::to_string(k) + "x" + std::to_string(kernel.dim(3)));
    if (k % 2 == 0) throw ShapeError("conv2d: kernel size must be odd, got " + std::to_string(k));
    if (input.dim(0) != cin)
        throw ShapeError("conv2d: input channels " + std::to_string(input.dim(0)) +
                         " != kernel Cin " + std::to_string(cin));
    require_shape(bias, {cout}, "conv2d bias");

    const int h = input.dim(1), w = input.dim(2), p = (k - 1) / 2;
    Tensor out({cout, h, w});
    std::vector<double> acc(static_cast<size_t>(h) * w);
    for (int oc = 0; oc < cout; ++oc) {
        std::fill(acc.begin(), acc.end(), static_cast<double>(bias.data[oc]));
        for (int ic = 0; ic < cin; ++ic) {
            const float* plane = &input.data[static_cast<size_t>(ic) * h * w];
            const float* kw = &kernel.data[(static_cast<size_t>(oc) * cin + ic) * k * k];
            for (int dy = 0; dy < k; ++dy) {
                for (int dx = 0; dx < k; ++dx) {
                    const double wgt = kw[dy * k + dx];
                    if (wgt == 0.0) continue;  // exact no-op for finite inputs
                    const int y0 = std::max(0, p - dy), y1 = std::min(h, h + p - dy);
                    const int x0 = std::max(0, p - dx), x1 = std::min(w, w + p - dx);
                    for (int y = y0; y < y1; ++y) {
                        double* arow = &acc[static_cast<size_t>(y) * w];
                        const float* irow = plane + static_cast<size_t>(y + dy - p) * w + (dx - p);
                        for (int x = x0; x < x1; ++x) arow[x] += wgt * irow[x];
                    }
                }
            }
        }
        float* orow = &out.data[static_cast<size_t>(oc) * h * w];
        for (int i = 0; i < h * w; ++i) orow[i] = static_cast<float>(acc[i]);
    }
    return out;
}

struct ConvGrads {
    Tensor input;   // [Cin,H,W]; empty when need_input_grad = false
    Tensor kernel;  // [Cout,Cin,k,k]
    Tensor bias;    // [Cout]
};

inline ConvGrads conv2d_backward(const Tensor& input, const Tensor& kernel, const Tensor& gout,
                                 bool need_input_grad = true) {
    const int cout = kernel.dim(0), cin = kernel.dim(1), k = kernel.dim(2);
    const int h = input.dim(1), w = input.dim(2), p = (k - 1) / 2;
    require_shape(gout, {cout, h, w}, "conv2d_backward upstream gradient");

    ConvGrads g;
    g.kernel = Tensor({cout, cin, k, k});
    g.bias = Tensor({cout});

    for (int oc = 0; oc < cout; ++oc) {
        const float* gplane = &gout.data[static_cast<size_t>(oc) * h * w];
        double bsum = 0.0;
        for (int i = 0; i < h * w; ++i) bsum += gplane[i];
        g.bias.data[oc] = static_cast<float>(bsum);

        for (int ic = 0; ic < cin; ++ic) {
            const float* plane = &input.data[static_cast<size_t>(ic) * h * w];
            float* gk = &g.kernel.data[(static_cast<size_t>(oc) * cin + ic) * k * k];
            for (int dy = 0; dy < k; ++dy) {
                for (int dx = 0; dx < k; ++dx) {
                    const int y0 = std::max(0, p - dy), y1 = std::min(h, h + p - dy);
                    const int x0 = std::max(0, p - dx), x1 = std::min(w, w + p - dx);
                    // Four independent accumulators; summation order is fixed,
                    // so results stay deterministic.
                    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
                    for (int y = y0; y < y1; ++y) {
                        const float* grow = gplane + static_cast<size_t>(y) * w;
                        const float* irow = plane + static_cast<size_t>(y + dy - p) * w + (dx - p);
                        int x = x0;
                        for (; x + 4 <= x1; x += 4) {
                            s0 += static_cast<double>(grow[x]) * irow[x];
                            s1 += static_cast<double>(grow[x + 1]) * irow[x + 1];
                            s2 += static_cast<double>(grow[x + 2]) * irow[x + 2];
                            s3 += static_cast<double>(grow[x + 3]) * irow[x + 3];
                        }
                        for (; x < x1; ++x) s0 += static_cast<double>(grow[x]) * irow[x];
                    }
                    gk[dy * k + dx] = static_cast<float>((s0 + s1) + (s2 + s3));
                }
            }
        }
    }

    if (need_input_grad) {
        g.input = Tensor({cin, h, w});
        std::vector<double> acc(static_cast<size_t>(h) * w);
        for (int ic = 0; ic < cin; ++ic) {
            std::fill(acc.begin(), acc.end(), 0.0);
            for (int oc = 0; oc < cout; ++oc) {
                const float* gplane = &gout.data[static_cast<size_t>(oc) * h * w];
                const float* kw = &kernel.data[(static_cast<size_t>(oc) * cin + ic) * k * k];
                for (int dy = 0; dy < k; ++dy) {
                    for (int dx = 0; dx < k; ++dx) {
                        const double wgt = kw[dy * k + dx];
                        if (wgt == 0.0) continue;
                        // d out(y,x) / d in(y+dy-p, x+dx-p) = w  =>
                        // g_in(u,v) += w * gout(u-dy+p, v-dx+p)
                        const int u0 = std::max(0, dy - p), u1 = std::min(h, h + dy - p);
                        const int v0 = std::max(0, dx - p), v1 = std::min(w, w + dx - p);
                        for (int u = u0; u < u1; ++u) {
                            double* arow = &acc[static_cast<size_t>(u) * w];
                            const float* grow = gplane + static_cast<size_t>(u - dy + p) * w - (dx - p);
                            for (int v = v0; v < v1; ++v) arow[v] += wgt * grow[v];
                        }
                    }
                }
            }
            float* orow = &g.input.data[static_cast<size_t>(ic) * h * w];
            for (int i = 0; i < h * w; ++i) orow[i] = static_cast<float>(acc[i]);
        }
    }
    return g;
}

// --- pooling / upsampling --------------------------------------------------

// 2x2 non-overlapping max. Ties keep the first occurrence in row-major scan
// order within the window, which makes the gradient routing deterministic.
inline Tensor maxpool2(const Tensor& input) {
    if (input.shape.size() != 3) throw ShapeError("maxpool2: input must be [C,H,W]");
    const int c = input.dim(0), h = input.dim(1), w = input.dim(2);
    if (h % 2 != 0) throw ShapeError("maxpool2: height " + std::to_string(h) + " is odd");
    if (w % 2 != 0) throw ShapeError("maxpool2: width " + std::to_string(w) + " is odd");
    Tensor out({c, h / 2, w / 2});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h / 2; ++y)
            for (int x = 0; x < w / 2; ++x) {
                float best = input.at(ch, 2 * y, 2 * x);
                for (int i = 0; i < 2; ++i)
                    for (int j = 0; j < 2; ++j) {
                        const float v = input.at(ch, 2 * y + i, 2 * x + j);
                        if (v > best) best = v;
                    }
                out.at(ch, y, x) = best;
            }
    return out;
}

inline Tensor maxpool2_backward(const Tensor& input, const Tensor& gout) {
    const int c = input.dim(0), h = input.dim(1), w = input.dim(2);
    require_shape(gout, {c, h / 2, w / 2}, "maxpool2_backward upstream gradient");
    Tensor gin({c, h, w});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h / 2; ++y)
            for (int x = 0; x < w / 2; ++x) {
                int by = 2 * y, bx = 2 * x;
                float best = input.at(ch, by, bx);
                for (int i = 0; i < 2; ++i)
                    for (int j = 0; j < 2; ++j) {
                        const float v = input.at(ch, 2 * y + i, 2 * x + j);
                        if (v > best) { best = v; by = 2 * y + i; bx = 2 * x + j; }
                    }
                gin.at(ch, by, bx) += gout.at(ch, y, x);
            }
    return gin;
}

// Each pixel replicated into a 2x2 block; the gradient sums the block.
inline Tensor upsample_nearest2(const Tensor& input) {
    if (input.shape.size() != 3) throw ShapeError("upsample_nearest2: input must be [C,H,W]");
    const int c = input.dim(0), h = input.dim(1), w = input.dim(2);
    Tensor out({c, 2 * h, 2 * w});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const float v = input.at(ch, y, x);
                out.at(ch, 2 * y, 2 * x) = v;
                out.at(ch, 2 * y, 2 * x + 1) = v;
                out.at(ch, 2 * y + 1, 2 * x) = v;
                out.at(ch, 2 * y + 1, 2 * x + 1) = v;
            }
    return out;
}

inline Tensor upsample_nearest2_backward(const Tensor& input, const Tensor& gout) {
    const int c = input.dim(0), h = input.dim(1), w = input.dim(2);
    require_shape(gout, {c, 2 * h, 2 * w}, "upsample_nearest2_backward upstream gradient");
    Tensor gin({c, h, w});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                gin.at(ch, y, x) = gout.at(ch, 2 * y, 2 * x) + gout.at(ch, 2 * y, 2 * x + 1) +
                                   gout.at(ch, 2 * y + 1, 2 * x) + gout.at(ch, 2 * y + 1, 2 * x + 1);
    return gin;
}

// --- activations -----------------------------------------------------------

enum class Activation { relu, sigmoid, identity };

inline Tensor activate(const Tensor& input, Activation a) {
    Tensor out = input;
    switch (a) {
        case Activation::relu:
            for (float& v : out.data) v = v > 0.0f ? v : 0.0f;
            break;
        case Activation::sigmoid:
            // Clamp float saturation so outputs stay strictly inside (0,1).
            for (float& v : out.data) {
                v = 1.0f / (1.0f + std::exp(-v));
                if (v >= 1.0f) v = std::nextafter(1.0f, 0.0f);
                if (v <= 0.0f) v = std::nextafter(0.0f, 1.0f);
            }
            break;
        case Activation::identity:
            break;
    }
    return out;
}

// Gradient given the activation INPUT and the upstream gradient.
inline Tensor activate_backward(const Tensor& input, const Tensor& gout, Activation a) {
    require_shape(gout, input.shape, "activate_backward upstream gradient");
    Tensor gin = gout;
    switch (a) {
        case Activation::relu:
            for (int i = 0; i < input.size(); ++i)
                if (input.data[i] <= 0.0f) gin.data[i] = 0.0f;
            break;
        case Activation::sigmoid:
            for (int i = 0; i < input.size(); ++i) {
                const float s = 1.0f / (1.0f + std::exp(-input.data[i]));
                gin.data[i] = gout.data[i] * s * (1.0f - s);
            }
            break;
        case Activation::identity:
            break;
    }
    return gin;
}

// --- channel concat / split (skip connections) ------------------------------

inline Tensor concat_channels(const Tensor& a, const Tensor& b) {
    if (a.shape.size() != 3 || b.shape.size() != 3)
        throw ShapeError("concat_channels: inputs must be [C,H,W]");
    if (a.dim(1) != b.dim(1) || a.dim(2) != b.dim(2))
        throw ShapeError("concat_channels: spatial dims differ, " + std::to_string(a.dim(1)) + "x" +
                         std::to_string(a.dim(2)) + " vs " + std::to_string(b.dim(1)) + "x" +
                         std::to_string(b.dim(2)));
    Tensor out({a.dim(0) + b.dim(0), a.dim(1), a.dim(2)});
    std::copy(a.data.begin(), a.data.end(), out.data.begin());
    std::copy(b.data.begin(), b.data.end(), out.data.begin() + a.size());
    return out;
}

inline std::pair<Tensor, Tensor> split_channels(const Tensor& t, int first_channels) {
    const int c = t.dim(0), h = t.dim(1), w = t.dim(2);
    if (first_channels <= 0 || first_channels >= c)
        throw ShapeError("split_channels: bad split " + std::to_string(first_channels) +
                         " of " + std::to_string(c));
    Tensor a({first_channels, h, w}), b({c - first_channels, h, w});
    std::copy(t.data.begin(), t.data.begin() + a.size(), a.data.begin());
    std::copy(t.data.begin() + a.size(), t.data.end(), b.data.begin());
    return {std::move(a), std::move(b)};
}

// --- flips (augmentation; exact involutions) ---------------------------------

inline Tensor flip_horizontal(const Tensor& t) {  // mirror along x
    if (t.shape.size() != 3) throw ShapeError("flip_horizontal: input must be [C,H,W]");
    const int c = t.dim(0), h = t.dim(1), w = t.dim(2);
    Tensor out({c, h, w});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) out.at(ch, y, x) = t.at(ch, y, w - 1 - x);
    return out;
}

inline Tensor flip_vertical(const Tensor& t) {  // mirror along y
    if (t.shape.size() != 3) throw ShapeError("flip_vertical: input must be [C,H,W]");
    const int c = t.dim(0), h = t.dim(1), w = t.dim(2);
    Tensor out({c, h, w});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) out.at(ch, y, x) = t.at(ch, h - 1 - y, x);
    return out;
}

}  // namespace pruneseg
