// The toy two-branch encoder-decoder: a fixed small U-Net topology with two
// interchangeable heads (sigmoid for the segmentation branch, linear for the
// distance-regression branch). Both branches share the identical layer
// structure and parameter count; only the output activation differs.
#pragma once

#include <map>
#include <random>
#include <string>
#include <vector>

#include "pruneseg/tensor.hpp"

namespace pruneseg {

enum class Head { sigmoid, linear };

// Per-parameter keep/drop mask. bits[i] == 1 keeps weight i, 0 forces it to
// exactly 0.0f. Lives alongside the parameter it owns.
struct PruneMask {
    std::string owner;           // parameter name, e.g. "enc1.kernel"
    std::vector<uint8_t> bits;   // 1 = keep

    int kept() const {
        int n = 0;
        for (uint8_t b : bits) n += b;
        return n;
    }
};

struct ConvLayer {
    std::string name;
    int in_ch = 0;
    int out_ch = 0;
    int ksize = 0;
    int spatial_div = 1;   // H_out = H_in / spatial_div for the reference input
    bool prunable = true;  // output head conv is exempt, like biases
};

struct Network {
    Head head = Head::sigmoid;
    std::vector<ConvLayer> layers;        // definition order
    std::map<std::string, Tensor> params; // "<layer>.kernel" / "<layer>.bias"
    std::map<std::string, PruneMask> masks;

    const Tensor& param(const std::string& name) const { return params.at(name); }
    Tensor& param(const std::string& name) { return params.at(name); }

    // Canonical parameter order: layer order, kernel before bias.
    std::vector<std::string> param_order() const {
        std::vector<std::string> names;
        for (const auto& l : layers) {
            names.push_back(l.name + ".kernel");
            names.push_back(l.name + ".bias");
        }
        return names;
    }

    int parameter_count() const {
        int n = 0;
        for (const auto& [name, t] : params) n += t.size();
        return n;
    }

    // Force masked weights to exactly zero.
    void apply_masks() {
        for (auto& [name, mask] : masks) {
            Tensor& t = params.at(name);
            for (int i = 0; i < t.size(); ++i)
                if (!mask.bits[i]) t.data[i] = 0.0f;
        }
    }
};

// Fixed architecture, He-uniform initialised from the seed:
//   enc1 conv3x3(1->8)+relu, pool, enc2 conv3x3(8->16)+relu, pool,
//   bott conv3x3(16->16)+relu, up, dec1 conv3x3(16+16->8)+relu (skip enc2),
//   up, dec2 conv3x3(8+8->8)+relu (skip enc1), head conv1x1(8->1)+head act.
// The head conv is not prunable: magnitude pruning exempts the output layer
// (and all biases), mirroring the sub-CR theoretical speedups it produces.
inline Network build_toy_network(Head head, uint64_t seed) {
    Network net;
    net.head = head;
    net.layers = {
        {"enc1", 1, 8, 3, 1, true},
        {"enc2", 8, 16, 3, 2, true},
        {"bott", 16, 16, 3, 4, true},
        {"dec1", 32, 8, 3, 2, true},
        {"dec2", 16, 8, 3, 1, true},
        {"head", 8, 1, 1, 1, false},
    };
    std::mt19937_64 rng(seed);
    for (const auto& l : net.layers) {
        const int fan_in = l.in_ch * l.ksize * l.ksize;
        const float bound = std::sqrt(6.0f / static_cast<float>(fan_in));
        std::uniform_real_distribution<float> u(-bound, bound);
        Tensor kernel({l.out_ch, l.in_ch, l.ksize, l.ksize});
        for (float& v : kernel.data) v = u(rng);
        net.params.emplace(l.name + ".kernel", std::move(kernel));
        net.params.emplace(l.name + ".bias", Tensor({l.out_ch}));
    }
    return net;
}

// Intermediate activations kept for the backward pass.
struct ForwardTrace {
    Tensor input;       // [1,H,W]
    Tensor enc1_pre, e1, p1;
    Tensor enc2_pre, e2, p2;
    Tensor bott_pre, b;
    Tensor u1, c1, dec1_pre, d1;
    Tensor u2, c2, dec2_pre, d2;
    Tensor head_pre, out;
};

inline ForwardTrace forward(const Network& net, const Tensor& input) {
    if (input.shape.size() != 3 || input.dim(0) != 1)
        throw ShapeError("forward: input must be [1,H,W]");
    if (input.dim(1) % 4 != 0 || input.dim(2) % 4 != 0)
        throw ShapeError("forward: H and W must be divisible by 4, got " +
                         std::to_string(input.dim(1)) + "x" + std::to_string(input.dim(2)));
    ForwardTrace t;
    t.input = input;
    t.enc1_pre = conv2d(input, net.param("enc1.kernel"), net.param("enc1.bias"));
    t.e1 = activate(t.enc1_pre, Activation::relu);
    t.p1 = maxpool2(t.e1);
    t.enc2_pre = conv2d(t.p1, net.param("enc2.kernel"), net.param("enc2.bias"));
    t.e2 = activate(t.enc2_pre, Activation::relu);
    t.p2 = maxpool2(t.e2);
    t.bott_pre = conv2d(t.p2, net.param("bott.kernel"), net.param("bott.bias"));
    t.b = activate(t.bott_pre, Activation::relu);
    t.u1 = upsample_nearest2(t.b);
    t.c1 = concat_channels(t.u1, t.e2);
    t.dec1_pre = conv2d(t.c1, net.param("dec1.kernel"), net.param("dec1.bias"));
    t.d1 = activate(t.dec1_pre, Activation::relu);
    t.u2 = upsample_nearest2(t.d1);
    t.c2 = concat_channels(t.u2, t.e1);
    t.dec2_pre = conv2d(t.c2, net.param("dec2.kernel"), net.param("dec2.bias"));
    t.d2 = activate(t.dec2_pre, Activation::relu);
    t.head_pre = conv2d(t.d2, net.param("head.kernel"), net.param("head.bias"));
    t.out = activate(t.head_pre, net.head == Head::sigmoid ? Activation::sigmoid
                                                           : Activation::identity);
    return t;
}

inline Tensor predict(const Network& net, const Tensor& input) {
    return forward(net, input).out;
}

// Gradients w.r.t. every parameter, keyed like params. grad_out must match
// the network output shape.
inline std::map<std::string, Tensor> backward(const Network& net, const ForwardTrace& t,
                                              const Tensor& grad_out) {
    require_shape(grad_out, t.out.shape, "backward upstream gradient");
    std::map<std::string, Tensor> g;

    Tensor gh = activate_backward(t.head_pre, grad_out,
                                  net.head == Head::sigmoid ? Activation::sigmoid
                                                            : Activation::identity);
    ConvGrads cg = conv2d_backward(t.d2, net.param("head.kernel"), gh);
    g.emplace("head.kernel", std::move(cg.kernel));
    g.emplace("head.bias", std::move(cg.bias));

    Tensor gd2 = activate_backward(t.dec2_pre, cg.input, Activation::relu);
    cg = conv2d_backward(t.c2, net.param("dec2.kernel"), gd2);
    g.emplace("dec2.kernel", std::move(cg.kernel));
    g.emplace("dec2.bias", std::move(cg.bias));

    auto [gu2, ge1_skip] = split_channels(cg.input, t.u2.dim(0));
    Tensor gd1 = upsample_nearest2_backward(t.d1, gu2);
    gd1 = activate_backward(t.dec1_pre, gd1, Activation::relu);
    cg = conv2d_backward(t.c1, net.param("dec1.kernel"), gd1);
    g.emplace("dec1.kernel", std::move(cg.kernel));
    g.emplace("dec1.bias", std::move(cg.bias));

    auto [gu1, ge2_skip] = split_channels(cg.input, t.u1.dim(0));
    Tensor gb = upsample_nearest2_backward(t.b, gu1);
    gb = activate_backward(t.bott_pre, gb, Activation::relu);
    cg = conv2d_backward(t.p2, net.param("bott.kernel"), gb);
    g.emplace("bott.kernel", std::move(cg.kernel));
    g.emplace("bott.bias", std::move(cg.bias));

    Tensor ge2 = maxpool2_backward(t.e2, cg.input);
    for (int i = 0; i < ge2.size(); ++i) ge2.data[i] += ge2_skip.data[i];
    ge2 = activate_backward(t.enc2_pre, ge2, Activation::relu);
    cg = conv2d_backward(t.p1, net.param("enc2.kernel"), ge2);
    g.emplace("enc2.kernel", std::move(cg.kernel));
    g.emplace("enc2.bias", std::move(cg.bias));

    Tensor ge1 = maxpool2_backward(t.e1, cg.input);
    for (int i = 0; i < ge1.size(); ++i) ge1.data[i] += ge1_skip.data[i];
    ge1 = activate_backward(t.enc1_pre, ge1, Activation::relu);
    cg = conv2d_backward(t.input, net.param("enc1.kernel"), ge1, /*need_input_grad=*/false);
    g.emplace("enc1.kernel", std::move(cg.kernel));
    g.emplace("enc1.bias", std::move(cg.bias));

    return g;
}

}  // namespace pruneseg
