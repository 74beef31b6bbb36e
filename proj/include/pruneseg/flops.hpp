// Dense multiply-accumulate counts per convolution layer and the resulting
// theoretical speedup of a pruned network on sparsity-aware hardware:
// speedup = sum_l F_l / sum_l F_l * (nnz_l / n_l). Biases, activations,
// pooling and upsampling contribute no FLOPs term.
#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "pruneseg/network.hpp"

namespace pruneseg {

struct LayerFlops {
    std::string name;
    int64_t macs = 0;
};

// Per-layer dense MAC counts for an input of the given spatial size.
// conv: H_out * W_out * C_out * C_in * k^2.
inline std::vector<LayerFlops> flops_count(const Network& net, int input_h, int input_w) {
    std::vector<LayerFlops> out;
    for (const auto& l : net.layers) {
        if (input_h % l.spatial_div != 0 || input_w % l.spatial_div != 0)
            throw std::invalid_argument("flops_count: input " + std::to_string(input_h) + "x" +
                                        std::to_string(input_w) + " not divisible by layer stride of " +
                                        l.name);
        const int64_t hout = input_h / l.spatial_div;
        const int64_t wout = input_w / l.spatial_div;
        out.push_back({l.name, hout * wout * l.out_ch * l.in_ch * l.ksize * l.ksize});
    }
    return out;
}

struct SpeedupReport {
    int cr = 1;
    int64_t dense_flops = 0;
    int64_t sparse_flops = 0;
    double speedup = 1.0;
};

// nnz counts the nonzero kernel entries of each layer, so F_l * nnz_l / n_l
// stays an exact integer (F_l / n_l is the layer's output pixel count).
inline SpeedupReport theoretical_speedup(const Network& net, int input_h, int input_w, int cr = 1) {
    SpeedupReport r;
    r.cr = cr;
    const auto flops = flops_count(net, input_h, input_w);
    for (size_t i = 0; i < net.layers.size(); ++i) {
        const Tensor& w = net.param(net.layers[i].name + ".kernel");
        int64_t nnz = 0;
        for (float v : w.data) nnz += v != 0.0f;
        r.dense_flops += flops[i].macs;
        r.sparse_flops += flops[i].macs / w.size() * nnz;
    }
    if (r.sparse_flops == 0)
        throw std::invalid_argument("theoretical_speedup: network is fully disconnected");
    r.speedup = static_cast<double>(r.dense_flops) / static_cast<double>(r.sparse_flops);
    return r;
}

}  // namespace pruneseg
