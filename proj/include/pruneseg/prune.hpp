// Iterative magnitude pruning, layer-wise and network-wide. Iteration k of
// the prune-retrain loop targets cumulative sparsity 1 - 2^-k over the
// prunable kernels, so log2(CR) iterations reach compression ratio CR.
// Masked weights never resurrect: existing drops count toward each quota.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "pruneseg/network.hpp"
#include "pruneseg/train.hpp"

namespace pruneseg {

// Raised when layer-wise masking would zero an entire layer, disconnecting
// the network. Network-wide pruning never raises it: a globally emptied
// layer is legal there.
struct ConnectivityLoss : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class PruneMethod { layerwise, networkwide };

struct PruneConfig {
    PruneMethod method = PruneMethod::layerwise;
    int cr = 2;  // power of two >= 1
    TrainConfig retrain;
};

struct LayerSparsity {
    std::string name;  // kernel parameter name
    int total = 0;
    int nonzero = 0;
};

struct SparsityReport {
    std::vector<LayerSparsity> layers;  // prunable kernels, layer order
    long total = 0;
    long nonzero = 0;
    double global_sparsity = 0.0;  // zeros / total over prunable kernels
};

inline std::vector<std::string> prunable_params(const Network& net) {
    std::vector<std::string> names;
    for (const auto& l : net.layers)
        if (l.prunable) names.push_back(l.name + ".kernel");
    return names;
}

namespace detail {

inline PruneMask keep_all(const std::string& owner, int n) {
    PruneMask m;
    m.owner = owner;
    m.bits.assign(n, 1);
    return m;
}

inline PruneMask current_mask(const Network& net, const std::string& name) {
    auto it = net.masks.find(name);
    if (it != net.masks.end()) return it->second;
    return keep_all(name, net.param(name).size());
}

inline void check_target(float target_sparsity) {
    if (!(target_sparsity >= 0.0f && target_sparsity < 1.0f))
        throw std::invalid_argument("prune: target sparsity must lie in [0,1)");
}

}  // namespace detail

// Independent threshold per layer: ceil(target*n) smallest-|w| entries of
// each prunable kernel are dropped, survivors ranked by (|w|, flat index).
inline std::map<std::string, PruneMask> prune_layerwise(const Network& net,
                                                        float target_sparsity) {
    detail::check_target(target_sparsity);
    std::map<std::string, PruneMask> out;
    for (const std::string& name : prunable_params(net)) {
        const Tensor& w = net.param(name);
        const int n = w.size();
        const int quota = static_cast<int>(std::ceil(static_cast<double>(target_sparsity) * n));
        if (quota >= n)
            throw ConnectivityLoss("layer-wise pruning would remove every weight of " + name);

        PruneMask mask = detail::current_mask(net, name);
        int dropped = n - mask.kept();
        if (quota > dropped) {
            std::vector<int> survivors;
            survivors.reserve(mask.kept());
            for (int i = 0; i < n; ++i)
                if (mask.bits[i]) survivors.push_back(i);
            std::sort(survivors.begin(), survivors.end(), [&](int a, int b) {
                const float ma = std::fabs(w.data[a]), mb = std::fabs(w.data[b]);
                return ma != mb ? ma < mb : a < b;
            });
            for (int j = 0; j < quota - dropped; ++j) mask.bits[survivors[j]] = 0;
        }
        out.emplace(name, std::move(mask));
    }
    return out;
}

// Single magnitude threshold across all prunable kernels: ceil(target*N)
// smallest entries overall, ties by (layer definition order, flat index).
// A layer may legally end up empty.
inline std::map<std::string, PruneMask> prune_networkwide(const Network& net,
                                                          float target_sparsity) {
    detail::check_target(target_sparsity);
    const std::vector<std::string> names = prunable_params(net);

    std::map<std::string, PruneMask> out;
    long total = 0, dropped = 0;
    struct Entry { float mag; int layer; int idx; };
    std::vector<Entry> survivors;
    for (size_t li = 0; li < names.size(); ++li) {
        const Tensor& w = net.param(names[li]);
        PruneMask mask = detail::current_mask(net, names[li]);
        total += w.size();
        for (int i = 0; i < w.size(); ++i) {
            if (mask.bits[i])
                survivors.push_back({std::fabs(w.data[i]), static_cast<int>(li), i});
            else
                ++dropped;
        }
        out.emplace(names[li], std::move(mask));
    }

    const long quota =
        static_cast<long>(std::ceil(static_cast<double>(target_sparsity) * static_cast<double>(total)));
    if (quota > dropped) {
        const long need = quota - dropped;
        std::sort(survivors.begin(), survivors.end(), [](const Entry& a, const Entry& b) {
            if (a.mag != b.mag) return a.mag < b.mag;
            if (a.layer != b.layer) return a.layer < b.layer;
            return a.idx < b.idx;
        });
        for (long j = 0; j < need; ++j)
            out.at(names[survivors[j].layer]).bits[survivors[j].idx] = 0;
    }
    return out;
}

inline SparsityReport sparsity_report(const Network& net) {
    SparsityReport r;
    for (const std::string& name : prunable_params(net)) {
        const Tensor& w = net.param(name);
        LayerSparsity ls;
        ls.name = name;
        ls.total = w.size();
        for (float v : w.data) ls.nonzero += v != 0.0f;
        r.total += ls.total;
        r.nonzero += ls.nonzero;
        r.layers.push_back(std::move(ls));
    }
    r.global_sparsity =
        r.total == 0 ? 0.0 : 1.0 - static_cast<double>(r.nonzero) / static_cast<double>(r.total);
    return r;
}

struct PruneCheckpoint {
    int cr = 1;
    Network net;
    SparsityReport sparsity;
};

inline bool is_power_of_two(int v) { return v >= 1 && (v & (v - 1)) == 0; }

// Algorithm: starting from a trained network, repeat log2(CR) times:
// mask the smallest half of the surviving prunable weights (per layer or
// globally), then retrain with the masks enforced. One checkpoint per
// iteration, at compression ratios 2, 4, ..., CR.
inline std::vector<PruneCheckpoint> iter_mag_prune(const Network& trained, const PruneConfig& cfg,
                                                   const std::vector<Sample>& dataset) {
    if (!is_power_of_two(cfg.cr))
        throw std::invalid_argument("iter_mag_prune: CR must be a power of two, got " +
                                    std::to_string(cfg.cr));
    const int iterations = static_cast<int>(std::lround(std::log2(static_cast<double>(cfg.cr))));

    std::vector<PruneCheckpoint> checkpoints;
    Network net = trained;
    for (int k = 1; k <= iterations; ++k) {
        const float target = 1.0f - std::ldexp(1.0f, -k);  // 1 - 2^-k
        auto masks = cfg.method == PruneMethod::layerwise ? prune_layerwise(net, target)
                                                          : prune_networkwide(net, target);
        for (auto& [name, mask] : masks) net.masks[name] = std::move(mask);
        net.apply_masks();
        train(net, dataset, cfg.retrain);

        PruneCheckpoint cp;
        cp.cr = 1 << k;
        cp.net = net;
        cp.sparsity = sparsity_report(net);
        checkpoints.push_back(std::move(cp));
    }
    return checkpoints;
}

}  // namespace pruneseg
