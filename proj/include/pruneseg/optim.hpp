// Adam optimiser with bias correction, plus the cosine annealing schedule.
#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>

#include "pruneseg/tensor.hpp"

namespace pruneseg {

struct AdamState {
    static constexpr float beta1 = 0.9f;
    static constexpr float beta2 = 0.999f;
    static constexpr float eps = 1e-8f;

    std::map<std::string, Tensor> m;  // first moments, parameter shapes
    std::map<std::string, Tensor> v;  // second moments
    long step = 0;

    static AdamState init(const std::map<std::string, Tensor>& params) {
        AdamState s;
        for (const auto& [name, t] : params) {
            s.m.emplace(name, Tensor(t.shape));
            s.v.emplace(name, Tensor(t.shape));
        }
        return s;
    }
};

// One Adam update over every parameter present in grads. Parameters without
// a gradient entry are left untouched.
inline void adam_step(AdamState& state, std::map<std::string, Tensor>& params,
                      const std::map<std::string, Tensor>& grads, float lr) {
    state.step += 1;
    const float bc1 = 1.0f - std::pow(AdamState::beta1, static_cast<float>(state.step));
    const float bc2 = 1.0f - std::pow(AdamState::beta2, static_cast<float>(state.step));
    for (const auto& [name, g] : grads) {
        Tensor& p = params.at(name);
        require_shape(g, p.shape, "adam_step gradient");
        Tensor& m = state.m.at(name);
        Tensor& v = state.v.at(name);
        for (int i = 0; i < p.size(); ++i) {
            const float gi = g.data[i];
            m.data[i] = AdamState::beta1 * m.data[i] + (1.0f - AdamState::beta1) * gi;
            v.data[i] = AdamState::beta2 * v.data[i] + (1.0f - AdamState::beta2) * gi * gi;
            const float mhat = m.data[i] / bc1;
            const float vhat = v.data[i] / bc2;
            p.data[i] -= lr * mhat / (std::sqrt(vhat) + AdamState::eps);
        }
    }
}

// lr_min + 0.5*(lr0 - lr_min)*(1 + cos(pi*epoch/total)). Endpoints exact.
inline float cosine_lr(int epoch, int total_epochs, float lr0, float lr_min) {
    if (total_epochs < 1) throw std::invalid_argument("cosine_lr: total_epochs must be >= 1");
    if (epoch < 0 || epoch > total_epochs)
        throw std::invalid_argument("cosine_lr: epoch " + std::to_string(epoch) +
                                    " outside [0, " + std::to_string(total_epochs) + "]");
    if (epoch == 0) return lr0;
    if (epoch == total_epochs) return lr_min;
    const double c = std::cos(M_PI * static_cast<double>(epoch) / total_epochs);
    return static_cast<float>(lr_min + 0.5 * (static_cast<double>(lr0) - lr_min) * (1.0 + c));
}

}  // namespace pruneseg
