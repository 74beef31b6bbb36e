// Training losses for the two branches: smoothed Dice for the sigmoid head,
// mean squared error for the linear head. Both return the loss value and the
// analytic gradient with respect to the prediction.
#pragma once

#include "pruneseg/tensor.hpp"

namespace pruneseg {

struct LossResult {
    double loss = 0.0;
    Tensor grad;
};

// loss = 1 - (2*sum(p*t) + eps) / (sum(p) + sum(t) + eps), eps = 1.
inline LossResult dice_loss(const Tensor& pred, const Tensor& target) {
    require_shape(target, pred.shape, "dice_loss target");
    constexpr double eps = 1.0;
    double inter = 0.0, psum = 0.0, tsum = 0.0;
    for (int i = 0; i < pred.size(); ++i) {
        inter += static_cast<double>(pred.data[i]) * target.data[i];
        psum += pred.data[i];
        tsum += target.data[i];
    }
    const double num = 2.0 * inter + eps;
    const double den = psum + tsum + eps;

    LossResult r;
    r.loss = 1.0 - num / den;
    r.grad = Tensor(pred.shape);
    const double den2 = den * den;
    for (int i = 0; i < pred.size(); ++i)
        r.grad.data[i] = static_cast<float>((num - 2.0 * target.data[i] * den) / den2);
    return r;
}

inline LossResult mse_loss(const Tensor& pred, const Tensor& target) {
    require_shape(target, pred.shape, "mse_loss target");
    const double n = pred.size();
    LossResult r;
    r.grad = Tensor(pred.shape);
    double sum = 0.0;
    for (int i = 0; i < pred.size(); ++i) {
        const double d = static_cast<double>(pred.data[i]) - target.data[i];
        sum += d * d;
        r.grad.data[i] = static_cast<float>(2.0 * d / n);
    }
    r.loss = sum / n;
    return r;
}

}  // namespace pruneseg
