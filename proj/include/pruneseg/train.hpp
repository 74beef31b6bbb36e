// Seed-deterministic training loop: shuffled mini-batches, per-epoch cosine
// learning rate, optional flip augmentation, and mask-preserving updates for
// pruned networks (masked weights get zero gradient and stay exactly zero).
#pragma once

#include <random>
#include <stdexcept>
#include <vector>

#include "pruneseg/loss.hpp"
#include "pruneseg/network.hpp"
#include "pruneseg/optim.hpp"

namespace pruneseg {

struct TrainConfig {
    float initial_lr = 0.001f;
    int batch_size = 2;
    int epochs = 300;
    float min_lr = 0.0f;
    uint64_t seed = 0;
    bool augment_flips = true;
    // Stop when the best epoch loss fails to improve by a relative 1e-4 for
    // 20 consecutive epochs. Off by default so epoch counts stay exact.
    bool early_stop = false;

    void validate() const {
        if (epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
        if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
        if (min_lr < 0.0f || min_lr > initial_lr)
            throw std::invalid_argument("train: require 0 <= min_lr <= initial_lr");
    }
};

struct Sample {
    Tensor image;   // [1,H,W]
    Tensor target;  // [1,H,W]; binary mask (sigmoid head) or distance map (linear head)
};

// Trains net in place; returns the per-epoch mean sample loss.
inline std::vector<double> train(Network& net, const std::vector<Sample>& dataset,
                                 const TrainConfig& cfg) {
    cfg.validate();
    if (dataset.empty()) throw std::invalid_argument("train: dataset is empty");
    for (const auto& s : dataset)
        require_shape(s.target, s.image.shape, "train sample target");

    std::mt19937_64 rng(cfg.seed);
    std::bernoulli_distribution coin(0.5);
    AdamState opt = AdamState::init(net.params);
    std::vector<int> order(dataset.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    std::vector<double> history;
    double best = 0.0;
    int stale = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const float lr = cosine_lr(epoch, cfg.epochs, cfg.initial_lr, cfg.min_lr);
        std::shuffle(order.begin(), order.end(), rng);

        double loss_sum = 0.0;
        for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const size_t stop = std::min(order.size(), start + cfg.batch_size);
            const float inv_batch = 1.0f / static_cast<float>(stop - start);

            std::map<std::string, Tensor> grads;
            for (size_t bi = start; bi < stop; ++bi) {
                const Sample& s = dataset[order[bi]];
                Tensor image = s.image, target = s.target;
                if (cfg.augment_flips) {
                    if (coin(rng)) { image = flip_horizontal(image); target = flip_horizontal(target); }
                    if (coin(rng)) { image = flip_vertical(image); target = flip_vertical(target); }
                }
                ForwardTrace trace = forward(net, image);
                LossResult lr_ = net.head == Head::sigmoid ? dice_loss(trace.out, target)
                                                           : mse_loss(trace.out, target);
                loss_sum += lr_.loss;
                auto g = backward(net, trace, lr_.grad);
                if (grads.empty()) {
                    grads = std::move(g);
                } else {
                    for (auto& [name, t] : grads) {
                        const Tensor& add = g.at(name);
                        for (int i = 0; i < t.size(); ++i) t.data[i] += add.data[i];
                    }
                }
            }
            for (auto& [name, t] : grads)
                for (float& v : t.data) v *= inv_batch;

            // Pruned positions receive no gradient and are re-zeroed after the
            // step, so the masked set never changes during retraining.
            for (const auto& [name, mask] : net.masks) {
                auto it = grads.find(name);
                if (it == grads.end()) continue;
                for (int i = 0; i < it->second.size(); ++i)
                    if (!mask.bits[i]) it->second.data[i] = 0.0f;
            }
            adam_step(opt, net.params, grads, lr);
            net.apply_masks();
        }

        const double epoch_loss = loss_sum / static_cast<double>(dataset.size());
        history.push_back(epoch_loss);

        if (cfg.early_stop) {
            if (epoch == 0 || epoch_loss < best - 1e-4 * std::abs(best)) {
                best = epoch_loss;
                stale = 0;
            } else if (++stale >= 20) {
                break;
            }
        }
    }
    return history;
}

}  // namespace pruneseg
